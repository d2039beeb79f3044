#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <json.hpp>

#include "cpe/data.hpp"
#include "cpe/metrics.hpp"
#include "cpe/objective.hpp"

namespace cpe {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  ObjectiveConfig objective;
  std::uint64_t seed = 0;
  MetricSpec metric;
  std::size_t hidden_dim = 64;
  std::size_t latent_dim = 16;
  double weight_decay = 0.0;

  /// Throws InputError on invalid values or contradictory flags
  /// (a disabled term with a positive weight).
  void validate() const;

  /// Flat JSON with every field materialized, in a stable key order.
  nlohmann::ordered_json to_json() const;
  /// Overlays the keys present in `j` on top of `base`.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j);

  /// Batch 128, lr 5e-5, 20 epochs: the fine-tuning setup used with
  /// transformer backbones. Not the default for the MLP encoder.
  static TrainConfig transformer_preset();
};

/// Encoder plus the D x C class-center matrix.
struct Model {
  EncoderParams encoder;
  Tensor centers;

  std::vector<diff::NamedTensor> named() const;
  static Model from_named(const std::vector<diff::NamedTensor>& tensors);
};

Model init_model(const EncoderShape& shape, std::size_t num_classes, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  /// Per-term means over the epoch's steps; total recomposed from them.
  LossBreakdown mean_loss;
  double train_sigma2 = 0.0;
  double val_metric = 0.0;
  /// Steps in which the mask zeroed at least one entry.
  std::size_t mask_activations = 0;
  /// Masked entries summed over steps.
  std::size_t masked_entries = 0;
  std::size_t steps = 0;

  nlohmann::ordered_json to_json() const;
};

struct MetricsReport {
  Split split = Split::test;
  std::string metric_name;
  double primary = 0.0;
  ClassificationMetrics metrics;
  /// Mean of sigma^2 over rows and latent dimensions of the split.
  double mean_sigma2 = 0.0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  nlohmann::ordered_json to_json(const std::vector<std::string>& label_names = {}) const;
};

struct StepInfo {
  std::size_t epoch;
  std::size_t step;
  const ObjectiveTerms& terms;
};

struct TrainHooks {
  std::function<void(const StepInfo&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  /// Parameters from the epoch with the best validation metric.
  Model model;
  MetricsReport validation;
  MetricsReport test;
};

/// Predicts argmax_c mu . w_c (no sampling) and scores the given split.
MetricsReport evaluate(const Model& model, const LabeledDataset& data, Split split, const MetricSpec& metric);

/// Predictions for every row of `features` (N x F).
std::vector<int> predict(const Model& model, const Tensor& features);

TrainResult train(const TrainConfig& config, const LabeledDataset& data, const TrainHooks& hooks = {});

}  // namespace cpe
