#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpe/trainer.hpp"

namespace cpe {

/// What one training run contributes to a grid-search or ablation table.
struct RunOutcome {
  double val_metric = 0.0;
  double test_metric = 0.0;
  double test_accuracy = 0.0;
  double test_sigma2 = 0.0;
};

using RunFn = std::function<RunOutcome(const TrainConfig&)>;

/// Trains on `data` and summarizes the best-validation checkpoint.
RunFn training_runner(const LabeledDataset& data);

struct GridRow {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  RunOutcome outcome;
};

struct GridResult {
  std::string metric;
  std::vector<GridRow> rows;
  std::size_t best = 0;

  const GridRow& best_row() const { return rows.at(best); }
  nlohmann::ordered_json to_json() const;
  std::string render_text() const;
};

inline const std::vector<double> kDefaultLambdaGrid = {0.1, 0.25, 0.5, 0.75, 1.0};

/// One run per (lambda1, lambda2) in grid x grid, all with the template's
/// seed. The best row maximizes the validation metric; ties go to the
/// smaller lambda2, then the smaller lambda1.
GridResult grid_search(const TrainConfig& config_template, std::span<const double> grid, const RunFn& run);
GridResult grid_search(const TrainConfig& config_template, const LabeledDataset& data, std::span<const double> grid);

enum class AblationVariant { cpe, cpe_kl, without_norm, without_conf, ce };

inline constexpr AblationVariant kAblationVariants[] = {AblationVariant::cpe, AblationVariant::cpe_kl,
                                                        AblationVariant::without_norm, AblationVariant::without_conf,
                                                        AblationVariant::ce};

std::string label(AblationVariant v);

/// The base configuration with the variant's terms switched on or off.
/// Full CPE uses the L2 term; CE-only sets lambda1 = lambda2 = 0 and turns
/// the mask off.
TrainConfig apply_variant(const TrainConfig& base, AblationVariant v);

struct AblationRow {
  AblationVariant variant;
  std::vector<std::uint64_t> seeds;
  std::vector<RunOutcome> runs;
  double mean = 0.0;
  double stddev = 0.0;
  double mean_accuracy = 0.0;
  double mean_sigma2 = 0.0;
};

struct AblationTable {
  std::string metric;
  std::vector<AblationRow> rows;
  /// Nearest-centroid test accuracy on the same data, when available.
  std::optional<double> oracle_accuracy;

  const AblationRow& row(AblationVariant v) const;
  nlohmann::ordered_json to_json() const;
  /// Aligned text with the same columns, in the same order, as to_json rows.
  std::string render_text() const;
};

/// "mean ± std" of fractions rendered as percentages with two decimals.
std::string format_mean_std(double mean, double stddev);

/// Sample standard deviation (n - 1); zero for fewer than two values.
double sample_stddev(std::span<const double> values);

AblationTable ablate(const TrainConfig& base, std::span<const std::uint64_t> seeds, const RunFn& run);
AblationTable ablate(const TrainConfig& base, const LabeledDataset& data, std::span<const std::uint64_t> seeds);

}  // namespace cpe
