#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpe/diff/tensor.hpp"

namespace cpe {

using diff::Tensor;

enum class Split { train, val, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct LabeledDataset {
  Tensor features;  // N x F
  std::vector<int> labels;
  std::vector<Split> splits;
  std::vector<std::string> label_names;
  /// Source text per row; empty for purely numeric datasets.
  std::vector<std::string> texts;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t feature_dim() const { return features.rank() == 2 ? features.dim(1) : 0; }
  std::size_t num_classes() const noexcept { return label_names.size(); }

  std::vector<std::size_t> indices(Split split) const;
  /// Feature rows at the given indices, stacked.
  Tensor rows(std::span<const std::size_t> index) const;
  std::vector<int> labels_at(std::span<const std::size_t> index) const;

  /// Throws InputError if the invariants do not hold.
  void validate() const;

  bool operator==(const LabeledDataset&) const = default;
};

/// Isotropic Gaussian classes. When `means` is empty, centers are placed on
/// random orthonormal directions scaled so that every pair of centers is
/// exactly overlap * cov_scale apart (requires F >= C).
struct MixtureSpec {
  std::size_t num_classes = 3;
  std::size_t feature_dim = 20;
  std::vector<std::vector<double>> means;
  double cov_scale = 1.0;
  std::size_t train_per_class = 200;
  std::size_t val_per_class = 100;
  std::size_t test_per_class = 200;
  double overlap = 2.0;

  void validate() const;
  nlohmann::json to_json() const;
  static MixtureSpec from_json(const nlohmann::json& j);
};

LabeledDataset synth_mixture(const MixtureSpec& spec, std::uint64_t seed);

/// Center positions synth_mixture would use for (spec, seed); C x F.
Tensor mixture_means(const MixtureSpec& spec, std::uint64_t seed);

enum class TabularFormat { tsv, jsonl };

TabularFormat format_from_path(const std::filesystem::path& path);

/// Column/key names for tabular files. If the features column is present
/// it is used verbatim; otherwise the text column is hashed into hash_dim
/// buckets. If the split column is absent, rows are assigned 70/15/15 by a
/// seeded shuffle.
struct TabularSchema {
  std::string text_key = "text";
  std::string label_key = "label";
  std::string split_key = "split";
  std::string features_key = "features";
  std::size_t hash_dim = 256;
  std::uint64_t hash_seed = 0;
  std::uint64_t split_seed = 0;
};

LabeledDataset load_tabular(const std::filesystem::path& path, TabularFormat format,
                            const TabularSchema& schema = {});
LabeledDataset parse_tabular(std::istream& in, TabularFormat format, const TabularSchema& schema = {});

/// Writes label, split, features (and text when present) so that
/// load_tabular reproduces the dataset exactly.
void write_tabular(const LabeledDataset& data, std::ostream& out, TabularFormat format,
                   const TabularSchema& schema = {});

/// Signed hashing-trick bag of words, L2-normalized per row. Tokens are
/// maximal runs of ASCII alphanumerics or non-ASCII bytes, lowercased.
Tensor hash_featurize(std::span<const std::string> texts, std::size_t dim, std::uint64_t seed);

std::vector<std::string> tokenize(const std::string& text);

/// Accuracy on `eval` of assigning each row to the nearest class mean
/// fitted on `fit`. Classes with no rows in `fit` are never predicted.
double nearest_centroid_accuracy(const LabeledDataset& data, Split fit = Split::train, Split eval = Split::test);

}  // namespace cpe
