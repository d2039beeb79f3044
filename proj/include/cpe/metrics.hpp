#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cpe {

/// Which number a run is selected and reported by.
struct MetricSpec {
  enum class Kind { macro_f1, accuracy, recall, class_f1 };
  Kind kind = Kind::macro_f1;
  /// For class_f1: the classes whose F1 scores are averaged.
  std::vector<int> classes;

  /// "macro_f1", "accuracy", "recall" (macro recall) or "class_f1:0,2".
  static MetricSpec parse(const std::string& text);
  std::string name() const;
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // rows whose true label is this class
  std::size_t predicted = 0;  // rows predicted as this class
};

struct ClassificationMetrics {
  std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]
  std::vector<ClassScores> per_class;
  double accuracy = 0.0;
  /// Mean F1 over classes that occur in the truth or the predictions.
  double macro_f1 = 0.0;
  /// Mean recall over classes that occur in the truth.
  double macro_recall = 0.0;
  /// Classes absent from both truth and predictions; excluded from macro averages.
  std::vector<int> absent_classes;

  double value(const MetricSpec& spec) const;
};

ClassificationMetrics compute_metrics(std::span<const int> truth, std::span<const int> predicted,
                                      std::size_t num_classes);

}  // namespace cpe
