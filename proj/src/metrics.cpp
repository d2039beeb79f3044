#include "cpe/metrics.hpp"

#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "cpe/error.hpp"

namespace cpe {

MetricSpec MetricSpec::parse(const std::string& text) {
  MetricSpec spec;
  if (text == "macro_f1") return spec;
  if (text == "accuracy") {
    spec.kind = Kind::accuracy;
    return spec;
  }
  if (text == "recall") {
    spec.kind = Kind::recall;
    return spec;
  }
  const std::string prefix = "class_f1:";
  if (text.rfind(prefix, 0) == 0) {
    spec.kind = Kind::class_f1;
    std::stringstream in(text.substr(prefix.size()));
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        std::size_t used = 0;
        const int c = std::stoi(item, &used);
        if (used != item.size() || c < 0) throw std::invalid_argument(item);
        spec.classes.push_back(c);
      } catch (const std::exception&) {
        throw InputError(fmt::format("metric '{}': '{}' is not a class index", text, item));
      }
    }
    if (spec.classes.empty()) throw InputError(fmt::format("metric '{}' names no classes", text));
    return spec;
  }
  throw InputError(fmt::format("unknown metric '{}' (expected macro_f1, accuracy, recall or class_f1:i,j)", text));
}

std::string MetricSpec::name() const {
  switch (kind) {
    case Kind::macro_f1: return "macro_f1";
    case Kind::accuracy: return "accuracy";
    case Kind::recall: return "recall";
    case Kind::class_f1: return fmt::format("class_f1:{}", fmt::join(classes, ","));
  }
  return "macro_f1";
}

double ClassificationMetrics::value(const MetricSpec& spec) const {
  switch (spec.kind) {
    case MetricSpec::Kind::macro_f1: return macro_f1;
    case MetricSpec::Kind::accuracy: return accuracy;
    case MetricSpec::Kind::recall: return macro_recall;
    case MetricSpec::Kind::class_f1: {
      double total = 0.0;
      for (int c : spec.classes) {
        if (c < 0 || static_cast<std::size_t>(c) >= per_class.size()) {
          throw InputError(fmt::format("metric {}: class {} does not exist", spec.name(), c));
        }
        total += per_class[static_cast<std::size_t>(c)].f1;
      }
      return total / static_cast<double>(spec.classes.size());
    }
  }
  return 0.0;
}

ClassificationMetrics compute_metrics(std::span<const int> truth, std::span<const int> predicted,
                                      std::size_t num_classes) {
  if (truth.size() != predicted.size()) throw InputError("compute_metrics: truth and predictions differ in length");
  if (truth.empty()) throw InputError("compute_metrics: no rows");
  ClassificationMetrics m;
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (int v : {truth[i], predicted[i]}) {
      if (v < 0 || static_cast<std::size_t>(v) >= num_classes) {
        throw InputError(fmt::format("compute_metrics: label {} at row {} outside [0, {})", v, i, num_classes));
      }
    }
    ++m.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }

  std::size_t correct = 0;
  m.per_class.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    ClassScores& s = m.per_class[c];
    correct += m.confusion[c][c];
    for (std::size_t k = 0; k < num_classes; ++k) {
      s.support += m.confusion[c][k];
      s.predicted += m.confusion[k][c];
    }
    const auto tp = static_cast<double>(m.confusion[c][c]);
    s.precision = s.predicted > 0 ? tp / static_cast<double>(s.predicted) : 0.0;
    s.recall = s.support > 0 ? tp / static_cast<double>(s.support) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());

  double f1_total = 0.0;
  double recall_total = 0.0;
  std::size_t present = 0;
  std::size_t supported = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (m.per_class[c].support > 0) {
      recall_total += m.per_class[c].recall;
      ++supported;
    }
    if (m.per_class[c].support == 0 && m.per_class[c].predicted == 0) {
      m.absent_classes.push_back(static_cast<int>(c));
      continue;
    }
    f1_total += m.per_class[c].f1;
    ++present;
  }
  if (!m.absent_classes.empty()) {
    spdlog::warn("classes {} absent from truth and predictions; excluded from macro averages",
                 fmt::join(m.absent_classes, ","));
  }
  m.macro_f1 = f1_total / static_cast<double>(present);
  m.macro_recall = recall_total / static_cast<double>(supported);
  return m;
}

}  // namespace cpe
