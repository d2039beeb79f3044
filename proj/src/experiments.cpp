#include "cpe/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace cpe {
namespace {

constexpr const char* kAblationColumns[] = {"variant", "runs", "mean", "std", "formatted", "mean_accuracy",
                                            "mean_sigma2"};

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  // "±" is two bytes but one column.
  auto display_width = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char ch : s) n += (ch & 0xC0) != 0x80 ? 1 : 0;
    return n;
  };
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], display_width(r[c]));
  }
  std::string out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out += cells[c];
      if (c + 1 < cells.size()) out += std::string(width[c] - display_width(cells[c]) + 2, ' ');
    }
    out += '\n';
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  return out;
}

}  // namespace

RunFn training_runner(const LabeledDataset& data) {
  return [&data](const TrainConfig& config) {
    const TrainResult r = train(config, data);
    return RunOutcome{r.validation.primary, r.test.primary, r.test.metrics.accuracy, r.test.mean_sigma2};
  };
}

nlohmann::ordered_json GridResult::to_json() const {
  nlohmann::ordered_json j;
  j["metric"] = metric;
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    nlohmann::ordered_json r;
    r["lambda1"] = rows[i].lambda1;
    r["lambda2"] = rows[i].lambda2;
    r["val_metric"] = rows[i].outcome.val_metric;
    r["test_metric"] = rows[i].outcome.test_metric;
    r["best"] = i == best;
    table.push_back(std::move(r));
  }
  j["rows"] = std::move(table);
  j["best"] = {{"lambda1", best_row().lambda1}, {"lambda2", best_row().lambda2}};
  return j;
}

std::string GridResult::render_text() const {
  std::vector<std::vector<std::string>> cells;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    cells.push_back({fmt::format("{}", rows[i].lambda1), fmt::format("{}", rows[i].lambda2),
                     fmt::format("{:.4f}", rows[i].outcome.val_metric),
                     fmt::format("{:.4f}", rows[i].outcome.test_metric), i == best ? "*" : ""});
  }
  std::string out = render_table({"lambda1", "lambda2", "val_" + metric, "test_" + metric, "best"}, cells);
  out += fmt::format("best: lambda1={} lambda2={}\n", best_row().lambda1, best_row().lambda2);
  return out;
}

GridResult grid_search(const TrainConfig& config_template, std::span<const double> grid, const RunFn& run) {
  if (grid.empty()) throw InputError("grid_search: empty grid");
  for (double v : grid) {
    if (!(v > 0.0 && v <= 1.0)) spdlog::warn("grid value {} lies outside the conventional range (0, 1]", v);
  }
  GridResult result;
  result.metric = config_template.metric.name();
  for (double l1 : grid) {
    for (double l2 : grid) {
      TrainConfig c = config_template;
      c.objective.lambda1 = l1;
      c.objective.lambda2 = l2;
      result.rows.push_back({l1, l2, run(c)});
      spdlog::info("grid lambda1={} lambda2={}: val {:.4f}", l1, l2, result.rows.back().outcome.val_metric);
    }
  }
  auto better = [](const GridRow& a, const GridRow& b) {
    if (a.outcome.val_metric != b.outcome.val_metric) return a.outcome.val_metric > b.outcome.val_metric;
    if (a.lambda2 != b.lambda2) return a.lambda2 < b.lambda2;
    return a.lambda1 < b.lambda1;
  };
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    if (better(result.rows[i], result.rows[result.best])) result.best = i;
  }
  return result;
}

GridResult grid_search(const TrainConfig& config_template, const LabeledDataset& data, std::span<const double> grid) {
  return grid_search(config_template, grid, training_runner(data));
}

std::string label(AblationVariant v) {
  switch (v) {
    case AblationVariant::cpe: return "CPE";
    case AblationVariant::cpe_kl: return "CPE_KL";
    case AblationVariant::without_norm: return "w/o Norm";
    case AblationVariant::without_conf: return "w/o Conf";
    case AblationVariant::ce: return "CE";
  }
  return "CPE";
}

TrainConfig apply_variant(const TrainConfig& base, AblationVariant v) {
  TrainConfig c = base;
  ObjectiveConfig& o = c.objective;
  o.norm_variant = NormVariant::l2;
  o.conf_enabled = true;
  switch (v) {
    case AblationVariant::cpe: break;
    case AblationVariant::cpe_kl: o.norm_variant = NormVariant::kl; break;
    case AblationVariant::without_norm:
      o.norm_variant = NormVariant::none;
      o.lambda1 = 0.0;
      break;
    case AblationVariant::without_conf:
      o.conf_enabled = false;
      o.lambda2 = 0.0;
      break;
    case AblationVariant::ce:
      o.norm_variant = NormVariant::none;
      o.conf_enabled = false;
      o.mask_enabled = false;
      o.lambda1 = 0.0;
      o.lambda2 = 0.0;
      break;
  }
  return c;
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

std::string format_mean_std(double mean, double stddev) {
  return fmt::format("{:.2f} ± {:.2f}", 100.0 * mean, 100.0 * stddev);
}

const AblationRow& AblationTable::row(AblationVariant v) const {
  auto it = std::find_if(rows.begin(), rows.end(), [v](const AblationRow& r) { return r.variant == v; });
  if (it == rows.end()) throw InputError(fmt::format("ablation table has no row '{}'", label(v)));
  return *it;
}

AblationTable ablate(const TrainConfig& base, std::span<const std::uint64_t> seeds, const RunFn& run) {
  if (seeds.empty()) throw InputError("ablate: need at least one seed");
  AblationTable table;
  table.metric = base.metric.name();
  for (AblationVariant v : kAblationVariants) {
    AblationRow row{v, {seeds.begin(), seeds.end()}, {}, 0.0, 0.0, 0.0, 0.0};
    std::vector<double> primary;
    for (std::uint64_t seed : seeds) {
      TrainConfig c = apply_variant(base, v);
      c.seed = seed;
      row.runs.push_back(run(c));
      primary.push_back(row.runs.back().test_metric);
      row.mean_accuracy += row.runs.back().test_accuracy;
      row.mean_sigma2 += row.runs.back().test_sigma2;
      spdlog::info("ablation {} seed {}: test {} {:.4f}", label(v), seed, table.metric, primary.back());
    }
    const auto n = static_cast<double>(seeds.size());
    row.mean = std::accumulate(primary.begin(), primary.end(), 0.0) / n;
    row.stddev = sample_stddev(primary);
    row.mean_accuracy /= n;
    row.mean_sigma2 /= n;
    table.rows.push_back(std::move(row));
  }
  return table;
}

AblationTable ablate(const TrainConfig& base, const LabeledDataset& data, std::span<const std::uint64_t> seeds) {
  AblationTable table = ablate(base, seeds, training_runner(data));
  table.oracle_accuracy = nearest_centroid_accuracy(data);
  return table;
}

nlohmann::ordered_json AblationTable::to_json() const {
  nlohmann::ordered_json j;
  j["metric"] = metric;
  j["columns"] = kAblationColumns;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json o;
    o[kAblationColumns[0]] = label(r.variant);
    o[kAblationColumns[1]] = r.runs.size();
    o[kAblationColumns[2]] = r.mean;
    o[kAblationColumns[3]] = r.stddev;
    o[kAblationColumns[4]] = format_mean_std(r.mean, r.stddev);
    o[kAblationColumns[5]] = r.mean_accuracy;
    o[kAblationColumns[6]] = r.mean_sigma2;
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
      runs.push_back({{"seed", r.seeds[i]},
                      {"val_metric", r.runs[i].val_metric},
                      {"test_metric", r.runs[i].test_metric},
                      {"test_accuracy", r.runs[i].test_accuracy},
                      {"test_sigma2", r.runs[i].test_sigma2}});
    }
    o["per_seed"] = std::move(runs);
    list.push_back(std::move(o));
  }
  j["rows"] = std::move(list);
  j["nearest_centroid_accuracy"] = oracle_accuracy ? nlohmann::ordered_json(*oracle_accuracy) : nullptr;
  return j;
}

std::string AblationTable::render_text() const {
  std::vector<std::string> header(std::begin(kAblationColumns), std::end(kAblationColumns));
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    cells.push_back({label(r.variant), fmt::format("{}", r.runs.size()), fmt::format("{:.4f}", r.mean),
                     fmt::format("{:.4f}", r.stddev), format_mean_std(r.mean, r.stddev),
                     fmt::format("{:.4f}", r.mean_accuracy), fmt::format("{:.4f}", r.mean_sigma2)});
  }
  std::string out = fmt::format("metric: {}\n", metric) + render_table(header, cells);
  if (oracle_accuracy) out += fmt::format("nearest-centroid accuracy: {:.4f}\n", *oracle_accuracy);
  return out;
}

}  // namespace cpe
