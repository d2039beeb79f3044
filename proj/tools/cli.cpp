#include "cli.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cpe/checkpoint.hpp"
#include "cpe/data.hpp"
#include "cpe/experiments.hpp"
#include "cpe/gradcheck.hpp"
#include "cpe/trainer.hpp"

namespace cpe::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything that can be given on the command line for a training-style
// command. Unset optionals fall through to the config file, then defaults.
struct RunFlags {
  std::string config_path;
  std::string dataset_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<std::string> norm_variant;
  bool no_conf = false;
  bool no_mask = false;
  std::optional<double> t1;
  std::optional<double> t2;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::size_t> hidden_dim;
  std::optional<std::size_t> latent_dim;
  std::optional<std::string> metric;
  std::optional<double> weight_decay;
  std::optional<std::string> text_key;
  std::optional<std::string> label_key;
  std::optional<std::string> split_key;
  std::optional<std::size_t> hash_dim;
  std::optional<std::uint64_t> hash_seed;
};

void add_run_flags(CLI::App* app, RunFlags& f, bool multi_seed) {
  app->add_option("--config", f.config_path, "JSON config, or a manifest.json from an earlier run");
  app->add_option("--dataset", f.dataset_path, "Dataset file (.tsv or .jsonl)");
  app->add_option("--out", f.out_dir, "Output directory");
  if (multi_seed) {
    app->add_option("--seeds", f.seeds, "Comma-separated seed list")->delimiter(',');
  } else {
    app->add_option("--seed", f.seed, "Random seed");
  }
  app->add_option("--lambda1", f.lambda1, "Weight of the variance regularizer");
  app->add_option("--lambda2", f.lambda2, "Weight of the confidence loss");
  app->add_option("--norm-variant", f.norm_variant, "Variance regularizer: kl, l2 or none")
      ->check(CLI::IsMember({"kl", "l2", "none"}));
  app->add_flag("--no-conf", f.no_conf, "Disable the confidence loss");
  app->add_flag("--no-mask", f.no_mask, "Disable the overly mask");
  app->add_option("--t1", f.t1, "Mask confidence threshold (default 1.5/C)");
  app->add_option("--t2", f.t2, "Mask gap threshold");
  app->add_option("--epochs", f.epochs);
  app->add_option("--batch-size", f.batch_size);
  app->add_option("--lr", f.lr, "Adam learning rate");
  app->add_option("--hidden-dim", f.hidden_dim);
  app->add_option("--latent-dim", f.latent_dim);
  app->add_option("--metric", f.metric, "macro_f1, accuracy, recall or class_f1:i,j");
  app->add_option("--weight-decay", f.weight_decay, "Decoupled weight decay");
  app->add_option("--text-key", f.text_key, "Text column or key");
  app->add_option("--label-key", f.label_key, "Label column or key");
  app->add_option("--split-key", f.split_key, "Split column or key");
  app->add_option("--hash-dim", f.hash_dim, "Buckets for hashed text features");
  app->add_option("--hash-seed", f.hash_seed, "Seed for hashed text features");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(fmt::format("cannot open '{}'", path.string()));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

std::string utc_now() { return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr))); }

// The config file may be a bare config or a manifest that wraps one.
struct LoadedConfig {
  json config = json::object();
  json dataset = json::object();
};

LoadedConfig load_config_file(const std::string& path) {
  LoadedConfig loaded;
  if (path.empty()) return loaded;
  json j = read_json_file(path);
  if (j.contains("config") && j.at("config").is_object()) {
    loaded.config = j.at("config");
    if (j.contains("dataset") && j.at("dataset").is_object()) loaded.dataset = j.at("dataset");
  } else {
    loaded.config = std::move(j);
  }
  return loaded;
}

TrainConfig resolve_config(const RunFlags& f, const LoadedConfig& loaded) {
  TrainConfig c = TrainConfig::from_json(nlohmann::json::parse(loaded.config.dump()));
  if (f.seed) c.seed = *f.seed;
  if (f.lambda1) c.objective.lambda1 = *f.lambda1;
  if (f.lambda2) c.objective.lambda2 = *f.lambda2;
  if (f.norm_variant) c.objective.norm_variant = parse_norm_variant(*f.norm_variant);
  if (f.no_conf) c.objective.conf_enabled = false;
  if (f.no_mask) c.objective.mask_enabled = false;
  if (f.t1) c.objective.t1 = *f.t1;
  if (f.t2) c.objective.t2 = *f.t2;
  if (f.epochs) c.epochs = *f.epochs;
  if (f.batch_size) c.batch_size = *f.batch_size;
  if (f.lr) c.learning_rate = *f.lr;
  if (f.hidden_dim) c.hidden_dim = *f.hidden_dim;
  if (f.latent_dim) c.latent_dim = *f.latent_dim;
  if (f.metric) c.metric = MetricSpec::parse(*f.metric);
  if (f.weight_decay) c.weight_decay = *f.weight_decay;
  c.validate();
  return c;
}

struct DatasetInfo {
  LabeledDataset data;
  fs::path path;
  std::string blob_sha1;
  TabularSchema schema;

  json to_json() const {
    json j;
    j["path"] = path.string();
    j["git_blob_sha1"] = blob_sha1;
    j["rows"] = data.size();
    j["feature_dim"] = data.feature_dim();
    j["label_names"] = data.label_names;
    j["schema"] = {{"text_key", schema.text_key},   {"label_key", schema.label_key},
                   {"split_key", schema.split_key}, {"features_key", schema.features_key},
                   {"hash_dim", schema.hash_dim},   {"hash_seed", schema.hash_seed},
                   {"split_seed", schema.split_seed}};
    return j;
  }
};

DatasetInfo load_dataset(const RunFlags& f, const LoadedConfig& loaded) {
  DatasetInfo info;
  const json& recorded = loaded.dataset;
  if (!f.dataset_path.empty()) {
    info.path = f.dataset_path;
  } else if (recorded.contains("path")) {
    info.path = recorded.at("path").get<std::string>();
  } else {
    throw UsageError("missing required flag --dataset");
  }
  if (!fs::exists(info.path)) throw UsageError(fmt::format("--dataset: no such file '{}'", info.path.string()));

  if (recorded.contains("schema")) {
    const json& s = recorded.at("schema");
    info.schema.text_key = s.value("text_key", info.schema.text_key);
    info.schema.label_key = s.value("label_key", info.schema.label_key);
    info.schema.split_key = s.value("split_key", info.schema.split_key);
    info.schema.features_key = s.value("features_key", info.schema.features_key);
    info.schema.hash_dim = s.value("hash_dim", info.schema.hash_dim);
    info.schema.hash_seed = s.value("hash_seed", info.schema.hash_seed);
    info.schema.split_seed = s.value("split_seed", info.schema.split_seed);
  }
  if (f.text_key) info.schema.text_key = *f.text_key;
  if (f.label_key) info.schema.label_key = *f.label_key;
  if (f.split_key) info.schema.split_key = *f.split_key;
  if (f.hash_dim) info.schema.hash_dim = *f.hash_dim;
  if (f.hash_seed) info.schema.hash_seed = *f.hash_seed;

  info.blob_sha1 = git_blob_sha1(info.path);
  if (recorded.contains("git_blob_sha1") && recorded.at("git_blob_sha1") != info.blob_sha1) {
    spdlog::warn("dataset {} does not match the manifest's content hash", info.path.string());
  }
  info.data = load_tabular(info.path, format_from_path(info.path), info.schema);
  return info;
}

fs::path require_out_dir(const RunFlags& f) {
  if (f.out_dir.empty()) throw UsageError("missing required flag --out");
  fs::create_directories(f.out_dir);
  return f.out_dir;
}

json make_manifest(const std::string& command, const TrainConfig& config, const DatasetInfo& dataset,
                   const std::vector<std::uint64_t>& seeds, const std::string& started_at) {
  json m;
  m["tool"] = "cpe";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["config"] = config.to_json();
  m["dataset"] = dataset.to_json();
  m["seeds"] = seeds;
  m["started_at"] = started_at;
  m["finished_at"] = utc_now();
  return m;
}

int cmd_train(const RunFlags& f, std::ostream& out) {
  const std::string started = utc_now();
  const LoadedConfig loaded = load_config_file(f.config_path);
  const TrainConfig config = resolve_config(f, loaded);
  const DatasetInfo dataset = load_dataset(f, loaded);
  const fs::path dir = require_out_dir(f);

  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) {
    metrics << e.to_json().dump() << '\n';
    metrics.flush();
  };
  const TrainResult result = train(config, dataset.data, hooks);

  save_checkpoint(dir / "checkpoint.json", result.model.named(),
                  {{"config", nlohmann::json::parse(config.to_json().dump())},
                   {"label_names", dataset.data.label_names},
                   {"feature_dim", dataset.data.feature_dim()}});
  json report;
  report["config"] = config.to_json();
  report["validation"] = result.validation.to_json(dataset.data.label_names);
  report["test"] = result.test.to_json(dataset.data.label_names);
  write_text_file(dir / "report.json", report.dump(2) + "\n");
  write_text_file(dir / "manifest.json", make_manifest("train", config, dataset, {config.seed}, started).dump(2) + "\n");

  out << fmt::format("best epoch {}: val {} {:.4f}, test {} {:.4f}, test accuracy {:.4f}, test mean sigma^2 {:.4g}\n",
                     result.test.best_epoch, result.validation.metric_name, result.validation.primary,
                     result.test.metric_name, result.test.primary, result.test.metrics.accuracy,
                     result.test.mean_sigma2);
  out << fmt::format("wrote {}\n", dir.string());
  return kOk;
}

int cmd_eval(const RunFlags& f, const std::string& checkpoint, const std::string& split, std::ostream& out) {
  const LoadedConfig loaded = load_config_file(f.config_path);
  const DatasetInfo dataset = load_dataset(f, loaded);
  nlohmann::json meta;
  const Model model = Model::from_named(load_checkpoint(checkpoint, &meta));
  const MetricSpec metric = f.metric ? MetricSpec::parse(*f.metric)
                            : meta.contains("config")
                                ? MetricSpec::parse(meta["config"].value("metric", std::string("macro_f1")))
                                : MetricSpec{};
  const MetricsReport report = evaluate(model, dataset.data, parse_split(split), metric);
  out << report.to_json(dataset.data.label_names).dump(2) << '\n';
  return kOk;
}

int cmd_ablate(const RunFlags& f, std::ostream& out) {
  const std::string started = utc_now();
  const LoadedConfig loaded = load_config_file(f.config_path);
  const TrainConfig config = resolve_config(f, loaded);
  const DatasetInfo dataset = load_dataset(f, loaded);
  const fs::path dir = require_out_dir(f);
  const std::vector<std::uint64_t> seeds = f.seeds.empty() ? std::vector<std::uint64_t>{1, 2, 3, 4, 5} : f.seeds;

  const AblationTable table = ablate(config, dataset.data, seeds);
  write_text_file(dir / "ablation.json", table.to_json().dump(2) + "\n");
  write_text_file(dir / "ablation.txt", table.render_text());
  write_text_file(dir / "manifest.json", make_manifest("ablate", config, dataset, seeds, started).dump(2) + "\n");
  out << table.render_text();
  return kOk;
}

int cmd_gridsearch(const RunFlags& f, std::vector<double> grid, std::ostream& out) {
  const std::string started = utc_now();
  const LoadedConfig loaded = load_config_file(f.config_path);
  const TrainConfig config = resolve_config(f, loaded);
  const DatasetInfo dataset = load_dataset(f, loaded);
  const fs::path dir = require_out_dir(f);
  if (grid.empty()) grid = kDefaultLambdaGrid;

  const GridResult result = grid_search(config, dataset.data, grid);
  json doc = result.to_json();
  doc["grid"] = grid;
  write_text_file(dir / "gridsearch.json", doc.dump(2) + "\n");
  write_text_file(dir / "gridsearch.txt", result.render_text());
  write_text_file(dir / "manifest.json",
                  make_manifest("gridsearch", config, dataset, {config.seed}, started).dump(2) + "\n");
  out << result.render_text();
  return kOk;
}

int cmd_gradcheck(const GradcheckOptions& options, const std::string& out_path, std::ostream& out) {
  const GradcheckReport report = run_gradcheck(options);
  out << report.render_text();
  if (!out_path.empty()) write_text_file(out_path, report.to_json().dump(2) + "\n");
  return report.passed() ? kOk : kVerificationFailure;
}

struct SynthFlags {
  std::string spec_path;
  std::string out_path;
  std::uint64_t seed = 0;
  std::optional<std::size_t> classes;
  std::optional<std::size_t> features;
  std::optional<std::size_t> train_per_class;
  std::optional<std::size_t> val_per_class;
  std::optional<std::size_t> test_per_class;
  std::optional<double> overlap;
  std::optional<double> cov_scale;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  if (f.out_path.empty()) throw UsageError("missing required flag --out");
  MixtureSpec spec;
  if (!f.spec_path.empty()) spec = MixtureSpec::from_json(nlohmann::json::parse(read_json_file(f.spec_path).dump()));
  if (f.classes) spec.num_classes = *f.classes;
  if (f.features) spec.feature_dim = *f.features;
  if (f.train_per_class) spec.train_per_class = *f.train_per_class;
  if (f.val_per_class) spec.val_per_class = *f.val_per_class;
  if (f.test_per_class) spec.test_per_class = *f.test_per_class;
  if (f.overlap) spec.overlap = *f.overlap;
  if (f.cov_scale) spec.cov_scale = *f.cov_scale;
  spec.validate();

  const fs::path path = f.out_path;
  const LabeledDataset data = synth_mixture(spec, f.seed);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  write_tabular(data, file, format_from_path(path));
  out << fmt::format("wrote {} rows ({} classes, {} features) to {}\n", data.size(), data.num_classes(),
                     data.feature_dim(), path.string());
  return kOk;
}

}  // namespace

std::string git_blob_sha1(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();
  const std::string header = fmt::format("blob {}", content.size());

  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  const bool ok = ctx != nullptr && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size() + 1) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &length) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1 digest failed");
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("cpe");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("CPE_LOG_LEVEL");
  spdlog::set_level(level != nullptr ? spdlog::level::from_str(level) : spdlog::level::info);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Confidence-optimized probabilistic encoding: training, experiments and self-checks", "cpe"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  RunFlags train_flags, eval_flags, ablate_flags, grid_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "Train one model and write checkpoint, metrics and manifest");
  add_run_flags(train_cmd, train_flags, false);

  std::string checkpoint, split = "test";
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on one split");
  add_run_flags(eval_cmd, eval_flags, false);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint.json from train")->required();
  eval_cmd->add_option("--split", split, "train, val or test");

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Run the five-variant ablation over seeds");
  add_run_flags(ablate_cmd, ablate_flags, true);

  std::vector<double> grid;
  CLI::App* grid_cmd = app.add_subcommand("gridsearch", "Grid search over (lambda1, lambda2)");
  add_run_flags(grid_cmd, grid_flags, false);
  grid_cmd->add_option("--grid", grid, "Comma-separated lambda values")->delimiter(',');

  GradcheckOptions gc;
  std::string gc_out;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every op and the objective");
  gc_cmd->add_option("--cases", gc.cases, "Randomized cases per op");
  gc_cmd->add_option("--seed", gc.seed);
  gc_cmd->add_option("--tol", gc.tolerance, "Relative error tolerance");
  gc_cmd->add_option("--out", gc_out, "Write the JSON report here");
  gc_cmd->add_flag("--inject-fault", gc.inject_fault, "Perturb one backward rule; the check must then fail");

  SynthFlags sf;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Write a synthetic Gaussian-mixture dataset");
  synth_cmd->add_option("--spec", sf.spec_path, "Mixture spec JSON");
  synth_cmd->add_option("--out", sf.out_path, "Output file (.jsonl or .tsv)");
  synth_cmd->add_option("--seed", sf.seed);
  synth_cmd->add_option("--classes", sf.classes);
  synth_cmd->add_option("--features", sf.features);
  synth_cmd->add_option("--train-per-class", sf.train_per_class);
  synth_cmd->add_option("--val-per-class", sf.val_per_class);
  synth_cmd->add_option("--test-per-class", sf.test_per_class);
  synth_cmd->add_option("--overlap", sf.overlap, "Pairwise center distance in units of the noise scale");
  synth_cmd->add_option("--cov-scale", sf.cov_scale, "Per-coordinate noise standard deviation");

  std::vector<const char*> argv{"cpe"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, out);
    if (*eval_cmd) return cmd_eval(eval_flags, checkpoint, split, out);
    if (*ablate_cmd) return cmd_ablate(ablate_flags, out);
    if (*grid_cmd) return cmd_gridsearch(grid_flags, grid, out);
    if (*gc_cmd) return cmd_gradcheck(gc, gc_out, out);
    if (*synth_cmd) return cmd_synth(sf, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    // InputError and ShapeError: bad flags, configs or input files.
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kVerificationFailure;
  }
  return kUsageError;
}

}  // namespace cpe::cli
