#include "cpe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cpe/adam.hpp"

namespace cpe {
namespace {

std::string aggregation_name(ConfidenceAggregation a) {
  return a == ConfidenceAggregation::per_dimension ? "per_dimension" : "dimension_summed";
}

ConfidenceAggregation parse_aggregation(const std::string& s) {
  if (s == "per_dimension") return ConfidenceAggregation::per_dimension;
  if (s == "dimension_summed") return ConfidenceAggregation::dimension_summed;
  throw InputError(fmt::format("unknown confidence aggregation '{}'", s));
}

std::string reduction_name(ConfidenceReduction r) {
  return r == ConfidenceReduction::log_of_mean ? "log_of_mean" : "mean_of_logs";
}

ConfidenceReduction parse_reduction(const std::string& s) {
  if (s == "log_of_mean") return ConfidenceReduction::log_of_mean;
  if (s == "mean_of_logs") return ConfidenceReduction::mean_of_logs;
  throw InputError(fmt::format("unknown confidence reduction '{}'", s));
}

double mean_of_squares(const Tensor& t) {
  double total = 0.0;
  for (double v : t.data()) total += v * v;
  return total / static_cast<double>(t.size());
}

void check_labels_known(const LabeledDataset& data, std::size_t num_classes) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] < 0 || static_cast<std::size_t>(data.labels[i]) >= num_classes) {
      throw InputError(fmt::format("label {} at row {} unseen by a model with {} classes", data.labels[i], i,
                                   num_classes));
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (epochs < 1) throw InputError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw InputError("learning_rate must be > 0");
  if (hidden_dim < 1 || latent_dim < 1) throw InputError("hidden_dim and latent_dim must be >= 1");
  if (!(objective.lambda1 >= 0.0) || !(objective.lambda2 >= 0.0)) throw InputError("lambda1 and lambda2 must be >= 0");
  if (!(weight_decay >= 0.0)) throw InputError("weight_decay must be >= 0");
  if (objective.t1 && !(*objective.t1 > 0.0 && *objective.t1 < 1.0)) throw InputError("t1 must lie in (0, 1)");
  if (!(objective.t2 >= 0.0)) throw InputError("t2 must be >= 0");
  if (objective.norm_variant == NormVariant::none && objective.lambda1 > 0.0) {
    throw InputError("norm_variant=none contradicts lambda1 > 0");
  }
  if (!objective.conf_enabled && objective.lambda2 > 0.0) {
    throw InputError("confidence loss disabled but lambda2 > 0");
  }
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["learning_rate"] = learning_rate;
  j["lambda1"] = objective.lambda1;
  j["lambda2"] = objective.lambda2;
  j["norm_variant"] = to_string(objective.norm_variant);
  j["conf_enabled"] = objective.conf_enabled;
  j["mask_enabled"] = objective.mask_enabled;
  j["t1"] = objective.t1 ? nlohmann::ordered_json(*objective.t1) : nlohmann::ordered_json(nullptr);
  j["t2"] = objective.t2;
  j["confidence_aggregation"] = aggregation_name(objective.aggregation);
  j["confidence_reduction"] = reduction_name(objective.reduction);
  j["seed"] = seed;
  j["metric"] = metric.name();
  j["hidden_dim"] = hidden_dim;
  j["latent_dim"] = latent_dim;
  j["weight_decay"] = weight_decay;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig base) {
  TrainConfig c = std::move(base);
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.objective.lambda1 = j.value("lambda1", c.objective.lambda1);
    c.objective.lambda2 = j.value("lambda2", c.objective.lambda2);
    if (j.contains("norm_variant")) c.objective.norm_variant = parse_norm_variant(j.at("norm_variant"));
    c.objective.conf_enabled = j.value("conf_enabled", c.objective.conf_enabled);
    c.objective.mask_enabled = j.value("mask_enabled", c.objective.mask_enabled);
    if (j.contains("t1")) {
      c.objective.t1 = j.at("t1").is_null() ? std::nullopt : std::optional<double>(j.at("t1").get<double>());
    }
    c.objective.t2 = j.value("t2", c.objective.t2);
    if (j.contains("confidence_aggregation")) {
      c.objective.aggregation = parse_aggregation(j.at("confidence_aggregation"));
    }
    if (j.contains("confidence_reduction")) c.objective.reduction = parse_reduction(j.at("confidence_reduction"));
    c.seed = j.value("seed", c.seed);
    if (j.contains("metric")) c.metric = MetricSpec::parse(j.at("metric"));
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(fmt::format("config: {}", e.what()));
  }
  return c;
}

TrainConfig TrainConfig::transformer_preset() {
  TrainConfig c;
  c.batch_size = 128;
  c.learning_rate = 5e-5;
  c.epochs = 20;
  return c;
}

std::vector<diff::NamedTensor> Model::named() const {
  auto out = encoder.named();
  out.push_back({"centers", centers});
  return out;
}

Model Model::from_named(const std::vector<diff::NamedTensor>& tensors) {
  Model m;
  m.encoder = EncoderParams::from_named(tensors);
  auto it = std::find_if(tensors.begin(), tensors.end(), [](const auto& t) { return t.name == "centers"; });
  if (it == tensors.end()) throw InputError("model: missing tensor 'centers'");
  m.centers = it->value;
  if (m.centers.rank() != 2 || m.centers.dim(0) != m.encoder.shape().latent_dim || m.centers.dim(1) < 2) {
    throw InputError("model: centers must be latent_dim x C with C >= 2");
  }
  return m;
}

Model init_model(const EncoderShape& shape, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw InputError("init_model: need at least two classes");
  Model m;
  m.encoder = init_encoder(shape, seed);
  Rng rng = make_rng(seed, kInitStream + 100);
  const double a = std::sqrt(6.0 / static_cast<double>(shape.latent_dim + num_classes));
  m.centers = uniform({shape.latent_dim, num_classes}, -a, a, rng);
  return m;
}

nlohmann::ordered_json EpochRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["l_ce"] = mean_loss.l_ce;
  j["l_norm"] = mean_loss.l_norm;
  j["l_conf"] = mean_loss.l_conf;
  j["norm_variant"] = to_string(mean_loss.norm_variant);
  j["lambda1"] = mean_loss.lambda1;
  j["lambda2"] = mean_loss.lambda2;
  j["total"] = mean_loss.total;
  j["train_sigma2"] = train_sigma2;
  j["val_metric"] = val_metric;
  j["mask_activations"] = mask_activations;
  j["masked_entries"] = masked_entries;
  j["steps"] = steps;
  return j;
}

nlohmann::ordered_json MetricsReport::to_json(const std::vector<std::string>& label_names) const {
  nlohmann::ordered_json j;
  j["split"] = to_string(split);
  j["metric"] = metric_name;
  j["primary"] = primary;
  j["accuracy"] = metrics.accuracy;
  j["macro_f1"] = metrics.macro_f1;
  j["macro_recall"] = metrics.macro_recall;
  j["mean_sigma2"] = mean_sigma2;
  j["best_epoch"] = best_epoch;
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < metrics.per_class.size(); ++c) {
    const auto& s = metrics.per_class[c];
    nlohmann::ordered_json row;
    row["class"] = c < label_names.size() ? label_names[c] : fmt::format("{}", c);
    row["precision"] = s.precision;
    row["recall"] = s.recall;
    row["f1"] = s.f1;
    row["support"] = s.support;
    classes.push_back(std::move(row));
  }
  j["per_class"] = std::move(classes);
  j["confusion"] = metrics.confusion;
  j["absent_classes"] = metrics.absent_classes;
  nlohmann::ordered_json trace = nlohmann::ordered_json::array();
  for (const auto& e : epochs) trace.push_back(e.to_json());
  j["epochs"] = std::move(trace);
  return j;
}

std::vector<int> predict(const Model& model, const Tensor& features) {
  const GaussianEmbedding emb = encode_batch(model.encoder, features);
  const std::size_t n = emb.mu.dim(0);
  const std::size_t d = emb.mu.dim(1);
  const std::size_t c = model.centers.dim(1);
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c; ++k) {
      double score = 0.0;
      for (std::size_t j = 0; j < d; ++j) score += emb.mu.at(i, j) * model.centers.at(j, k);
      if (score > best) {
        best = score;
        out[i] = static_cast<int>(k);
      }
    }
  }
  return out;
}

MetricsReport evaluate(const Model& model, const LabeledDataset& data, Split split, const MetricSpec& metric) {
  const std::size_t c = model.centers.dim(1);
  check_labels_known(data, c);
  const auto index = data.indices(split);
  if (index.empty()) throw InputError(fmt::format("evaluate: {} split is empty", to_string(split)));
  const Tensor x = data.rows(index);
  const std::vector<int> truth = data.labels_at(index);

  MetricsReport r;
  r.split = split;
  r.metric_name = metric.name();
  r.metrics = compute_metrics(truth, predict(model, x), c);
  r.primary = r.metrics.value(metric);
  r.mean_sigma2 = mean_of_squares(encode_batch(model.encoder, x).sigma);
  return r;
}

TrainResult train(const TrainConfig& config, const LabeledDataset& data, const TrainHooks& hooks) {
  config.validate();
  data.validate();
  for (Split s : {Split::train, Split::val, Split::test}) {
    if (data.indices(s).empty()) throw InputError(fmt::format("train: {} split is empty", to_string(s)));
  }
  const std::size_t num_classes = data.num_classes();
  if (num_classes < 2) throw InputError("train: need at least two classes");
  const EncoderShape shape{data.feature_dim(), config.hidden_dim, config.latent_dim};

  Model model = init_model(shape, num_classes, config.seed);
  Adam optimizer({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  Rng shuffle_rng = make_rng(config.seed, kShuffleStream);
  Rng noise_rng = make_rng(config.seed, kNoiseStream);

  std::vector<std::size_t> order = data.indices(Split::train);
  std::vector<std::string> names;
  for (const auto& t : model.named()) names.push_back(t.name);

  TrainResult result;
  result.model = model;
  double best_val = -std::numeric_limits<double>::infinity();
  std::vector<EpochRecord> trace;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double ce = 0.0, norm = 0.0, conf = 0.0, sigma2 = 0.0;
    double lambda1 = 0.0, lambda2 = 0.0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const std::vector<int> labels = data.labels_at(batch);
      const Tensor eps = standard_normal({batch.size(), config.latent_dim}, noise_rng);

      diff::Tape tape;
      const EncoderVars enc = bind(tape, model.encoder);
      const Var centers = tape.leaf(model.centers);
      const ObjectiveTerms terms =
          cpe_objective(enc, centers, tape.constant(data.rows(batch)), labels, eps, config.objective);
      const diff::Gradients grads = tape.backward(terms.total);

      std::vector<Tensor*> params = {&model.encoder.trunk_weight, &model.encoder.trunk_bias,
                                     &model.encoder.mean_weight,  &model.encoder.mean_bias,
                                     &model.encoder.logvar_weight, &model.encoder.logvar_bias,
                                     &model.centers};
      std::vector<Tensor> param_grads;
      for (const Var& v : enc.all()) param_grads.push_back(grads[v]);
      param_grads.push_back(grads[centers]);

      if (hooks.on_step) hooks.on_step(StepInfo{epoch, rec.steps, terms});
      optimizer.step(names, params, param_grads);

      ++rec.steps;
      ce += terms.breakdown.l_ce;
      norm += terms.breakdown.l_norm;
      conf += terms.breakdown.l_conf;
      lambda1 = terms.breakdown.lambda1;
      lambda2 = terms.breakdown.lambda2;
      sigma2 += mean_of_squares(terms.embedding.sigma.value());
      const std::size_t masked = terms.mask.masked_count();
      rec.masked_entries += masked;
      if (masked > 0) ++rec.mask_activations;
    }

    const auto steps = static_cast<double>(rec.steps);
    rec.mean_loss = total_loss(ce / steps, norm / steps, conf / steps, lambda1, lambda2,
                               config.objective.norm_variant);
    rec.train_sigma2 = sigma2 / steps;
    const MetricsReport val = evaluate(model, data, Split::val, config.metric);
    rec.val_metric = val.primary;
    if (val.primary > best_val) {
      best_val = val.primary;
      result.model = model;
      result.validation = val;
      result.validation.best_epoch = epoch;
    }
    spdlog::debug("epoch {}: loss {:.6f} (ce {:.6f}, norm {:.6f}, conf {:.6f}) sigma2 {:.4f} val {} {:.4f} mask {}",
                  epoch, rec.mean_loss.total, rec.mean_loss.l_ce, rec.mean_loss.l_norm, rec.mean_loss.l_conf,
                  rec.train_sigma2, config.metric.name(), rec.val_metric, rec.masked_entries);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    trace.push_back(rec);
  }

  result.test = evaluate(result.model, data, Split::test, config.metric);
  result.test.best_epoch = result.validation.best_epoch;
  result.test.epochs = trace;
  result.validation.epochs = std::move(trace);
  return result;
}

}  // namespace cpe
