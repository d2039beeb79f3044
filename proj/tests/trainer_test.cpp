#include <cmath>
#include <limits>
#include <numeric>

#include <gtest/gtest.h>

#include "cpe/adam.hpp"
#include "cpe/error.hpp"
#include "cpe/experiments.hpp"
#include "cpe/metrics.hpp"
#include "cpe/trainer.hpp"
#include "oracles.hpp"

namespace {

using namespace cpe;

TEST(Adam, ZeroGradientKeepsParametersAndDecaysMoments) {
  Adam opt({0.1});
  Tensor p = Tensor::vector({1.0, -2.0});
  opt.step({"p"}, {&p}, {Tensor::vector({1.0, 1.0})});
  const Tensor after_first = p;
  const Tensor m1 = opt.first_moments()[0], v1 = opt.second_moments()[0];
  // With zero gradient the bias-corrected step is still driven by m; use
  // a fresh optimizer to isolate the zero-gradient case.
  Adam fresh({0.1});
  Tensor q = Tensor::vector({1.0, -2.0});
  fresh.step({"q"}, {&q}, {Tensor::zeros({2})});
  EXPECT_EQ(q, Tensor::vector({1.0, -2.0}));
  opt.step({"p"}, {&p}, {Tensor::zeros({2})});
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(opt.first_moments()[0][i], 0.9 * m1[i]);
    EXPECT_EQ(opt.second_moments()[0][i], 0.999 * v1[i]);
  }
  EXPECT_NE(p, after_first);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  const double lr = 0.01;
  Adam opt({lr});
  Tensor p = Tensor::vector({0.0});
  opt.step({"p"}, {&p}, {Tensor::vector({1.0})});
  EXPECT_NEAR(p[0], -lr / (1.0 + 1e-8), 1e-18);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  const double lr = 1e-3;
  Adam opt({lr});
  Tensor p = Tensor::vector({0.0});
  double last = 0.0;
  for (int t = 0; t < 5000; ++t) {
    const double before = p[0];
    opt.step({"p"}, {&p}, {Tensor::vector({0.37})});
    last = before - p[0];
  }
  EXPECT_NEAR(last, lr, 1e-9);
}

TEST(Adam, NonFiniteGradientNamesParameterAndLeavesState) {
  Adam opt;
  Tensor a = Tensor::vector({1.0}), b = Tensor::vector({2.0});
  try {
    opt.step({"alpha", "beta"}, {&a, &b}, {Tensor::vector({0.5}), Tensor::vector({std::nan("")})});
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
  }
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(opt.step_count(), 0u);
}

TEST(Adam, DecoupledWeightDecayShrinksWithZeroGradient) {
  Adam opt({0.1, 0.9, 0.999, 1e-8, 0.5});
  Tensor p = Tensor::vector({2.0});
  opt.step({"p"}, {&p}, {Tensor::zeros({1})});
  EXPECT_NEAR(p[0], 2.0 * (1.0 - 0.1 * 0.5), 1e-15);
}

TEST(Metrics, PerfectPredictions) {
  const std::vector<int> y = {0, 1, 2, 1, 0};
  const ClassificationMetrics m = compute_metrics(y, y, 3);
  EXPECT_EQ(m.macro_f1, 1.0);
  EXPECT_EQ(m.accuracy, 1.0);
}

TEST(Metrics, AllOneClassOnBalancedPair) {
  const std::vector<int> truth = {0, 0, 1, 1}, pred = {0, 0, 0, 0};
  const ClassificationMetrics m = compute_metrics(truth, pred, 2);
  // Predicted class: precision 1/2, recall 1 -> F1 2/3; the other has F1 0.
  EXPECT_NEAR(m.per_class[0].f1, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(m.per_class[1].f1, 0.0);
  EXPECT_NEAR(m.macro_f1, 1.0 / 3.0, 1e-15);
}

TEST(Metrics, AbsentClassExcludedFromMacroAverage) {
  const std::vector<int> truth = {0, 1, 0, 1}, pred = {0, 1, 1, 1};
  const ClassificationMetrics m = compute_metrics(truth, pred, 3);
  EXPECT_EQ(m.absent_classes, std::vector<int>{2});
  EXPECT_NEAR(m.macro_f1, (m.per_class[0].f1 + m.per_class[1].f1) / 2.0, 1e-15);
}

TEST(Metrics, AccuracyEqualsConfusionTrace) {
  Rng rng = make_rng(3);
  std::uniform_int_distribution<int> cls(0, 3);
  std::vector<int> truth(97), pred(97);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth[i] = cls(rng);
    pred[i] = cls(rng);
  }
  const ClassificationMetrics m = compute_metrics(truth, pred, 4);
  std::size_t diag = 0, correct = 0;
  for (std::size_t c = 0; c < 4; ++c) diag += m.confusion[c][c];
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i] ? 1 : 0;
  EXPECT_EQ(diag, correct);
  EXPECT_EQ(m.accuracy, static_cast<double>(correct) / 97.0);
  for (const auto& s : m.per_class) {
    for (double v : {s.precision, s.recall, s.f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Metrics, ClassSubsetAndRecall) {
  const std::vector<int> truth = {0, 0, 1, 1, 2, 2}, pred = {0, 1, 1, 1, 2, 0};
  const ClassificationMetrics m = compute_metrics(truth, pred, 3);
  const MetricSpec subset = MetricSpec::parse("class_f1:0,2");
  EXPECT_EQ(subset.name(), "class_f1:0,2");
  EXPECT_NEAR(m.value(subset), (m.per_class[0].f1 + m.per_class[2].f1) / 2.0, 1e-15);
  EXPECT_NEAR(m.value(MetricSpec::parse("recall")), (0.5 + 1.0 + 0.5) / 3.0, 1e-15);
  EXPECT_EQ(m.value(MetricSpec::parse("accuracy")), m.accuracy);
  EXPECT_THROW(MetricSpec::parse("class_f1:"), InputError);
  EXPECT_THROW(MetricSpec::parse("bogus"), InputError);
}

LabeledDataset separable_pair() {
  MixtureSpec spec;
  spec.num_classes = 2;
  spec.feature_dim = 4;
  spec.overlap = 8.0;
  spec.train_per_class = 100;
  spec.val_per_class = 50;
  spec.test_per_class = 100;
  return synth_mixture(spec, 5);
}

TrainConfig ce_only() {
  TrainConfig c;
  c.objective.norm_variant = NormVariant::none;
  c.objective.conf_enabled = false;
  c.objective.mask_enabled = false;
  c.objective.lambda1 = 0.0;
  c.objective.lambda2 = 0.0;
  c.metric = MetricSpec::parse("accuracy");
  c.hidden_dim = 16;
  c.latent_dim = 4;
  return c;
}

TEST(Train, EmptyTrainSplitRejected) {
  LabeledDataset data = separable_pair();
  for (Split& s : data.splits) s = s == Split::train ? Split::val : s;
  EXPECT_THROW(train(TrainConfig{}, data), InputError);
}

TEST(Train, SameSeedGivesIdenticalTraces) {
  const LabeledDataset data = separable_pair();
  TrainConfig c;
  c.epochs = 3;
  c.hidden_dim = 8;
  c.latent_dim = 4;
  c.seed = 9;
  const TrainResult a = train(c, data), b = train(c, data);
  EXPECT_EQ(a.test.to_json().dump(), b.test.to_json().dump());
  const auto na = a.model.named(), nb = b.model.named();
  for (std::size_t i = 0; i < na.size(); ++i) EXPECT_EQ(na[i].value, nb[i].value);
}

TEST(Train, SeparableMixtureCeOnly) {
  const LabeledDataset data = separable_pair();
  const double oracle_accuracy = oracle::logistic_regression_accuracy(data);
  EXPECT_GT(oracle_accuracy, 0.95);

  TrainConfig c = ce_only();
  double last_ce = 0.0;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) { last_ce = e.mean_loss.l_ce; };
  const TrainResult r = train(c, data, hooks);
  EXPECT_GT(r.test.metrics.accuracy, 0.95);
  EXPECT_LT(last_ce, std::log(2.0) / 10.0);
  EXPECT_EQ(r.test.epochs.size(), 30u);
}

TEST(Train, HooksSeeEveryStepAndEpoch) {
  const LabeledDataset data = separable_pair();
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 64;
  c.hidden_dim = 8;
  c.latent_dim = 3;
  std::size_t steps = 0, epochs = 0;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo&) { ++steps; };
  hooks.on_epoch = [&](const EpochRecord& e) {
    ++epochs;
    EXPECT_EQ(e.steps, 4u);  // 200 rows in batches of 64
    EXPECT_EQ(e.mean_loss.total,
              e.mean_loss.l_ce + e.mean_loss.lambda1 * e.mean_loss.l_norm + e.mean_loss.lambda2 * e.mean_loss.l_conf);
  };
  train(c, data, hooks);
  EXPECT_EQ(steps, 8u);
  EXPECT_EQ(epochs, 2u);
}

TEST(Evaluate, UnseenLabelRejected) {
  LabeledDataset data = separable_pair();
  const Model model = init_model({data.feature_dim(), 4, 2}, 2, 0);
  data.label_names.push_back("extra");
  data.labels[data.indices(Split::test).front()] = 2;
  EXPECT_THROW(evaluate(model, data, Split::test, MetricSpec{}), InputError);
}

TEST(Evaluate, PredictionUsesMeanDotCenters) {
  Model model = init_model({2, 3, 2}, 2, 0);
  for (double& v : model.encoder.trunk_weight.data()) v = 0.0;
  for (double& v : model.encoder.mean_weight.data()) v = 0.0;
  model.encoder.mean_bias = Tensor::vector({1.0, -1.0});
  model.centers = Tensor::matrix({{0.0, 1.0}, {1.0, 0.0}});
  // mu = [1, -1]: class 0 scores -1, class 1 scores 1.
  EXPECT_EQ(predict(model, Tensor::zeros({3, 2})), (std::vector<int>{1, 1, 1}));
}

TEST(Config, JsonRoundTripAndValidation) {
  TrainConfig c;
  c.objective.t1 = 0.42;
  c.metric = MetricSpec::parse("class_f1:1,2");
  c.seed = 77;
  const TrainConfig back = TrainConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  EXPECT_EQ(back.to_json(), c.to_json());

  TrainConfig bad;
  bad.objective.norm_variant = NormVariant::none;
  EXPECT_THROW(bad.validate(), InputError);
  bad = TrainConfig{};
  bad.objective.conf_enabled = false;
  EXPECT_THROW(bad.validate(), InputError);
  bad = TrainConfig{};
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), InputError);

  const TrainConfig preset = TrainConfig::transformer_preset();
  EXPECT_EQ(preset.batch_size, 128u);
  EXPECT_EQ(preset.learning_rate, 5e-5);
  EXPECT_EQ(preset.epochs, 20u);
}

TEST(GridSearch, SinglePointAndCardinality) {
  std::size_t calls = 0;
  RunFn run = [&calls](const TrainConfig&) {
    ++calls;
    return RunOutcome{0.5, 0.5, 0.5, 1.0};
  };
  const std::vector<double> one = {0.3};
  const GridResult single = grid_search(TrainConfig{}, one, run);
  EXPECT_EQ(single.rows.size(), 1u);
  EXPECT_EQ(single.best_row().lambda1, 0.3);
  EXPECT_EQ(single.best_row().lambda2, 0.3);

  calls = 0;
  const std::vector<double> grid = {0.1, 0.5, 1.0};
  EXPECT_EQ(grid_search(TrainConfig{}, grid, run).rows.size(), 9u);
  EXPECT_EQ(calls, 9u);
  EXPECT_THROW(grid_search(TrainConfig{}, std::vector<double>{}, run), InputError);
}

TEST(GridSearch, FindsDominantLambda2) {
  // Brute-force every grid point first; the search must agree with the
  // best entry of that table.
  auto score = [](double l1, double l2) { return 0.8 - std::abs(l2 - 0.5) - 0.01 * l1; };
  RunFn run = [&score](const TrainConfig& c) {
    return RunOutcome{score(c.objective.lambda1, c.objective.lambda2), 0.0, 0.0, 0.0};
  };
  double best = -1.0, best_l1 = 0.0, best_l2 = 0.0;
  for (double l1 : kDefaultLambdaGrid) {
    for (double l2 : kDefaultLambdaGrid) {
      if (score(l1, l2) > best) {
        best = score(l1, l2);
        best_l1 = l1;
        best_l2 = l2;
      }
    }
  }
  const GridResult r = grid_search(TrainConfig{}, kDefaultLambdaGrid, run);
  EXPECT_EQ(r.best_row().lambda2, 0.5);
  EXPECT_EQ(r.best_row().lambda2, best_l2);
  EXPECT_EQ(r.best_row().lambda1, best_l1);
}

TEST(GridSearch, TiesPreferSmallerLambda2ThenLambda1) {
  RunFn flat = [](const TrainConfig&) { return RunOutcome{0.7, 0.0, 0.0, 0.0}; };
  const GridResult r = grid_search(TrainConfig{}, std::vector<double>{1.0, 0.25, 0.5}, flat);
  EXPECT_EQ(r.best_row().lambda1, 0.25);
  EXPECT_EQ(r.best_row().lambda2, 0.25);
}

TEST(Ablation, CardinalityAndVariants) {
  std::vector<TrainConfig> seen;
  RunFn run = [&seen](const TrainConfig& c) {
    seen.push_back(c);
    return RunOutcome{0.5, 0.4 + 0.01 * static_cast<double>(c.seed), 0.6, 1.0};
  };
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  const AblationTable t = ablate(TrainConfig{}, seeds, run);
  EXPECT_EQ(seen.size(), 25u);
  ASSERT_EQ(t.rows.size(), 5u);
  std::vector<std::string> labels;
  for (const auto& r : t.rows) {
    labels.push_back(label(r.variant));
    EXPECT_EQ(r.runs.size(), 5u);
    EXPECT_NEAR(r.mean, 0.43, 1e-12);
    EXPECT_NEAR(r.stddev, std::sqrt(0.00025), 1e-12);
  }
  EXPECT_EQ(labels, (std::vector<std::string>{"CPE", "CPE_KL", "w/o Norm", "w/o Conf", "CE"}));

  const TrainConfig ce = apply_variant(TrainConfig{}, AblationVariant::ce);
  EXPECT_EQ(ce.objective.lambda1, 0.0);
  EXPECT_EQ(ce.objective.lambda2, 0.0);
  EXPECT_FALSE(ce.objective.mask_enabled);
  EXPECT_EQ(apply_variant(TrainConfig{}, AblationVariant::cpe).objective.norm_variant, NormVariant::l2);
  EXPECT_EQ(apply_variant(TrainConfig{}, AblationVariant::cpe_kl).objective.norm_variant, NormVariant::kl);
  EXPECT_NO_THROW(apply_variant(TrainConfig{}, AblationVariant::without_norm).validate());
  EXPECT_NO_THROW(apply_variant(TrainConfig{}, AblationVariant::without_conf).validate());
  EXPECT_THROW(ablate(TrainConfig{}, std::vector<std::uint64_t>{}, run), InputError);
}

TEST(Ablation, PaperFormatting) {
  EXPECT_EQ(format_mean_std(0.3371, 0.0030), "33.71 ± 0.30");
  EXPECT_EQ(sample_stddev(std::vector<double>{1.0}), 0.0);
  EXPECT_NEAR(sample_stddev(std::vector<double>{1.0, 2.0, 3.0}), 1.0, 1e-15);
}

TEST(Ablation, TextColumnsFollowJsonKeys) {
  RunFn run = [](const TrainConfig&) { return RunOutcome{0.5, 0.5, 0.5, 1.0}; };
  const AblationTable t = ablate(TrainConfig{}, std::vector<std::uint64_t>{1, 2}, run);
  const auto j = t.to_json();
  std::string header;
  for (const auto& [key, value] : j["rows"][0].items()) {
    if (key == "per_seed") continue;
    header += header.empty() ? key : " " + key;
  }
  const std::string text = t.render_text();
  const std::string first_line = text.substr(text.find('\n') + 1, text.find('\n', text.find('\n') + 1) - text.find('\n') - 1);
  std::string collapsed;
  for (std::size_t i = 0; i < first_line.size(); ++i) {
    if (first_line[i] == ' ' && (collapsed.empty() || collapsed.back() == ' ')) continue;
    collapsed += first_line[i];
  }
  EXPECT_EQ(collapsed, header);
}

}  // namespace
