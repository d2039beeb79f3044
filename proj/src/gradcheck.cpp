#include "cpe/gradcheck.hpp"

#include <chrono>
#include <functional>

#include <fmt/format.h>

#include "cpe/diff/fdcheck.hpp"
#include "cpe/diff/ops.hpp"
#include "cpe/objective.hpp"
#include "cpe/random.hpp"

namespace cpe {
namespace {

using diff::NamedTensor;
using diff::ScalarObjective;
using diff::Tape;
using diff::Tensor;
using diff::Var;

struct Case {
  ScalarObjective f;
  std::vector<NamedTensor> params;
  bool masked = false;
};

using CaseGenerator = std::function<Case(Rng& rng, std::size_t index)>;

std::size_t pick_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Shape random_shape(Rng& rng, std::size_t min_rank = 1) {
  Shape s(pick_size(rng, min_rank, 3));
  for (auto& d : s) d = pick_size(rng, 1, 4);
  return s;
}

// Magnitude in [lo, hi] with a random sign.
Tensor signed_magnitude(const Shape& shape, double lo, double hi, Rng& rng) {
  Tensor t = uniform(shape, lo, hi, rng);
  std::bernoulli_distribution flip(0.5);
  for (double& v : t.data()) v = flip(rng) ? -v : v;
  return t;
}

// Contracts an output with fixed random weights so every entry matters.
Var contract(const Var& y, const Tensor& weights) { return diff::sum(y * y.tape()->constant(weights)); }

CaseGenerator unary_case(std::function<Var(const Var&)> op, std::function<Tensor(const Shape&, Rng&)> sample) {
  return [op, sample](Rng& rng, std::size_t) {
    const Shape shape = random_shape(rng);
    const Tensor weights = standard_normal(shape, rng);
    Case c;
    c.params = {{"x", sample(shape, rng)}};
    c.f = [op, weights](Tape&, std::span<const Var> p) { return contract(op(p[0]), weights); };
    return c;
  };
}

CaseGenerator binary_case(std::function<Var(const Var&, const Var&)> op,
                          std::function<Tensor(const Shape&, Rng&)> sample_rhs) {
  return [op, sample_rhs](Rng& rng, std::size_t index) {
    const Shape shape = random_shape(rng);
    // Rotate through equal shapes, scalar lhs and scalar rhs.
    const Shape lhs_shape = index % 3 == 1 ? Shape{} : shape;
    const Shape rhs_shape = index % 3 == 2 ? Shape{} : shape;
    const Tensor weights = standard_normal(shape, rng);
    Case c;
    c.params = {{"a", standard_normal(lhs_shape, rng)}, {"b", sample_rhs(rhs_shape, rng)}};
    c.f = [op, weights](Tape&, std::span<const Var> p) { return contract(op(p[0], p[1]), weights); };
    return c;
  };
}

Tensor normal_sample(const Shape& s, Rng& rng) { return standard_normal(s, rng); }

CaseGenerator axis_case(std::function<Var(const Var&, std::size_t)> op) {
  return [op](Rng& rng, std::size_t) {
    const Shape shape = random_shape(rng);
    const std::size_t axis = pick_size(rng, 0, shape.size() - 1);
    Tensor x = standard_normal(shape, rng);
    for (double& v : x.data()) v *= 2.0;
    Tape probe;
    const Tensor weights = standard_normal(op(probe.constant(x), axis).shape(), rng);
    Case c;
    c.params = {{"x", std::move(x)}};
    c.f = [op, axis, weights](Tape&, std::span<const Var> p) { return contract(op(p[0], axis), weights); };
    return c;
  };
}

CaseGenerator reduce_case(std::function<Var(const Var&, std::optional<std::size_t>)> op) {
  return [op](Rng& rng, std::size_t index) {
    const Shape shape = random_shape(rng);
    std::optional<std::size_t> axis;
    if (index % 2 == 1) axis = pick_size(rng, 0, shape.size() - 1);
    Tensor x = standard_normal(shape, rng);
    Tape probe;
    const Tensor weights = standard_normal(op(probe.constant(x), axis).shape(), rng);
    Case c;
    c.params = {{"x", std::move(x)}};
    c.f = [op, axis, weights](Tape&, std::span<const Var> p) { return contract(op(p[0], axis), weights); };
    return c;
  };
}

CaseGenerator matmul_case() {
  return [](Rng& rng, std::size_t) {
    const std::size_t n = pick_size(rng, 1, 4);
    const std::size_t k = pick_size(rng, 1, 4);
    const std::size_t m = pick_size(rng, 1, 4);
    const Tensor weights = standard_normal({n, m}, rng);
    Case c;
    c.params = {{"a", standard_normal({n, k}, rng)}, {"b", standard_normal({k, m}, rng)}};
    c.f = [weights](Tape&, std::span<const Var> p) { return contract(diff::matmul(p[0], p[1]), weights); };
    return c;
  };
}

CaseGenerator reshape_case() {
  return [](Rng& rng, std::size_t) {
    const Shape shape = random_shape(rng);
    const Shape flat{diff::shape_size(shape)};
    const Tensor weights = standard_normal(flat, rng);
    Case c;
    c.params = {{"x", standard_normal(shape, rng)}};
    c.f = [flat, weights](Tape&, std::span<const Var> p) {
      return contract(diff::square(diff::reshape(p[0], flat)), weights);
    };
    return c;
  };
}

CaseGenerator expand_case() {
  return [](Rng& rng, std::size_t) {
    const Shape shape = random_shape(rng);
    const std::size_t axis = pick_size(rng, 0, shape.size());
    const std::size_t count = pick_size(rng, 1, 4);
    Shape out = shape;
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(axis), count);
    const Tensor weights = standard_normal(out, rng);
    Case c;
    c.params = {{"x", standard_normal(shape, rng)}};
    c.f = [axis, count, weights](Tape&, std::span<const Var> p) {
      return contract(diff::square(diff::expand(p[0], axis, count)), weights);
    };
    return c;
  };
}

CaseGenerator pick_case() {
  return [](Rng& rng, std::size_t) {
    const std::size_t n = pick_size(rng, 1, 5);
    const std::size_t k = pick_size(rng, 1, 5);
    std::vector<int> index(n);
    for (int& i : index) i = static_cast<int>(pick_size(rng, 0, k - 1));
    const Tensor weights = standard_normal({n}, rng);
    Case c;
    c.params = {{"x", standard_normal({n, k}, rng)}};
    c.f = [index, weights](Tape&, std::span<const Var> p) {
      return contract(diff::pick(diff::square(p[0]), index), weights);
    };
    return c;
  };
}

CaseGenerator objective_case(NormVariant variant) {
  return [variant](Rng& rng, std::size_t) {
    const std::size_t n = 4, f = 3, h = 4, d = 3, classes = 3;
    EncoderParams enc = init_encoder({f, h, d}, rng());
    enc.trunk_bias = standard_normal({h}, rng);
    enc.mean_bias = standard_normal({d}, rng);
    enc.logvar_bias = uniform({d}, -0.5, 0.5, rng);
    const Tensor centers = standard_normal({d, classes}, rng);
    const Tensor features = standard_normal({n, f}, rng);
    const Tensor eps = standard_normal({n, d}, rng);
    std::vector<int> labels(n);
    for (int& y : labels) y = static_cast<int>(pick_size(rng, 0, classes - 1));

    ObjectiveConfig config;
    config.norm_variant = variant;
    config.lambda1 = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
    config.lambda2 = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
    config.t1 = 0.4;
    config.t2 = 0.05;

    // The mask is piecewise constant in the parameters; freeze it at the
    // base point so the differences see the same branch as the tape.
    Tape probe;
    const OverlyMask mask = cpe_objective(bind(probe, enc), probe.leaf(centers), probe.constant(features), labels, eps,
                                          config)
                                .mask;

    Case c;
    c.params = enc.named();
    c.params.push_back({"centers", centers});
    c.masked = mask.masked_count() > 0;
    c.f = [features, eps, labels, config, mask](Tape& tape, std::span<const Var> p) {
      return cpe_objective(bind(p), p[6], tape.constant(features), labels, eps, config, &mask).total;
    };
    return c;
  };
}

// Identity whose backward scales the gradient by 1.01.
Var faulty_identity(const Var& x) {
  return x.tape()->record(diff::OpKind::reshape, {x.id()}, x.value(), [](const Tensor& g) {
    Tensor out = g;
    for (double& v : out.data()) v *= 1.01;
    return std::vector<Tensor>{std::move(out)};
  });
}

OpCheckResult check_op(const std::string& name, const CaseGenerator& gen, const GradcheckOptions& options,
                       std::uint64_t stream) {
  OpCheckResult result;
  result.op = name;
  Rng rng = make_rng(options.seed, 1000 + stream);
  for (std::size_t k = 0; k < options.cases; ++k) {
    Case c = gen(rng, k);
    if (options.inject_fault) {
      c.f = [inner = c.f](Tape& tape, std::span<const Var> p) {
        std::vector<Var> routed(p.begin(), p.end());
        routed[0] = faulty_identity(routed[0]);
        return inner(tape, routed);
      };
    }
    const diff::FdReport r = diff::finite_difference_check(c.f, c.params, {options.step, options.tolerance});
    ++result.cases;
    if (c.masked) ++result.masked_cases;
    if (r.aborted) {
      result.diagnostic = r.diagnostic;
      ++result.failures;
      continue;
    }
    if (!r.passed) ++result.failures;
    const diff::FdParamReport* worst = r.worst();
    if (worst != nullptr && (k == 0 || worst->max_rel_error > result.max_rel_error)) {
      result.max_rel_error = worst->max_rel_error;
      result.worst_case = k;
      result.worst_param = worst->name;
      result.worst_index = worst->worst_index;
    }
  }
  return result;
}

}  // namespace

bool GradcheckReport::passed() const {
  return std::all_of(ops.begin(), ops.end(), [](const OpCheckResult& r) { return r.passed(); });
}

nlohmann::ordered_json GradcheckReport::to_json() const {
  nlohmann::ordered_json j;
  j["passed"] = passed();
  j["tolerance"] = tolerance;
  j["seconds"] = seconds;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& r : ops) {
    nlohmann::ordered_json o;
    o["op"] = r.op;
    o["cases"] = r.cases;
    o["failures"] = r.failures;
    o["max_rel_error"] = r.max_rel_error;
    o["worst_case"] = r.worst_case;
    o["worst_param"] = r.worst_param;
    o["worst_index"] = r.worst_index;
    o["masked_cases"] = r.masked_cases;
    o["diagnostic"] = r.diagnostic;
    list.push_back(std::move(o));
  }
  j["ops"] = std::move(list);
  return j;
}

std::string GradcheckReport::render_text() const {
  std::string out;
  const OpCheckResult* worst = nullptr;
  for (const auto& r : ops) {
    out += fmt::format("{:<18} {:>4} cases  max rel err {:.3e}  {}\n", r.op, r.cases, r.max_rel_error,
                       r.passed() ? "ok" : "FAIL");
    if (!r.diagnostic.empty()) out += fmt::format("    {}\n", r.diagnostic);
    if (worst == nullptr || r.max_rel_error > worst->max_rel_error) worst = &r;
  }
  if (worst != nullptr) {
    out += fmt::format("worst: {} case {} parameter '{}' entry {} ({:.3e})\n", worst->op, worst->worst_case,
                       worst->worst_param, worst->worst_index, worst->max_rel_error);
  }
  out += fmt::format("{} at tolerance {:g} in {:.2f}s\n", passed() ? "PASS" : "FAIL", tolerance, seconds);
  return out;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  auto positive = [](const Shape& s, Rng& rng) { return uniform(s, 0.5, 3.0, rng); };
  auto away_from_zero = [](const Shape& s, Rng& rng) { return signed_magnitude(s, 0.5, 2.0, rng); };
  auto scaled_normal = [](const Shape& s, Rng& rng) {
    Tensor t = standard_normal(s, rng);
    for (double& v : t.data()) v *= 1.5;
    return t;
  };

  const std::vector<std::pair<std::string, CaseGenerator>> suite = {
      {"add", binary_case([](const Var& a, const Var& b) { return diff::add(a, b); }, normal_sample)},
      {"sub", binary_case([](const Var& a, const Var& b) { return diff::sub(a, b); }, normal_sample)},
      {"mul", binary_case([](const Var& a, const Var& b) { return diff::mul(a, b); }, normal_sample)},
      {"div", binary_case([](const Var& a, const Var& b) { return diff::div(a, b); }, away_from_zero)},
      {"neg", unary_case([](const Var& x) { return diff::neg(x); }, normal_sample)},
      {"exp", unary_case([](const Var& x) { return diff::exp(x); }, normal_sample)},
      {"log", unary_case([](const Var& x) { return diff::log(x); }, positive)},
      {"square", unary_case([](const Var& x) { return diff::square(x); }, normal_sample)},
      {"tanh", unary_case([](const Var& x) { return diff::tanh(x); }, scaled_normal)},
      {"erf", unary_case([](const Var& x) { return diff::erf(x); }, scaled_normal)},
      {"clamp_min", unary_case([](const Var& x) { return diff::clamp_min(x, 0.0); },
                               [](const Shape& s, Rng& rng) { return signed_magnitude(s, 0.1, 2.0, rng); })},
      {"matmul", matmul_case()},
      {"softmax", axis_case([](const Var& x, std::size_t a) { return diff::softmax(x, a); })},
      {"log_softmax", axis_case([](const Var& x, std::size_t a) { return diff::log_softmax(x, a); })},
      {"sum", reduce_case([](const Var& x, std::optional<std::size_t> a) { return diff::sum(x, a); })},
      {"mean", reduce_case([](const Var& x, std::optional<std::size_t> a) { return diff::mean(x, a); })},
      {"max", reduce_case([](const Var& x, std::optional<std::size_t> a) { return diff::max(x, a); })},
      {"reshape", reshape_case()},
      {"expand", expand_case()},
      {"pick", pick_case()},
      {"cpe_objective_l2", objective_case(NormVariant::l2)},
      {"cpe_objective_kl", objective_case(NormVariant::kl)},
  };

  GradcheckReport report;
  report.tolerance = options.tolerance;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    report.ops.push_back(check_op(suite[i].first, suite[i].second, options, i));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace cpe
