#include "cpe/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "cpe/random.hpp"

namespace cpe {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val" || s == "validation" || s == "dev") return Split::val;
  if (s == "test") return Split::test;
  throw InputError(fmt::format("unknown split '{}' (expected train, val or test)", s));
}

std::vector<std::size_t> LabeledDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

Tensor LabeledDataset::rows(std::span<const std::size_t> index) const {
  const std::size_t f = feature_dim();
  Tensor out({index.size(), f});
  for (std::size_t r = 0; r < index.size(); ++r) {
    std::copy_n(features.data().begin() + static_cast<std::ptrdiff_t>(index[r] * f), f,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * f));
  }
  return out;
}

std::vector<int> LabeledDataset::labels_at(std::span<const std::size_t> index) const {
  std::vector<int> out;
  out.reserve(index.size());
  for (std::size_t i : index) out.push_back(labels[i]);
  return out;
}

void LabeledDataset::validate() const {
  const std::size_t n = labels.size();
  if (features.rank() != 2 || features.dim(0) != n) {
    throw InputError(fmt::format("dataset: features {} do not match {} labels", format_shape(features.shape()), n));
  }
  if (splits.size() != n) throw InputError("dataset: every row needs a split tag");
  if (!texts.empty() && texts.size() != n) throw InputError("dataset: text count does not match rows");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= label_names.size()) {
      throw InputError(fmt::format("dataset: row {} has label {} without a name", i, labels[i]));
    }
  }
  if (!features.all_finite()) throw InputError("dataset: non-finite feature value");
}

void MixtureSpec::validate() const {
  if (num_classes < 2) throw InputError("mixture: need at least two classes");
  if (feature_dim < 1) throw InputError("mixture: feature dimension must be >= 1");
  if (!(cov_scale > 0.0) || !std::isfinite(cov_scale)) throw InputError("mixture: cov_scale must be positive");
  if (train_per_class < 1 || val_per_class < 1 || test_per_class < 1) {
    throw InputError("mixture: every split needs at least one sample per class");
  }
  if (means.empty()) {
    if (!(overlap >= 0.0) || !std::isfinite(overlap)) throw InputError("mixture: overlap must be finite and >= 0");
    if (feature_dim < num_classes) {
      throw InputError(fmt::format("mixture: generated centers need feature_dim >= num_classes ({} < {})",
                                   feature_dim, num_classes));
    }
  } else {
    if (means.size() != num_classes) {
      throw InputError(fmt::format("mixture: {} means for {} classes", means.size(), num_classes));
    }
    for (const auto& m : means) {
      if (m.size() != feature_dim) throw InputError("mixture: mean vector length differs from feature_dim");
    }
  }
}

nlohmann::json MixtureSpec::to_json() const {
  nlohmann::json j{{"num_classes", num_classes},         {"feature_dim", feature_dim},
                   {"cov_scale", cov_scale},             {"train_per_class", train_per_class},
                   {"val_per_class", val_per_class},     {"test_per_class", test_per_class},
                   {"overlap", overlap}};
  if (!means.empty()) j["means"] = means;
  return j;
}

MixtureSpec MixtureSpec::from_json(const nlohmann::json& j) {
  MixtureSpec s;
  try {
    s.num_classes = j.value("num_classes", s.num_classes);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.cov_scale = j.value("cov_scale", s.cov_scale);
    s.train_per_class = j.value("train_per_class", s.train_per_class);
    s.val_per_class = j.value("val_per_class", s.val_per_class);
    s.test_per_class = j.value("test_per_class", s.test_per_class);
    s.overlap = j.value("overlap", s.overlap);
    if (j.contains("means")) s.means = j.at("means").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(fmt::format("mixture spec: {}", e.what()));
  }
  return s;
}

Tensor mixture_means(const MixtureSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t c = spec.num_classes;
  const std::size_t f = spec.feature_dim;
  Tensor out({c, f});
  if (!spec.means.empty()) {
    for (std::size_t k = 0; k < c; ++k) std::copy(spec.means[k].begin(), spec.means[k].end(), &out.at(k, 0));
    return out;
  }
  // Gram-Schmidt on Gaussian rows; the draws are continuous so the rows are
  // independent with probability one.
  Rng rng = make_rng(seed, kDataStream);
  Tensor basis = standard_normal({c, f}, rng);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t j = 0; j < k; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < f; ++i) dot += basis.at(k, i) * basis.at(j, i);
      for (std::size_t i = 0; i < f; ++i) basis.at(k, i) -= dot * basis.at(j, i);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < f; ++i) norm += basis.at(k, i) * basis.at(k, i);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < f; ++i) basis.at(k, i) /= norm;
  }
  // Orthonormal a*e_i and a*e_j are a*sqrt(2) apart.
  const double radius = spec.overlap * spec.cov_scale / std::sqrt(2.0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = radius * basis[i];
  return out;
}

LabeledDataset synth_mixture(const MixtureSpec& spec, std::uint64_t seed) {
  const Tensor means = mixture_means(spec, seed);
  const std::size_t c = spec.num_classes;
  const std::size_t f = spec.feature_dim;
  const std::size_t per_split[] = {spec.train_per_class, spec.val_per_class, spec.test_per_class};
  const Split split_order[] = {Split::train, Split::val, Split::test};
  const std::size_t total = (per_split[0] + per_split[1] + per_split[2]) * c;

  LabeledDataset out;
  out.features = Tensor({total, f});
  for (std::size_t k = 0; k < c; ++k) out.label_names.push_back(fmt::format("class{}", k));

  Rng rng = make_rng(seed, kDataStream + 1);
  std::normal_distribution<double> noise(0.0, spec.cov_scale);
  std::size_t row = 0;
  for (int s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t n = 0; n < per_split[s]; ++n, ++row) {
        for (std::size_t i = 0; i < f; ++i) out.features.at(row, i) = means.at(k, i) + noise(rng);
        out.labels.push_back(static_cast<int>(k));
        out.splits.push_back(split_order[s]);
      }
    }
  }
  return out;
}

TabularFormat format_from_path(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".tsv" || ext == ".txt") return TabularFormat::tsv;
  if (ext == ".jsonl" || ext == ".json") return TabularFormat::jsonl;
  throw InputError(fmt::format("cannot infer format of '{}' (use .tsv or .jsonl)", path.string()));
}

namespace {

struct RawRow {
  std::size_t line = 0;
  std::string text;
  std::string label;
  std::optional<std::string> split;
  std::optional<std::vector<double>> features;
};

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<double> parse_feature_list(const std::string& s, std::size_t line) {
  std::vector<double> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
      throw InputError(fmt::format("line {}: feature value '{}' is not a number", line, tok));
    }
    out.push_back(v);
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<RawRow> read_tsv(std::istream& in, const TabularSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw InputError("tsv: empty file (header row required)");
  ++line_no;
  strip_cr(line);
  const std::vector<std::string> header = split_tabs(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto label_col = column(schema.label_key);
  const auto text_col = column(schema.text_key);
  const auto split_col = column(schema.split_key);
  const auto feat_col = column(schema.features_key);
  if (!label_col) throw InputError(fmt::format("tsv: missing column '{}'", schema.label_key));
  if (!text_col && !feat_col) throw InputError(fmt::format("tsv: missing column '{}'", schema.text_key));

  std::vector<RawRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_tabs(line);
    if (fields.size() != header.size()) {
      throw InputError(
          fmt::format("tsv: line {} has {} fields, header has {}", line_no, fields.size(), header.size()));
    }
    RawRow r;
    r.line = line_no;
    r.label = fields[*label_col];
    if (r.label.empty()) throw InputError(fmt::format("tsv: line {} has an empty '{}'", line_no, schema.label_key));
    if (text_col) r.text = fields[*text_col];
    if (split_col) r.split = fields[*split_col];
    if (feat_col) r.features = parse_feature_list(fields[*feat_col], line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<RawRow> read_jsonl(std::istream& in, const TabularSchema& schema) {
  std::vector<RawRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(fmt::format("jsonl: line {} is not valid JSON: {}", line_no, e.what()));
    }
    if (!j.is_object()) throw InputError(fmt::format("jsonl: line {} is not an object", line_no));
    RawRow r;
    r.line = line_no;
    if (!j.contains(schema.label_key) || j[schema.label_key].is_null()) {
      throw InputError(fmt::format("jsonl: line {} has no '{}'", line_no, schema.label_key));
    }
    const auto& label = j[schema.label_key];
    r.label = label.is_string() ? label.get<std::string>() : label.dump();
    if (r.label.empty()) throw InputError(fmt::format("jsonl: line {} has an empty '{}'", line_no, schema.label_key));
    if (j.contains(schema.features_key)) {
      try {
        r.features = j[schema.features_key].get<std::vector<double>>();
      } catch (const nlohmann::json::exception&) {
        throw InputError(fmt::format("jsonl: line {} has a malformed '{}'", line_no, schema.features_key));
      }
    } else if (j.contains(schema.text_key) && j[schema.text_key].is_string()) {
      r.text = j[schema.text_key].get<std::string>();
    } else {
      throw InputError(fmt::format("jsonl: line {} has no '{}'", line_no, schema.text_key));
    }
    if (j.contains(schema.text_key) && j[schema.text_key].is_string()) r.text = j[schema.text_key].get<std::string>();
    if (j.contains(schema.split_key)) {
      if (!j[schema.split_key].is_string()) {
        throw InputError(fmt::format("jsonl: line {} has a non-string '{}'", line_no, schema.split_key));
      }
      r.split = j[schema.split_key].get<std::string>();
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

LabeledDataset assemble(std::vector<RawRow> rows, const TabularSchema& schema) {
  if (rows.empty()) throw InputError("dataset file contains no rows");
  const bool have_features = rows.front().features.has_value();
  const bool have_splits = rows.front().split.has_value();

  LabeledDataset out;
  std::map<std::string, int> label_ids;
  std::vector<std::string> texts;
  for (const auto& r : rows) {
    if (r.features.has_value() != have_features) {
      throw InputError(fmt::format("line {}: features present on some rows but not others", r.line));
    }
    if (r.split.has_value() != have_splits) {
      throw InputError(fmt::format("line {}: split present on some rows but not others", r.line));
    }
    auto [it, inserted] = label_ids.emplace(r.label, static_cast<int>(out.label_names.size()));
    if (inserted) out.label_names.push_back(r.label);
    out.labels.push_back(it->second);
    if (have_splits) {
      try {
        out.splits.push_back(parse_split(*r.split));
      } catch (const InputError& e) {
        throw InputError(fmt::format("line {}: {}", r.line, e.what()));
      }
    }
    texts.push_back(r.text);
  }

  if (have_features) {
    const std::size_t f = rows.front().features->size();
    if (f == 0) throw InputError(fmt::format("line {}: empty feature vector", rows.front().line));
    out.features = Tensor({rows.size(), f});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].features->size() != f) {
        throw InputError(fmt::format("line {}: {} features, expected {}", rows[i].line, rows[i].features->size(), f));
      }
      std::copy(rows[i].features->begin(), rows[i].features->end(), &out.features.at(i, 0));
    }
  } else {
    out.features = hash_featurize(texts, schema.hash_dim, schema.hash_seed);
  }
  if (std::any_of(texts.begin(), texts.end(), [](const std::string& t) { return !t.empty(); })) {
    out.texts = std::move(texts);
  }

  if (!have_splits) {
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(schema.split_seed, kDataStream + 2);
    std::shuffle(order.begin(), order.end(), rng);
    out.splits.assign(rows.size(), Split::train);
    const std::size_t n_val = rows.size() * 15 / 100;
    const std::size_t n_test = rows.size() * 15 / 100;
    for (std::size_t i = 0; i < n_val; ++i) out.splits[order[i]] = Split::val;
    for (std::size_t i = n_val; i < n_val + n_test; ++i) out.splits[order[i]] = Split::test;
  }
  out.validate();
  return out;
}

}  // namespace

LabeledDataset parse_tabular(std::istream& in, TabularFormat format, const TabularSchema& schema) {
  auto rows = format == TabularFormat::tsv ? read_tsv(in, schema) : read_jsonl(in, schema);
  return assemble(std::move(rows), schema);
}

LabeledDataset load_tabular(const std::filesystem::path& path, TabularFormat format, const TabularSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open dataset '{}'", path.string()));
  return parse_tabular(in, format, schema);
}

void write_tabular(const LabeledDataset& data, std::ostream& out, TabularFormat format, const TabularSchema& schema) {
  data.validate();
  const bool with_text = !data.texts.empty();
  const std::size_t f = data.feature_dim();
  if (format == TabularFormat::jsonl) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      nlohmann::ordered_json j;
      if (with_text) j[schema.text_key] = data.texts[i];
      j[schema.label_key] = data.label_names[static_cast<std::size_t>(data.labels[i])];
      j[schema.split_key] = to_string(data.splits[i]);
      j[schema.features_key] = std::vector<double>(data.features.data().begin() + static_cast<std::ptrdiff_t>(i * f),
                                                   data.features.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * f));
      out << j.dump() << '\n';
    }
    return;
  }
  for (const auto* s : {&data.label_names, &data.texts}) {
    for (const auto& v : *s) {
      if (v.find_first_of("\t\n\r") != std::string::npos) {
        throw InputError("tsv: labels and texts must not contain tabs or newlines");
      }
    }
  }
  if (with_text) out << schema.text_key << '\t';
  out << schema.label_key << '\t' << schema.split_key << '\t' << schema.features_key << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (with_text) out << data.texts[i] << '\t';
    out << data.label_names[static_cast<std::size_t>(data.labels[i])] << '\t' << to_string(data.splits[i]) << '\t';
    for (std::size_t k = 0; k < f; ++k) out << (k ? " " : "") << fmt::format("{}", data.features.at(i, k));
    out << '\n';
  }
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isalnum(ch) != 0 || ch >= 0x80) {
      cur.push_back(static_cast<char>(ch < 0x80 ? std::tolower(ch) : ch));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t seeded_fnv1a(const std::string& token, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
  for (unsigned char ch : token) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Tensor hash_featurize(std::span<const std::string> texts, std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw InputError("hash_featurize: dimension must be >= 2");
  Tensor out({texts.size(), dim});
  for (std::size_t r = 0; r < texts.size(); ++r) {
    double* row = &out.at(r, 0);
    for (const auto& tok : tokenize(texts[r])) {
      const std::uint64_t h = seeded_fnv1a(tok, seed);
      const double sign = (splitmix64(h) >> 63) != 0 ? -1.0 : 1.0;
      row[h % dim] += sign;
    }
    double norm = 0.0;
    for (std::size_t k = 0; k < dim; ++k) norm += row[k] * row[k];
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (std::size_t k = 0; k < dim; ++k) row[k] /= norm;
    }
  }
  return out;
}

double nearest_centroid_accuracy(const LabeledDataset& data, Split fit, Split eval) {
  const std::size_t c = data.num_classes();
  const std::size_t f = data.feature_dim();
  std::vector<double> centroids(c * f, 0.0);
  std::vector<std::size_t> counts(c, 0);
  for (std::size_t i : data.indices(fit)) {
    const auto k = static_cast<std::size_t>(data.labels[i]);
    ++counts[k];
    for (std::size_t j = 0; j < f; ++j) centroids[k * f + j] += data.features.at(i, j);
  }
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t j = 0; j < f && counts[k] > 0; ++j) centroids[k * f + j] /= static_cast<double>(counts[k]);
  }
  const auto rows = data.indices(eval);
  if (rows.empty()) throw InputError(fmt::format("nearest_centroid_accuracy: empty {} split", to_string(eval)));
  std::size_t correct = 0;
  for (std::size_t i : rows) {
    double best = std::numeric_limits<double>::infinity();
    int pred = -1;
    for (std::size_t k = 0; k < c; ++k) {
      if (counts[k] == 0) continue;
      double dist = 0.0;
      for (std::size_t j = 0; j < f; ++j) {
        const double d = data.features.at(i, j) - centroids[k * f + j];
        dist += d * d;
      }
      if (dist < best) {
        best = dist;
        pred = static_cast<int>(k);
      }
    }
    if (pred == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace cpe
