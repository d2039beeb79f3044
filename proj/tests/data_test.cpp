#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "cpe/data.hpp"
#include "cpe/error.hpp"
#include "oracles.hpp"

namespace {

using namespace cpe;

MixtureSpec small_spec() {
  MixtureSpec s;
  s.num_classes = 3;
  s.feature_dim = 5;
  s.train_per_class = 20;
  s.val_per_class = 10;
  s.test_per_class = 15;
  return s;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

TEST(Synth, SameSeedSameDataset) {
  EXPECT_EQ(synth_mixture(small_spec(), 4), synth_mixture(small_spec(), 4));
  EXPECT_NE(synth_mixture(small_spec(), 4).features, synth_mixture(small_spec(), 5).features);
}

TEST(Synth, CardinalityAndSplitPartition) {
  MixtureSpec s = small_spec();
  s.train_per_class = s.val_per_class = s.test_per_class = 100;
  const LabeledDataset d = synth_mixture(s, 1);
  EXPECT_EQ(d.size(), 900u);
  EXPECT_EQ(d.indices(Split::train).size() + d.indices(Split::val).size() + d.indices(Split::test).size(), 900u);
  std::set<std::size_t> seen;
  for (Split sp : {Split::train, Split::val, Split::test}) {
    for (std::size_t i : d.indices(sp)) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_NO_THROW(d.validate());
}

TEST(Synth, CentersHaveRequestedSeparation) {
  MixtureSpec s = small_spec();
  s.overlap = 3.0;
  s.cov_scale = 0.5;
  const Tensor m = mixture_means(s, 2);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = a + 1; b < 3; ++b) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < 5; ++j) d2 += (m.at(a, j) - m.at(b, j)) * (m.at(a, j) - m.at(b, j));
      EXPECT_NEAR(std::sqrt(d2), 1.5, 1e-12);
    }
  }
}

TEST(Synth, FarCentersAreTriviallySeparable) {
  MixtureSpec s = small_spec();
  s.overlap = 100.0;
  const LabeledDataset d = synth_mixture(s, 3);
  EXPECT_EQ(oracle::nearest_centroid_accuracy(d, Split::train, Split::test), 1.0);
  EXPECT_EQ(nearest_centroid_accuracy(d), 1.0);
}

TEST(Synth, IdenticalMeansAreIndistinguishable) {
  MixtureSpec s;
  s.num_classes = 2;
  s.feature_dim = 3;
  s.means = {{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}};
  s.train_per_class = 200;
  s.test_per_class = 2000;
  const LabeledDataset d = synth_mixture(s, 4);
  const double acc = oracle::nearest_centroid_accuracy(d, Split::train, Split::test);
  // Standard error of a fair coin over 4000 rows is ~0.008.
  EXPECT_NEAR(acc, 0.5, 0.04);
  EXPECT_EQ(acc, nearest_centroid_accuracy(d));
}

TEST(Synth, DegenerateSpecsRejected) {
  MixtureSpec s = small_spec();
  s.num_classes = 1;
  EXPECT_THROW(synth_mixture(s, 0), InputError);
  s = small_spec();
  s.cov_scale = 0.0;
  EXPECT_THROW(synth_mixture(s, 0), InputError);
  s = small_spec();
  s.test_per_class = 0;
  EXPECT_THROW(synth_mixture(s, 0), InputError);
  s = small_spec();
  s.feature_dim = 2;
  EXPECT_THROW(synth_mixture(s, 0), InputError);
  s = small_spec();
  s.means = {{0, 0, 0, 0, 0}};
  EXPECT_THROW(synth_mixture(s, 0), InputError);
}

TEST(Synth, SpecJsonRoundTrip) {
  MixtureSpec s = small_spec();
  s.overlap = 1.25;
  const MixtureSpec back = MixtureSpec::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_THROW(MixtureSpec::from_json({{"num_classes", "three"}}), InputError);
}

TEST(LoadTabular, LabelsInFirstSeenOrder) {
  std::istringstream in("text\tlabel\tsplit\ngreat movie\tpos\ttrain\nawful\tneg\tval\nfine film\tpos\ttest\n");
  const LabeledDataset d = parse_tabular(in, TabularFormat::tsv);
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(d.num_classes(), 2u);
  EXPECT_EQ(d.label_names, (std::vector<std::string>{"pos", "neg"}));
  EXPECT_EQ(d.feature_dim(), 256u);
  EXPECT_EQ(d.texts[1], "awful");
}

TEST(LoadTabular, MissingLabelReportsLine) {
  std::istringstream tsv("text\tlabel\tsplit\nok\tpos\ttrain\nbad\t\ttrain\n");
  EXPECT_NE(error_of([&] { parse_tabular(tsv, TabularFormat::tsv); }).find("line 3"), std::string::npos);
  std::istringstream jsonl("{\"text\":\"a\",\"label\":\"x\",\"split\":\"train\"}\n{\"text\":\"b\",\"split\":\"train\"}\n");
  EXPECT_NE(error_of([&] { parse_tabular(jsonl, TabularFormat::jsonl); }).find("line 2"), std::string::npos);
}

TEST(LoadTabular, MalformedRowsReportLine) {
  std::istringstream short_row("text\tlabel\tsplit\nok\tpos\ttrain\nonly-one-column\n");
  EXPECT_NE(error_of([&] { parse_tabular(short_row, TabularFormat::tsv); }).find("line 3"), std::string::npos);
  std::istringstream bad_json("{\"text\":\"a\",\"label\":\"x\"}\n{not json\n");
  EXPECT_NE(error_of([&] { parse_tabular(bad_json, TabularFormat::jsonl); }).find("line 2"), std::string::npos);
}

TEST(LoadTabular, MissingColumnNamed) {
  std::istringstream in("text\tcategory\nhello\tpos\n");
  EXPECT_NE(error_of([&] { parse_tabular(in, TabularFormat::tsv); }).find("'label'"), std::string::npos);
  TabularSchema schema;
  schema.text_key = "tweet";
  std::istringstream in2("text\tlabel\nhello\tpos\n");
  EXPECT_NE(error_of([&] { parse_tabular(in2, TabularFormat::tsv, schema); }).find("'tweet'"), std::string::npos);
}

TEST(LoadTabular, EmptyFile) {
  std::istringstream tsv("");
  EXPECT_THROW(parse_tabular(tsv, TabularFormat::tsv), InputError);
  std::istringstream jsonl("");
  EXPECT_THROW(parse_tabular(jsonl, TabularFormat::jsonl), InputError);
  std::istringstream header_only("text\tlabel\n");
  EXPECT_THROW(parse_tabular(header_only, TabularFormat::tsv), InputError);
}

TEST(LoadTabular, JsonlAndTsvAgree) {
  std::istringstream tsv("text\tlabel\tsplit\nGood day!\tpos\ttrain\nbad day\tneg\ttest\nso-so\tneu\tval\n");
  std::istringstream jsonl(
      "{\"text\":\"Good day!\",\"label\":\"pos\",\"split\":\"train\"}\n"
      "{\"text\":\"bad day\",\"label\":\"neg\",\"split\":\"test\"}\n"
      "\n"
      "{\"text\":\"so-so\",\"label\":\"neu\",\"split\":\"val\"}\n");
  EXPECT_EQ(parse_tabular(tsv, TabularFormat::tsv), parse_tabular(jsonl, TabularFormat::jsonl));
}

TEST(LoadTabular, MissingSplitColumnGetsSeededSplit) {
  std::string body = "text\tlabel\n";
  for (int i = 0; i < 40; ++i) body += "row " + std::to_string(i) + "\t" + (i % 2 ? "a" : "b") + "\n";
  std::istringstream a(body), b(body);
  const LabeledDataset da = parse_tabular(a, TabularFormat::tsv), db = parse_tabular(b, TabularFormat::tsv);
  EXPECT_EQ(da, db);
  EXPECT_EQ(da.indices(Split::train).size(), 28u);
  EXPECT_FALSE(da.indices(Split::val).empty());
  EXPECT_FALSE(da.indices(Split::test).empty());
}

TEST(WriteTabular, RoundTripsBothFormats) {
  const LabeledDataset d = synth_mixture(small_spec(), 8);
  for (TabularFormat f : {TabularFormat::tsv, TabularFormat::jsonl}) {
    std::stringstream buffer;
    write_tabular(d, buffer, f);
    EXPECT_EQ(parse_tabular(buffer, f), d);
  }
}

TEST(HashFeaturize, EmptyTextIsZero) {
  const std::vector<std::string> texts = {"", "  ,, "};
  EXPECT_EQ(hash_featurize(texts, 16, 0), Tensor::zeros({2, 16}));
}

TEST(HashFeaturize, IdenticalTextsIdenticalRows) {
  const std::vector<std::string> texts = {"The cat sat", "the CAT sat!"};
  const Tensor h = hash_featurize(texts, 32, 7);
  for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(h.at(0, j), h.at(1, j));
  EXPECT_EQ(h, hash_featurize(texts, 32, 7));
}

TEST(HashFeaturize, RepeatedTokenHasOneUnitBucket) {
  const std::vector<std::string> texts = {"a a"};
  const Tensor h = hash_featurize(texts, 64, 3);
  std::size_t nonzero = 0;
  for (double v : h.data()) {
    if (v != 0.0) {
      ++nonzero;
      EXPECT_EQ(std::abs(v), 1.0);
    }
  }
  EXPECT_EQ(nonzero, 1u);
}

TEST(HashFeaturize, RowsAreUnitNorm) {
  const std::vector<std::string> texts = {"one two three", "héllo wörld ünïcode", "x", "a b c d e f g h i j k"};
  const Tensor h = hash_featurize(texts, 8, 1);
  for (std::size_t r = 0; r < texts.size(); ++r) {
    double n = 0.0;
    for (std::size_t j = 0; j < 8; ++j) n += h.at(r, j) * h.at(r, j);
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
  }
}

TEST(HashFeaturize, Tokenizer) {
  EXPECT_EQ(tokenize("Hello, WORLD-42!"), (std::vector<std::string>{"hello", "world", "42"}));
  EXPECT_TRUE(tokenize("").empty());
}

}  // namespace
