#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "rulecast/experiments.hpp"
#include "test_support.hpp"

using namespace rulecast;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(RULECAST_SOURCE_DIR) / "configs";

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::size_t columns(const std::string& line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

ExperimentConfig from_text(const std::string& text) {
  return parse_experiment_config(KeyValueConfig::parse(text));
}

}  // namespace

TEST(KeyValueConfig, ParsesValuesAndComments) {
  const auto kv = KeyValueConfig::parse("# header\n a = 1.5 \nname = hello world # trailing\nlist = x, y ,z\nflag = true\n");
  EXPECT_EQ(kv.get_double("a", 0), 1.5);
  EXPECT_EQ(kv.get_string("name", ""), "hello world");
  EXPECT_EQ(kv.get_list("list", {}), (std::vector<std::string>{"x", "y", "z"}));
  EXPECT_TRUE(kv.get_bool("flag", false));
  EXPECT_EQ(kv.get_uint("missing", 7), 7u);
  EXPECT_NO_THROW(kv.check_all_used());
}

TEST(KeyValueConfig, Errors) {
  EXPECT_THROW(KeyValueConfig::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("just words\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse(" = 3\n"), ConfigError);
  const auto kv = KeyValueConfig::parse("n = abc\nu = -1\nb = maybe\nl = a,,b\n");
  EXPECT_THROW(kv.get_double("n", 0), ConfigError);
  EXPECT_THROW(kv.get_uint("u", 0), ConfigError);
  EXPECT_THROW(kv.get_bool("b", false), ConfigError);
  EXPECT_THROW(kv.get_list("l", {}), ConfigError);
  EXPECT_THROW(kv.require_string("nope"), ConfigError);
  EXPECT_THROW(KeyValueConfig::load("/nonexistent/x.cfg"), ConfigError);
}

TEST(KeyValueConfig, ErrorNamesLine) {
  try {
    KeyValueConfig::parse("a = 1\n\nb = 2\na = 3\n", "f.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("f.cfg:4"), std::string::npos) << e.what();
  }
}

TEST(KeyValueConfig, UnusedKeyIsReported) {
  const auto kv = KeyValueConfig::parse("a = 1\nb = 2\n");
  kv.get_double("a", 0);
  try {
    kv.check_all_used();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos) << e.what();
  }
}

TEST(ExperimentConfig, KindsAndAliases) {
  EXPECT_EQ(parse_experiment_kind("synthetic"), ExperimentKind::Synthetic);
  EXPECT_EQ(parse_experiment_kind("synthetic-sim-experts"), ExperimentKind::Scaling);
  EXPECT_EQ(parse_experiment_kind("alpha-sweep"), ExperimentKind::Sweep);
  EXPECT_EQ(parse_experiment_kind("sentiment"), ExperimentKind::Sentiment);
  EXPECT_THROW(parse_experiment_kind("bogus"), ConfigError);
  for (auto k : {ExperimentKind::Synthetic, ExperimentKind::Scaling, ExperimentKind::Sentiment, ExperimentKind::Sweep}) {
    EXPECT_EQ(parse_experiment_kind(to_string(k)), k);
  }
}

TEST(ExperimentConfig, Defaults) {
  const auto c = from_text("experiment = synthetic\n");
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.data.n_per_cluster, 100u);
  EXPECT_EQ(c.n_experts, 40u);
  EXPECT_EQ(c.loop.alpha, 0.5);
  EXPECT_EQ(c.loop.init_weight, 0.1);
  EXPECT_EQ(c.loop.queries_per_expert, 8u);
  EXPECT_TRUE(c.loop.hist_frozen);
}

TEST(ExperimentConfig, RejectsBadValues) {
  EXPECT_THROW(from_text("unknown_key = 1\n"), ConfigError);
  EXPECT_THROW(from_text("alpha = 1.5\n"), ConfigError);
  EXPECT_THROW(from_text("n_per_cluster = 0\n"), ConfigError);
  EXPECT_THROW(from_text("routing = sideways\n"), ConfigError);
  EXPECT_THROW(from_text("sigma_scale = -1\n"), ConfigError);
  EXPECT_THROW(from_text("alpha_step = 0\n"), ConfigError);
  EXPECT_THROW(from_text("experiment = scaling\nexpert_counts = 1, x\n"), ConfigError);
  EXPECT_THROW(from_text("experiment = sentiment\n"), ConfigError);
}

TEST(ExperimentConfig, ShippedConfigsLoad) {
  for (const char* name : {"synthetic", "scaling", "sweep", "sentiment"}) {
    const auto c = load_experiment_config(kConfigs / (std::string(name) + ".cfg"));
    EXPECT_EQ(to_string(c.kind), name);
  }
  const auto s = load_experiment_config(kConfigs / "sentiment.cfg");
  ASSERT_EQ(s.topics.size(), 3u);
  EXPECT_TRUE(fs::exists(s.topics[0].train));
}

TEST(ExperimentConfig, HashIsStableAndSensitive) {
  const auto a = from_text("seed = 3\nalpha = 0.5\n");
  const auto b = from_text("alpha = 0.50\n# reordered\nseed = 3\n");
  EXPECT_EQ(canonical_config(a), canonical_config(b));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(from_text("seed = 4\nalpha = 0.5\n")));
  EXPECT_NE(config_hash(a), config_hash(from_text("seed = 3\nalpha = 0.6\n")));
  EXPECT_NE(config_hash(a), config_hash(from_text("seed = 3\nalpha = 0.5\nexperiment = sweep\n")));
}

TEST(Experiments, SyntheticConditions) {
  const auto c = load_experiment_config(kConfigs / "synthetic.cfg");
  const auto rows = run_synthetic(c, c.n_experts);
  ASSERT_EQ(rows.size(), 3u);
  const ConditionResult* none = nullptr;
  const ConditionResult* rules = nullptr;
  const ConditionResult* labels = nullptr;
  for (const auto& r : rows) {
    if (r.feedback == "none") none = &r;
    if (r.feedback == "decision_rules") rules = &r;
    if (r.feedback == "labels") labels = &r;
  }
  ASSERT_TRUE(none && rules && labels);
  EXPECT_GE(none->metrics.accuracy_train_distr, 0.99);
  EXPECT_LE(none->metrics.accuracy_test_distr, 0.05);
  EXPECT_GE(rules->metrics.accuracy_combined, 0.85);
  EXPECT_GE(rules->metrics.accuracy_train_distr, 0.95);
  EXPECT_LE(labels->metrics.accuracy_train_distr, 0.1);
  EXPECT_GE(labels->metrics.accuracy_test_distr, 0.9);
  EXPECT_GT(rules->metrics.n_rules, 0u);

  const auto csv = lines_of(synthetic_csv(rows, c.seed));
  ASSERT_EQ(csv.size(), 4u);
  for (const auto& line : csv) EXPECT_EQ(columns(line), 12u) << line;
}

TEST(Experiments, SweepEndpointsAndShape) {
  auto c = load_experiment_config(kConfigs / "sweep.cfg");
  const auto rows = run_synthetic_sweep(c);
  ASSERT_EQ(rows.size(), 21u);
  EXPECT_EQ(rows.front().alpha, 0.0);
  EXPECT_EQ(rows.back().alpha, 1.0);
  // at alpha 1 the feedback is ignored
  EXPECT_GE(rows.back().accuracy_train_distr, 0.99);
  EXPECT_LE(rows.back().accuracy_test_distr, 0.05);
  for (const auto& line : lines_of(sweep_csv(rows, c.seed))) EXPECT_EQ(columns(line), 10u);
}

TEST(Experiments, ScalingGrowsWithExperts) {
  auto c = from_text("experiment = scaling\nexpert_counts = 1, 40\n");
  const auto rows = run_scaling(c);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].n_experts, 1u);
  EXPECT_GT(rows[1].rules.accuracy_combined, rows[0].rules.accuracy_combined);
  EXPECT_LT(rows[0].rules.n_feedback, rows[1].rules.n_feedback);
  for (const auto& line : lines_of(scaling_csv(rows, c.seed))) EXPECT_EQ(columns(line), 16u);
}

TEST(Experiments, SentimentCurves) {
  const auto c = load_experiment_config(kConfigs / "sentiment.cfg");
  const auto curves = run_sentiment(c);
  ASSERT_EQ(curves.size(), 3u);
  for (const auto& t : curves) {
    ASSERT_EQ(t.alphas.size(), 21u);
    ASSERT_EQ(t.rules.size(), 21u);
    EXPECT_GT(t.n_rules, 0u);
    // alpha 1 ignores the rules entirely
    EXPECT_EQ(t.rules.back().accuracy, t.source.back().accuracy) << t.topic;
    double best_rules = 0, best_labels = 0;
    for (std::size_t i = 0; i < t.alphas.size(); ++i) {
      best_rules = std::max(best_rules, t.rules[i].accuracy);
      best_labels = std::max(best_labels, t.labels[i].accuracy);
      EXPECT_GE(t.rules[i].standard_error, 0.0);
    }
    EXPECT_GE(best_rules, best_labels) << t.topic;
    const auto csv = lines_of(sentiment_csv(t, c.seed));
    ASSERT_EQ(csv.size(), 22u);
    for (const auto& line : csv) EXPECT_EQ(columns(line), 13u);
  }
}

TEST(Experiments, ReportsAreByteIdentical) {
  const auto c = load_experiment_config(kConfigs / "synthetic.cfg");
  const fs::path a = fixtures::temp_dir("exp_a"), b = fixtures::temp_dir("exp_b");
  const auto pa = run_experiment(c, a);
  const auto pb = run_experiment(c, b);
  ASSERT_EQ(pa.size(), pb.size());
  ASSERT_FALSE(pa.empty());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].filename(), pb[i].filename());
    EXPECT_EQ(read_all(pa[i]), read_all(pb[i])) << pa[i];
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Experiments, SeedChangesResults) {
  auto c = load_experiment_config(kConfigs / "synthetic.cfg");
  const auto one = synthetic_csv(run_synthetic(c, 5), c.seed);
  c.seed = 2;
  EXPECT_NE(one, synthetic_csv(run_synthetic(c, 5), c.seed));
}
