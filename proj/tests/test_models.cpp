#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "rulecast/models.hpp"
#include "rulecast/rng.hpp"
#include "oracles.hpp"

using namespace rulecast;

namespace {

Sample point(std::vector<double> x, int y, std::uint64_t id = 0) {
  Sample s;
  s.id = id;
  s.features = std::move(x);
  s.label = y;
  return s;
}

LinearModel linear(std::vector<double> w, double b) {
  LinearModel m;
  m.weights = std::move(w);
  m.bias = b;
  return m;
}

double accuracy(const LinearModel& m, const Dataset& d) {
  std::size_t ok = 0;
  for (const auto& s : d.samples) ok += (predict_proba(m, s) > 0.5 ? 1 : 0) == *s.label;
  return static_cast<double>(ok) / static_cast<double>(d.size());
}

using fixtures::oracle_cart;
using fixtures::relative_error;

}  // namespace

TEST(Logistic, PredictExamples) {
  LinearModel m(2);
  const Sample x = point({3.0, -1.0}, 1);
  EXPECT_EQ(predict_proba(m, x), 0.5);
  m.bias = 1.0;
  EXPECT_NEAR(predict_proba(linear({0.0, 0.0}, 1.0), x), 0.7310585786300049, 1e-15);
  m.weights = {0.5, 0.5};
  m.bias = 0.0;
  EXPECT_NEAR(predict_proba(m, x), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  double prev = 0.0;
  for (double b = -5.0; b <= 5.0; b += 0.5) {
    m.bias = b;
    const double p = predict_proba(m, x);
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(Logistic, SigmoidStaysInsideOpenInterval) {
  EXPECT_GT(sigmoid(-30.0), 0.0);
  EXPECT_LT(sigmoid(30.0), 1.0);
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_TRUE(std::isfinite(sigmoid(-1e6)));
  EXPECT_TRUE(std::isfinite(sigmoid(1e6)));
  EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
}

TEST(Logistic, LossValues) {
  const LinearModel m(1);
  const std::vector<Sample> s = {point({1.0}, 1), point({2.0}, 0)};
  EXPECT_NEAR(logistic_loss(m, s, 0.0), std::log(2.0), 1e-15);
  const LinearModel w = linear({2.0}, 0.0);
  EXPECT_NEAR(logistic_loss(w, s, 0.5) - logistic_loss(w, s, 0.0), 0.5 * 0.5 * 4.0, 1e-12);
  // clamping keeps the loss finite for confident mistakes
  const LinearModel huge = linear({1000.0}, 0.0);
  EXPECT_TRUE(std::isfinite(logistic_loss(huge, std::vector<Sample>{point({1.0}, 0)}, 0.0)));
}

TEST(Logistic, GradientMatchesFiniteDifferences) {
  Rng rng(99);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 1 + rng.below(5);
    LinearModel m(dim);
    for (auto& w : m.weights) w = rng.normal();
    m.bias = rng.normal();
    std::vector<Sample> samples;
    const std::size_t n = 1 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x;
      for (std::size_t f = 0; f < dim; ++f) x.push_back(2.0 * rng.normal());
      samples.push_back(point(std::move(x), static_cast<int>(rng.below(2))));
    }
    const double l2 = trial % 2 ? 0.0 : 0.1 * rng.uniform();
    const LinearGradient g = logistic_gradient(m, samples, l2);

    std::vector<double> analytic = g.weights, numeric;
    analytic.push_back(g.bias);
    for (std::size_t k = 0; k <= dim; ++k) {
      LinearModel plus = m, minus = m;
      double& p = k < dim ? plus.weights[k] : plus.bias;
      double& q = k < dim ? minus.weights[k] : minus.bias;
      p += h;
      q -= h;
      numeric.push_back((logistic_loss(plus, samples, l2, 0.0) - logistic_loss(minus, samples, l2, 0.0)) /
                        (2.0 * h));
    }
    ASSERT_LT(relative_error(analytic, numeric), 1e-4) << "trial " << trial;
  }
}

TEST(Logistic, SwitchingBaseline) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SwitchingGaussianSpec spec;
    spec.seed = seed;
    const auto split = generate_switching(spec);
    TrainConfig cfg;
    cfg.seed = seed;
    const LinearModel m = train_logistic(split.train, cfg);
    EXPECT_GE(accuracy(m, split.train), 0.99) << seed;
    EXPECT_LE(accuracy(m, split.test), 0.05) << seed;
  }
}

TEST(Logistic, SeparableToySet) {
  Dataset d;
  d.dimension = 2;
  d.samples = {point({0, 0}, 0, 0), point({1, 0}, 0, 1), point({0, 1}, 1, 2), point({1, 1}, 1, 3)};
  // a separating line exists: brute force over a coarse grid
  bool separable = false;
  for (double a = -2; a <= 2 && !separable; a += 0.5) {
    for (double b = -2; b <= 2 && !separable; b += 0.5) {
      for (double c = -2; c <= 2 && !separable; c += 0.25) {
        bool all = true;
        for (const auto& s : d.samples) all = all && ((a * s.features[0] + b * s.features[1] + c > 0) == (*s.label == 1));
        separable = all;
      }
    }
  }
  ASSERT_TRUE(separable);
  EXPECT_EQ(accuracy(train_logistic(d, {}), d), 1.0);
}

TEST(Logistic, TrainingIsDeterministic) {
  const auto split = generate_switching({});
  TrainConfig cfg;
  cfg.seed = 5;
  EXPECT_EQ(train_logistic(split.train, cfg), train_logistic(split.train, cfg));
}

TEST(Logistic, RejectsBadInput) {
  TrainConfig bad;
  bad.learning_rate = 0.0;
  EXPECT_THROW(validate(bad), std::exception);
  bad = {};
  bad.batch_size = 0;
  EXPECT_THROW(validate(bad), std::exception);
  Dataset empty;
  EXPECT_THROW(train_logistic(empty, {}), std::exception);
}

TEST(Checkpoint, RoundTrip) {
  LinearModel m = linear({1.5, -0.25, 1e-300, 3.0}, -7.125);
  const auto bytes = encode_checkpoint(m);
  EXPECT_EQ(bytes.size(), 4 + 4 + 8 + 8 + 4 * 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RCLM");
  EXPECT_EQ(decode_checkpoint(bytes), m);

  const auto dir = fixtures::temp_dir("ckpt");
  save_checkpoint((dir / "m.ckpt").string(), m);
  EXPECT_EQ(load_checkpoint((dir / "m.ckpt").string()), m);
}

TEST(Checkpoint, RejectsCorruptInput) {
  auto bytes = encode_checkpoint(linear({1.0}, 0.0));
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_checkpoint(truncated), ModelError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), ModelError);
  EXPECT_THROW(load_checkpoint("/nonexistent/m.ckpt"), std::exception);
}

TEST(Cart, OneDimensionalExample) {
  Dataset d;
  d.dimension = 1;
  d.samples = {point({0}, 0, 0), point({1}, 0, 1), point({10}, 1, 2), point({11}, 1, 3)};
  const DecisionTree t = fit_cart(d, 1);
  ASSERT_FALSE(t.nodes[0].is_leaf);
  EXPECT_GT(t.nodes[0].threshold, 1.0);
  EXPECT_LT(t.nodes[0].threshold, 10.0);
  for (const auto& s : d.samples) EXPECT_EQ(tree_predict(t, s), *s.label);
}

TEST(Cart, PureDataIsALeaf) {
  Dataset d;
  d.dimension = 1;
  d.samples = {point({0}, 1, 0), point({5}, 1, 1)};
  const DecisionTree t = fit_cart(d, 3);
  EXPECT_EQ(t.depth(), 0u);
  EXPECT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(t.nodes[0].majority, 1);
}

TEST(Cart, MajorityTieIsClassZero) {
  Dataset d;
  d.dimension = 1;
  d.samples = {point({1}, 1, 0), point({1}, 0, 1)};
  const DecisionTree t = fit_cart(d, 2);
  EXPECT_EQ(t.depth(), 0u);
  EXPECT_EQ(t.nodes[0].majority, 0);
}

TEST(Cart, SwitchingDepthTwo) {
  const auto split = generate_switching({});
  const DecisionTree t = fit_cart(split.train, 2);
  std::size_t ok = 0;
  for (const auto& s : split.train.samples) ok += tree_predict(t, s) == *s.label;
  EXPECT_GE(static_cast<double>(ok) / 200.0, 0.95);
  // and the oracle agrees on the whole tree
  auto oracle = oracle_cart(split.train.samples, 2, 0, 2, 1);
  EXPECT_EQ(fixtures::tree_mismatch(t, 0, *oracle), "");
}

TEST(Cart, MatchesExhaustiveOracle) {
  EXPECT_EQ(fixtures::cart_oracle_sweep(314, 3000), "");
}

TEST(Cart, RejectsBadInput) {
  Dataset d;
  d.dimension = 1;
  EXPECT_THROW(fit_cart(d, 2), ModelError);
  d.samples = {point({0}, 1, 0)};
  EXPECT_THROW(fit_cart(d, 0), ModelError);
  d.samples[0].label.reset();
  EXPECT_THROW(fit_cart(d, 1), ModelError);
}

TEST(TreeToRule, Examples) {
  DecisionTree leaf;
  TreeNode one;
  one.majority = 1;
  leaf.nodes.push_back(one);
  EXPECT_EQ(serialize(tree_to_rule(leaf)), "1");

  DecisionTree stump;
  TreeNode root;
  root.is_leaf = false;
  root.feature = 0;
  root.threshold = 3.0;
  root.left = 1;
  root.right = 2;
  TreeNode zero;
  zero.majority = 0;
  stump.nodes = {root, one, zero};
  EXPECT_EQ(serialize(tree_to_rule(stump)), "if x0 <= 3 then 1 else 0");
  EXPECT_EQ(rule_depth(tree_to_rule(stump)), 1u);
}

TEST(TreeToRule, EquivalentOnRandomTrees) {
  Rng rng(2718);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t dim = 1 + rng.below(4);
    Dataset d;
    d.dimension = dim;
    for (std::size_t i = 0; i < 60; ++i) {
      std::vector<double> x;
      for (std::size_t f = 0; f < dim; ++f) x.push_back(10.0 * rng.uniform());
      d.samples.push_back(point(std::move(x), static_cast<int>(rng.below(2)), i));
    }
    const DecisionTree t = fit_cart(d, 1 + rng.below(4));
    const RuleAst rule = tree_to_rule(t);
    ASSERT_EQ(rule_depth(rule), t.depth());
    ASSERT_EQ(parse_rule(serialize(rule)), rule);
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> x;
      for (std::size_t f = 0; f < dim; ++f) x.push_back(12.0 * rng.uniform() - 1.0);
      const Sample s = point(x, 0);
      const Verdict v = evaluate(rule, s);
      ASSERT_NE(v, Verdict::Abstain);
      ASSERT_EQ(v == Verdict::Class1 ? 1 : 0, tree_predict(t, s));
    }
  }
}
