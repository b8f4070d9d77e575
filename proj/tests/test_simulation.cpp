#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "rulecast/kernels.hpp"
#include "rulecast/simulation.hpp"
#include "test_support.hpp"

using namespace rulecast;

namespace {

struct Switching {
  SplitPair split;
  Dataset pool;
  LinearModel hist;
  EvalSets eval;
};

Switching switching(std::uint64_t seed) {
  Switching s;
  SwitchingGaussianSpec spec;
  spec.seed = seed;
  s.split = generate_switching(spec);
  s.pool = concat(s.split.train, s.split.test);
  TrainConfig tc;
  tc.seed = seed;
  s.hist = train_logistic(s.split.train, tc);
  s.eval = {s.split.train, s.split.test};
  return s;
}

std::vector<SimulatedExpert> make_experts(const std::vector<ExpertProfile>& profiles, const Dataset& pool) {
  std::vector<SimulatedExpert> experts;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    experts.push_back(init_expert(profiles[i], pool, "expert" + std::to_string(i)));
  }
  return experts;
}

double tree_accuracy(const DecisionTree& t, const Dataset& d) {
  std::size_t ok = 0;
  for (const auto& s : d.samples) ok += tree_predict(t, s) == *s.label;
  return static_cast<double>(ok) / static_cast<double>(d.size());
}

MixtureClassifier hist_only(const LinearModel& hist) {
  MixtureClassifier m;
  m.alpha = 1.0;
  m.hist = hist;
  return m;
}

}  // namespace

TEST(Experts, SampleProfiles) {
  const auto experts = sample_experts(40, 1);
  ASSERT_EQ(experts.size(), 40u);
  std::set<std::size_t> depths;
  for (const auto& e : experts) {
    EXPECT_GE(e.depth, 1u);
    EXPECT_LE(e.depth, 4u);
    EXPECT_GE(e.experience, 0.01);
    EXPECT_LE(e.experience, 1.0);
    depths.insert(e.depth);
  }
  EXPECT_EQ(depths.size(), 4u);
  EXPECT_THROW(sample_experts(0, 1), std::invalid_argument);
}

TEST(Experts, ExperienceMean) {
  const auto experts = sample_experts(10000, 7);
  double sum = 0.0;
  for (const auto& e : experts) sum += e.experience;
  EXPECT_NEAR(sum / 10000.0, 0.3, 0.005);
}

TEST(Experts, Deterministic) {
  const auto a = sample_experts(40, 3), b = sample_experts(40, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].depth, b[i].depth);
    EXPECT_EQ(a[i].experience, b[i].experience);
    EXPECT_EQ(a[i].seed, b[i].seed);
  }
}

TEST(Experts, FullExperienceDeepTreeIsAccurate) {
  const auto w = switching(1);
  const SimulatedExpert e = init_expert({4, 1.0, ExperienceMode::FractionOfMixture, 9}, w.pool, "e");
  EXPECT_EQ(e.experience_data.size(), 400u);
  EXPECT_GE(tree_accuracy(e.tree, w.pool), 0.9);
}

TEST(Experts, ExperienceFloor) {
  const auto w = switching(1);
  const SimulatedExpert e = init_expert({2, 0.01, ExperienceMode::FractionOfMixture, 9}, w.pool, "e");
  EXPECT_GE(e.experience_data.size(), 2u);
  Dataset small = subsample(w.pool, 0.1, 5);  // 40 samples: 1% rounds up to one
  const SimulatedExpert f = init_expert({2, 0.01, ExperienceMode::FractionOfMixture, 9}, small, "f");
  EXPECT_EQ(f.experience_data.size(), 2u);
  EXPECT_EQ(f.experience_data.count_label(1), 1u);
}

TEST(Experts, DepthOneIsASingleSplit) {
  const auto w = switching(1);
  const SimulatedExpert e = init_expert({1, 0.5, ExperienceMode::FractionOfMixture, 4}, w.pool, "e");
  EXPECT_EQ(e.tree.depth(), 1u);
  EXPECT_EQ(e.tree.nodes.size(), 3u);
}

TEST(Experts, FractionOfDistributions) {
  const auto w = switching(1);
  const SimulatedExpert e = init_expert({3, 0.5, ExperienceMode::FractionOfDistributions, 4}, w.pool, "e");
  EXPECT_EQ(e.experience_data.size(), 200u);
  std::set<int> comps;
  for (const auto& s : e.experience_data.samples) comps.insert(*s.component);
  EXPECT_EQ(comps.size(), 2u);
  Dataset untagged = w.pool;
  for (auto& s : untagged.samples) s.component.reset();
  EXPECT_THROW(init_expert({3, 0.5, ExperienceMode::FractionOfDistributions, 4}, untagged, "x"), DataError);
}

TEST(Experts, FeedbackBranches) {
  const auto w = switching(2);
  SimulatedExpert e = init_expert({2, 0.3, ExperienceMode::FractionOfMixture, 11}, w.pool, "e");
  const Sample* right = nullptr;
  const Sample* wrong = nullptr;
  for (const auto& s : w.pool.samples) {
    if (!right && tree_predict(e.tree, s) == *s.label) right = &s;
    if (!wrong && tree_predict(e.tree, s) != *s.label) wrong = &s;
  }
  ASSERT_TRUE(right);
  const std::size_t before = e.experience_data.size();
  const FeedbackRule r1 = expert_feedback(e, *right, 0);
  const FeedbackRule r2 = expert_feedback(e, *right, 1);
  EXPECT_EQ(e.experience_data.size(), before);
  EXPECT_EQ(serialize(*r1.rule), serialize(*r2.rule));
  EXPECT_NE(r1.rule_id, r2.rule_id);
  EXPECT_EQ(r1.anchor, right->id);
  EXPECT_EQ(r1.author_id, "e");
  if (wrong) {
    expert_feedback(e, *wrong, 2);
    EXPECT_EQ(e.experience_data.size(), before + 1);
    EXPECT_EQ(e.experience_data.samples.back().id, wrong->id);
  }
}

TEST(Experts, ExperienceNeverShrinks) {
  const auto w = switching(3);
  auto experts = make_experts(sample_experts(5, 3), w.pool);
  Rng rng(3, 9);
  for (int i = 0; i < 200; ++i) {
    auto& e = experts[rng.below(experts.size())];
    const Sample& s = w.pool.samples[rng.below(w.pool.size())];
    const bool wrong = tree_predict(e.tree, s) != *s.label;
    const std::size_t before = e.experience_data.size();
    const FeedbackRule r = expert_feedback(e, s, static_cast<std::uint64_t>(i));
    EXPECT_EQ(e.experience_data.size(), before + (wrong ? 1 : 0));
    EXPECT_LE(rule_depth(*r.rule), e.profile.depth);
  }
}

TEST(Observable, Policies) {
  const auto w = switching(1);
  const auto& test = w.split.test;
  std::vector<double> perfect;
  for (const auto& s : test.samples) perfect.push_back(*s.label ? 0.9 : 0.1);
  EXPECT_TRUE(select_observable(perfect, test, {}).empty());

  const auto baseline = kernels::predict_batch_serial(hist_only(w.hist), test);
  EXPECT_GE(select_observable(baseline, test, {}).size(), 190u);

  const auto all = select_observable(baseline, test, {ObservablePolicy::All, 0, 0});
  ASSERT_EQ(all.size(), test.size());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], test.samples[i].id);

  const auto r1 = select_observable(baseline, test, {ObservablePolicy::Random, 25, 4});
  EXPECT_EQ(r1.size(), 25u);
  EXPECT_TRUE(std::is_sorted(r1.begin(), r1.end()));
  EXPECT_EQ(r1, select_observable(baseline, test, {ObservablePolicy::Random, 25, 4}));
  EXPECT_NE(r1, select_observable(baseline, test, {ObservablePolicy::Random, 25, 5}));
  EXPECT_THROW(select_observable(baseline, test, {ObservablePolicy::Random, 201, 4}), std::invalid_argument);
}

TEST(Evaluate, ConstantPredictorTiesToClassZero) {
  const auto w = switching(1);
  MixtureClassifier m;
  m.alpha = 0.0;  // empty ensemble: exactly 0.5 everywhere
  const MetricsReport r = evaluate(m, w.eval);
  EXPECT_EQ(r.accuracy_train_distr, 0.5);
  EXPECT_EQ(r.accuracy_test_distr, 0.5);
  EXPECT_EQ(r.accuracy_combined, 0.5);
}

TEST(Evaluate, PerfectPredictor) {
  const auto w = switching(1);
  std::vector<double> probs;
  for (const auto& s : w.split.test.samples) probs.push_back(*s.label ? 1.0 : 0.0);
  const auto est = estimate_accuracy(std::span<const double>(probs), w.split.test);
  EXPECT_EQ(est.accuracy, 1.0);
  EXPECT_EQ(est.standard_error, 0.0);
}

TEST(Evaluate, BootstrapStandardError) {
  // 60% correct: the bootstrap SE should sit near sqrt(p (1 - p) / n).
  Dataset d;
  std::vector<double> probs;
  for (std::uint64_t i = 0; i < 500; ++i) {
    Sample s;
    s.id = i;
    s.features = {0.0};
    s.label = 1;
    d.samples.push_back(s);
    probs.push_back(i % 5 < 3 ? 0.9 : 0.1);
  }
  const auto est = estimate_accuracy(std::span<const double>(probs), d, kBootstrapResamples, 12);
  EXPECT_EQ(est.accuracy, 0.6);
  const double analytic = std::sqrt(0.6 * 0.4 / 500.0);
  EXPECT_NEAR(est.standard_error, analytic, 0.4 * analytic);
  EXPECT_EQ(est.standard_error,
            estimate_accuracy(std::span<const double>(probs), d, kBootstrapResamples, 12).standard_error);
  EXPECT_EQ(kBootstrapResamples, 40u);
}

TEST(Loop, ZeroExpertsKeepsBaseline) {
  const auto w = switching(1);
  std::vector<SimulatedExpert> none;
  const std::vector<Dataset> batches = {subsample(w.split.test, 0.5, 1), subsample(w.split.test, 0.5, 2)};
  const LoopResult res = run_lifelong_loop(w.hist, none, batches, w.eval, {});
  const MetricsReport base = evaluate(hist_only(w.hist), w.eval);
  ASSERT_EQ(res.rounds.size(), 2u);
  for (const auto& r : res.rounds) {
    EXPECT_EQ(r.accuracy_train_distr, base.accuracy_train_distr);
    EXPECT_EQ(r.accuracy_test_distr, base.accuracy_test_distr);
    EXPECT_EQ(r.accuracy_combined, base.accuracy_combined);
    EXPECT_EQ(r.n_rules, 0u);
    EXPECT_EQ(r.n_feedback, 0u);
  }
  EXPECT_EQ(res.model.hist, w.hist);
}

TEST(Loop, RuleFeedbackRecoversShiftedSplit) {
  const auto w = switching(1);
  auto experts = make_experts(sample_experts(40, 1), w.pool);
  const std::vector<Dataset> batches = {w.split.test};
  LoopConfig cfg;
  cfg.seed = 1;
  const LoopResult res = run_lifelong_loop(w.hist, experts, batches, w.eval, cfg);
  const MetricsReport& r = res.rounds.back();
  EXPECT_GE(r.accuracy_combined, 0.85);
  EXPECT_GE(r.accuracy_train_distr, 0.95);
  EXPECT_EQ(res.model.hist, w.hist);  // frozen
  std::size_t asked = 0;
  for (const auto& e : experts) asked += e.feedback_count;
  EXPECT_EQ(res.n_feedback, asked);
  EXPECT_EQ(r.n_rules, res.n_feedback);
  EXPECT_LE(res.feedback_data.size(), w.split.test.size());
}

TEST(Loop, LabelFeedbackForgets) {
  const auto w = switching(1);
  auto experts = make_experts(sample_experts(40, 1), w.pool);
  const std::vector<Dataset> batches = {w.split.test};
  LoopConfig cfg;
  cfg.mode = FeedbackMode::Labels;
  cfg.seed = 1;
  const LoopResult res = run_lifelong_loop(w.hist, experts, batches, w.eval, cfg);
  EXPECT_LE(res.rounds.back().accuracy_train_distr, 0.1);
  EXPECT_GE(res.rounds.back().accuracy_test_distr, 0.9);
  EXPECT_EQ(res.model.feedback.size(), 0u);
}

TEST(Loop, Deterministic) {
  const auto w = switching(4);
  const std::vector<Dataset> batches = {subsample(w.split.test, 0.5, 1), subsample(w.split.test, 0.5, 2)};
  LoopConfig cfg;
  cfg.seed = 4;
  auto run = [&] {
    auto experts = make_experts(sample_experts(10, 4), w.pool);
    return run_lifelong_loop(w.hist, experts, batches, w.eval, cfg);
  };
  const LoopResult a = run(), b = run();
  ASSERT_EQ(a.model.feedback.size(), b.model.feedback.size());
  for (std::size_t i = 0; i < a.model.feedback.size(); ++i) {
    EXPECT_EQ(format_rule_log_line(a.model.feedback.rules[i]), format_rule_log_line(b.model.feedback.rules[i]));
  }
  EXPECT_EQ(a.model.feedback.weights, b.model.feedback.weights);
  for (std::size_t t = 0; t < a.rounds.size(); ++t) {
    EXPECT_EQ(a.rounds[t].accuracy_combined, b.rounds[t].accuracy_combined);
    EXPECT_EQ(a.rounds[t].se_combined, b.rounds[t].se_combined);
  }
}

TEST(Loop, ExpertRulesAloneSufficeWithFullExperience) {
  const auto w = switching(5);
  std::vector<ExpertProfile> profiles(10, ExpertProfile{4, 1.0, ExperienceMode::FractionOfMixture, 0});
  for (std::size_t i = 0; i < profiles.size(); ++i) profiles[i].seed = 100 + i;
  auto experts = make_experts(profiles, w.pool);
  LoopConfig cfg;
  cfg.alpha = 0.0;
  cfg.seed = 5;
  const std::vector<Dataset> batches = {w.split.test};
  const LoopResult res = run_lifelong_loop(w.hist, experts, batches, w.eval, cfg);
  EXPECT_GE(res.rounds.back().accuracy_combined, 0.9);
}

TEST(Sweep, GridAndEndpoint) {
  const auto grid = alpha_grid(0.05);
  ASSERT_EQ(grid.size(), 21u);
  EXPECT_EQ(grid.front(), 0.0);
  EXPECT_EQ(grid.back(), 1.0);
  EXPECT_THROW(alpha_grid(0.0), std::invalid_argument);

  const auto w = switching(1);
  auto experts = make_experts(sample_experts(20, 1), w.pool);
  LoopConfig cfg;
  cfg.seed = 1;
  const std::vector<Dataset> batches = {w.split.test};
  const LoopResult res = run_lifelong_loop(w.hist, experts, batches, w.eval, cfg);

  SweepSetup setup;
  setup.hist = w.hist;
  setup.ensemble = res.model.feedback;
  for (auto& th : setup.ensemble.weights) th = cfg.init_weight;
  setup.feedback_data = res.feedback_data;
  setup.eval = w.eval;
  setup.seed = 3;
  const auto reports = alpha_sweep(setup, grid);
  ASSERT_EQ(reports.size(), 21u);
  const MetricsReport base = evaluate(hist_only(w.hist), w.eval, kBootstrapResamples, 3);
  EXPECT_EQ(reports.back().accuracy_combined, base.accuracy_combined);
  EXPECT_EQ(reports.back().se_combined, base.se_combined);
  EXPECT_GT(reports[10].accuracy_combined, base.accuracy_combined);
  const double bad[] = {1.5};
  EXPECT_THROW(alpha_sweep(setup, bad), std::invalid_argument);
}
