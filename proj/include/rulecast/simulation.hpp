#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rulecast/data.hpp"
#include "rulecast/ensemble.hpp"
#include "rulecast/models.hpp"

namespace rulecast {

enum class ExperienceMode : std::uint8_t {
  FractionOfMixture,        // e = share of pooled samples the expert has seen
  FractionOfDistributions,  // e = share of mixture components seen in full
};

struct ExpertProfile {
  std::size_t depth = 1;
  double experience = 0.3;
  ExperienceMode mode = ExperienceMode::FractionOfMixture;
  std::uint64_t seed = 0;
};

/// Depth uniform on {1,2,3,4}; experience ~ N(0.3, 0.05^2) clamped to [0.01, 1].
std::vector<ExpertProfile> sample_experts(std::size_t n, std::uint64_t seed,
                                          ExperienceMode mode = ExperienceMode::FractionOfMixture);

struct SimulatedExpert {
  std::string id;
  ExpertProfile profile;
  Dataset experience_data;
  DecisionTree tree;
  std::size_t feedback_count = 0;
};

SimulatedExpert init_expert(const ExpertProfile& profile, const Dataset& mixture_pool,
                            std::string id);

/// Returns the expert's current tree as a rule when it already classifies
/// the sample correctly; otherwise learns the sample, refits, and returns the
/// refitted tree. The rule is anchored on the sample.
FeedbackRule expert_feedback(SimulatedExpert& expert, const Sample& sample,
                             std::uint64_t created_at);

enum class ObservablePolicy : std::uint8_t { Misclassified, Random, All };

struct ObservableConfig {
  ObservablePolicy policy = ObservablePolicy::Misclassified;
  std::size_t k = 0;  // Random only
  std::uint64_t seed = 0;
};

// Ids in dataset order.
std::vector<std::uint64_t> select_observable(std::span<const double> predictions,
                                             const Dataset& batch, const ObservableConfig& config);

struct MetricsReport {
  std::size_t round = 0;
  double alpha = 0.0;
  std::size_t n_feedback = 0;
  std::size_t n_rules = 0;
  double accuracy_train_distr = 0.0;
  double accuracy_test_distr = 0.0;
  double accuracy_combined = 0.0;
  double se_train_distr = 0.0;
  double se_test_distr = 0.0;
  double se_combined = 0.0;
};

struct EvalSets {
  Dataset train_distr;
  Dataset test_distr;
};

struct AccuracyEstimate {
  double accuracy = 0.0;
  double standard_error = 0.0;
};

inline constexpr std::size_t kBootstrapResamples = 40;

// Accuracy with threshold 0.5 (ties -> class 0) and bootstrap standard error.
AccuracyEstimate estimate_accuracy(const MixtureClassifier& model, const Dataset& data,
                                   std::size_t resamples = kBootstrapResamples,
                                   std::uint64_t seed = 0);
AccuracyEstimate estimate_accuracy(std::span<const double> probs, const Dataset& data,
                                   std::size_t resamples = kBootstrapResamples,
                                   std::uint64_t seed = 0);

MetricsReport evaluate(const MixtureClassifier& model, const EvalSets& eval,
                       std::size_t resamples = kBootstrapResamples, std::uint64_t seed = 0);

enum class Routing : std::uint8_t {
  RoundRobin,  // observable samples dealt to experts in turn
  Broadcast,   // every expert reviews every observable sample
};

enum class FeedbackMode : std::uint8_t {
  Rules,   // experts return decision rules
  Labels,  // experts return labels; hist is retrained on them from scratch
};

struct LoopConfig {
  double alpha = 0.5;
  bool hist_frozen = true;
  ObservableConfig observable;
  Routing routing = Routing::RoundRobin;
  std::size_t queries_per_expert = 8;  // per round; 0 = unlimited
  FeedbackMode mode = FeedbackMode::Rules;
  SimilarityConfig similarity;
  double init_weight = 0.1;  // 1.0 saturates the sigmoid once ~100 rules vote
  TrainConfig train;
  std::size_t bootstrap_resamples = kBootstrapResamples;
  std::uint64_t seed = 0;
};

struct LoopResult {
  MixtureClassifier model;
  std::vector<MetricsReport> rounds;
  Dataset feedback_data;  // labeled samples that received feedback
  std::size_t n_feedback = 0;
};

/// predict -> select observable -> query experts -> add rules -> retrain,
/// once per batch. Experts are updated in place.
LoopResult run_lifelong_loop(const LinearModel& hist, std::vector<SimulatedExpert>& experts,
                             std::span<const Dataset> batches, const EvalSets& eval,
                             const LoopConfig& config);

struct SweepSetup {
  LinearModel hist;
  FeedbackEnsemble ensemble;  // weights as they should be before training
  Dataset feedback_data;
  EvalSets eval;
  TrainConfig train;
  bool hist_frozen = true;
  bool retrain_per_alpha = true;
  std::size_t bootstrap_resamples = kBootstrapResamples;
  std::uint64_t seed = 0;
};

std::vector<MetricsReport> alpha_sweep(const SweepSetup& setup, std::span<const double> alphas);

// {0, step, 2 step, ..., 1}
std::vector<double> alpha_grid(double step = 0.05);

}  // namespace rulecast
