#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulecast/data.hpp"
#include "rulecast/models.hpp"
#include "rulecast/rule_dsl.hpp"

namespace rulecast {

struct SimilarityConfig {
  enum class Kind : std::uint8_t { Constant, Rbf };
  Kind kind = Kind::Constant;
  double value = 1.0;      // Constant
  double bandwidth = 1.0;  // Rbf: exp(-|x - a|^2 / (2 bandwidth^2))

  static SimilarityConfig constant(double v = 1.0) { return {Kind::Constant, v, 1.0}; }
  static SimilarityConfig rbf(double bandwidth);
};

class EnsembleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weighted vote of elicited rules: sigmoid(sum_i f_i(x) sim(a_i, x) theta_i)
/// with f_i in {-1, 0, +1}.
struct FeedbackEnsemble {
  std::vector<FeedbackRule> rules;
  std::vector<double> weights;
  SimilarityConfig similarity;
  // Feature vector of each rule's anchor sample; required for Rbf.
  std::vector<std::optional<std::vector<double>>> anchors;

  std::size_t size() const noexcept { return rules.size(); }
  bool empty() const noexcept { return rules.empty(); }

  // f_i(x) * sim(anchor_i, x)
  double vote(std::size_t i, const Sample& sample) const;
  // sum_i vote_i(x) * theta_i
  double preactivation(const Sample& sample) const;
};

FeedbackEnsemble add_rule(FeedbackEnsemble ensemble, FeedbackRule rule, double init_weight = 1.0,
                          std::optional<std::vector<double>> anchor_features = std::nullopt);

// Fills anchor feature vectors by looking up each rule's anchor id in `data`.
void resolve_anchors(FeedbackEnsemble& ensemble, const Dataset& data);

double feedback_score(const FeedbackEnsemble& ensemble, const Sample& sample);

/// C(x) = alpha * C_hist(x) + (1 - alpha) * C_feedback(x).
struct MixtureClassifier {
  double alpha = 0.5;
  LinearModel hist;
  FeedbackEnsemble feedback;
  bool hist_frozen = true;
};

void validate(const MixtureClassifier& model);

double mixture_predict(const MixtureClassifier& model, const Sample& sample);
// 1 when C(x) > 0.5; a tie at exactly 0.5 is class 0.
int predicted_class(double probability) noexcept;

double loss_bce(const MixtureClassifier& model, const Sample& sample, double clamp_eps = 1e-7);

struct MixtureGradient {
  LinearGradient hist;
  std::vector<double> feedback;  // one entry per rule weight
};

/// Per-sample gradient of loss_bce:
///   dL/dtheta_hist = alpha * dC_h/dtheta_h * g
///   dL/dtheta_i    = (1 - alpha) * sigmoid'(z) f_i(x) sim_i(x) * g
/// with g = (1 - y) / (1 - C) - y / C and C clamped to [eps, 1 - eps].
MixtureGradient grad(const MixtureClassifier& model, const Sample& sample,
                     double clamp_eps = 1e-7);

/// Mini-batch SGD on mean loss_bce over feedback_data. The rule weights are
/// always trained; the hist block only when hist_frozen is false (with the
/// config's l2 on its weights).
MixtureClassifier train_mixture(MixtureClassifier model, const Dataset& feedback_data,
                                const TrainConfig& config);

// Rule log plus a parallel weights file (one %.17g value per line).
void save_ensemble(const FeedbackEnsemble& ensemble, const std::string& rule_log_path,
                   const std::string& weights_path);
FeedbackEnsemble load_ensemble(const std::string& rule_log_path, const std::string& weights_path,
                               const ParserLimits& limits = {});

}  // namespace rulecast
