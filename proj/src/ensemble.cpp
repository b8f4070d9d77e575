#include "rulecast/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "rulecast/kernels.hpp"
#include "rulecast/rng.hpp"

namespace rulecast {

SimilarityConfig SimilarityConfig::rbf(double bandwidth) {
  if (!(bandwidth > 0.0)) throw EnsembleError("rbf bandwidth must be > 0");
  return {Kind::Rbf, 1.0, bandwidth};
}

double FeedbackEnsemble::vote(std::size_t i, const Sample& sample) const {
  const double f = signed_vote(*rules[i].rule, sample);
  if (f == 0.0) return 0.0;
  if (similarity.kind == SimilarityConfig::Kind::Constant) return f * similarity.value;
  if (i >= anchors.size() || !anchors[i]) {
    throw EnsembleError("rule " + rules[i].rule_id + " has no anchor features for rbf similarity");
  }
  const auto& a = *anchors[i];
  if (a.size() != sample.features.size()) {
    throw EnsembleError("anchor/sample dimension mismatch for rule " + rules[i].rule_id);
  }
  double d2 = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = sample.features[j] - a[j];
    d2 += d * d;
  }
  return f * std::exp(-d2 / (2.0 * similarity.bandwidth * similarity.bandwidth));
}

double FeedbackEnsemble::preactivation(const Sample& sample) const {
  double z = 0.0;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const double v = vote(i, sample);
    if (v != 0.0) z += v * weights[i];
  }
  return z;
}

FeedbackEnsemble add_rule(FeedbackEnsemble ensemble, FeedbackRule rule, double init_weight,
                          std::optional<std::vector<double>> anchor_features) {
  if (!rule.rule) throw EnsembleError("feedback rule has no rule body");
  if (!std::isfinite(init_weight)) throw EnsembleError("initial weight must be finite");
  for (const auto& r : ensemble.rules) {
    if (r.rule_id == rule.rule_id) throw EnsembleError("duplicate rule_id '" + rule.rule_id + "'");
  }
  ensemble.anchors.resize(ensemble.rules.size());
  ensemble.rules.push_back(std::move(rule));
  ensemble.weights.push_back(init_weight);
  ensemble.anchors.push_back(std::move(anchor_features));
  return ensemble;
}

void resolve_anchors(FeedbackEnsemble& ensemble, const Dataset& data) {
  std::unordered_map<std::uint64_t, const Sample*> by_id;
  for (const auto& s : data.samples) by_id.emplace(s.id, &s);
  ensemble.anchors.resize(ensemble.rules.size());
  for (std::size_t i = 0; i < ensemble.rules.size(); ++i) {
    const auto& anchor = ensemble.rules[i].anchor;
    if (!anchor) continue;
    if (auto it = by_id.find(*anchor); it != by_id.end() && it->second->has_features()) {
      ensemble.anchors[i] = it->second->features;
    }
  }
}

double feedback_score(const FeedbackEnsemble& ensemble, const Sample& sample) {
  return sigmoid(ensemble.preactivation(sample));
}

void validate(const MixtureClassifier& m) {
  if (!(m.alpha >= 0.0 && m.alpha <= 1.0)) throw EnsembleError("alpha must lie in [0, 1]");
  if (m.feedback.weights.size() != m.feedback.rules.size()) {
    throw EnsembleError("ensemble has " + std::to_string(m.feedback.rules.size()) + " rules but " +
                        std::to_string(m.feedback.weights.size()) + " weights");
  }
  for (double w : m.feedback.weights) {
    if (!std::isfinite(w)) throw EnsembleError("non-finite rule weight");
  }
}

double mixture_predict(const MixtureClassifier& m, const Sample& sample) {
  // Endpoints skip the unused component so they match it bit for bit.
  if (m.alpha == 1.0) return predict_proba(m.hist, sample);
  if (m.alpha == 0.0) return feedback_score(m.feedback, sample);
  return m.alpha * predict_proba(m.hist, sample) +
         (1.0 - m.alpha) * feedback_score(m.feedback, sample);
}

int predicted_class(double probability) noexcept { return probability > 0.5 ? 1 : 0; }

double loss_bce(const MixtureClassifier& m, const Sample& sample, double clamp_eps) {
  if (!sample.label) throw EnsembleError("loss needs a labeled sample");
  const double c = std::clamp(mixture_predict(m, sample), clamp_eps, 1.0 - clamp_eps);
  const double y = *sample.label;
  return -y * std::log(c) - (1.0 - y) * std::log(1.0 - c);
}

namespace {

// Shared by grad() and the trainer: g = (1 - y) / (1 - C) - y / C.
double loss_factor(double c, double y, double eps) {
  const double cc = std::clamp(c, eps, 1.0 - eps);
  return (1.0 - y) / (1.0 - cc) - y / cc;
}

}  // namespace

MixtureGradient grad(const MixtureClassifier& m, const Sample& sample, double clamp_eps) {
  if (!sample.label) throw EnsembleError("gradient needs a labeled sample");
  const double y = *sample.label;
  const double ch = predict_proba(m.hist, sample);
  const double z = m.feedback.preactivation(sample);
  const double cf = sigmoid(z);
  const double c = m.alpha * ch + (1.0 - m.alpha) * cf;
  const double g = loss_factor(c, y, clamp_eps);

  MixtureGradient out;
  const double dh = m.alpha * ch * (1.0 - ch) * g;
  out.hist.weights.resize(m.hist.dimension());
  for (std::size_t j = 0; j < out.hist.weights.size(); ++j) out.hist.weights[j] = dh * sample.features[j];
  out.hist.bias = dh;

  const double df = (1.0 - m.alpha) * cf * (1.0 - cf) * g;
  out.feedback.resize(m.feedback.size());
  for (std::size_t i = 0; i < m.feedback.size(); ++i) out.feedback[i] = df * m.feedback.vote(i, sample);
  return out;
}

MixtureClassifier train_mixture(MixtureClassifier m, const Dataset& data, const TrainConfig& config) {
  validate(config);
  validate(m);
  if (data.empty()) throw EnsembleError("train_mixture needs at least one feedback sample");
  for (const auto& s : data.samples) {
    if (!s.label) throw EnsembleError("feedback sample " + std::to_string(s.id) + " is unlabeled");
  }
  const std::size_t n = data.size();
  const std::size_t n_rules = m.feedback.size();
  const std::size_t dim = m.hist.dimension();
  const bool train_hist = !m.hist_frozen && m.alpha != 0.0;
  const double alpha = m.alpha;

  // Rules are fixed during training, so their votes are computed once.
  const std::vector<double> votes = kernels::vote_matrix_parallel(m.feedback, data);
  std::vector<double> hist_logit(n);
  if (!train_hist) {
    for (std::size_t j = 0; j < n; ++j) hist_logit[j] = m.hist.logit(data.samples[j].features);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> g_theta(n_rules), g_w(dim);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(config.seed, epoch);
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      std::fill(g_theta.begin(), g_theta.end(), 0.0);
      std::fill(g_w.begin(), g_w.end(), 0.0);
      double g_b = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t j = order[k];
        const Sample& s = data.samples[j];
        const double y = *s.label;
        double z = 0.0;
        for (std::size_t i = 0; i < n_rules; ++i) z += votes[i * n + j] * m.feedback.weights[i];
        const double cf = sigmoid(z);
        const double ch = sigmoid(train_hist ? m.hist.logit(s.features) : hist_logit[j]);
        const double g = loss_factor(alpha * ch + (1.0 - alpha) * cf, y, config.clamp_eps);
        const double df = (1.0 - alpha) * cf * (1.0 - cf) * g;
        if (df != 0.0) {
          for (std::size_t i = 0; i < n_rules; ++i) g_theta[i] += df * votes[i * n + j];
        }
        if (train_hist) {
          const double dh = alpha * ch * (1.0 - ch) * g;
          for (std::size_t d = 0; d < dim; ++d) g_w[d] += dh * s.features[d];
          g_b += dh;
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = 0; i < n_rules; ++i) {
        m.feedback.weights[i] -= config.learning_rate * g_theta[i] * inv;
      }
      if (train_hist) {
        for (std::size_t d = 0; d < dim; ++d) {
          m.hist.weights[d] -= config.learning_rate * (g_w[d] * inv + config.l2 * m.hist.weights[d]);
        }
        m.hist.bias -= config.learning_rate * g_b * inv;
      }
    }
  }
  return m;
}

void save_ensemble(const FeedbackEnsemble& ensemble, const std::string& rule_log_path,
                   const std::string& weights_path) {
  write_rule_log(rule_log_path, ensemble.rules);
  std::ofstream out(weights_path, std::ios::binary | std::ios::trunc);
  if (!out) throw EnsembleError("cannot write weights file " + weights_path);
  char buf[40];
  for (double w : ensemble.weights) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", w);
    out << buf;
  }
}

FeedbackEnsemble load_ensemble(const std::string& rule_log_path, const std::string& weights_path,
                               const ParserLimits& limits) {
  FeedbackEnsemble ens;
  ens.rules = read_rule_log(rule_log_path, limits);
  std::ifstream in(weights_path);
  if (!in) throw EnsembleError("cannot read weights file " + weights_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t used = 0;
    const double w = std::stod(line, &used);
    if (!std::isfinite(w)) throw EnsembleError("non-finite weight in " + weights_path);
    ens.weights.push_back(w);
  }
  if (ens.weights.size() != ens.rules.size()) {
    throw EnsembleError("rule log has " + std::to_string(ens.rules.size()) + " rules but weights file has " +
                        std::to_string(ens.weights.size()) + " values");
  }
  std::unordered_set<std::string> ids;
  for (const auto& r : ens.rules) {
    if (!ids.insert(r.rule_id).second) throw EnsembleError("duplicate rule_id '" + r.rule_id + "'");
  }
  ens.anchors.resize(ens.rules.size());
  return ens;
}

}  // namespace rulecast
