#include "rulecast/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "rulecast/kernels.hpp"
#include "rulecast/rng.hpp"

namespace rulecast {

std::vector<ExpertProfile> sample_experts(std::size_t n, std::uint64_t seed, ExperienceMode mode) {
  if (n < 1) throw std::invalid_argument("need at least one expert");
  std::vector<ExpertProfile> out(n);
  Rng depth_rng(seed, 0xd3);
  Rng exp_rng(seed, 0xe4);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].depth = 1 + static_cast<std::size_t>(depth_rng.below(4));
    out[i].experience = std::clamp(0.3 + 0.05 * exp_rng.normal(), 0.01, 1.0);
    out[i].mode = mode;
    out[i].seed = derive_seed(seed, 1000 + i);
  }
  return out;
}

namespace {

Dataset draw_fraction_of_mixture(const ExpertProfile& p, const Dataset& pool) {
  Dataset d = subsample(pool, p.experience, p.seed);
  if (d.size() >= 2 || pool.size() < 2) return d;

  // Floor: two samples, one per class when the pool has both.
  Rng rng(p.seed, 0xf1);
  std::vector<std::size_t> ones, zeros;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    (pool.samples[i].label.value_or(0) == 1 ? ones : zeros).push_back(i);
  }
  d.samples.clear();
  if (!ones.empty() && !zeros.empty()) {
    d.samples.push_back(pool.samples[ones[rng.below(ones.size())]]);
    d.samples.push_back(pool.samples[zeros[rng.below(zeros.size())]]);
  } else {
    const auto a = static_cast<std::size_t>(rng.below(pool.size()));
    auto b = static_cast<std::size_t>(rng.below(pool.size() - 1));
    if (b >= a) ++b;
    d.samples.push_back(pool.samples[a]);
    d.samples.push_back(pool.samples[b]);
  }
  return d;
}

Dataset draw_fraction_of_distributions(const ExpertProfile& p, const Dataset& pool) {
  std::set<int> comps;
  for (const auto& s : pool.samples) {
    if (!s.component) throw DataError("fraction-of-distributions experience needs component tags");
    comps.insert(*s.component);
  }
  std::vector<int> order(comps.begin(), comps.end());
  const auto k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(p.experience * static_cast<double>(order.size()))), 1,
      order.size());
  Rng rng(p.seed, 0xc0);
  rng.shuffle(std::span(order));
  const std::set<int> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  Dataset d;
  d.dimension = pool.dimension;
  d.provenance = Provenance::Mixed;
  for (const auto& s : pool.samples) {
    if (chosen.count(*s.component)) d.samples.push_back(s);
  }
  return d;
}

}  // namespace

SimulatedExpert init_expert(const ExpertProfile& profile, const Dataset& pool, std::string id) {
  if (profile.depth < 1) throw std::invalid_argument("expert depth must be >= 1");
  if (pool.empty()) throw DataError("expert pool is empty");
  SimulatedExpert e;
  e.id = std::move(id);
  e.profile = profile;
  e.profile.experience = std::clamp(profile.experience, 0.01, 1.0);
  e.experience_data = profile.mode == ExperienceMode::FractionOfMixture
                          ? draw_fraction_of_mixture(e.profile, pool)
                          : draw_fraction_of_distributions(e.profile, pool);
  e.tree = fit_cart(e.experience_data, e.profile.depth);
  return e;
}

FeedbackRule expert_feedback(SimulatedExpert& expert, const Sample& sample, std::uint64_t created_at) {
  if (!sample.label) throw DataError("expert feedback needs the sample's true label");
  if (tree_predict(expert.tree, sample) != *sample.label) {
    expert.experience_data.samples.push_back(sample);
    expert.tree = fit_cart(expert.experience_data, expert.profile.depth);
  }
  ++expert.feedback_count;
  return make_feedback_rule(tree_to_rule(expert.tree),
                            expert.id + "-" + std::to_string(expert.feedback_count), expert.id,
                            sample.id, created_at);
}

std::vector<std::uint64_t> select_observable(std::span<const double> predictions, const Dataset& batch,
                                             const ObservableConfig& config) {
  if (predictions.size() != batch.size()) {
    throw std::invalid_argument("predictions and batch are not aligned");
  }
  std::vector<std::uint64_t> ids;
  switch (config.policy) {
    case ObservablePolicy::All:
      for (const auto& s : batch.samples) ids.push_back(s.id);
      break;
    case ObservablePolicy::Misclassified:
      for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto& s = batch.samples[j];
        if (!s.label) throw DataError("observable selection needs labels");
        if (predicted_class(predictions[j]) != *s.label) ids.push_back(s.id);
      }
      break;
    case ObservablePolicy::Random: {
      if (config.k > batch.size()) {
        throw std::invalid_argument("random observable set of " + std::to_string(config.k) +
                                    " exceeds batch size " + std::to_string(batch.size()));
      }
      std::vector<std::size_t> idx(batch.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      Rng rng(config.seed, 0x0b5);
      for (std::size_t i = 0; i < config.k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
      }
      idx.resize(config.k);
      std::sort(idx.begin(), idx.end());
      for (std::size_t j : idx) ids.push_back(batch.samples[j].id);
      break;
    }
  }
  return ids;
}

AccuracyEstimate estimate_accuracy(const MixtureClassifier& model, const Dataset& data,
                                   std::size_t resamples, std::uint64_t seed) {
  if (data.empty()) throw DataError("evaluation set is empty");
  const auto probs = kernels::predict_batch_parallel(model, data);
  return estimate_accuracy(std::span<const double>(probs), data, resamples, seed);
}

AccuracyEstimate estimate_accuracy(std::span<const double> probs, const Dataset& data,
                                   std::size_t resamples, std::uint64_t seed) {
  if (data.empty()) throw DataError("evaluation set is empty");
  if (probs.size() != data.size()) throw std::invalid_argument("predictions and data are not aligned");
  std::vector<std::uint8_t> correct(data.size());
  std::size_t hits = 0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& label = data.samples[j].label;
    if (!label) throw DataError("evaluation sample " + std::to_string(data.samples[j].id) + " is unlabeled");
    correct[j] = predicted_class(probs[j]) == *label;
    hits += correct[j];
  }
  AccuracyEstimate est;
  est.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
  if (resamples >= 2) {
    const auto accs = kernels::bootstrap_accuracies_parallel(correct, resamples, seed);
    const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
    double ss = 0.0;
    for (double a : accs) ss += (a - mean) * (a - mean);
    est.standard_error = std::sqrt(ss / static_cast<double>(accs.size() - 1));
  }
  return est;
}

MetricsReport evaluate(const MixtureClassifier& model, const EvalSets& eval, std::size_t resamples,
                       std::uint64_t seed) {
  const auto tr = estimate_accuracy(model, eval.train_distr, resamples, derive_seed(seed, 1));
  const auto te = estimate_accuracy(model, eval.test_distr, resamples, derive_seed(seed, 2));
  const auto co = estimate_accuracy(model, concat(eval.train_distr, eval.test_distr), resamples,
                                    derive_seed(seed, 3));
  MetricsReport r;
  r.alpha = model.alpha;
  r.n_rules = model.feedback.size();
  r.accuracy_train_distr = tr.accuracy;
  r.accuracy_test_distr = te.accuracy;
  r.accuracy_combined = co.accuracy;
  r.se_train_distr = tr.standard_error;
  r.se_test_distr = te.standard_error;
  r.se_combined = co.standard_error;
  return r;
}

namespace {

struct Query {
  std::size_t expert;
  const Sample* sample;
};

std::vector<Query> route(const std::vector<const Sample*>& observable, std::size_t n_experts,
                         const LoopConfig& config, std::size_t& cursor) {
  std::vector<Query> queries;
  if (n_experts == 0) return queries;
  const std::size_t cap = config.queries_per_expert;
  std::vector<std::size_t> load(n_experts, 0);
  auto has_room = [&](std::size_t e) { return cap == 0 || load[e] < cap; };

  for (const Sample* s : observable) {
    if (config.routing == Routing::Broadcast) {
      for (std::size_t e = 0; e < n_experts; ++e) {
        if (!has_room(e)) continue;
        ++load[e];
        queries.push_back({e, s});
      }
      continue;
    }
    std::size_t tried = 0;
    while (tried < n_experts && !has_room(cursor)) {
      cursor = (cursor + 1) % n_experts;
      ++tried;
    }
    if (tried == n_experts) break;  // every expert is at capacity
    ++load[cursor];
    queries.push_back({cursor, s});
    cursor = (cursor + 1) % n_experts;
  }
  return queries;
}

bool has_both_classes(const Dataset& d) {
  const std::size_t ones = d.count_label(1);
  return ones > 0 && ones < d.size();
}

}  // namespace

LoopResult run_lifelong_loop(const LinearModel& hist, std::vector<SimulatedExpert>& experts,
                             std::span<const Dataset> batches, const EvalSets& eval,
                             const LoopConfig& config) {
  if (batches.empty()) throw std::invalid_argument("lifelong loop needs at least one batch");
  LoopResult result;
  MixtureClassifier& model = result.model;
  model.alpha = config.mode == FeedbackMode::Labels ? 1.0 : config.alpha;
  model.hist = hist;
  model.hist_frozen = config.hist_frozen;
  model.feedback.similarity = config.similarity;
  validate(model);

  result.feedback_data.dimension = hist.dimension();
  result.feedback_data.provenance = Provenance::Mixed;
  std::unordered_set<std::uint64_t> feedback_ids;
  std::uint64_t created = 0;
  std::size_t cursor = 0;

  for (std::size_t t = 0; t < batches.size(); ++t) {
    const Dataset& batch = batches[t];
    const auto preds = kernels::predict_batch_parallel(model, batch);
    ObservableConfig obs = config.observable;
    obs.seed = derive_seed(config.observable.seed ^ config.seed, t);
    const auto ids = select_observable(preds, batch, obs);

    std::unordered_map<std::uint64_t, const Sample*> by_id;
    for (const auto& s : batch.samples) by_id.emplace(s.id, &s);
    std::vector<const Sample*> observable;
    observable.reserve(ids.size());
    for (auto id : ids) observable.push_back(by_id.at(id));

    const auto queries = route(observable, experts.size(), config, cursor);
    for (const Query& q : queries) {
      const Sample& s = *q.sample;
      if (!s.label) throw DataError("observable sample " + std::to_string(s.id) + " is unlabeled");
      ++result.n_feedback;
      if (feedback_ids.insert(s.id).second) result.feedback_data.samples.push_back(s);
      if (config.mode == FeedbackMode::Rules) {
        FeedbackRule rule = expert_feedback(experts[q.expert], s, created++);
        std::optional<std::vector<double>> anchor;
        if (s.has_features()) anchor = s.features;
        model.feedback = add_rule(std::move(model.feedback), std::move(rule), config.init_weight,
                                  std::move(anchor));
      } else {
        ++experts[q.expert].feedback_count;
      }
    }

    if (!queries.empty()) {
      TrainConfig tc = config.train;
      tc.seed = derive_seed(config.train.seed ^ config.seed, 0x7700 + t);
      if (config.mode == FeedbackMode::Rules) {
        model = train_mixture(std::move(model), result.feedback_data, tc);
      } else if (has_both_classes(result.feedback_data)) {
        // Single-class feedback cannot fit a logistic model; keep the old one.
        model.hist = train_logistic(result.feedback_data, tc);
      }
    }

    MetricsReport report = evaluate(model, eval, config.bootstrap_resamples,
                                    derive_seed(config.seed, 0xe0a1 + t));
    report.round = t + 1;
    report.n_feedback = result.n_feedback;
    result.rounds.push_back(report);
  }
  return result;
}

std::vector<MetricsReport> alpha_sweep(const SweepSetup& setup, std::span<const double> alphas) {
  std::vector<MetricsReport> out;
  out.reserve(alphas.size());
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    const double a = alphas[k];
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("alpha outside [0, 1]");
    MixtureClassifier m;
    m.alpha = a;
    m.hist = setup.hist;
    m.feedback = setup.ensemble;
    m.hist_frozen = setup.hist_frozen;
    if (setup.retrain_per_alpha && !setup.feedback_data.empty() && !m.feedback.empty()) {
      m = train_mixture(std::move(m), setup.feedback_data, setup.train);
    }
    MetricsReport r = evaluate(m, setup.eval, setup.bootstrap_resamples, setup.seed);
    r.n_feedback = setup.feedback_data.size();
    out.push_back(r);
  }
  return out;
}

std::vector<double> alpha_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw std::invalid_argument("alpha step must be in (0, 1]");
  const auto n = static_cast<std::size_t>(std::lround(1.0 / step));
  std::vector<double> out(n + 1);
  for (std::size_t i = 0; i <= n; ++i) out[i] = static_cast<double>(i) / static_cast<double>(n);
  return out;
}

}  // namespace rulecast
