#include "rulecast/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "rulecast/rng.hpp"

namespace rulecast {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// KeyValueConfig

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string source) {
  KeyValueConfig kv;
  kv.source_ = std::move(source);
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(kv.source_ + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(kv.source_ + ":" + std::to_string(line_no) + ": empty key");
    if (kv.values_.count(key)) {
      throw ConfigError(kv.source_ + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    kv.values_[key] = std::string(trim(line.substr(eq + 1)));
    kv.lines_[key] = line_no;
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  auto kv = parse(ss.str(), path.string());
  kv.base_dir_ = path.parent_path();
  return kv;
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) != 0; }

void KeyValueConfig::set(const std::string& key, std::string value) {
  values_[key] = std::move(value);
  lines_.erase(key);
}

std::string KeyValueConfig::where(const std::string& key) const {
  auto it = lines_.find(key);
  if (it == lines_.end()) return "key '" + key + "'";
  return source_ + ":" + std::to_string(it->second) + ": key '" + key + "'";
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_.insert(key);
  return it->second;
}

std::string KeyValueConfig::require_string(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing required key '" + key + "'");
  return get_string(key, {});
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get_string(key, {});
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError(where(key) + ": expected a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string s = get_string(key, {});
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw ConfigError(where(key) + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string s = to_lower_ascii(get_string(key, {}));
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(where(key) + ": expected true or false, got '" + s + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key,
                                                  const std::vector<std::string>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::string> out;
  std::string_view rest = values_.at(key);
  used_.insert(key);
  while (true) {
    const auto comma = rest.find(',');
    auto item = trim(rest.substr(0, comma));
    if (item.empty()) throw ConfigError(where(key) + ": empty list item");
    out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

void KeyValueConfig::check_all_used() const {
  for (const auto& [key, value] : values_) {
    if (!used_.count(key)) throw ConfigError(where(key) + ": unknown key");
  }
}

// ---------------------------------------------------------------------------
// ExperimentConfig

std::string_view to_string(ExperimentKind kind) noexcept {
  switch (kind) {
    case ExperimentKind::Synthetic: return "synthetic";
    case ExperimentKind::Scaling: return "scaling";
    case ExperimentKind::Sentiment: return "sentiment";
    case ExperimentKind::Sweep: return "sweep";
  }
  return "synthetic";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
  if (name == "synthetic") return ExperimentKind::Synthetic;
  if (name == "scaling" || name == "synthetic-sim-experts") return ExperimentKind::Scaling;
  if (name == "sentiment") return ExperimentKind::Sentiment;
  if (name == "sweep" || name == "alpha-sweep") return ExperimentKind::Sweep;
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

namespace {

std::size_t positive(const KeyValueConfig& kv, const std::string& key, std::size_t fallback) {
  const auto v = kv.get_uint(key, fallback);
  if (v == 0) throw ConfigError("key '" + key + "' must be positive");
  return static_cast<std::size_t>(v);
}

fs::path resolve(const KeyValueConfig& kv, const std::string& value) {
  fs::path p(value);
  if (p.is_relative() && !kv.base_dir().empty()) p = kv.base_dir() / p;
  return p.lexically_normal();
}

fs::path existing(const KeyValueConfig& kv, const std::string& key) {
  const fs::path p = resolve(kv, kv.require_string(key));
  if (!fs::exists(p)) throw ConfigError("key '" + key + "': no such file " + p.string());
  return p;
}

std::string display_path(const fs::path& p, const fs::path& base) {
  if (base.empty()) return p.generic_string();
  return p.lexically_relative(base).generic_string();
}

}  // namespace

ExperimentConfig parse_experiment_config(const KeyValueConfig& kv) {
  ExperimentConfig c;
  c.base_dir = kv.base_dir();
  c.kind = parse_experiment_kind(kv.get_string("experiment", "synthetic"));
  c.seed = kv.get_uint("seed", c.seed);

  auto& d = c.data;
  d.mu1 = {kv.get_double("mu1_x", d.mu1[0]), kv.get_double("mu1_y", d.mu1[1])};
  d.mu2 = {kv.get_double("mu2_x", d.mu2[0]), kv.get_double("mu2_y", d.mu2[1])};
  d.mu1_test = {kv.get_double("mu1_test_x", d.mu1_test[0]), kv.get_double("mu1_test_y", d.mu1_test[1])};
  d.mu2_test = {kv.get_double("mu2_test_x", d.mu2_test[0]), kv.get_double("mu2_test_y", d.mu2_test[1])};
  const double scale = kv.get_double("sigma_scale", 1.0);
  if (!(scale > 0.0)) throw ConfigError("key 'sigma_scale' must be positive");
  for (Mat2* m : {&d.sigma1, &d.sigma2, &d.sigma1_test, &d.sigma2_test}) {
    *m = Mat2{{{scale, 0.0}, {0.0, scale}}};
  }
  d.n_per_cluster = positive(kv, "n_per_cluster", d.n_per_cluster);

  c.n_experts = static_cast<std::size_t>(kv.get_uint("n_experts", c.n_experts));
  if (kv.has("expert_counts")) {
    c.expert_counts.clear();
    for (const auto& item : kv.get_list("expert_counts", {})) {
      std::size_t v = 0;
      auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc{} || end != item.data() + item.size()) {
        throw ConfigError("key 'expert_counts': bad count '" + item + "'");
      }
      c.expert_counts.push_back(v);
    }
  }
  const auto mode = kv.get_string("experience_mode", "mixture");
  if (mode == "mixture") c.experience_mode = ExperienceMode::FractionOfMixture;
  else if (mode == "distributions") c.experience_mode = ExperienceMode::FractionOfDistributions;
  else throw ConfigError("key 'experience_mode': expected mixture or distributions, got '" + mode + "'");
  c.n_batches = positive(kv, "n_batches", c.n_batches);

  auto& l = c.loop;
  l.alpha = kv.get_double("alpha", l.alpha);
  if (!(l.alpha >= 0.0 && l.alpha <= 1.0)) throw ConfigError("key 'alpha' must lie in [0, 1]");
  l.hist_frozen = kv.get_bool("hist_frozen", l.hist_frozen);
  const auto routing = kv.get_string("routing", "round_robin");
  if (routing == "round_robin") l.routing = Routing::RoundRobin;
  else if (routing == "broadcast") l.routing = Routing::Broadcast;
  else throw ConfigError("key 'routing': expected round_robin or broadcast, got '" + routing + "'");
  const auto policy = kv.get_string("policy", "misclassified");
  if (policy == "misclassified") l.observable.policy = ObservablePolicy::Misclassified;
  else if (policy == "random") l.observable.policy = ObservablePolicy::Random;
  else if (policy == "all") l.observable.policy = ObservablePolicy::All;
  else throw ConfigError("key 'policy': expected misclassified, random or all, got '" + policy + "'");
  l.observable.k = static_cast<std::size_t>(kv.get_uint("observable_k", l.observable.k));
  l.queries_per_expert = static_cast<std::size_t>(kv.get_uint("queries_per_expert", l.queries_per_expert));
  l.init_weight = kv.get_double("init_weight", l.init_weight);
  l.train.learning_rate = kv.get_double("lr", l.train.learning_rate);
  l.train.epochs = static_cast<std::size_t>(kv.get_uint("epochs", l.train.epochs));
  l.train.batch_size = static_cast<std::size_t>(kv.get_uint("batch_size", l.train.batch_size));
  l.train.l2 = kv.get_double("l2", l.train.l2);
  try {
    validate(l.train);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("training settings: ") + e.what());
  }
  l.bootstrap_resamples = static_cast<std::size_t>(kv.get_uint("bootstrap_resamples", l.bootstrap_resamples));
  c.alpha_step = kv.get_double("alpha_step", c.alpha_step);
  if (!(c.alpha_step > 0.0 && c.alpha_step <= 1.0)) throw ConfigError("key 'alpha_step' must lie in (0, 1]");

  c.featurizer.dimension = positive(kv, "featurizer_dim", c.featurizer.dimension);
  const auto weighting = kv.get_string("weighting", "binary");
  if (weighting == "binary") c.featurizer.weighting = TermWeighting::Binary;
  else if (weighting == "tf") c.featurizer.weighting = TermWeighting::TermFrequency;
  else throw ConfigError("key 'weighting': expected binary or tf, got '" + weighting + "'");

  if (c.kind == ExperimentKind::Sentiment) {
    c.source_corpus = existing(kv, "source");
    for (const auto& name : kv.get_list("topics", {})) {
      SentimentTopic t;
      t.name = name;
      t.train = existing(kv, "topic." + name + ".train");
      t.eval = existing(kv, "topic." + name + ".eval");
      t.rules = existing(kv, "topic." + name + ".rules");
      c.topics.push_back(std::move(t));
    }
    if (c.topics.empty()) throw ConfigError("sentiment experiment needs at least one topic");
  }
  if (c.kind != ExperimentKind::Sentiment && c.kind != ExperimentKind::Scaling && c.n_experts == 0) {
    throw ConfigError("key 'n_experts' must be positive");
  }
  kv.check_all_used();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return parse_experiment_config(KeyValueConfig::load(path));
}

std::string canonical_config(const ExperimentConfig& c) {
  std::ostringstream o;
  auto kv = [&](std::string_view k, const std::string& v) { o << k << " = " << v << '\n'; };
  auto num = [&](std::string_view k, double v) { kv(k, format_double(v)); };
  kv("experiment", std::string(to_string(c.kind)));
  kv("seed", std::to_string(c.seed));
  num("mu1_x", c.data.mu1[0]);
  num("mu1_y", c.data.mu1[1]);
  num("mu2_x", c.data.mu2[0]);
  num("mu2_y", c.data.mu2[1]);
  num("mu1_test_x", c.data.mu1_test[0]);
  num("mu1_test_y", c.data.mu1_test[1]);
  num("mu2_test_x", c.data.mu2_test[0]);
  num("mu2_test_y", c.data.mu2_test[1]);
  num("sigma_scale", c.data.sigma1[0][0]);
  kv("n_per_cluster", std::to_string(c.data.n_per_cluster));
  kv("n_experts", std::to_string(c.n_experts));
  std::string counts;
  for (std::size_t i = 0; i < c.expert_counts.size(); ++i) {
    counts += (i ? "," : "") + std::to_string(c.expert_counts[i]);
  }
  kv("expert_counts", counts);
  kv("experience_mode", c.experience_mode == ExperienceMode::FractionOfMixture ? "mixture" : "distributions");
  kv("n_batches", std::to_string(c.n_batches));
  num("alpha", c.loop.alpha);
  kv("hist_frozen", c.loop.hist_frozen ? "true" : "false");
  kv("routing", c.loop.routing == Routing::RoundRobin ? "round_robin" : "broadcast");
  const char* policy = c.loop.observable.policy == ObservablePolicy::Misclassified ? "misclassified"
                       : c.loop.observable.policy == ObservablePolicy::Random    ? "random"
                                                                                  : "all";
  kv("policy", policy);
  kv("observable_k", std::to_string(c.loop.observable.k));
  kv("queries_per_expert", std::to_string(c.loop.queries_per_expert));
  num("init_weight", c.loop.init_weight);
  num("lr", c.loop.train.learning_rate);
  kv("epochs", std::to_string(c.loop.train.epochs));
  kv("batch_size", std::to_string(c.loop.train.batch_size));
  num("l2", c.loop.train.l2);
  kv("bootstrap_resamples", std::to_string(c.loop.bootstrap_resamples));
  num("alpha_step", c.alpha_step);
  kv("featurizer_dim", std::to_string(c.featurizer.dimension));
  kv("weighting", c.featurizer.weighting == TermWeighting::Binary ? "binary" : "tf");
  if (c.kind == ExperimentKind::Sentiment) {
    kv("source", display_path(c.source_corpus, c.base_dir));
    for (const auto& t : c.topics) {
      kv("topic." + t.name + ".train", display_path(t.train, c.base_dir));
      kv("topic." + t.name + ".eval", display_path(t.eval, c.base_dir));
      kv("topic." + t.name + ".rules", display_path(t.rules, c.base_dir));
    }
  }
  return o.str();
}

std::uint64_t config_hash(const ExperimentConfig& config) { return fnv1a64(canonical_config(config)); }

// ---------------------------------------------------------------------------
// Runs

namespace {

std::vector<Dataset> make_batches(const Dataset& stream, std::size_t n_batches, std::uint64_t seed) {
  if (n_batches <= 1) return {stream};
  if (n_batches > stream.size()) throw ConfigError("more batches than samples in the shifted split");
  std::vector<std::size_t> order(stream.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed, 0xba7c);
  rng.shuffle(std::span(order));
  std::vector<Dataset> out(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    out[b].dimension = stream.dimension;
    out[b].provenance = stream.provenance;
    const std::size_t lo = b * order.size() / n_batches;
    const std::size_t hi = (b + 1) * order.size() / n_batches;
    for (std::size_t k = lo; k < hi; ++k) out[b].samples.push_back(stream.samples[order[k]]);
  }
  return out;
}

std::vector<SimulatedExpert> make_experts(const ExperimentConfig& c, std::size_t n, std::uint64_t seed,
                                          const Dataset& pool) {
  const auto profiles = sample_experts(n == 0 ? 1 : n, seed, c.experience_mode);
  std::vector<SimulatedExpert> experts;
  experts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    experts.push_back(init_expert(profiles[i], pool, "expert-" + std::to_string(i)));
  }
  return experts;
}

struct SyntheticSetup {
  SplitPair split;
  LinearModel hist;
  Dataset pool;
};

SyntheticSetup synthetic_setup(const ExperimentConfig& c) {
  SyntheticSetup s;
  SwitchingGaussianSpec spec = c.data;
  spec.seed = c.seed;
  s.split = generate_switching(spec);
  TrainConfig tc = c.loop.train;
  tc.seed = c.seed;
  s.hist = train_logistic(s.split.train, tc);
  s.pool = concat(s.split.train, s.split.test);
  return s;
}

LoopConfig cell_loop(const ExperimentConfig& c, std::uint64_t cell_seed, FeedbackMode mode) {
  LoopConfig l = c.loop;
  l.mode = mode;
  l.seed = cell_seed;
  l.train.seed = cell_seed;
  l.observable.seed = cell_seed;
  return l;
}

}  // namespace

std::vector<ConditionResult> run_synthetic(const ExperimentConfig& c, std::size_t n_experts,
                                           std::uint64_t cell) {
  const auto setup = synthetic_setup(c);
  const std::uint64_t cell_seed = c.seed + cell;
  const EvalSets eval{setup.split.train, setup.split.test};
  const auto batches = make_batches(setup.split.test, c.n_batches, cell_seed);
  const auto experts = make_experts(c, n_experts, cell_seed, setup.pool);

  std::vector<ConditionResult> out;
  {
    auto ex = experts;
    auto res = run_lifelong_loop(setup.hist, ex, batches, eval, cell_loop(c, cell_seed, FeedbackMode::Rules));
    out.push_back({"decision_rules", n_experts, res.rounds.back()});
  }
  {
    auto ex = experts;
    auto res = run_lifelong_loop(setup.hist, ex, batches, eval, cell_loop(c, cell_seed, FeedbackMode::Labels));
    out.push_back({"labels", n_experts, res.rounds.back()});
  }
  {
    std::vector<SimulatedExpert> none;
    auto res = run_lifelong_loop(setup.hist, none, batches, eval, cell_loop(c, cell_seed, FeedbackMode::Rules));
    out.push_back({"none", 0, res.rounds.back()});
  }
  return out;
}

std::vector<ScalingRow> run_scaling(const ExperimentConfig& c) {
  const auto setup = synthetic_setup(c);
  const EvalSets eval{setup.split.train, setup.split.test};
  std::vector<ScalingRow> rows;
  for (std::size_t k = 0; k < c.expert_counts.size(); ++k) {
    const std::uint64_t cell_seed = c.seed + k;
    const std::size_t n = c.expert_counts[k];
    const auto batches = make_batches(setup.split.test, c.n_batches, cell_seed);
    const auto experts = make_experts(c, n, cell_seed, setup.pool);
    ScalingRow row;
    row.n_experts = n;
    auto ex = experts;
    row.rules = run_lifelong_loop(setup.hist, ex, batches, eval, cell_loop(c, cell_seed, FeedbackMode::Rules))
                    .rounds.back();
    ex = experts;
    row.labels = run_lifelong_loop(setup.hist, ex, batches, eval, cell_loop(c, cell_seed, FeedbackMode::Labels))
                     .rounds.back();
    rows.push_back(row);
  }
  return rows;
}

std::vector<MetricsReport> run_synthetic_sweep(const ExperimentConfig& c) {
  const auto setup = synthetic_setup(c);
  const EvalSets eval{setup.split.train, setup.split.test};
  const auto batches = make_batches(setup.split.test, c.n_batches, c.seed);
  auto experts = make_experts(c, c.n_experts, c.seed, setup.pool);
  const LoopConfig loop = cell_loop(c, c.seed, FeedbackMode::Rules);
  const auto res = run_lifelong_loop(setup.hist, experts, batches, eval, loop);

  SweepSetup sweep;
  sweep.hist = setup.hist;
  sweep.ensemble = res.model.feedback;
  std::fill(sweep.ensemble.weights.begin(), sweep.ensemble.weights.end(), loop.init_weight);
  sweep.feedback_data = res.feedback_data;
  sweep.eval = eval;
  sweep.train = loop.train;
  sweep.hist_frozen = loop.hist_frozen;
  sweep.bootstrap_resamples = loop.bootstrap_resamples;
  sweep.seed = derive_seed(c.seed, 0x5eed);
  const auto alphas = alpha_grid(c.alpha_step);
  auto reports = alpha_sweep(sweep, alphas);
  for (auto& r : reports) r.n_feedback = res.n_feedback;
  return reports;
}

namespace {

Dataset load_corpus(const fs::path& path, const FeaturizerConfig& fc) {
  Dataset raw = load_tsv(path.string());
  for (const auto& s : raw.samples) {
    if (!s.text) throw DataError(path.string() + ": line " + std::to_string(s.id) + " has no text");
    if (!s.label) throw DataError(path.string() + ": line " + std::to_string(s.id) + " has no label");
  }
  return featurize_text(raw, fc);
}

AccuracyEstimate model_accuracy(const LinearModel& model, const Dataset& data, std::size_t resamples,
                                std::uint64_t seed) {
  MixtureClassifier m;
  m.alpha = 1.0;
  m.hist = model;
  return estimate_accuracy(m, data, resamples, seed);
}

}  // namespace

std::vector<SentimentCurves> run_sentiment(const ExperimentConfig& c) {
  const Dataset source = load_corpus(c.source_corpus, c.featurizer);
  TrainConfig base_train = c.loop.train;
  base_train.seed = c.seed;
  const LinearModel source_model = train_logistic(source, base_train);
  const auto alphas = alpha_grid(c.alpha_step);
  const std::size_t resamples = c.loop.bootstrap_resamples;

  std::vector<SentimentCurves> out;
  for (std::size_t k = 0; k < c.topics.size(); ++k) {
    const SentimentTopic& topic = c.topics[k];
    const std::uint64_t cell_seed = c.seed + k;
    const std::uint64_t boot_seed = derive_seed(cell_seed, 0xb007);
    const Dataset pool = load_corpus(topic.train, c.featurizer);
    const Dataset eval = load_corpus(topic.eval, c.featurizer);
    const auto rules = read_rule_log(topic.rules.string());
    if (rules.empty()) throw ConfigError("rule log " + topic.rules.string() + " is empty");

    std::unordered_map<std::uint64_t, const Sample*> by_id;
    for (const auto& s : pool.samples) by_id.emplace(s.id, &s);

    FeedbackEnsemble ensemble;
    Dataset anchors;
    anchors.dimension = pool.dimension;
    std::set<std::uint64_t> seen;
    for (const auto& r : rules) {
      if (!r.anchor) throw DataError("rule " + r.rule_id + " has no anchor sample");
      auto it = by_id.find(*r.anchor);
      if (it == by_id.end()) {
        throw DataError("rule " + r.rule_id + ": anchor " + std::to_string(*r.anchor) + " is not in " +
                        topic.train.string());
      }
      if (seen.insert(*r.anchor).second) anchors.samples.push_back(*it->second);
      ensemble = add_rule(std::move(ensemble), r, c.loop.init_weight);
    }

    SentimentCurves curves;
    curves.topic = topic.name;
    curves.n_rules = ensemble.size();
    curves.n_feedback = anchors.size();
    curves.alphas = alphas;

    TrainConfig tc = c.loop.train;
    tc.seed = cell_seed;
    const auto src = model_accuracy(source_model, eval, resamples, boot_seed);
    const auto dom = model_accuracy(train_logistic(pool, tc), eval, resamples, boot_seed);

    // Source corpus with the anchors appended as ordinary labeled samples.
    Dataset relabeled = source;
    std::uint64_t next_id = 0;
    for (const auto& s : source.samples) next_id = std::max(next_id, s.id + 1);
    for (Sample s : anchors.samples) {
      s.id = next_id++;
      relabeled.samples.push_back(std::move(s));
    }
    const auto lab = model_accuracy(train_logistic(relabeled, tc), eval, resamples, boot_seed);

    for (double a : alphas) {
      MixtureClassifier m;
      m.alpha = a;
      m.hist = source_model;
      m.feedback = ensemble;
      m.hist_frozen = c.loop.hist_frozen;
      m = train_mixture(std::move(m), anchors, tc);
      curves.rules.push_back(estimate_accuracy(m, eval, resamples, boot_seed));
      curves.source.push_back(src);
      curves.in_domain.push_back(dom);
      curves.labels.push_back(lab);
    }
    out.push_back(std::move(curves));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

nlohmann::json metrics_json(const MetricsReport& r) {
  return {{"round", r.round},
          {"alpha", r.alpha},
          {"n_feedback", r.n_feedback},
          {"n_rules", r.n_rules},
          {"train_distr", r.accuracy_train_distr},
          {"test_distr", r.accuracy_test_distr},
          {"combined", r.accuracy_combined},
          {"se_train_distr", r.se_train_distr},
          {"se_test_distr", r.se_test_distr},
          {"se_combined", r.se_combined}};
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

nlohmann::json report_header(const ExperimentConfig& c) {
  nlohmann::json cfg = nlohmann::json::object();
  std::istringstream lines(canonical_config(c));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find(" = ");
    cfg[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return {{"experiment", std::string(to_string(c.kind))},
          {"seed", c.seed},
          {"config_hash", hex64(config_hash(c))},
          {"config", cfg}};
}

std::vector<fs::path> write_report(const fs::path& out_dir, const std::string& name, const std::string& csv,
                                   nlohmann::json json) {
  fs::create_directories(out_dir);
  const fs::path csv_path = out_dir / (name + ".csv");
  const fs::path json_path = out_dir / (name + ".json");
  write_file(csv_path, csv);
  json["csv"] = name + ".csv";
  write_file(json_path, json.dump(2) + "\n");
  return {csv_path, json_path};
}

std::string metrics_cells(const MetricsReport& r) {
  return fixed(r.accuracy_train_distr) + "," + fixed(r.accuracy_test_distr) + "," +
         fixed(r.accuracy_combined) + "," + fixed(r.se_train_distr) + "," + fixed(r.se_test_distr) + "," +
         fixed(r.se_combined);
}

}  // namespace

std::string synthetic_csv(const std::vector<ConditionResult>& rows, std::uint64_t seed) {
  std::string s =
      "feedback,n_experts,n_feedback,n_rules,alpha,train_distr,test_distr,combined,"
      "se_train_distr,se_test_distr,se_combined,seed\n";
  for (const auto& r : rows) {
    s += r.feedback + "," + std::to_string(r.n_experts) + "," + std::to_string(r.metrics.n_feedback) + "," +
         std::to_string(r.metrics.n_rules) + "," + fixed(r.metrics.alpha) + "," + metrics_cells(r.metrics) +
         "," + std::to_string(seed) + "\n";
  }
  return s;
}

std::string scaling_csv(const std::vector<ScalingRow>& rows, std::uint64_t seed) {
  std::string s =
      "n_humans,n_feedback,n_rules,rules_train_distr,rules_test_distr,rules_combined,"
      "rules_se_train_distr,rules_se_test_distr,rules_se_combined,labels_train_distr,"
      "labels_test_distr,labels_combined,labels_se_train_distr,labels_se_test_distr,"
      "labels_se_combined,seed\n";
  for (const auto& r : rows) {
    s += std::to_string(r.n_experts) + "," + std::to_string(r.rules.n_feedback) + "," +
         std::to_string(r.rules.n_rules) + "," + metrics_cells(r.rules) + "," + metrics_cells(r.labels) + "," +
         std::to_string(seed) + "\n";
  }
  return s;
}

std::string sweep_csv(const std::vector<MetricsReport>& rows, std::uint64_t seed) {
  std::string s =
      "alpha,n_feedback,n_rules,train_distr,test_distr,combined,se_train_distr,se_test_distr,"
      "se_combined,seed\n";
  for (const auto& r : rows) {
    s += fixed(r.alpha) + "," + std::to_string(r.n_feedback) + "," + std::to_string(r.n_rules) + "," +
         metrics_cells(r) + "," + std::to_string(seed) + "\n";
  }
  return s;
}

std::string sentiment_csv(const SentimentCurves& c, std::uint64_t seed) {
  std::string s =
      "topic,alpha,source,source_se,in_domain,in_domain_se,labels,labels_se,rules,rules_se,"
      "n_rules,n_feedback,seed\n";
  for (std::size_t i = 0; i < c.alphas.size(); ++i) {
    s += c.topic + "," + fixed(c.alphas[i]) + "," + fixed(c.source[i].accuracy) + "," +
         fixed(c.source[i].standard_error) + "," + fixed(c.in_domain[i].accuracy) + "," +
         fixed(c.in_domain[i].standard_error) + "," + fixed(c.labels[i].accuracy) + "," +
         fixed(c.labels[i].standard_error) + "," + fixed(c.rules[i].accuracy) + "," +
         fixed(c.rules[i].standard_error) + "," + std::to_string(c.n_rules) + "," +
         std::to_string(c.n_feedback) + "," + std::to_string(seed) + "\n";
  }
  return s;
}

std::vector<fs::path> cmd_synthetic(const ExperimentConfig& c, const fs::path& out_dir) {
  const auto rows = run_synthetic(c, c.n_experts);
  auto json = report_header(c);
  json["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    auto m = metrics_json(r.metrics);
    m["feedback"] = r.feedback;
    m["n_experts"] = r.n_experts;
    json["rows"].push_back(m);
  }
  return write_report(out_dir, "synthetic", synthetic_csv(rows, c.seed), json);
}

std::vector<fs::path> cmd_expert_scaling(const ExperimentConfig& c, const fs::path& out_dir) {
  const auto rows = run_scaling(c);
  auto json = report_header(c);
  json["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    json["rows"].push_back(
        {{"n_humans", r.n_experts}, {"rules", metrics_json(r.rules)}, {"labels", metrics_json(r.labels)}});
  }
  return write_report(out_dir, "scaling", scaling_csv(rows, c.seed), json);
}

std::vector<fs::path> cmd_sweep(const ExperimentConfig& c, const fs::path& out_dir) {
  const auto rows = run_synthetic_sweep(c);
  auto json = report_header(c);
  json["rows"] = nlohmann::json::array();
  for (const auto& r : rows) json["rows"].push_back(metrics_json(r));
  return write_report(out_dir, "sweep", sweep_csv(rows, c.seed), json);
}

std::vector<fs::path> cmd_sentiment(const ExperimentConfig& c, const fs::path& out_dir) {
  const auto topics = run_sentiment(c);
  std::vector<fs::path> written;
  for (const auto& t : topics) {
    auto json = report_header(c);
    json["topic"] = t.topic;
    json["n_rules"] = t.n_rules;
    json["n_feedback"] = t.n_feedback;
    auto best = [](const std::vector<AccuracyEstimate>& v) {
      double m = 0.0;
      for (const auto& e : v) m = std::max(m, e.accuracy);
      return m;
    };
    json["max_over_alpha"] = {{"source", best(t.source)},
                              {"in_domain", best(t.in_domain)},
                              {"labels", best(t.labels)},
                              {"rules", best(t.rules)}};
    auto paths = write_report(out_dir, "sentiment_" + t.topic, sentiment_csv(t, c.seed), json);
    written.insert(written.end(), paths.begin(), paths.end());
  }
  return written;
}

std::vector<fs::path> run_experiment(const ExperimentConfig& c, const fs::path& out_dir) {
  switch (c.kind) {
    case ExperimentKind::Synthetic: return cmd_synthetic(c, out_dir);
    case ExperimentKind::Scaling: return cmd_expert_scaling(c, out_dir);
    case ExperimentKind::Sentiment: return cmd_sentiment(c, out_dir);
    case ExperimentKind::Sweep: return cmd_sweep(c, out_dir);
  }
  return {};
}

}  // namespace rulecast
