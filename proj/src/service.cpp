#include "rulecast/service.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "rulecast/rng.hpp"

namespace rulecast::service {

namespace fs = std::filesystem;

ServiceError::ServiceError(int status, std::string code, const std::string& message,
                           std::optional<json> location)
    : std::runtime_error(message), status_(status), code_(std::move(code)), location_(std::move(location)) {}

json ServiceError::body() const {
  json j = {{"code", code_}, {"message", what()}};
  if (location_) j["location"] = *location_;
  return j;
}

namespace {

ServiceError bad_request(const std::string& message) { return ServiceError(400, "bad_request", message); }

template <typename T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw bad_request(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

SessionConfig parse_session_config(const json& j) {
  if (!j.is_object()) throw bad_request("config must be an object");
  static const std::set<std::string> known = {"alpha", "hist_frozen", "policy", "k", "init_weight",
                                              "lr", "epochs", "batch_size", "l2", "similarity",
                                              "featurizer_dim", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw bad_request("unknown config field '" + key + "'");
  }
  SessionConfig c;
  c.alpha = field(j, "alpha", c.alpha);
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw bad_request("alpha must lie in [0, 1]");
  c.hist_frozen = field(j, "hist_frozen", c.hist_frozen);
  const auto policy = field<std::string>(j, "policy", "misclassified");
  if (policy == "misclassified") c.observable.policy = ObservablePolicy::Misclassified;
  else if (policy == "random") c.observable.policy = ObservablePolicy::Random;
  else if (policy == "all") c.observable.policy = ObservablePolicy::All;
  else throw bad_request("policy must be misclassified, random or all");
  c.observable.k = field<std::size_t>(j, "k", 0);
  c.seed = field<std::uint64_t>(j, "seed", c.seed);
  c.observable.seed = c.seed;
  c.init_weight = field(j, "init_weight", c.init_weight);
  if (!std::isfinite(c.init_weight)) throw bad_request("init_weight must be finite");
  c.train.learning_rate = field(j, "lr", c.train.learning_rate);
  c.train.epochs = field<std::size_t>(j, "epochs", c.train.epochs);
  c.train.batch_size = field<std::size_t>(j, "batch_size", c.train.batch_size);
  c.train.l2 = field(j, "l2", c.train.l2);
  c.train.seed = c.seed;
  try {
    validate(c.train);
  } catch (const std::exception& e) {
    throw bad_request(e.what());
  }
  if (j.contains("similarity")) {
    const auto& s = j.at("similarity");
    if (s.is_string() && s.get<std::string>() == "constant") {
      c.similarity = SimilarityConfig::constant();
    } else if (s.is_object() && field<std::string>(s, "kind", "") == "rbf") {
      try {
        c.similarity = SimilarityConfig::rbf(field(s, "bandwidth", 1.0));
      } catch (const std::exception& e) {
        throw bad_request(e.what());
      }
    } else {
      throw bad_request("similarity must be \"constant\" or {\"kind\": \"rbf\", \"bandwidth\": b}");
    }
  }
  c.featurizer.dimension = field<std::size_t>(j, "featurizer_dim", c.featurizer.dimension);
  if (c.featurizer.dimension == 0) throw bad_request("featurizer_dim must be positive");
  return c;
}

json to_json(const SessionConfig& c) {
  const char* policy = c.observable.policy == ObservablePolicy::Misclassified ? "misclassified"
                       : c.observable.policy == ObservablePolicy::Random    ? "random"
                                                                             : "all";
  json sim = c.similarity.kind == SimilarityConfig::Kind::Constant
                 ? json("constant")
                 : json{{"kind", "rbf"}, {"bandwidth", c.similarity.bandwidth}};
  return {{"alpha", c.alpha},
          {"hist_frozen", c.hist_frozen},
          {"policy", policy},
          {"k", c.observable.k},
          {"init_weight", c.init_weight},
          {"lr", c.train.learning_rate},
          {"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"l2", c.train.l2},
          {"similarity", sim},
          {"featurizer_dim", c.featurizer.dimension},
          {"seed", c.seed}};
}

json to_json(const QueueItem& item) {
  json j = {{"sample_id", item.sample_id},
            {"label", item.label},
            {"probability", item.probability},
            {"predicted", predicted_class(item.probability)},
            {"misclassified", item.misclassified}};
  if (!item.features.empty()) j["features"] = item.features;
  if (item.text) j["text"] = *item.text;
  return j;
}

json to_json(const FeedbackReceipt& r) {
  json j = {{"rule_id", r.rule_id},
            {"rule", r.rule_text},
            {"verdict", std::string(to_string(r.verdict))},
            {"pending", r.pending},
            {"warning", nullptr}};
  if (r.abstains_on_anchor) j["warning"] = "rule abstains on its anchor sample";
  return j;
}

json to_json(const RuleView& v) {
  json j = {{"rule_id", v.rule.rule_id},
            {"author", v.rule.author_id},
            {"anchor", nullptr},
            {"text", serialize(*v.rule.rule)},
            {"weight", v.weight},
            {"pending", v.pending},
            {"created_at", v.rule.created_at}};
  if (v.rule.anchor) j["anchor"] = *v.rule.anchor;
  return j;
}

json to_json(const MetricsReport& r) {
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

namespace {

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.round = j.at("round").get<std::size_t>();
  r.alpha = j.at("alpha").get<double>();
  r.n_feedback = j.at("n_feedback").get<std::size_t>();
  r.n_rules = j.at("n_rules").get<std::size_t>();
  r.accuracy_train_distr = j.at("train_distr").get<double>();
  r.accuracy_test_distr = j.at("test_distr").get<double>();
  r.accuracy_combined = j.at("combined").get<double>();
  r.se_train_distr = j.at("se_train_distr").get<double>();
  r.se_test_distr = j.at("se_test_distr").get<double>();
  r.se_combined = j.at("se_combined").get<double>();
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Session

struct Snapshot {
  MixtureClassifier model;
  std::vector<double> predictions;  // on the review batch
  std::vector<QueueItem> queue;
  std::set<std::uint64_t> queued_ids;
};

class Session {
 public:
  std::string id;
  json request;  // as accepted, for persistence
  SessionConfig config;
  Dataset batch;  // samples under review
  EvalSets eval;
  bool numeric = true;

  std::mutex write_mu;
  std::atomic<bool> retraining{false};

  // Guarded by write_mu.
  std::vector<FeedbackRule> pending;
  std::vector<MetricsReport> history_log;

  std::shared_ptr<const Snapshot> snapshot() const {
    std::shared_lock lock(snap_mu_);
    return snap_;
  }
  std::vector<MetricsReport> history() const {
    std::shared_lock lock(snap_mu_);
    return history_;
  }
  std::vector<FeedbackRule> pending_rules() const {
    std::shared_lock lock(snap_mu_);
    return pending_;
  }
  // Readers see the model, its history and the pending list change together.
  void publish(std::shared_ptr<const Snapshot> next, std::vector<MetricsReport> history,
               std::vector<FeedbackRule> pending) {
    std::unique_lock lock(snap_mu_);
    snap_ = std::move(next);
    history_ = std::move(history);
    pending_ = std::move(pending);
  }
  void publish_pending(std::vector<FeedbackRule> pending) {
    std::unique_lock lock(snap_mu_);
    pending_ = std::move(pending);
  }

 private:
  mutable std::shared_mutex snap_mu_;
  std::shared_ptr<const Snapshot> snap_;
  std::vector<MetricsReport> history_;
  std::vector<FeedbackRule> pending_;
};

namespace {

std::shared_ptr<const Snapshot> build_snapshot(const Session& s, MixtureClassifier model) {
  auto snap = std::make_shared<Snapshot>();
  snap->model = std::move(model);
  snap->predictions.reserve(s.batch.size());
  for (const auto& sample : s.batch.samples) snap->predictions.push_back(mixture_predict(snap->model, sample));
  const auto ids = select_observable(snap->predictions, s.batch, s.config.observable);
  std::unordered_map<std::uint64_t, std::size_t> pos;
  for (std::size_t j = 0; j < s.batch.size(); ++j) pos.emplace(s.batch.samples[j].id, j);
  for (auto id : ids) {
    const std::size_t j = pos.at(id);
    const Sample& sample = s.batch.samples[j];
    QueueItem item;
    item.sample_id = id;
    if (s.numeric) item.features = sample.features;
    item.text = sample.text;
    item.label = *sample.label;
    item.probability = snap->predictions[j];
    item.misclassified = predicted_class(item.probability) != item.label;
    snap->queue.push_back(std::move(item));
    snap->queued_ids.insert(id);
  }
  std::stable_partition(snap->queue.begin(), snap->queue.end(),
                        [](const QueueItem& q) { return q.misclassified; });
  return snap;
}

MetricsReport measure(const Session& s, const MixtureClassifier& model, std::size_t round) {
  MetricsReport r = evaluate(model, s.eval, kBootstrapResamples, derive_seed(s.config.seed, 0x3e7 + round));
  r.round = round;
  std::set<std::uint64_t> anchors;
  for (const auto& rule : model.feedback.rules) {
    if (rule.anchor) anchors.insert(*rule.anchor);
  }
  r.n_feedback = anchors.size();
  return r;
}

// Labeled batch samples that anchor at least one rule, in batch order.
Dataset feedback_samples(const Session& s, const FeedbackEnsemble& ens) {
  std::set<std::uint64_t> anchors;
  for (const auto& rule : ens.rules) {
    if (rule.anchor) anchors.insert(*rule.anchor);
  }
  Dataset out;
  out.dimension = s.batch.dimension;
  for (const auto& sample : s.batch.samples) {
    if (anchors.count(sample.id)) out.samples.push_back(sample);
  }
  return out;
}

fs::path resolve_data_path(const fs::path& root, const json& dataset, const char* key) {
  const auto rel = field<std::string>(dataset, key, "");
  if (rel.empty()) throw bad_request(std::string("dataset field '") + key + "' is required");
  const fs::path p(rel);
  if (p.is_absolute()) throw bad_request("dataset paths must be relative to the data directory");
  for (const auto& part : p) {
    if (part == "..") throw bad_request("dataset paths may not leave the data directory");
  }
  const fs::path full = root / p;
  if (!fs::is_regular_file(full)) throw ServiceError(404, "dataset_not_found", "no dataset '" + rel + "'");
  return full;
}

Dataset load_text(const fs::path& path, const FeaturizerConfig& fc) {
  Dataset raw;
  try {
    raw = load_tsv(path.string());
  } catch (const std::exception& e) {
    throw bad_request(e.what());
  }
  for (const auto& s : raw.samples) {
    if (!s.text || !s.label) {
      throw bad_request(path.filename().string() + ": every line needs a label and text");
    }
  }
  return featurize_text(raw, fc);
}

// Materializes datasets and the hist model for a request. Deterministic, so
// reloading a persisted session rebuilds identical data.
void materialize(Session& s, const fs::path& data_dir, LinearModel* hist) {
  const json& dataset = s.request.at("dataset");
  const auto kind = field<std::string>(dataset, "kind", "");
  Dataset hist_train;
  if (kind == "switching") {
    SwitchingGaussianSpec spec;
    spec.seed = field<std::uint64_t>(dataset, "seed", s.config.seed);
    spec.n_per_cluster = field<std::size_t>(dataset, "n_per_cluster", spec.n_per_cluster);
    if (spec.n_per_cluster == 0 || spec.n_per_cluster > 100000) throw bad_request("n_per_cluster out of range");
    auto split = generate_switching(spec);
    hist_train = split.train;
    s.batch = split.test;
    s.eval = {split.train, split.test};
    s.numeric = true;
  } else if (kind == "text") {
    const auto source = resolve_data_path(data_dir, dataset, "source");
    const auto batch = resolve_data_path(data_dir, dataset, "batch");
    hist_train = load_text(source, s.config.featurizer);
    s.batch = load_text(batch, s.config.featurizer);
    Dataset eval = s.batch;
    if (dataset.contains("eval")) eval = load_text(resolve_data_path(data_dir, dataset, "eval"), s.config.featurizer);
    s.eval = {hist_train, eval};
    s.numeric = false;
  } else {
    throw ServiceError(404, "dataset_not_found", "unknown dataset kind '" + kind + "'");
  }
  if (hist) {
    try {
      *hist = train_logistic(hist_train, s.config.train);
    } catch (const std::exception& e) {
      throw bad_request(std::string("cannot train the base model: ") + e.what());
    }
  }
}

void write_text(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// SessionManager

SessionManager::SessionManager(Options options) : options_(std::move(options)) {
  if (options_.state_dir) {
    fs::create_directories(*options_.state_dir);
    load_all();
  }
}

SessionManager::~SessionManager() = default;

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "session_not_found", "no session '" + id + "'");
  return it->second;
}

std::vector<std::string> SessionManager::session_ids() const {
  std::lock_guard lock(sessions_mu_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

std::string SessionManager::create_session(const json& request) {
  if (!request.is_object()) throw bad_request("request body must be a JSON object");
  if (!request.contains("dataset") || !request.at("dataset").is_object()) {
    throw bad_request("field 'dataset' must be an object");
  }
  for (const auto& [key, value] : request.items()) {
    if (key != "dataset" && key != "config") throw bad_request("unknown field '" + key + "'");
  }
  auto s = std::make_shared<Session>();
  s->config = parse_session_config(request.value("config", json::object()));
  s->request = {{"dataset", request.at("dataset")}, {"config", to_json(s->config)}};

  LinearModel hist;
  materialize(*s, options_.data_dir, &hist);
  MixtureClassifier model;
  model.alpha = s->config.alpha;
  model.hist = std::move(hist);
  model.hist_frozen = s->config.hist_frozen;
  model.feedback.similarity = s->config.similarity;
  if (s->config.observable.policy == ObservablePolicy::Random && s->config.observable.k > s->batch.size()) {
    throw bad_request("k exceeds the batch size");
  }
  auto snap = build_snapshot(*s, std::move(model));
  s->history_log = {measure(*s, snap->model, 0)};
  s->publish(snap, s->history_log, {});

  {
    std::lock_guard lock(sessions_mu_);
    s->id = "s" + std::to_string(next_id_++);
    sessions_[s->id] = s;
  }
  std::lock_guard write(s->write_mu);
  save(*s);
  return s->id;
}

std::vector<QueueItem> SessionManager::queue(const std::string& id, std::size_t limit) const {
  const auto snap = find(id)->snapshot();
  const std::size_t n = std::min(limit, snap->queue.size());
  return {snap->queue.begin(), snap->queue.begin() + static_cast<std::ptrdiff_t>(n)};
}

FeedbackReceipt SessionManager::submit_feedback(const std::string& id, std::uint64_t sample_id,
                                                const std::string& rule_text, const std::string& author) {
  auto s = find(id);
  RuleAst ast;
  try {
    ast = parse_rule(rule_text);
  } catch (const ParseError& e) {
    throw ServiceError(422, "rule_parse_error", e.message(), json{{"line", e.line()}, {"column", e.column()}});
  } catch (const RegexError& e) {
    throw ServiceError(422, "rule_parse_error", e.what());
  }
  if (author.empty() || author.find_first_of("\t\n\r") != std::string::npos) {
    throw bad_request("author must be non-empty and free of tabs and newlines");
  }

  std::lock_guard write(s->write_mu);
  const auto snap = s->snapshot();
  if (!snap->queued_ids.count(sample_id)) {
    throw ServiceError(409, "not_in_queue", "sample " + std::to_string(sample_id) + " is not in the review queue");
  }
  const Sample* anchor = nullptr;
  for (const auto& sample : s->batch.samples) {
    if (sample.id == sample_id) anchor = &sample;
  }
  Verdict verdict;
  try {
    verdict = evaluate(ast, *anchor);
  } catch (const EvaluationError& e) {
    throw ServiceError(422, "rule_not_applicable", e.what());
  }
  const std::size_t total = snap->model.feedback.size() + s->pending.size();
  FeedbackRule rule = make_feedback_rule(std::move(ast), id + "-r" + std::to_string(total + 1), author,
                                         sample_id, total);
  FeedbackReceipt receipt;
  receipt.rule_id = rule.rule_id;
  receipt.rule_text = serialize(*rule.rule);
  receipt.verdict = verdict;
  receipt.abstains_on_anchor = verdict == Verdict::Abstain;
  s->pending.push_back(std::move(rule));
  receipt.pending = s->pending.size();
  s->publish_pending(s->pending);
  save(*s);
  return receipt;
}

MetricsReport SessionManager::retrain(const std::string& id) {
  auto s = find(id);
  if (s->retraining.exchange(true)) {
    throw ServiceError(409, "retrain_running", "a retrain is already running for session " + id);
  }
  struct Reset {
    std::atomic<bool>& flag;
    ~Reset() { flag = false; }
  } reset{s->retraining};

  std::lock_guard write(s->write_mu);
  if (options_.retrain_hook) options_.retrain_hook(id);
  MixtureClassifier model = s->snapshot()->model;
  for (auto& rule : s->pending) {
    std::optional<std::vector<double>> anchor;
    for (const auto& sample : s->batch.samples) {
      if (rule.anchor && sample.id == *rule.anchor) anchor = sample.features;
    }
    model.feedback = add_rule(std::move(model.feedback), rule, s->config.init_weight, std::move(anchor));
  }
  const Dataset feedback = feedback_samples(*s, model.feedback);
  if (!feedback.empty() && !model.feedback.empty()) {
    TrainConfig tc = s->config.train;
    tc.seed = derive_seed(s->config.seed, 0x7e7 + s->history_log.size());
    model = train_mixture(std::move(model), feedback, tc);
  }
  s->pending.clear();
  auto snap = build_snapshot(*s, std::move(model));
  MetricsReport report = measure(*s, snap->model, s->history_log.size());
  s->history_log.push_back(report);
  s->publish(snap, s->history_log, {});
  save(*s);
  return report;
}

std::vector<MetricsReport> SessionManager::history(const std::string& id) const { return find(id)->history(); }

MetricsReport SessionManager::what_if(const std::string& id, double alpha) const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw bad_request("alpha must lie in [0, 1]");
  auto s = find(id);
  const auto snap = s->snapshot();
  MixtureClassifier m = snap->model;
  m.alpha = alpha;
  const auto hist = s->history();
  return measure(*s, m, hist.empty() ? 0 : hist.back().round);
}

std::vector<RuleView> SessionManager::rules(const std::string& id) const {
  auto s = find(id);
  const auto snap = s->snapshot();
  std::vector<RuleView> out;
  const auto& ens = snap->model.feedback;
  for (std::size_t i = 0; i < ens.size(); ++i) out.push_back({ens.rules[i], ens.weights[i], false});
  for (const auto& r : s->pending_rules()) out.push_back({r, s->config.init_weight, true});
  return out;
}

MixtureClassifier SessionManager::model(const std::string& id) const { return find(id)->snapshot()->model; }

std::vector<double> SessionManager::batch_predictions(const std::string& id) const {
  return find(id)->snapshot()->predictions;
}

// ---------------------------------------------------------------------------
// Persistence: <state>/<id>/{session.json, hist.ckpt, rules.log, weights}.
// rules.log holds trained rules followed by pending ones.

void SessionManager::save(const Session& s) const {
  if (!options_.state_dir) return;
  const fs::path dir = *options_.state_dir / s.id;
  fs::create_directories(dir);
  const auto snap = s.snapshot();
  FeedbackEnsemble all = snap->model.feedback;
  for (const auto& r : s.pending) {
    all.rules.push_back(r);
    all.weights.push_back(s.config.init_weight);
  }
  save_checkpoint((dir / "hist.ckpt").string(), snap->model.hist);
  save_ensemble(all, (dir / "rules.log.tmp").string(), (dir / "weights.tmp").string());
  fs::rename(dir / "rules.log.tmp", dir / "rules.log");
  fs::rename(dir / "weights.tmp", dir / "weights");
  json history = json::array();
  for (const auto& r : s.history_log) history.push_back(to_json(r));
  json state = {{"id", s.id},
                {"request", s.request},
                {"n_trained", snap->model.feedback.size()},
                {"n_pending", s.pending.size()},
                {"history", history}};
  write_text(dir / "session.json", state.dump(2) + "\n");
}

void SessionManager::load_all() {
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(*options_.state_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "session.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const json state = json::parse(read_text(dir / "session.json"));
    auto s = std::make_shared<Session>();
    s->id = state.at("id").get<std::string>();
    s->request = state.at("request");
    s->config = parse_session_config(s->request.at("config"));
    materialize(*s, options_.data_dir, nullptr);

    MixtureClassifier model;
    model.alpha = s->config.alpha;
    model.hist_frozen = s->config.hist_frozen;
    model.hist = load_checkpoint((dir / "hist.ckpt").string());
    FeedbackEnsemble all = load_ensemble((dir / "rules.log").string(), (dir / "weights").string());
    const auto n_trained = state.at("n_trained").get<std::size_t>();
    if (n_trained + state.at("n_pending").get<std::size_t>() != all.size()) {
      throw std::runtime_error(dir.string() + ": rule counts do not match rules.log");
    }
    for (std::size_t i = 0; i < all.size(); ++i) all.rules[i].created_at = i;
    s->pending.assign(all.rules.begin() + static_cast<std::ptrdiff_t>(n_trained), all.rules.end());
    all.rules.resize(n_trained);
    all.weights.resize(n_trained);
    all.anchors.resize(n_trained);
    all.similarity = s->config.similarity;
    resolve_anchors(all, s->batch);
    model.feedback = std::move(all);
    for (const auto& r : state.at("history")) s->history_log.push_back(report_from_json(r));
    s->publish(build_snapshot(*s, std::move(model)), s->history_log, s->pending);

    std::lock_guard lock(sessions_mu_);
    sessions_[s->id] = s;
    if (s->id.size() > 1 && s->id[0] == 's') {
      next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(s->id.substr(1)) + 1);
    }
  }
}

}  // namespace rulecast::service
