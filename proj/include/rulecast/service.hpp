#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rulecast/simulation.hpp"

namespace rulecast::service {

using nlohmann::json;

/// Carries the HTTP status and a stable error code. `location` is set for
/// rule parse errors ({line, column}).
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message,
               std::optional<json> location = std::nullopt);

  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }
  const std::optional<json>& location() const noexcept { return location_; }
  json body() const;

 private:
  int status_;
  std::string code_;
  std::optional<json> location_;
};

struct SessionConfig {
  double alpha = 0.5;
  bool hist_frozen = true;
  ObservableConfig observable;
  double init_weight = 0.1;
  TrainConfig train;
  SimilarityConfig similarity;
  FeaturizerConfig featurizer{std::size_t{1} << 12, TermWeighting::Binary};
  std::uint64_t seed = 1;
};

SessionConfig parse_session_config(const json& j);
json to_json(const SessionConfig& config);

struct QueueItem {
  std::uint64_t sample_id = 0;
  std::vector<double> features;  // numeric datasets only
  std::optional<std::string> text;
  int label = 0;
  double probability = 0.5;
  bool misclassified = false;
};

struct FeedbackReceipt {
  std::string rule_id;
  std::string rule_text;  // canonical serialization
  Verdict verdict = Verdict::Abstain;
  bool abstains_on_anchor = false;
  std::size_t pending = 0;
};

struct RuleView {
  FeedbackRule rule;
  double weight = 0.0;
  bool pending = false;  // submitted but not yet trained into the model
};

json to_json(const QueueItem& item);
json to_json(const FeedbackReceipt& receipt);
json to_json(const RuleView& rule);
json to_json(const MetricsReport& report);

class Session;

class SessionManager {
 public:
  struct Options {
    // Root for relative dataset paths in session requests.
    std::filesystem::path data_dir = "data";
    // Sessions are saved here after every mutation and reloaded on start.
    std::optional<std::filesystem::path> state_dir;
    // Runs inside retrain while the session's retrain flag is held.
    std::function<void(const std::string&)> retrain_hook;
  };

  explicit SessionManager(Options options);
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  /// Request: {"dataset": {...}, "config": {...}}. Returns the new id.
  std::string create_session(const json& request);

  std::vector<QueueItem> queue(const std::string& id, std::size_t limit) const;
  FeedbackReceipt submit_feedback(const std::string& id, std::uint64_t sample_id,
                                  const std::string& rule_text, const std::string& author = "user");
  MetricsReport retrain(const std::string& id);
  std::vector<MetricsReport> history(const std::string& id) const;
  // Evaluates the current snapshot at another alpha; the session is unchanged.
  MetricsReport what_if(const std::string& id, double alpha) const;
  std::vector<RuleView> rules(const std::string& id) const;

  MixtureClassifier model(const std::string& id) const;
  // Current mixture output on every sample of the session's review batch.
  std::vector<double> batch_predictions(const std::string& id) const;
  std::vector<std::string> session_ids() const;

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  void save(const Session& session) const;
  void load_all();

  Options options_;
  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

/// HTTP front end. Routes:
///   POST /sessions, GET /sessions/{id}/queue?limit=,
///   POST /sessions/{id}/feedback, POST /sessions/{id}/retrain,
///   GET /sessions/{id}/metrics?alpha=, GET /sessions/{id}/rules
class HttpServer {
 public:
  explicit HttpServer(SessionManager& sessions);
  ~HttpServer();

  // Returns the bound port (useful with port 0); throws on failure.
  int bind(const std::string& address, int port);
  // Blocks until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rulecast::service
