#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rulecast/data.hpp"
#include "rulecast/simulation.hpp"

namespace rulecast {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` file. '#' starts a comment; a repeated key is an
/// error. Values are trimmed; lists are comma separated.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, std::string source = "<memory>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, std::string value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;

  // Throws ConfigError naming the first key nobody asked for.
  void check_all_used() const;

  const std::filesystem::path& base_dir() const noexcept { return base_dir_; }

 private:
  std::string where(const std::string& key) const;

  std::map<std::string, std::string> values_;
  std::map<std::string, std::size_t> lines_;
  mutable std::set<std::string> used_;
  std::string source_;
  std::filesystem::path base_dir_;
};

enum class ExperimentKind : std::uint8_t { Synthetic, Scaling, Sentiment, Sweep };

std::string_view to_string(ExperimentKind kind) noexcept;
ExperimentKind parse_experiment_kind(std::string_view name);

struct SentimentTopic {
  std::string name;
  std::filesystem::path train;  // observable pool; rule anchors index into it
  std::filesystem::path eval;
  std::filesystem::path rules;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Synthetic;
  std::uint64_t seed = 1;

  SwitchingGaussianSpec data;
  std::size_t n_experts = 40;
  std::vector<std::size_t> expert_counts{1, 5, 10, 20, 30, 40, 50};
  ExperienceMode experience_mode = ExperienceMode::FractionOfMixture;
  std::size_t n_batches = 1;  // the shifted split is streamed in this many batches
  LoopConfig loop;
  double alpha_step = 0.05;

  std::filesystem::path source_corpus;
  std::vector<SentimentTopic> topics;
  FeaturizerConfig featurizer;

  // Directory relative paths were resolved against; reports print paths
  // relative to it so the config hash does not depend on the checkout.
  std::filesystem::path base_dir;
};

/// Reads every known key; unknown keys are errors. Relative paths resolve
/// against the config file's directory.
ExperimentConfig parse_experiment_config(const KeyValueConfig& kv);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Canonical `key = value` listing of the effective configuration.
std::string canonical_config(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Runs

struct ConditionResult {
  std::string feedback;  // "decision_rules", "labels" or "none"
  std::size_t n_experts = 0;
  MetricsReport metrics;
};

/// One switching-data cell: the three Table 1 conditions with `n_experts`.
std::vector<ConditionResult> run_synthetic(const ExperimentConfig& config, std::size_t n_experts,
                                           std::uint64_t cell = 0);

struct ScalingRow {
  std::size_t n_experts = 0;
  MetricsReport rules;
  MetricsReport labels;
};

std::vector<ScalingRow> run_scaling(const ExperimentConfig& config);

// Rule-feedback loop on switching data, then evaluated over the alpha grid.
std::vector<MetricsReport> run_synthetic_sweep(const ExperimentConfig& config);

struct SentimentCurves {
  std::string topic;
  std::size_t n_rules = 0;
  std::size_t n_feedback = 0;
  std::vector<double> alphas;
  std::vector<AccuracyEstimate> source;     // source-domain model
  std::vector<AccuracyEstimate> in_domain;  // trained on the topic pool
  std::vector<AccuracyEstimate> labels;     // source data plus anchors as labels
  std::vector<AccuracyEstimate> rules;      // source model mixed with rule feedback
};

std::vector<SentimentCurves> run_sentiment(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Reports. Each command writes <name>.csv and <name>.json under `out_dir` and
// returns the written paths.

std::string synthetic_csv(const std::vector<ConditionResult>& rows, std::uint64_t seed);
std::string scaling_csv(const std::vector<ScalingRow>& rows, std::uint64_t seed);
std::string sweep_csv(const std::vector<MetricsReport>& rows, std::uint64_t seed);
std::string sentiment_csv(const SentimentCurves& curves, std::uint64_t seed);

std::vector<std::filesystem::path> cmd_synthetic(const ExperimentConfig& config,
                                                 const std::filesystem::path& out_dir);
std::vector<std::filesystem::path> cmd_expert_scaling(const ExperimentConfig& config,
                                                      const std::filesystem::path& out_dir);
std::vector<std::filesystem::path> cmd_sentiment(const ExperimentConfig& config,
                                                 const std::filesystem::path& out_dir);
std::vector<std::filesystem::path> cmd_sweep(const ExperimentConfig& config,
                                             const std::filesystem::path& out_dir);

std::vector<std::filesystem::path> run_experiment(const ExperimentConfig& config,
                                                  const std::filesystem::path& out_dir);

}  // namespace rulecast
