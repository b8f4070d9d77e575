#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulecast/data.hpp"
#include "rulecast/rule_dsl.hpp"

namespace rulecast {

// Logistic sigmoid, evaluated without overflow for large |z|.
double sigmoid(double z) noexcept;

/// Data-driven classifier: p(y = 1 | x) = sigmoid(w . x + b).
struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;

  LinearModel() = default;
  explicit LinearModel(std::size_t dimension) : weights(dimension, 0.0) {}

  std::size_t dimension() const noexcept { return weights.size(); }
  double logit(std::span<const double> x) const;

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  double clamp_eps = 1e-7;
};

void validate(const TrainConfig& config);

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double predict_proba(const LinearModel& model, const Sample& sample);

// Mean BCE (probabilities clamped to [eps, 1 - eps]) plus l2 * |w|^2 / 2.
double logistic_loss(const LinearModel& model, std::span<const Sample> samples, double l2,
                     double clamp_eps = 1e-7);

struct LinearGradient {
  std::vector<double> weights;
  double bias = 0.0;
};

// Exact gradient of the unclamped logistic_loss.
LinearGradient logistic_gradient(const LinearModel& model, std::span<const Sample> samples,
                                 double l2);

/// Mini-batch SGD from zero initialization, reshuffled every epoch.
LinearModel train_logistic(const Dataset& data, const TrainConfig& config);

// Checkpoint: "RCLM", u32 version, u64 dimension, f64 bias, f64 weights[dim];
// all little-endian.
std::vector<std::uint8_t> encode_checkpoint(const LinearModel& model);
LinearModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::string& path, const LinearModel& model);
LinearModel load_checkpoint(const std::string& path);

struct TreeNode {
  bool is_leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::int32_t left = -1;   // x[feature] <= threshold
  std::int32_t right = -1;
  double p_class1 = 0.0;
  int majority = 0;
  std::size_t n_samples = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::size_t max_depth = 0;

  std::size_t depth() const noexcept;
  int predict(std::span<const double> x) const;
  double predict_proba(std::span<const double> x) const;
};

int tree_predict(const DecisionTree& tree, const Sample& sample);

/// Greedy CART with Gini impurity. Thresholds are midpoints between
/// consecutive distinct values; equal-impurity candidates resolve to the
/// lowest feature, then the lowest threshold. A split is admissible when
/// both children keep at least min_leaf samples.
DecisionTree fit_cart(const Dataset& data, std::size_t max_depth, std::size_t min_leaf = 1);

// split -> Branch(x_f <= t, left, right); leaf -> Leaf(majority).
RuleAst tree_to_rule(const DecisionTree& tree);

}  // namespace rulecast
