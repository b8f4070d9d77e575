#include "rulecast/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>

#include "rulecast/kernels.hpp"
#include "rulecast/rng.hpp"

namespace rulecast {

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double LinearModel::logit(std::span<const double> x) const {
  if (x.size() != weights.size()) {
    throw ModelError("dimension mismatch: model has " + std::to_string(weights.size()) +
                     " weights, sample has " + std::to_string(x.size()) + " features");
  }
  double z = bias;
  for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * x[j];
  return z;
}

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw ModelError("learning_rate must be > 0");
  if (c.epochs == 0) throw ModelError("epochs must be > 0");
  if (c.batch_size == 0) throw ModelError("batch_size must be > 0");
  if (!(c.l2 >= 0.0)) throw ModelError("l2 must be >= 0");
  if (!(c.clamp_eps > 0.0 && c.clamp_eps < 0.5)) throw ModelError("clamp_eps must be in (0, 0.5)");
}

double predict_proba(const LinearModel& model, const Sample& sample) {
  return sigmoid(model.logit(sample.features));
}

double logistic_loss(const LinearModel& model, std::span<const Sample> samples, double l2,
                     double clamp_eps) {
  double total = 0.0;
  for (const auto& s : samples) {
    const double p = std::clamp(predict_proba(model, s), clamp_eps, 1.0 - clamp_eps);
    const double y = *s.label;
    total += -y * std::log(p) - (1.0 - y) * std::log(1.0 - p);
  }
  double reg = 0.0;
  for (double w : model.weights) reg += w * w;
  return total / static_cast<double>(samples.size()) + 0.5 * l2 * reg;
}

LinearGradient logistic_gradient(const LinearModel& model, std::span<const Sample> samples,
                                 double l2) {
  LinearGradient g;
  g.weights.assign(model.dimension(), 0.0);
  for (const auto& s : samples) {
    const double r = predict_proba(model, s) - static_cast<double>(*s.label);
    for (std::size_t j = 0; j < g.weights.size(); ++j) g.weights[j] += r * s.features[j];
    g.bias += r;
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (std::size_t j = 0; j < g.weights.size(); ++j) {
    g.weights[j] = g.weights[j] * inv + l2 * model.weights[j];
  }
  g.bias *= inv;
  return g;
}

namespace {

void check_training_data(const Dataset& data) {
  if (data.empty()) throw ModelError("training data is empty");
  std::size_t ones = 0;
  for (const auto& s : data.samples) {
    if (!s.label) throw ModelError("sample " + std::to_string(s.id) + " is unlabeled");
    if (s.features.size() != data.dimension || data.dimension == 0) {
      throw ModelError("sample " + std::to_string(s.id) + " has wrong feature dimension");
    }
    for (double v : s.features) {
      if (!std::isfinite(v)) throw ModelError("sample " + std::to_string(s.id) + " has non-finite features");
    }
    ones += *s.label == 1;
  }
  if (ones == 0 || ones == data.size()) {
    throw ModelError("training data must contain both classes");
  }
}

}  // namespace

LinearModel train_logistic(const Dataset& data, const TrainConfig& config) {
  validate(config);
  check_training_data(data);
  const std::size_t n = data.size();
  const std::size_t dim = data.dimension;

  // SGD runs on standardized features; the result is mapped back to raw
  // feature space. Constant features keep scale 1.
  std::vector<double> mean(dim, 0.0), scale(dim, 0.0);
  for (const auto& s : data.samples)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += s.features[j];
  for (double& m : mean) m /= static_cast<double>(n);
  for (const auto& s : data.samples)
    for (std::size_t j = 0; j < dim; ++j) scale[j] += (s.features[j] - mean[j]) * (s.features[j] - mean[j]);
  for (double& v : scale) {
    v = std::sqrt(v / static_cast<double>(n));
    if (!(v > 1e-12)) v = 1.0;
  }
  std::vector<double> z(n * dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      z[i * dim + j] = (data.samples[i].features[j] - mean[j]) / scale[j];

  std::vector<double> w(dim, 0.0), gw(dim);
  double b = 0.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(config.seed, epoch);
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      std::fill(gw.begin(), gw.end(), 0.0);
      double gb = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const double* xi = &z[i * dim];
        double logit = b;
        for (std::size_t j = 0; j < dim; ++j) logit += w[j] * xi[j];
        const double r = sigmoid(logit) - static_cast<double>(*data.samples[i].label);
        for (std::size_t j = 0; j < dim; ++j) gw[j] += r * xi[j];
        gb += r;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t j = 0; j < dim; ++j) {
        w[j] -= config.learning_rate * (gw[j] * inv + config.l2 * w[j]);
      }
      b -= config.learning_rate * gb * inv;
    }
  }

  LinearModel model(dim);
  model.bias = b;
  for (std::size_t j = 0; j < dim; ++j) {
    model.weights[j] = w[j] / scale[j];
    model.bias -= w[j] * mean[j] / scale[j];
  }
  return model;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const LinearModel& model) {
  std::vector<std::uint8_t> out = {'R', 'C', 'L', 'M'};
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(kCheckpointVersion >> (8 * i)));
  put_u64(out, model.dimension());
  put_u64(out, std::bit_cast<std::uint64_t>(model.bias));
  for (double w : model.weights) put_u64(out, std::bit_cast<std::uint64_t>(w));
  return out;
}

LinearModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 24 || bytes[0] != 'R' || bytes[1] != 'C' || bytes[2] != 'L' || bytes[3] != 'M') {
    throw ModelError("not a model checkpoint");
  }
  std::uint32_t version = 0;
  for (int i = 0; i < 4; ++i) version |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
  if (version != kCheckpointVersion) {
    throw ModelError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t dim = get_u64(bytes, 8);
  if (dim > (bytes.size() - 24) / 8 || bytes.size() != 24 + 8 * dim) {
    throw ModelError("truncated or oversized checkpoint");
  }
  LinearModel m(static_cast<std::size_t>(dim));
  m.bias = std::bit_cast<double>(get_u64(bytes, 16));
  for (std::size_t j = 0; j < dim; ++j) m.weights[j] = std::bit_cast<double>(get_u64(bytes, 24 + 8 * j));
  return m;
}

void save_checkpoint(const std::string& path, const LinearModel& model) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelError("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

LinearModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot read checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

// ---------------------------------------------------------------------------
// CART

std::size_t DecisionTree::depth() const noexcept {
  if (nodes.empty()) return 0;
  std::function<std::size_t(std::int32_t)> rec = [&](std::int32_t i) -> std::size_t {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    if (n.is_leaf) return 0;
    return 1 + std::max(rec(n.left), rec(n.right));
  };
  return rec(0);
}

namespace {

const TreeNode& find_leaf(const DecisionTree& tree, std::span<const double> x) {
  if (tree.nodes.empty()) throw ModelError("empty decision tree");
  const TreeNode* n = &tree.nodes[0];
  while (!n->is_leaf) {
    if (n->feature >= x.size()) throw ModelError("feature index out of range in tree");
    n = &tree.nodes[static_cast<std::size_t>(x[n->feature] <= n->threshold ? n->left : n->right)];
  }
  return *n;
}

struct CartBuilder {
  const kernels::FeatureMatrix& x;
  std::span<const int> labels;
  std::size_t max_depth;
  std::size_t min_leaf;
  DecisionTree& tree;

  std::int32_t build(std::vector<std::size_t>& rows, std::size_t depth) {
    const auto idx = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    std::size_t ones = 0;
    for (std::size_t r : rows) ones += labels[r] == 1;
    {
      TreeNode& node = tree.nodes.back();
      node.n_samples = rows.size();
      node.p_class1 = rows.empty() ? 0.0 : static_cast<double>(ones) / static_cast<double>(rows.size());
      node.majority = 2 * ones > rows.size() ? 1 : 0;
    }
    const bool pure = ones == 0 || ones == rows.size();
    if (pure || depth >= max_depth || rows.size() < 2 * min_leaf) return idx;

    const auto split = kernels::best_split_parallel(x, labels, rows, min_leaf);
    if (!split) return idx;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) {
      (x.at(r, split->feature) <= split->threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const std::int32_t l = build(left, depth + 1);
    const std::int32_t rr = build(right, depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    node.is_leaf = false;
    node.feature = split->feature;
    node.threshold = split->threshold;
    node.left = l;
    node.right = rr;
    return idx;
  }
};

}  // namespace

int DecisionTree::predict(std::span<const double> x) const { return find_leaf(*this, x).majority; }

double DecisionTree::predict_proba(std::span<const double> x) const {
  return find_leaf(*this, x).p_class1;
}

int tree_predict(const DecisionTree& tree, const Sample& sample) {
  return tree.predict(sample.features);
}

DecisionTree fit_cart(const Dataset& data, std::size_t max_depth, std::size_t min_leaf) {
  if (data.empty()) throw ModelError("cannot fit a tree on empty data");
  if (max_depth < 1) throw ModelError("max_depth must be >= 1");
  if (min_leaf < 1) throw ModelError("min_leaf must be >= 1");
  const std::size_t cols = data.dimension;
  std::vector<double> values;
  values.reserve(data.size() * cols);
  std::vector<int> labels;
  labels.reserve(data.size());
  for (const auto& s : data.samples) {
    if (!s.label) throw ModelError("sample " + std::to_string(s.id) + " is unlabeled");
    if (s.features.size() != cols) throw ModelError("sample " + std::to_string(s.id) + " has wrong dimension");
    values.insert(values.end(), s.features.begin(), s.features.end());
    labels.push_back(*s.label);
  }
  kernels::FeatureMatrix x{values, data.size(), cols};
  DecisionTree tree;
  tree.max_depth = max_depth;
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  CartBuilder builder{x, labels, max_depth, min_leaf, tree};
  builder.build(rows, 0);
  return tree;
}

namespace {

RuleAst node_to_rule(const DecisionTree& tree, std::int32_t i) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(i)];
  if (n.is_leaf) return RuleAst::leaf(n.majority == 1 ? Verdict::Class1 : Verdict::Class0);
  return RuleAst::branch(RuleAst::compare(n.feature, CmpOp::LessEq, n.threshold),
                         node_to_rule(tree, n.left), node_to_rule(tree, n.right));
}

}  // namespace

RuleAst tree_to_rule(const DecisionTree& tree) {
  if (tree.nodes.empty()) throw ModelError("empty decision tree");
  return node_to_rule(tree, 0);
}

}  // namespace rulecast
