#pragma once

// Data-parallel kernels. Every kernel has a serial reference next to the
// OpenMP version; both must produce bitwise-identical results for any
// thread count.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rulecast/data.hpp"

namespace rulecast {

struct MixtureClassifier;
struct FeedbackEnsemble;

namespace kernels {

// ---- CART split search ----------------------------------------------------

struct SplitCandidate {
  std::size_t feature = 0;
  double threshold = 0.0;
  // Score to maximize: (l0^2 + l1^2) / nl + (r0^2 + r1^2) / nr kept as an
  // exact fraction num / den. Maximizing it minimizes weighted Gini.
  unsigned __int128 num = 0;
  unsigned __int128 den = 1;
};

// True when a beats b (higher score; ties keep the earlier candidate).
bool better_split(const SplitCandidate& a, const SplitCandidate& b) noexcept;

// Row-major view of a numeric design matrix.
struct FeatureMatrix {
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double at(std::size_t r, std::size_t c) const noexcept { return values[r * cols + c]; }
};

std::optional<SplitCandidate> best_split_for_feature(const FeatureMatrix& x,
                                                     std::span<const int> labels,
                                                     std::span<const std::size_t> rows,
                                                     std::size_t feature, std::size_t min_leaf);

std::optional<SplitCandidate> best_split_serial(const FeatureMatrix& x, std::span<const int> labels,
                                                std::span<const std::size_t> rows,
                                                std::size_t min_leaf);
std::optional<SplitCandidate> best_split_parallel(const FeatureMatrix& x,
                                                  std::span<const int> labels,
                                                  std::span<const std::size_t> rows,
                                                  std::size_t min_leaf);

// ---- Batch scoring -----------------------------------------------------------

std::vector<double> predict_batch_serial(const MixtureClassifier& model, const Dataset& data);
std::vector<double> predict_batch_parallel(const MixtureClassifier& model, const Dataset& data);

// votes[i * n + j] = f_i(x_j) * sim(anchor_i, x_j) for F rules and n samples.
std::vector<double> vote_matrix_serial(const FeedbackEnsemble& ensemble, const Dataset& data);
std::vector<double> vote_matrix_parallel(const FeedbackEnsemble& ensemble, const Dataset& data);

// ---- Bootstrap -------------------------------------------------------------

// Accuracy of each of `resamples` bootstrap resamples of a 0/1 correctness
// vector. Resample b draws from Rng(seed, b).
std::vector<double> bootstrap_accuracies_serial(std::span<const std::uint8_t> correct,
                                                std::size_t resamples, std::uint64_t seed);
std::vector<double> bootstrap_accuracies_parallel(std::span<const std::uint8_t> correct,
                                                  std::size_t resamples, std::uint64_t seed);

}  // namespace kernels
}  // namespace rulecast
