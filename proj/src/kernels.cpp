#include "rulecast/kernels.hpp"

#include <algorithm>
#include <exception>
#include <numeric>

#include <omp.h>

#include "rulecast/ensemble.hpp"
#include "rulecast/rng.hpp"

namespace rulecast::kernels {

namespace {

// Exceptions must not escape an OpenMP region; the first one is rethrown
// after the loop.
class ErrorSlot {
 public:
  template <typename F>
  void run(F&& f) noexcept {
    try {
      f();
    } catch (...) {
#pragma omp critical(rulecast_error_slot)
      if (!error_) error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::exception_ptr error_;
};

}  // namespace

bool better_split(const SplitCandidate& a, const SplitCandidate& b) noexcept {
  return a.num * b.den > b.num * a.den;
}

std::optional<SplitCandidate> best_split_for_feature(const FeatureMatrix& x,
                                                     std::span<const int> labels,
                                                     std::span<const std::size_t> rows,
                                                     std::size_t feature, std::size_t min_leaf) {
  const std::size_t n = rows.size();
  if (n < 2) return std::nullopt;
  std::vector<std::size_t> sorted(rows.begin(), rows.end());
  std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
    const double va = x.at(a, feature), vb = x.at(b, feature);
    return va < vb || (va == vb && a < b);
  });
  std::uint64_t total1 = 0;
  for (std::size_t r : sorted) total1 += labels[r] == 1;
  const std::uint64_t total0 = n - total1;

  std::optional<SplitCandidate> best;
  std::uint64_t l0 = 0, l1 = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    (labels[sorted[i]] == 1 ? l1 : l0) += 1;
    const double lo = x.at(sorted[i], feature);
    const double hi = x.at(sorted[i + 1], feature);
    if (!(lo < hi)) continue;
    const std::uint64_t nl = i + 1, nr = n - nl;
    if (nl < min_leaf || nr < min_leaf) continue;
    const std::uint64_t r0 = total0 - l0, r1 = total1 - l1;
    SplitCandidate c;
    c.feature = feature;
    c.threshold = std::midpoint(lo, hi);
    if (c.threshold >= hi) c.threshold = lo;
    using U = unsigned __int128;
    c.num = (U(l0) * l0 + U(l1) * l1) * nr + (U(r0) * r0 + U(r1) * r1) * nl;
    c.den = U(nl) * nr;
    if (!best || better_split(c, *best)) best = c;
  }
  return best;
}

std::optional<SplitCandidate> best_split_serial(const FeatureMatrix& x, std::span<const int> labels,
                                                std::span<const std::size_t> rows,
                                                std::size_t min_leaf) {
  std::optional<SplitCandidate> best;
  for (std::size_t f = 0; f < x.cols; ++f) {
    auto c = best_split_for_feature(x, labels, rows, f, min_leaf);
    if (c && (!best || better_split(*c, *best))) best = c;
  }
  return best;
}

std::optional<SplitCandidate> best_split_parallel(const FeatureMatrix& x,
                                                  std::span<const int> labels,
                                                  std::span<const std::size_t> rows,
                                                  std::size_t min_leaf) {
  std::vector<std::optional<SplitCandidate>> per_feature(x.cols);
  ErrorSlot errors;
  const auto cols = static_cast<std::int64_t>(x.cols);
#pragma omp parallel for schedule(dynamic) if (x.cols > 1 && rows.size() > 256)
  for (std::int64_t f = 0; f < cols; ++f) {
    errors.run([&] {
      per_feature[static_cast<std::size_t>(f)] =
          best_split_for_feature(x, labels, rows, static_cast<std::size_t>(f), min_leaf);
    });
  }
  errors.rethrow();
  // Reduce in feature order so ties resolve exactly as in the serial scan.
  std::optional<SplitCandidate> best;
  for (const auto& c : per_feature) {
    if (c && (!best || better_split(*c, *best))) best = c;
  }
  return best;
}

std::vector<double> predict_batch_serial(const MixtureClassifier& model, const Dataset& data) {
  std::vector<double> out(data.size());
  for (std::size_t j = 0; j < data.size(); ++j) out[j] = mixture_predict(model, data.samples[j]);
  return out;
}

std::vector<double> predict_batch_parallel(const MixtureClassifier& model, const Dataset& data) {
  std::vector<double> out(data.size());
  ErrorSlot errors;
  const auto n = static_cast<std::int64_t>(data.size());
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::int64_t j = 0; j < n; ++j) {
    errors.run([&] {
      out[static_cast<std::size_t>(j)] = mixture_predict(model, data.samples[static_cast<std::size_t>(j)]);
    });
  }
  errors.rethrow();
  return out;
}

std::vector<double> vote_matrix_serial(const FeedbackEnsemble& ensemble, const Dataset& data) {
  const std::size_t n = data.size();
  std::vector<double> votes(ensemble.size() * n);
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) votes[i * n + j] = ensemble.vote(i, data.samples[j]);
  }
  return votes;
}

std::vector<double> vote_matrix_parallel(const FeedbackEnsemble& ensemble, const Dataset& data) {
  const std::size_t n = data.size();
  std::vector<double> votes(ensemble.size() * n);
  ErrorSlot errors;
  const auto rules = static_cast<std::int64_t>(ensemble.size());
#pragma omp parallel for schedule(dynamic, 4) if (rules * static_cast<std::int64_t>(n) > 4096)
  for (std::int64_t i = 0; i < rules; ++i) {
    errors.run([&] {
      const auto r = static_cast<std::size_t>(i);
      for (std::size_t j = 0; j < n; ++j) votes[r * n + j] = ensemble.vote(r, data.samples[j]);
    });
  }
  errors.rethrow();
  return votes;
}

namespace {

double one_resample(std::span<const std::uint8_t> correct, std::uint64_t seed, std::size_t b) {
  Rng rng(seed, b);
  const std::size_t n = correct.size();
  std::uint64_t hits = 0;
  for (std::size_t k = 0; k < n; ++k) hits += correct[static_cast<std::size_t>(rng.below(n))];
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace

std::vector<double> bootstrap_accuracies_serial(std::span<const std::uint8_t> correct,
                                                std::size_t resamples, std::uint64_t seed) {
  std::vector<double> out(resamples, 0.0);
  if (correct.empty()) return out;
  for (std::size_t b = 0; b < resamples; ++b) out[b] = one_resample(correct, seed, b);
  return out;
}

std::vector<double> bootstrap_accuracies_parallel(std::span<const std::uint8_t> correct,
                                                  std::size_t resamples, std::uint64_t seed) {
  std::vector<double> out(resamples, 0.0);
  if (correct.empty()) return out;
  const auto count = static_cast<std::int64_t>(resamples);
#pragma omp parallel for schedule(static) if (correct.size() * resamples > 8192)
  for (std::int64_t b = 0; b < count; ++b) {
    out[static_cast<std::size_t>(b)] = one_resample(correct, seed, static_cast<std::size_t>(b));
  }
  return out;
}

}  // namespace rulecast::kernels
