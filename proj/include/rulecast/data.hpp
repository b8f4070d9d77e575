#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rulecast {

struct Sample {
  std::uint64_t id = 0;
  std::vector<double> features;  // empty = no numeric features
  std::optional<std::string> text;
  std::optional<int> label;
  // Mixture component the sample was drawn from (synthetic data only).
  std::optional<int> component;

  bool has_features() const noexcept { return !features.empty(); }
};

enum class Provenance : std::uint8_t { TrainDistr, TestDistr, Mixed, External };

struct Dataset {
  std::vector<Sample> samples;
  std::size_t dimension = 0;
  Provenance provenance = Provenance::External;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  std::size_t count_label(int label) const noexcept;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws DataError on duplicate ids, bad labels, ragged or missing content.
void validate(const Dataset& data);

Dataset concat(const Dataset& a, const Dataset& b, Provenance provenance = Provenance::Mixed);

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

/// Two class-conditional Gaussians for the historical split and two (moved)
/// ones for the shifted split.
struct SwitchingGaussianSpec {
  Vec2 mu1{0.0, 0.0};        // train, y = 1
  Vec2 mu2{6.0, 0.0};        // train, y = 0
  Vec2 mu1_test{6.0, 6.0};   // test, y = 1
  Vec2 mu2_test{0.0, 6.0};   // test, y = 0
  Mat2 sigma1{{{1.0, 0.0}, {0.0, 1.0}}};
  Mat2 sigma2{{{1.0, 0.0}, {0.0, 1.0}}};
  Mat2 sigma1_test{{{1.0, 0.0}, {0.0, 1.0}}};
  Mat2 sigma2_test{{{1.0, 0.0}, {0.0, 1.0}}};
  std::size_t n_per_cluster = 100;
  std::uint64_t seed = 0;
};

struct SplitPair {
  Dataset train;
  Dataset test;
};

/// Train ids are 0..2n-1 (class 1 first), test ids 2n..4n-1. Components:
/// 0 = train y1, 1 = train y0, 2 = test y1, 3 = test y0.
SplitPair generate_switching(const SwitchingGaussianSpec& spec);

// Lower Cholesky factor; throws DataError if the matrix is not SPD.
Mat2 cholesky(const Mat2& m);

/// Uniform draw without replacement of ceil(fraction * (|a| + |b|)) samples
/// from a ++ b.
Dataset mix(const Dataset& a, const Dataset& b, double fraction, std::uint64_t seed);

// Uniform draw without replacement from a single dataset.
Dataset subsample(const Dataset& data, double fraction, std::uint64_t seed);

enum class TermWeighting : std::uint8_t { Binary, TermFrequency };

struct FeaturizerConfig {
  std::size_t dimension = std::size_t{1} << 14;
  TermWeighting weighting = TermWeighting::Binary;
};

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
// Lowercases ASCII and splits on anything that is not alphanumeric.
std::vector<std::string> tokenize(std::string_view text);
std::vector<double> featurize(std::string_view text, const FeaturizerConfig& config);
Dataset featurize_text(const Dataset& corpus, const FeaturizerConfig& config);

/// Lines `label<TAB>text` or `label<TAB>f0,f1,...`; blank lines and lines
/// starting with '#' are skipped. Sample ids are 1-based line numbers.
Dataset load_tsv(const std::string& path);
Dataset parse_tsv(std::string_view content, const std::string& source_name = "<memory>");

std::string to_lower_ascii(std::string_view s);

}  // namespace rulecast
