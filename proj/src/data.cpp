#include "rulecast/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "rulecast/rng.hpp"

namespace rulecast {

std::size_t Dataset::count_label(int label) const noexcept {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [&](const Sample& s) {
    return s.label && *s.label == label;
  }));
}

void validate(const Dataset& data) {
  std::unordered_set<std::uint64_t> ids;
  ids.reserve(data.size());
  for (const auto& s : data.samples) {
    if (!ids.insert(s.id).second) throw DataError("duplicate sample id " + std::to_string(s.id));
    if (s.label && *s.label != 0 && *s.label != 1) {
      throw DataError("sample " + std::to_string(s.id) + " has label outside {0,1}");
    }
    if (!s.has_features() && !s.text) {
      throw DataError("sample " + std::to_string(s.id) + " has neither features nor text");
    }
    if (s.has_features() && s.features.size() != data.dimension) {
      throw DataError("sample " + std::to_string(s.id) + " has " +
                      std::to_string(s.features.size()) + " features, dataset dimension is " +
                      std::to_string(data.dimension));
    }
  }
}

Dataset concat(const Dataset& a, const Dataset& b, Provenance provenance) {
  if (a.dimension != b.dimension) {
    throw DataError("dimension mismatch: " + std::to_string(a.dimension) + " vs " +
                    std::to_string(b.dimension));
  }
  Dataset out;
  out.dimension = a.dimension;
  out.provenance = provenance;
  out.samples.reserve(a.size() + b.size());
  out.samples.insert(out.samples.end(), a.samples.begin(), a.samples.end());
  out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
  return out;
}

Mat2 cholesky(const Mat2& m) {
  const double a = m[0][0], b = m[0][1], c = m[1][0], d = m[1][1];
  if (!(std::isfinite(a) && std::isfinite(b) && std::isfinite(c) && std::isfinite(d))) {
    throw DataError("covariance has non-finite entries");
  }
  if (b != c) throw DataError("covariance is not symmetric");
  if (!(a > 0.0)) throw DataError("covariance is not positive definite");
  const double l00 = std::sqrt(a);
  const double l10 = b / l00;
  const double rem = d - l10 * l10;
  if (!(rem > 0.0)) throw DataError("covariance is not positive definite");
  return Mat2{{{l00, 0.0}, {l10, std::sqrt(rem)}}};
}

namespace {

void draw_cluster(Dataset& out, const Vec2& mu, const Mat2& sigma, int label, int component,
                  std::size_t n, std::uint64_t& next_id, Rng& rng) {
  const Mat2 l = cholesky(sigma);
  for (std::size_t i = 0; i < n; ++i) {
    const double z0 = rng.normal();
    const double z1 = rng.normal();
    Sample s;
    s.id = next_id++;
    s.features = {mu[0] + l[0][0] * z0, mu[1] + l[1][0] * z0 + l[1][1] * z1};
    s.label = label;
    s.component = component;
    out.samples.push_back(std::move(s));
  }
}

}  // namespace

SplitPair generate_switching(const SwitchingGaussianSpec& spec) {
  if (spec.n_per_cluster < 1) throw DataError("n_per_cluster must be >= 1");
  // Validate every covariance before drawing anything.
  for (const Mat2* m : {&spec.sigma1, &spec.sigma2, &spec.sigma1_test, &spec.sigma2_test}) {
    cholesky(*m);
  }
  SplitPair out;
  out.train.dimension = out.test.dimension = 2;
  out.train.provenance = Provenance::TrainDistr;
  out.test.provenance = Provenance::TestDistr;
  out.train.samples.reserve(2 * spec.n_per_cluster);
  out.test.samples.reserve(2 * spec.n_per_cluster);

  std::uint64_t next_id = 0;
  const std::size_t n = spec.n_per_cluster;
  Rng c1(spec.seed, 1), c2(spec.seed, 2), c3(spec.seed, 3), c4(spec.seed, 4);
  draw_cluster(out.train, spec.mu1, spec.sigma1, 1, 0, n, next_id, c1);
  draw_cluster(out.train, spec.mu2, spec.sigma2, 0, 1, n, next_id, c2);
  draw_cluster(out.test, spec.mu1_test, spec.sigma1_test, 1, 2, n, next_id, c3);
  draw_cluster(out.test, spec.mu2_test, spec.sigma2_test, 0, 3, n, next_id, c4);
  return out;
}

Dataset subsample(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw DataError("fraction must lie in [0, 1]");
  // Guard against 0.3 * 400 landing a hair above 120.
  const double raw = fraction * static_cast<double>(data.size());
  const auto k = std::min(data.size(), static_cast<std::size_t>(std::ceil(raw - 1e-9)));

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, 0x6d6978);
  // Partial Fisher-Yates: the first k slots are a uniform k-subset in random order.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  Dataset out;
  out.dimension = data.dimension;
  out.provenance = Provenance::Mixed;
  out.samples.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.samples.push_back(data.samples[order[i]]);
  return out;
}

Dataset mix(const Dataset& a, const Dataset& b, double fraction, std::uint64_t seed) {
  return subsample(concat(a, b), fraction, seed);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::vector<double> featurize(std::string_view text, const FeaturizerConfig& config) {
  const std::size_t dim = config.dimension;
  if (dim == 0 || (dim & (dim - 1)) != 0) {
    throw DataError("featurizer dimension must be a power of two");
  }
  std::vector<double> v(dim, 0.0);
  for (const auto& tok : tokenize(text)) {
    const std::size_t bucket = fnv1a64(tok) & (dim - 1);
    if (config.weighting == TermWeighting::Binary) {
      v[bucket] = 1.0;
    } else {
      v[bucket] += 1.0;
    }
  }
  return v;
}

Dataset featurize_text(const Dataset& corpus, const FeaturizerConfig& config) {
  Dataset out;
  out.dimension = config.dimension;
  out.provenance = corpus.provenance;
  out.samples.reserve(corpus.size());
  for (const auto& s : corpus.samples) {
    if (!s.text) throw DataError("sample " + std::to_string(s.id) + " has no text to featurize");
    Sample t = s;
    t.features = featurize(*s.text, config);
    out.samples.push_back(std::move(t));
  }
  return out;
}

namespace {

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

// A payload is numeric when every comma-separated field parses as a number.
bool parse_feature_row(std::string_view payload, std::vector<double>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const auto comma = payload.find(',', start);
    double v;
    if (!parse_double(payload.substr(start, comma - start), v)) return false;
    out.push_back(v);
    if (comma == std::string_view::npos) return true;
    start = comma + 1;
  }
}

}  // namespace

Dataset parse_tsv(std::string_view content, const std::string& source_name) {
  Dataset data;
  bool dim_known = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto bad = [&](const std::string& msg) {
    return DataError(source_name + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (pos <= content.size()) {
    const auto nl = content.find('\n', pos);
    std::string_view line = content.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? content.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw bad("expected label<TAB>payload");
    const std::string_view label = line.substr(0, tab);
    const std::string_view payload = line.substr(tab + 1);
    Sample s;
    s.id = line_no;
    if (label == "0") {
      s.label = 0;
    } else if (label == "1") {
      s.label = 1;
    } else {
      throw bad("label '" + std::string(label) + "' is not 0 or 1");
    }
    std::vector<double> row;
    if (!payload.empty() && parse_feature_row(payload, row)) {
      if (!dim_known) {
        data.dimension = row.size();
        dim_known = true;
      } else if (row.size() != data.dimension) {
        throw bad("ragged feature row: " + std::to_string(row.size()) + " values, expected " +
                  std::to_string(data.dimension));
      }
      s.features = std::move(row);
    } else {
      s.text = std::string(payload);
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

Dataset load_tsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_tsv(ss.str(), path);
}

}  // namespace rulecast
