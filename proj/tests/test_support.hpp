#pragma once

// Shared fixtures for the unit tests: a random rule generator, a reference
// rule interpreter written independently of the library's evaluator, and
// scratch directories.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <regex>
#include <string>
#include <unistd.h>
#include <vector>

#include "rulecast/data.hpp"
#include "rulecast/rng.hpp"
#include "rulecast/rule_dsl.hpp"

namespace rulecast::fixtures {

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("rulecast_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Patterns that behave the same under ECMAScript std::regex and the
// library's engine.
inline const std::vector<std::string>& regex_pool() {
  static const std::vector<std::string> pool = {
      "ab+",     "(it's|it is) the best", "^a",   "c$",        "[abc]x", "a.c",
      "x{2}",    "(?:ab)*c",             "[^a ]b", "\\d",      "b?c+",   "the (best|worst)",
      "^$",      "a|b|c",                "[a-c]{2,3}", "\\s\\w"};
  return pool;
}

inline const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> pool = {"a",    "b",   "c",  "ab",    "abc", "It's", "the",
                                                "BEST", "it",  "is", "x",     "xx",  "1",    "cb",
                                                "worst", "ac", "axc", "bbb", "\"q\"", "back\\slash"};
  return pool;
}

class AstGenerator {
 public:
  explicit AstGenerator(std::uint64_t seed) : rng_(seed, 0xa57) {}

  // Valid rule within the default parser limits.
  RuleAst rule() {
    while (true) {
      RuleAst r = rule_at(static_cast<int>(rng_.below(5)));
      if (node_count(r) <= 64 && rule_depth(r) <= 8) return r;
    }
  }

  // Sample with four numeric features (sometimes equal to a comparison
  // constant) and a short text.
  Sample sample(Rng& rng) const {
    Sample s;
    for (int f = 0; f < kFeatures; ++f) {
      s.features.push_back(rng.below(3) == 0 ? constants()[rng.below(constants().size())]
                                             : 8.0 * rng.uniform() - 4.0);
    }
    std::string text;
    const auto n = rng.below(7);
    for (std::uint64_t i = 0; i < n; ++i) {
      if (i) text.push_back(' ');
      text += word_pool()[rng.below(word_pool().size())];
    }
    s.text = text;
    return s;
  }

  static constexpr int kFeatures = 4;

 private:
  static const std::vector<double>& constants() {
    static const std::vector<double> c = {0.0, 1.0, -2.5, 3.0, 0.1, 1e-3, -0.75, 2.0};
    return c;
  }

  double constant() {
    switch (rng_.below(3)) {
      case 0: return constants()[rng_.below(constants().size())];
      case 1: return 10.0 * rng_.normal();  // full-precision doubles
      default: return static_cast<double>(static_cast<int>(rng_.below(21)) - 10);
    }
  }

  std::string word() {
    std::string w = word_pool()[rng_.below(word_pool().size())];
    if (rng_.below(4) == 0) w += " " + word_pool()[rng_.below(word_pool().size())];
    return w;
  }

  Verdict outcome() { return static_cast<Verdict>(rng_.below(3)); }

  RuleAst condition(int budget) {
    const auto pick = budget <= 0 ? rng_.below(3) : rng_.below(6);
    switch (pick) {
      case 0:
        return RuleAst::compare(rng_.below(kFeatures), static_cast<CmpOp>(rng_.below(6)), constant());
      case 1:
        return RuleAst::contains(word());
      case 2:
        return RuleAst::matches(regex_pool()[rng_.below(regex_pool().size())]);
      case 3:
      case 4: {
        std::vector<RuleAst> kids;
        const auto n = 2 + rng_.below(2);
        for (std::uint64_t i = 0; i < n; ++i) kids.push_back(condition(budget - 1));
        return pick == 3 ? RuleAst::all_of(std::move(kids)) : RuleAst::any_of(std::move(kids));
      }
      default:
        return RuleAst::negate(condition(budget - 1));
    }
  }

  RuleAst rule_at(int depth) {
    if (depth == 0 || rng_.below(4) == 0) return RuleAst::leaf(outcome());
    return RuleAst::branch(condition(static_cast<int>(rng_.below(3))), rule_at(depth - 1),
                           rule_at(depth - 1));
  }

  Rng rng_;
};

// Naive recursive interpreter: lowercases the text itself and delegates
// pattern search to std::regex.
inline bool reference_holds(const RuleAst& n, const Sample& s) {
  auto lower = [](std::string t) {
    for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return t;
  };
  switch (n.kind) {
    case NodeKind::Comparison: {
      const double x = s.features.at(n.feature);
      switch (n.op) {
        case CmpOp::Less: return x < n.value;
        case CmpOp::LessEq: return !(x > n.value);
        case CmpOp::Greater: return x > n.value;
        case CmpOp::GreaterEq: return !(x < n.value);
        case CmpOp::Equal: return !(x < n.value) && !(x > n.value);
        case CmpOp::NotEqual: return x < n.value || x > n.value;
      }
      return false;
    }
    case NodeKind::Contains:
      return lower(s.text.value()).find(lower(n.literal)) != std::string::npos;
    case NodeKind::Matches:
      return std::regex_search(lower(s.text.value()),
                               std::regex(n.literal, std::regex::ECMAScript | std::regex::icase));
    case NodeKind::And: {
      bool all = true;
      for (const auto& c : n.children) all = reference_holds(c, s) && all;
      return all;
    }
    case NodeKind::Or: {
      bool any = false;
      for (const auto& c : n.children) any = reference_holds(c, s) || any;
      return any;
    }
    case NodeKind::Not:
      return !reference_holds(n.children.at(0), s);
    default:
      throw std::logic_error("not a condition");
  }
}

inline Verdict reference_evaluate(const RuleAst& n, const Sample& s) {
  if (n.kind == NodeKind::Leaf) return n.outcome;
  return reference_holds(n.children.at(0), s) ? reference_evaluate(n.children.at(1), s)
                                               : reference_evaluate(n.children.at(2), s);
}

}  // namespace rulecast::fixtures
