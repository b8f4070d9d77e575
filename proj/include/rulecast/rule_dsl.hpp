#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rulecast/regex.hpp"

namespace rulecast {

struct Sample;

enum class Verdict : std::uint8_t { Class0, Class1, Abstain };

// Class1 -> +1, Class0 -> -1, Abstain -> 0.
constexpr double signed_value(Verdict v) noexcept {
  switch (v) {
    case Verdict::Class1: return 1.0;
    case Verdict::Class0: return -1.0;
    case Verdict::Abstain: return 0.0;
  }
  return 0.0;
}

std::string_view to_string(Verdict v) noexcept;

enum class CmpOp : std::uint8_t { Less, LessEq, Greater, GreaterEq, Equal, NotEqual };

std::string_view to_string(CmpOp op) noexcept;

enum class NodeKind : std::uint8_t {
  Comparison,
  Contains,
  Matches,
  And,
  Or,
  Not,
  Leaf,
  Branch,
};

/// Decision rule syntax tree. Conditions (Comparison, Contains, Matches,
/// And, Or, Not) appear only in Branch condition slots; Leaf and Branch form
/// the fast-and-frugal tree around them.
///
/// Children layout: And/Or hold >= 2 conditions, Not holds 1, Branch holds
/// exactly {condition, then, else}.
struct RuleAst {
  NodeKind kind = NodeKind::Leaf;

  std::size_t feature = 0;
  std::string feature_name;  // set when the source used a named feature
  CmpOp op = CmpOp::LessEq;
  double value = 0.0;

  std::string literal;                  // Contains needle / Matches pattern
  std::shared_ptr<const Regex> regex;   // compiled Matches pattern

  Verdict outcome = Verdict::Abstain;

  std::vector<RuleAst> children;

  static RuleAst leaf(Verdict v);
  static RuleAst compare(std::size_t feature, CmpOp op, double value);
  static RuleAst contains(std::string needle);
  static RuleAst matches(std::string pattern);  // throws RegexError
  static RuleAst all_of(std::vector<RuleAst> conditions);
  static RuleAst any_of(std::vector<RuleAst> conditions);
  static RuleAst negate(RuleAst condition);
  static RuleAst branch(RuleAst condition, RuleAst then_rule, RuleAst else_rule);

  bool is_condition() const noexcept;

  const RuleAst& condition() const { return children.at(0); }
  const RuleAst& then_branch() const { return children.at(1); }
  const RuleAst& else_branch() const { return children.at(2); }

  friend bool operator==(const RuleAst& a, const RuleAst& b);
};

struct ParserLimits {
  std::size_t max_depth = 8;
  std::size_t max_nodes = 64;
  std::size_t max_bytes = 64 * 1024;
  // Optional names; `name` resolves to its position, `x<k>` always works.
  std::vector<std::string> feature_names;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column);
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::size_t line_;
  std::size_t column_;
};

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RuleAst parse_rule(std::string_view text, const ParserLimits& limits = {});
std::string serialize(const RuleAst& ast);

// Maximum number of Branch nodes on a root-to-leaf path (a Leaf has depth 0).
std::size_t rule_depth(const RuleAst& ast) noexcept;
std::size_t node_count(const RuleAst& ast) noexcept;

// Checks structural invariants and limits; throws std::invalid_argument.
void validate(const RuleAst& ast, const ParserLimits& limits = {});

Verdict evaluate(const RuleAst& ast, const Sample& sample);
double signed_vote(const RuleAst& ast, const Sample& sample);

/// One elicited rule plus where it came from.
struct FeedbackRule {
  std::shared_ptr<const RuleAst> rule;
  std::string rule_id;
  std::string author_id;
  std::optional<std::uint64_t> anchor;  // sample the rule was elicited on
  std::uint64_t created_at = 0;
};

FeedbackRule make_feedback_rule(RuleAst ast, std::string rule_id, std::string author_id,
                                std::optional<std::uint64_t> anchor, std::uint64_t created_at);

// Rule log line: rule_id \t author_id \t anchor \t rule text ('-' = no anchor).
std::string format_rule_log_line(const FeedbackRule& rule);
FeedbackRule parse_rule_log_line(std::string_view line, std::uint64_t created_at,
                                 const ParserLimits& limits = {});
std::vector<FeedbackRule> read_rule_log(const std::string& path, const ParserLimits& limits = {});
void write_rule_log(const std::string& path, const std::vector<FeedbackRule>& rules);

}  // namespace rulecast
