#include "rulecast/rule_dsl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rulecast/data.hpp"

namespace rulecast {

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::Class0: return "negative";
    case Verdict::Class1: return "positive";
    case Verdict::Abstain: return "abstain";
  }
  return "abstain";
}

std::string_view to_string(CmpOp op) noexcept {
  switch (op) {
    case CmpOp::Less: return "<";
    case CmpOp::LessEq: return "<=";
    case CmpOp::Greater: return ">";
    case CmpOp::GreaterEq: return ">=";
    case CmpOp::Equal: return "==";
    case CmpOp::NotEqual: return "!=";
  }
  return "<=";
}

namespace {

void check_literal(std::string_view s) {
  for (char c : s) {
    if (static_cast<unsigned char>(c) < 0x20) {
      throw std::invalid_argument("control characters are not allowed in string literals");
    }
  }
}

}  // namespace

RuleAst RuleAst::leaf(Verdict v) {
  RuleAst n;
  n.kind = NodeKind::Leaf;
  n.outcome = v;
  return n;
}

RuleAst RuleAst::compare(std::size_t feature, CmpOp op, double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("comparison constant must be finite");
  RuleAst n;
  n.kind = NodeKind::Comparison;
  n.feature = feature;
  n.op = op;
  n.value = value;
  return n;
}

RuleAst RuleAst::contains(std::string needle) {
  check_literal(needle);
  RuleAst n;
  n.kind = NodeKind::Contains;
  n.literal = std::move(needle);
  return n;
}

RuleAst RuleAst::matches(std::string pattern) {
  check_literal(pattern);
  RuleAst n;
  n.kind = NodeKind::Matches;
  n.regex = std::make_shared<const Regex>(Regex::compile(pattern));
  n.literal = std::move(pattern);
  return n;
}

RuleAst RuleAst::all_of(std::vector<RuleAst> conditions) {
  if (conditions.size() < 2) throw std::invalid_argument("'and' needs at least two operands");
  RuleAst n;
  n.kind = NodeKind::And;
  n.children = std::move(conditions);
  return n;
}

RuleAst RuleAst::any_of(std::vector<RuleAst> conditions) {
  if (conditions.size() < 2) throw std::invalid_argument("'or' needs at least two operands");
  RuleAst n;
  n.kind = NodeKind::Or;
  n.children = std::move(conditions);
  return n;
}

RuleAst RuleAst::negate(RuleAst condition) {
  RuleAst n;
  n.kind = NodeKind::Not;
  n.children.push_back(std::move(condition));
  return n;
}

RuleAst RuleAst::branch(RuleAst condition, RuleAst then_rule, RuleAst else_rule) {
  RuleAst n;
  n.kind = NodeKind::Branch;
  n.children.reserve(3);
  n.children.push_back(std::move(condition));
  n.children.push_back(std::move(then_rule));
  n.children.push_back(std::move(else_rule));
  return n;
}

bool RuleAst::is_condition() const noexcept {
  return kind != NodeKind::Leaf && kind != NodeKind::Branch;
}

bool operator==(const RuleAst& a, const RuleAst& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case NodeKind::Comparison:
      return a.feature == b.feature && a.op == b.op && a.value == b.value;
    case NodeKind::Contains:
    case NodeKind::Matches:
      return a.literal == b.literal;
    case NodeKind::Leaf:
      return a.outcome == b.outcome;
    default:
      return a.children == b.children;
  }
}

ParseError::ParseError(const std::string& message, std::size_t line, std::size_t column)
    : std::runtime_error(message + " at line " + std::to_string(line) + ", column " +
                         std::to_string(column)),
      message_(message),
      line_(line),
      column_(column) {}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok { Ident, Number, String, Op, Arrow, LParen, RParen, End };

struct Token {
  Tok kind;
  std::string text;  // identifier / number lexeme / decoded string
  CmpOp op = CmpOp::LessEq;
  std::size_t offset = 0;
  std::size_t line = 1;
  std::size_t column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      Token t;
      t.offset = pos_;
      t.line = line_;
      t.column = column_;
      if (pos_ >= src_.size()) {
        t.kind = Tok::End;
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        t.kind = Tok::Ident;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
          t.text.push_back(src_[pos_]);
          advance();
        }
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
                 ((c == '-' || c == '+') && pos_ + 1 < src_.size() &&
                  (std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])) ||
                   src_[pos_ + 1] == '.'))) {
        t.kind = Tok::Number;
        t.text = number();
      } else if (c == '"') {
        t.kind = Tok::String;
        t.text = string_literal(t);
      } else if (c == '(') {
        t.kind = Tok::LParen;
        advance();
      } else if (c == ')') {
        t.kind = Tok::RParen;
        advance();
      } else if (c == '=' && peek(1) == '>') {
        t.kind = Tok::Arrow;
        advance();
        advance();
      } else if (c == '<' || c == '>' || c == '=' || c == '!') {
        t.kind = Tok::Op;
        const char n = peek(1);
        if (c == '<') {
          t.op = n == '=' ? CmpOp::LessEq : CmpOp::Less;
        } else if (c == '>') {
          t.op = n == '=' ? CmpOp::GreaterEq : CmpOp::Greater;
        } else if (n == '=') {
          t.op = c == '=' ? CmpOp::Equal : CmpOp::NotEqual;
        } else {
          throw ParseError(std::string("unexpected character '") + c + "'", line_, column_);
        }
        advance();
        if (n == '=') advance();
      } else {
        throw ParseError(std::string("unexpected character '") + c + "'", line_, column_);
      }
      out.push_back(std::move(t));
    }
  }

 private:
  char peek(std::size_t ahead) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance();
  }

  std::string number() {
    std::string s;
    auto take_digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        s.push_back(src_[pos_]);
        advance();
      }
    };
    if (src_[pos_] == '-' || src_[pos_] == '+') {
      s.push_back(src_[pos_]);
      advance();
    }
    take_digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      s.push_back('.');
      advance();
      take_digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      const char n = peek(1);
      const bool signed_exp = (n == '+' || n == '-') &&
                              std::isdigit(static_cast<unsigned char>(peek(2)));
      if (std::isdigit(static_cast<unsigned char>(n)) || signed_exp) {
        s.push_back('e');
        advance();
        if (signed_exp) {
          s.push_back(src_[pos_]);
          advance();
        }
        take_digits();
      }
    }
    return s;
  }

  std::string string_literal(const Token& start) {
    advance();  // opening quote
    std::string s;
    while (true) {
      if (pos_ >= src_.size()) {
        throw ParseError("unterminated string literal", start.line, start.column);
      }
      const char c = src_[pos_];
      if (static_cast<unsigned char>(c) < 0x20) {
        throw ParseError("control character in string literal", line_, column_);
      }
      if (c == '"') {
        advance();
        return s;
      }
      if (c == '\\' && (peek(1) == '"' || peek(1) == '\\')) {
        s.push_back(peek(1));
        advance();
        advance();
        continue;
      }
      s.push_back(c);
      advance();
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

bool keyword_is(const Token& t, std::string_view kw) {
  if (t.kind != Tok::Ident || t.text.size() != kw.size()) return false;
  for (std::size_t i = 0; i < kw.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(t.text[i])) != kw[i]) return false;
  }
  return true;
}

bool is_keyword(const Token& t) {
  static constexpr std::string_view kws[] = {"if",       "then",     "else",     "and",
                                             "or",       "not",      "contains", "matches",
                                             "positive", "negative", "abstain"};
  return std::any_of(std::begin(kws), std::end(kws),
                     [&](std::string_view k) { return keyword_is(t, k); });
}

std::optional<Verdict> outcome_of(const Token& t) {
  if (t.kind == Tok::Number) {
    if (t.text == "0") return Verdict::Class0;
    if (t.text == "1") return Verdict::Class1;
    return std::nullopt;
  }
  if (keyword_is(t, "positive")) return Verdict::Class1;
  if (keyword_is(t, "negative")) return Verdict::Class0;
  if (keyword_is(t, "abstain")) return Verdict::Abstain;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  Parser(std::vector<Token> tokens, const ParserLimits& limits)
      : toks_(std::move(tokens)), limits_(limits) {}

  RuleAst parse() {
    RuleAst r = rule(0);
    if (cur().kind != Tok::End) fail("unexpected trailing input");
    return r;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_++]; }

  [[noreturn]] void fail(const std::string& msg) const { fail_at(cur(), msg); }
  [[noreturn]] static void fail_at(const Token& t, const std::string& msg) {
    throw ParseError(msg, t.line, t.column);
  }

  void expect_keyword(std::string_view kw) {
    if (!keyword_is(cur(), kw)) fail("expected '" + std::string(kw) + "'");
    ++pos_;
  }

  void enter_branch(std::size_t level) const {
    if (level + 1 > limits_.max_depth) {
      fail("rule depth limit of " + std::to_string(limits_.max_depth) + " exceeded");
    }
  }

  RuleAst outcome() {
    auto v = outcome_of(cur());
    if (!v) fail("expected outcome (0, 1, positive, negative or abstain)");
    ++pos_;
    return RuleAst::leaf(*v);
  }

  // A complete rule whose Branch nodes sit below `level` ancestors.
  RuleAst rule(std::size_t level) {
    if (outcome_of(cur())) return outcome();
    if (keyword_is(cur(), "if")) {
      enter_branch(level);
      ++pos_;
      RuleAst c = condition();
      expect_keyword("then");
      RuleAst t = body(level + 1);
      RuleAst e = RuleAst::leaf(Verdict::Abstain);
      if (keyword_is(cur(), "else")) {
        ++pos_;
        e = body(level + 1);
      }
      return RuleAst::branch(std::move(c), std::move(t), std::move(e));
    }
    const Token& start = cur();
    RuleAst c = condition();
    if (cur().kind != Tok::Arrow) fail("expected '=>'");
    ++pos_;
    if (level + 1 > limits_.max_depth) {
      fail_at(start, "rule depth limit of " + std::to_string(limits_.max_depth) + " exceeded");
    }
    RuleAst t = outcome();
    RuleAst e = RuleAst::leaf(Verdict::Abstain);
    if (keyword_is(cur(), "else")) {
      ++pos_;
      e = outcome();
    }
    return RuleAst::branch(std::move(c), std::move(t), std::move(e));
  }

  // then/else slot: outcome, nested rule, or parenthesized nested rule.
  RuleAst body(std::size_t level) {
    if (outcome_of(cur())) return outcome();
    if (cur().kind == Tok::LParen) {
      const std::size_t saved = pos_;
      try {
        ++pos_;
        RuleAst r = rule(level);
        if (cur().kind != Tok::RParen) fail("expected ')'");
        ++pos_;
        return r;
      } catch (const ParseError& first) {
        // Fall back to a rule that starts with a parenthesized condition.
        pos_ = saved;
        try {
          return rule(level);
        } catch (const ParseError& second) {
          const bool first_further = std::pair(first.line(), first.column()) >
                                     std::pair(second.line(), second.column());
          if (first_further) throw first;
          throw;
        }
      }
    }
    return rule(level);
  }

  RuleAst condition() {
    std::vector<RuleAst> terms;
    terms.push_back(conjunction());
    while (keyword_is(cur(), "or")) {
      ++pos_;
      terms.push_back(conjunction());
    }
    if (terms.size() == 1) return std::move(terms.front());
    return RuleAst::any_of(std::move(terms));
  }

  RuleAst conjunction() {
    std::vector<RuleAst> terms;
    terms.push_back(atom());
    while (keyword_is(cur(), "and")) {
      ++pos_;
      terms.push_back(atom());
    }
    if (terms.size() == 1) return std::move(terms.front());
    return RuleAst::all_of(std::move(terms));
  }

  RuleAst atom() {
    const Token& t = cur();
    if (keyword_is(t, "not")) {
      ++pos_;
      return RuleAst::negate(atom());
    }
    if (t.kind == Tok::LParen) {
      ++pos_;
      RuleAst c = condition();
      if (cur().kind != Tok::RParen) fail("expected ')'");
      ++pos_;
      return c;
    }
    if (keyword_is(t, "contains") || keyword_is(t, "matches")) {
      const bool is_regex = keyword_is(t, "matches");
      ++pos_;
      if (cur().kind != Tok::LParen) fail("expected '('");
      ++pos_;
      if (cur().kind != Tok::String) fail("expected string literal");
      const Token& lit = next();
      if (cur().kind != Tok::RParen) fail("expected ')'");
      ++pos_;
      if (!is_regex) return RuleAst::contains(lit.text);
      try {
        return RuleAst::matches(lit.text);
      } catch (const RegexError& e) {
        // Column of the offending pattern byte (+1 for the opening quote).
        throw ParseError(e.what(), lit.line, lit.column + 1 + e.offset());
      }
    }
    if (t.kind == Tok::Ident && !is_keyword(t)) {
      ++pos_;
      const std::size_t feature = resolve_feature(t);
      if (cur().kind != Tok::Op) fail("expected comparison operator");
      const CmpOp op = next().op;
      if (cur().kind != Tok::Number) fail("expected number");
      const Token& num = next();
      double v = 0.0;
      const char* first = num.text.data();
      const char* last = first + num.text.size();
      if (*first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        fail_at(num, "invalid number '" + num.text + "'");
      }
      RuleAst n = RuleAst::compare(feature, op, v);
      if (feature < limits_.feature_names.size() && limits_.feature_names[feature] == t.text) {
        n.feature_name = t.text;
      }
      return n;
    }
    fail("expected condition");
  }

  std::size_t resolve_feature(const Token& t) const {
    const auto& names = limits_.feature_names;
    if (auto it = std::find(names.begin(), names.end(), t.text); it != names.end()) {
      return static_cast<std::size_t>(it - names.begin());
    }
    if (t.text.size() >= 2 && (t.text[0] == 'x' || t.text[0] == 'X') &&
        std::all_of(t.text.begin() + 1, t.text.end(),
                    [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      std::size_t idx = 0;
      auto [ptr, ec] = std::from_chars(t.text.data() + 1, t.text.data() + t.text.size(), idx);
      if (ec == std::errc()) return idx;
    }
    fail_at(t, "unknown feature name '" + t.text + "'");
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  const ParserLimits& limits_;
};

// ---------------------------------------------------------------------------
// Serializer

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string outcome_text(Verdict v) {
  switch (v) {
    case Verdict::Class0: return "0";
    case Verdict::Class1: return "1";
    case Verdict::Abstain: return "abstain";
  }
  return "abstain";
}

void write_condition(const RuleAst& n, std::string& out);

void write_operand(const RuleAst& n, bool wrap, std::string& out) {
  if (wrap) out.push_back('(');
  write_condition(n, out);
  if (wrap) out.push_back(')');
}

void write_condition(const RuleAst& n, std::string& out) {
  switch (n.kind) {
    case NodeKind::Comparison:
      out += n.feature_name.empty() ? "x" + std::to_string(n.feature) : n.feature_name;
      out += ' ';
      out += to_string(n.op);
      out += ' ';
      out += format_number(n.value);
      break;
    case NodeKind::Contains:
      out += "contains(" + quote(n.literal) + ")";
      break;
    case NodeKind::Matches:
      out += "matches(" + quote(n.literal) + ")";
      break;
    case NodeKind::And:
    case NodeKind::Or: {
      const bool is_and = n.kind == NodeKind::And;
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) out += is_and ? " and " : " or ";
        const NodeKind ck = n.children[i].kind;
        const bool wrap = ck == NodeKind::Or || (is_and && ck == NodeKind::And);
        write_operand(n.children[i], wrap, out);
      }
      break;
    }
    case NodeKind::Not: {
      out += "not ";
      const NodeKind ck = n.children[0].kind;
      write_operand(n.children[0], ck == NodeKind::And || ck == NodeKind::Or, out);
      break;
    }
    default:
      throw std::invalid_argument("serialize: rule node in condition position");
  }
}

void write_rule(const RuleAst& n, std::string& out) {
  if (n.kind == NodeKind::Leaf) {
    out += outcome_text(n.outcome);
    return;
  }
  if (n.kind != NodeKind::Branch) {
    throw std::invalid_argument("serialize: condition node in rule position");
  }
  out += "if ";
  write_condition(n.condition(), out);
  out += " then ";
  if (n.then_branch().kind == NodeKind::Branch) {
    out += '(';
    write_rule(n.then_branch(), out);
    out += ')';
  } else {
    write_rule(n.then_branch(), out);
  }
  const RuleAst& e = n.else_branch();
  if (e.kind == NodeKind::Leaf && e.outcome == Verdict::Abstain) return;
  out += " else ";
  write_rule(e, out);
}

// ---------------------------------------------------------------------------
// Evaluator

struct EvalContext {
  const Sample& sample;
  std::optional<std::string> lowered;

  const std::string& text() {
    if (!sample.text) throw EvaluationError("text predicate applied to a sample without text");
    if (!lowered) lowered = to_lower_ascii(*sample.text);
    return *lowered;
  }
};

bool holds(const RuleAst& n, EvalContext& ctx) {
  switch (n.kind) {
    case NodeKind::Comparison: {
      if (n.feature >= ctx.sample.features.size()) {
        throw EvaluationError("feature index " + std::to_string(n.feature) +
                              " out of range for sample with " +
                              std::to_string(ctx.sample.features.size()) + " features");
      }
      const double x = ctx.sample.features[n.feature];
      switch (n.op) {
        case CmpOp::Less: return x < n.value;
        case CmpOp::LessEq: return x <= n.value;
        case CmpOp::Greater: return x > n.value;
        case CmpOp::GreaterEq: return x >= n.value;
        case CmpOp::Equal: return x == n.value;
        case CmpOp::NotEqual: return x != n.value;
      }
      return false;
    }
    case NodeKind::Contains:
      return ctx.text().find(to_lower_ascii(n.literal)) != std::string::npos;
    case NodeKind::Matches:
      return n.regex->search(ctx.text());
    case NodeKind::And:
      return std::all_of(n.children.begin(), n.children.end(),
                         [&](const RuleAst& c) { return holds(c, ctx); });
    case NodeKind::Or:
      return std::any_of(n.children.begin(), n.children.end(),
                         [&](const RuleAst& c) { return holds(c, ctx); });
    case NodeKind::Not:
      return !holds(n.children[0], ctx);
    default:
      throw EvaluationError("rule node in condition position");
  }
}

Verdict walk(const RuleAst& n, EvalContext& ctx) {
  const RuleAst* node = &n;
  while (node->kind == NodeKind::Branch) {
    node = holds(node->condition(), ctx) ? &node->then_branch() : &node->else_branch();
  }
  if (node->kind != NodeKind::Leaf) throw EvaluationError("condition node in rule position");
  return node->outcome;
}

void validate_condition(const RuleAst& n) {
  switch (n.kind) {
    case NodeKind::Comparison:
      if (!std::isfinite(n.value)) throw std::invalid_argument("non-finite comparison constant");
      return;
    case NodeKind::Contains:
      return;
    case NodeKind::Matches:
      if (!n.regex) throw std::invalid_argument("matches node without compiled regex");
      return;
    case NodeKind::And:
    case NodeKind::Or:
      if (n.children.size() < 2) throw std::invalid_argument("and/or needs two operands");
      for (const auto& c : n.children) validate_condition(c);
      return;
    case NodeKind::Not:
      if (n.children.size() != 1) throw std::invalid_argument("not needs one operand");
      validate_condition(n.children[0]);
      return;
    default:
      throw std::invalid_argument("leaf or branch inside a condition");
  }
}

void validate_rule(const RuleAst& n) {
  if (n.kind == NodeKind::Leaf) return;
  if (n.kind != NodeKind::Branch || n.children.size() != 3) {
    throw std::invalid_argument("rule position holds a condition node");
  }
  validate_condition(n.condition());
  validate_rule(n.then_branch());
  validate_rule(n.else_branch());
}

}  // namespace

RuleAst parse_rule(std::string_view text, const ParserLimits& limits) {
  if (text.size() > limits.max_bytes) {
    throw ParseError("rule text exceeds " + std::to_string(limits.max_bytes) + " bytes", 1, 1);
  }
  if (std::all_of(text.begin(), text.end(),
                  [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
    throw ParseError("empty rule", 1, 1);
  }
  Parser parser(Lexer(text).run(), limits);
  RuleAst ast = parser.parse();
  if (const std::size_t n = node_count(ast); n > limits.max_nodes) {
    throw ParseError("rule has " + std::to_string(n) + " nodes, limit is " +
                         std::to_string(limits.max_nodes),
                     1, 1);
  }
  return ast;
}

std::string serialize(const RuleAst& ast) {
  std::string out;
  write_rule(ast, out);
  return out;
}

std::size_t rule_depth(const RuleAst& ast) noexcept {
  if (ast.kind != NodeKind::Branch || ast.children.size() != 3) return 0;
  return 1 + std::max(rule_depth(ast.children[1]), rule_depth(ast.children[2]));
}

std::size_t node_count(const RuleAst& ast) noexcept {
  std::size_t n = 1;
  for (const auto& c : ast.children) n += node_count(c);
  return n;
}

void validate(const RuleAst& ast, const ParserLimits& limits) {
  validate_rule(ast);
  if (rule_depth(ast) > limits.max_depth) throw std::invalid_argument("rule too deep");
  if (node_count(ast) > limits.max_nodes) throw std::invalid_argument("rule has too many nodes");
}

Verdict evaluate(const RuleAst& ast, const Sample& sample) {
  EvalContext ctx{sample, std::nullopt};
  return walk(ast, ctx);
}

double signed_vote(const RuleAst& ast, const Sample& sample) {
  return signed_value(evaluate(ast, sample));
}

FeedbackRule make_feedback_rule(RuleAst ast, std::string rule_id, std::string author_id,
                                std::optional<std::uint64_t> anchor, std::uint64_t created_at) {
  FeedbackRule r;
  r.rule = std::make_shared<const RuleAst>(std::move(ast));
  r.rule_id = std::move(rule_id);
  r.author_id = std::move(author_id);
  r.anchor = anchor;
  r.created_at = created_at;
  return r;
}

std::string format_rule_log_line(const FeedbackRule& rule) {
  std::string line = rule.rule_id + '\t' + rule.author_id + '\t';
  line += rule.anchor ? std::to_string(*rule.anchor) : std::string("-");
  line += '\t';
  line += serialize(*rule.rule);
  return line;
}

FeedbackRule parse_rule_log_line(std::string_view line, std::uint64_t created_at,
                                 const ParserLimits& limits) {
  std::string_view fields[3];
  std::string_view rest = line;
  for (auto& f : fields) {
    const auto tab = rest.find('\t');
    if (tab == std::string_view::npos) {
      throw std::invalid_argument("rule log line needs rule_id, author_id, anchor and rule text");
    }
    f = rest.substr(0, tab);
    rest.remove_prefix(tab + 1);
  }
  if (fields[0].empty()) throw std::invalid_argument("empty rule_id in rule log");
  std::optional<std::uint64_t> anchor;
  if (fields[2] != "-" && !fields[2].empty()) {
    std::uint64_t a = 0;
    auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), a);
    if (ec != std::errc() || ptr != fields[2].data() + fields[2].size()) {
      throw std::invalid_argument("bad anchor '" + std::string(fields[2]) + "' in rule log");
    }
    anchor = a;
  }
  return make_feedback_rule(parse_rule(rest, limits), std::string(fields[0]),
                            std::string(fields[1]), anchor, created_at);
}

std::vector<FeedbackRule> read_rule_log(const std::string& path, const ParserLimits& limits) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open rule log " + path);
  std::vector<FeedbackRule> rules;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    try {
      rules.push_back(parse_rule_log_line(line, rules.size(), limits));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rules;
}

void write_rule_log(const std::string& path, const std::vector<FeedbackRule>& rules) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write rule log " + path);
  for (const auto& r : rules) out << format_rule_log_line(r) << '\n';
}

}  // namespace rulecast
