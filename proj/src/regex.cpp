#include "rulecast/regex.hpp"

#include <cctype>
#include <memory>

namespace rulecast {

namespace {

using CharSet = std::bitset<256>;

struct Node {
  enum class Kind { Set, Concat, Alt, Repeat, Empty, LineBegin, LineEnd } kind;
  CharSet set;
  bool negated = false;  // [^...]: complement taken after case folding
  std::vector<std::unique_ptr<Node>> children;
  int min = 0;
  int max = -1;  // -1 = unbounded
};

using NodePtr = std::unique_ptr<Node>;

NodePtr make(Node::Kind k) {
  auto n = std::make_unique<Node>();
  n->kind = k;
  return n;
}

CharSet digit_set() {
  CharSet s;
  for (int c = '0'; c <= '9'; ++c) s.set(c);
  return s;
}

CharSet word_set() {
  CharSet s = digit_set();
  for (int c = 'a'; c <= 'z'; ++c) s.set(c);
  for (int c = 'A'; c <= 'Z'; ++c) s.set(c);
  s.set('_');
  return s;
}

CharSet space_set() {
  CharSet s;
  for (char c : std::string_view(" \t\n\r\f\v")) s.set(static_cast<unsigned char>(c));
  return s;
}

class PatternParser {
 public:
  explicit PatternParser(std::string_view p) : p_(p) {}

  NodePtr parse() {
    auto n = alternation();
    if (pos_ < p_.size()) {
      if (p_[pos_] == ')') fail("unbalanced ')'");
      fail("unexpected character");
    }
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw RegexError("invalid regex: " + msg, pos_);
  }

  bool at_end() const { return pos_ >= p_.size(); }
  char peek() const { return p_[pos_]; }

  NodePtr alternation() {
    auto first = concatenation();
    if (at_end() || peek() != '|') return first;
    auto alt = make(Node::Kind::Alt);
    alt->children.push_back(std::move(first));
    while (!at_end() && peek() == '|') {
      ++pos_;
      alt->children.push_back(concatenation());
    }
    return alt;
  }

  NodePtr concatenation() {
    auto cat = make(Node::Kind::Concat);
    while (!at_end() && peek() != '|' && peek() != ')') {
      cat->children.push_back(repetition());
    }
    if (cat->children.empty()) return make(Node::Kind::Empty);
    if (cat->children.size() == 1) return std::move(cat->children.front());
    return cat;
  }

  NodePtr repetition() {
    const std::size_t atom_pos = pos_;
    auto atom = this->atom();
    if (at_end()) return atom;
    int min = 0, max = -1;
    switch (peek()) {
      case '*': ++pos_; break;
      case '+': ++pos_; min = 1; break;
      case '?': ++pos_; max = 1; break;
      case '{':
        if (!counted(min, max)) fail("malformed counted repetition");
        break;
      default:
        return atom;
    }
    if (atom->kind == Node::Kind::LineBegin || atom->kind == Node::Kind::LineEnd) {
      pos_ = atom_pos;
      fail("nothing to repeat");
    }
    if (!at_end() && peek() == '?') ++pos_;  // lazy: same language
    if (!at_end() && (peek() == '*' || peek() == '+' || peek() == '?' || peek() == '{')) {
      fail("nested quantifier");
    }
    auto rep = make(Node::Kind::Repeat);
    rep->min = min;
    rep->max = max;
    rep->children.push_back(std::move(atom));
    return rep;
  }

  bool counted(int& min, int& max) {
    ++pos_;  // '{'
    auto number = [&](int& out) {
      if (at_end() || !std::isdigit(static_cast<unsigned char>(peek()))) return false;
      long v = 0;
      while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) {
        v = v * 10 + (peek() - '0');
        if (v > 1000) fail("repetition count too large");
        ++pos_;
      }
      out = static_cast<int>(v);
      return true;
    };
    if (!number(min)) return false;
    max = min;
    if (!at_end() && peek() == ',') {
      ++pos_;
      max = -1;
      if (!at_end() && peek() != '}' && !number(max)) return false;
    }
    if (at_end() || peek() != '}') return false;
    ++pos_;
    if (max != -1 && max < min) fail("repetition bounds out of order");
    return true;
  }

  NodePtr atom() {
    const char c = peek();
    switch (c) {
      case '(': {
        ++pos_;
        if (p_.substr(pos_, 2) == "?:") {
          pos_ += 2;
        } else if (!at_end() && peek() == '?') {
          fail("lookaround is not supported");
        }
        auto inner = alternation();
        if (at_end() || peek() != ')') fail("missing ')'");
        ++pos_;
        return inner;
      }
      case '[': return char_class();
      case '.': {
        ++pos_;
        auto n = make(Node::Kind::Set);
        n->set.set();
        n->set.reset('\n');
        n->set.reset('\r');
        return n;
      }
      case '^': ++pos_; return make(Node::Kind::LineBegin);
      case '$': ++pos_; return make(Node::Kind::LineEnd);
      case '\\': {
        auto n = make(Node::Kind::Set);
        n->set = escape(false);
        return n;
      }
      case '*': case '+': case '?': fail("nothing to repeat");
      case '{': fail("nothing to repeat");
      default: {
        ++pos_;
        auto n = make(Node::Kind::Set);
        n->set.set(static_cast<unsigned char>(c));
        return n;
      }
    }
  }

  // Consumes a backslash escape, returns its set.
  CharSet escape(bool in_class) {
    ++pos_;
    if (at_end()) fail("trailing backslash");
    const char c = p_[pos_++];
    CharSet s;
    switch (c) {
      case 'd': return digit_set();
      case 'D': return ~digit_set();
      case 'w': return word_set();
      case 'W': return ~word_set();
      case 's': return space_set();
      case 'S': return ~space_set();
      case 'n': s.set('\n'); return s;
      case 't': s.set('\t'); return s;
      case 'r': s.set('\r'); return s;
      case 'f': s.set('\f'); return s;
      case 'v': s.set('\v'); return s;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      --pos_;
      fail("backreferences are not supported");
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      --pos_;
      fail(in_class ? "unknown escape in class" : "unsupported escape");
    }
    s.set(static_cast<unsigned char>(c));
    return s;
  }

  NodePtr char_class() {
    const std::size_t open = pos_;
    ++pos_;
    bool negate = false;
    if (!at_end() && peek() == '^') {
      negate = true;
      ++pos_;
    }
    CharSet set;
    while (true) {
      if (at_end()) {
        pos_ = open;
        fail("missing ']'");
      }
      if (peek() == ']') {
        ++pos_;
        break;
      }
      int lo;
      if (peek() == '\\') {
        CharSet esc = escape(true);
        if (esc.count() != 1) {
          set |= esc;
          continue;
        }
        lo = single(esc);
      } else {
        lo = static_cast<unsigned char>(p_[pos_++]);
      }
      if (pos_ + 1 < p_.size() && peek() == '-' && p_[pos_ + 1] != ']') {
        ++pos_;
        int hi;
        if (peek() == '\\') {
          CharSet esc = escape(true);
          if (esc.count() != 1) fail("invalid class range");
          hi = single(esc);
        } else {
          hi = static_cast<unsigned char>(p_[pos_++]);
        }
        if (hi < lo) fail("class range out of order");
        for (int ch = lo; ch <= hi; ++ch) set.set(ch);
      } else {
        set.set(lo);
      }
    }
    auto n = make(Node::Kind::Set);
    n->set = set;
    n->negated = negate;
    return n;
  }

  static int single(const CharSet& s) {
    for (int i = 0; i < 256; ++i)
      if (s.test(i)) return i;
    return 0;
  }

  std::string_view p_;
  std::size_t pos_ = 0;
};

}  // namespace

class RegexCompiler {
 public:
  RegexCompiler(Regex& re, bool icase) : re_(re), icase_(icase) {}

  void emit(const Node& n) {
    using K = Node::Kind;
    switch (n.kind) {
      case K::Empty: break;
      case K::LineBegin: push({Regex::Op::LineBegin}); break;
      case K::LineEnd: push({Regex::Op::LineEnd}); break;
      case K::Set: {
        CharSet s = n.set;
        if (icase_) fold_case(s);
        if (n.negated) s.flip();
        re_.sets_.push_back(s);
        push({Regex::Op::Byte, static_cast<std::uint32_t>(re_.sets_.size() - 1)});
        break;
      }
      case K::Concat:
        for (const auto& c : n.children) emit(*c);
        break;
      case K::Alt: {
        // split L1, next ; L1: a ; jmp end ; next: split ... ; last alternative
        std::vector<std::size_t> jumps;
        for (std::size_t i = 0; i + 1 < n.children.size(); ++i) {
          const std::size_t split = push({Regex::Op::Split});
          re_.program_[split].x = here();
          emit(*n.children[i]);
          jumps.push_back(push({Regex::Op::Jump}));
          re_.program_[split].y = here();
        }
        emit(*n.children.back());
        for (std::size_t j : jumps) re_.program_[j].x = here();
        break;
      }
      case K::Repeat: {
        const Node& body = *n.children.front();
        for (int i = 0; i < n.min; ++i) emit(body);
        if (n.max == -1) {
          // L: split body, out ; body ; jmp L
          const std::size_t split = push({Regex::Op::Split});
          re_.program_[split].x = here();
          emit(body);
          const std::size_t jmp = push({Regex::Op::Jump});
          re_.program_[jmp].x = static_cast<std::uint32_t>(split);
          re_.program_[split].y = here();
        } else {
          std::vector<std::size_t> splits;
          for (int i = n.min; i < n.max; ++i) {
            const std::size_t split = push({Regex::Op::Split});
            re_.program_[split].x = here();
            splits.push_back(split);
            emit(body);
          }
          for (std::size_t s : splits) re_.program_[s].y = here();
        }
        break;
      }
    }
  }

  std::size_t push(Regex::Inst inst) {
    if (re_.program_.size() >= Regex::kMaxProgram) {
      throw RegexError("invalid regex: pattern too large", 0);
    }
    re_.program_.push_back(inst);
    return re_.program_.size() - 1;
  }

 private:
  std::uint32_t here() const { return static_cast<std::uint32_t>(re_.program_.size()); }

  static void fold_case(CharSet& s) {
    for (int c = 'a'; c <= 'z'; ++c) {
      const int u = c - 'a' + 'A';
      if (s.test(c) || s.test(u)) {
        s.set(c);
        s.set(u);
      }
    }
  }

  Regex& re_;
  bool icase_;
};

Regex Regex::compile(std::string_view pattern, bool icase) {
  Regex re;
  re.pattern_ = std::string(pattern);
  PatternParser parser(pattern);
  NodePtr root = parser.parse();
  RegexCompiler compiler(re, icase);
  compiler.emit(*root);
  compiler.push({Op::Match});
  return re;
}

bool Regex::search(std::string_view text) const {
  const std::size_t n = program_.size();
  std::vector<std::uint32_t> current, next, stack;
  std::vector<std::size_t> mark(n, static_cast<std::size_t>(-1));
  current.reserve(n);
  next.reserve(n);
  bool matched = false;

  // Epsilon closure from pc at text position pos; mark[] uses a per-step stamp.
  auto add = [&](std::vector<std::uint32_t>& list, std::uint32_t start, std::size_t pos,
                 std::size_t stamp) {
    stack.push_back(start);
    while (!stack.empty()) {
      const std::uint32_t pc = stack.back();
      stack.pop_back();
      if (mark[pc] == stamp) continue;
      mark[pc] = stamp;
      const Inst& inst = program_[pc];
      switch (inst.op) {
        case Op::Byte: list.push_back(pc); break;
        case Op::Match: matched = true; break;
        case Op::Jump: stack.push_back(inst.x); break;
        case Op::Split:
          stack.push_back(inst.y);
          stack.push_back(inst.x);
          break;
        case Op::LineBegin:
          if (pos == 0) stack.push_back(pc + 1);
          break;
        case Op::LineEnd:
          if (pos == text.size()) stack.push_back(pc + 1);
          break;
      }
    }
  };

  for (std::size_t i = 0;; ++i) {
    add(current, 0, i, i);
    if (matched) return true;
    if (i == text.size()) return false;
    const auto c = static_cast<unsigned char>(text[i]);
    next.clear();
    for (std::uint32_t pc : current) {
      if (sets_[program_[pc].x].test(c)) add(next, pc + 1, i + 1, i + 1);
    }
    if (matched) return true;
    std::swap(current, next);
  }
}

}  // namespace rulecast
