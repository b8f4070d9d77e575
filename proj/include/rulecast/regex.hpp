#pragma once

#include <bitset>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rulecast {

class RegexError : public std::runtime_error {
 public:
  RegexError(const std::string& what, std::size_t offset)
      : std::runtime_error(what), offset_(offset) {}
  // Byte offset into the pattern where the problem was detected.
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Linear-time regular expressions (Thompson NFA simulation).
///
/// Supported: literals, '.', classes [a-z] / [^...], escapes \d \w \s and
/// their negations, groups ( ) and (?: ), alternation, * + ? {m} {m,} {m,n}
/// (lazy suffix '?' accepted), anchors ^ $. Backreferences, lookaround and
/// word boundaries are rejected. Matching is byte-oriented.
class Regex {
 public:
  static Regex compile(std::string_view pattern, bool icase = true);

  // True if some substring of text matches (search, not full match).
  bool search(std::string_view text) const;

  const std::string& pattern() const noexcept { return pattern_; }
  std::size_t program_size() const noexcept { return program_.size(); }

  // Upper bound on compiled program size; counted repetition is expanded.
  static constexpr std::size_t kMaxProgram = 20000;

 private:
  enum class Op : std::uint8_t { Byte, Split, Jump, Match, LineBegin, LineEnd };
  struct Inst {
    Op op;
    std::uint32_t x = 0;  // Byte: charset index; Split/Jump: target
    std::uint32_t y = 0;  // Split: second target
  };

  friend class RegexCompiler;

  std::string pattern_;
  std::vector<Inst> program_;
  std::vector<std::bitset<256>> sets_;
};

}  // namespace rulecast
