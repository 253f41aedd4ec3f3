#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hgkr {

using TokenId = std::int32_t;

// Lowercases and splits on maximal runs of characters that are neither letters nor
// digits. ASCII is classified directly; for non-ASCII code points the Latin-1 and
// General Punctuation symbol ranges count as separators, everything else as letters.
std::vector<std::string> tokenize(std::string_view text);

inline constexpr std::size_t kMaxSequenceLength = 256;

struct TokenSequence {
  std::vector<TokenId> ids;
  std::size_t original_length = 0;  // token count before truncation
};

class Vocabulary {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kMask = 1;
  static constexpr std::string_view kUnkToken = "[UNK]";
  static constexpr std::string_view kMaskToken = "[MASK]";

  Vocabulary();

  // Keeps tokens seen at least `min_frequency` times, most frequent first, ties
  // lexicographic, up to max_size - 2 entries after the reserved ids.
  static Vocabulary build(std::span<const std::string> texts, std::size_t min_frequency, std::size_t max_size);

  // "token<TAB>id" per line, ordered by id.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t min_frequency() const { return min_frequency_; }
  std::size_t max_size() const { return max_size_; }

  TokenSequence encode(std::string_view text, std::size_t max_length = kMaxSequenceLength) const;

 private:
  void add(std::string token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t min_frequency_ = 1;
  std::size_t max_size_ = 0;
};

}  // namespace hgkr
