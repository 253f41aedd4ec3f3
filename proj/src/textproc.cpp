#include "hgkr/textproc.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

namespace hgkr {

namespace {

// Decodes one UTF-8 code point starting at s[i]; malformed bytes decode as themselves.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  int extra = 0;
  char32_t cp = b0;
  if (b0 >= 0xF0 && b0 < 0xF8) {
    extra = 3;
    cp = b0 & 0x07;
  } else if (b0 >= 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
  } else if (b0 >= 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
  }
  if (extra == 0 || i + static_cast<std::size_t>(extra) >= s.size()) {
    ++i;
    return b0;
  }
  for (int k = 1; k <= extra; ++k) {
    const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += static_cast<std::size_t>(extra) + 1;
  return cp;
}

bool is_word_char(char32_t cp) {
  if (cp < 0x80) return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  if (cp >= 0x80 && cp <= 0xBF) return false;  // Latin-1 controls and symbols
  if (cp == 0xD7 || cp == 0xF7) return false;   // multiplication and division signs
  if (cp >= 0x2000 && cp <= 0x206F) return false;  // General Punctuation
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  return true;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const char32_t cp = next_code_point(text, i);
    if (is_word_char(cp)) {
      if (cp < 0x80) {
        char c = static_cast<char>(cp);
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        cur += c;
      } else {
        cur.append(text.substr(start, i - start));
      }
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() {
  add(std::string(kUnkToken));
  add(std::string(kMaskToken));
}

void Vocabulary::add(std::string token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t min_frequency, std::size_t max_size) {
  if (max_size < 2) throw std::invalid_argument("vocabulary max_size must be at least 2");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (auto& tok : tokenize(t)) ++counts[std::move(tok)];

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, c] : counts)
    if (c >= min_frequency) kept.emplace_back(tok, c);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (kept.size() > max_size - 2) kept.resize(max_size - 2);

  Vocabulary v;
  v.min_frequency_ = min_frequency;
  v.max_size_ = max_size;
  for (auto& [tok, c] : kept) v.add(std::move(tok));
  return v;
}

TokenId Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

TokenSequence Vocabulary::encode(std::string_view text, std::size_t max_length) const {
  const auto toks = tokenize(text);
  TokenSequence seq;
  seq.original_length = toks.size();
  const auto n = std::min(toks.size(), max_length);
  seq.ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) seq.ids.push_back(id(toks[i]));
  return seq;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
  std::map<long, std::string> by_id;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw std::runtime_error("malformed vocabulary line: " + line);
    const long id = std::stol(line.substr(tab + 1));
    if (!by_id.emplace(id, line.substr(0, tab)).second) throw std::runtime_error("duplicate vocabulary id");
  }
  if (by_id.size() < 2 || by_id.begin()->first != 0 || by_id.rbegin()->first != static_cast<long>(by_id.size()) - 1)
    throw std::runtime_error("vocabulary ids are not dense from 0");
  if (by_id[0] != kUnkToken || by_id[1] != kMaskToken) throw std::runtime_error("vocabulary lacks reserved tokens");
  Vocabulary v;
  for (auto it = std::next(by_id.begin(), 2); it != by_id.end(); ++it) v.add(it->second);
  v.max_size_ = v.size();
  return v;
}

}  // namespace hgkr
