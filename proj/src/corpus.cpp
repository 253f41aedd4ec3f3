#include "hgkr/corpus.h"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_set>

#include "hgkr/textproc.h"

namespace hgkr {

namespace {
constexpr std::string_view kSep = ", ";

void append_field(std::string& out, std::string_view field) {
  if (!out.empty()) out += kSep;
  out += field;
}

std::size_t word_count(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}
}  // namespace

std::string_view source_code(KnowledgeType t) {
  switch (t) {
    case KnowledgeType::Text: return "text";
    case KnowledgeType::KG: return "kg";
    case KnowledgeType::Table: return "table";
    case KnowledgeType::Info: return "info";
  }
  return "text";
}

KnowledgeType parse_source_code(std::string_view code) {
  for (auto t : kAllTypes)
    if (source_code(t) == code) return t;
  throw InvalidInput("unknown evidence source: " + std::string(code));
}

std::string_view display_name(KnowledgeType t) {
  switch (t) {
    case KnowledgeType::Text: return "Text";
    case KnowledgeType::KG: return "KG";
    case KnowledgeType::Table: return "Table";
    case KnowledgeType::Info: return "Infobox";
  }
  return "Text";
}

void validate(const EvidenceRecord& e) {
  if (e.text.empty()) throw InvalidInput("evidence " + std::to_string(e.evidence_id) + " has empty text");
  for (const auto& ent : e.entities)
    if (ent.id.empty()) throw InvalidInput("evidence " + std::to_string(e.evidence_id) + " has an empty entity id");
}

void validate(const QuestionRecord& q) {
  if (q.text.empty()) throw InvalidInput("question " + std::to_string(q.question_id) + " has empty text");
  if (q.answer_text.empty() && q.answer_entities.empty())
    throw InvalidInput("question " + std::to_string(q.question_id) + " has no answer");
  for (const auto& ent : q.answer_entities)
    if (ent.id.empty()) throw InvalidInput("question " + std::to_string(q.question_id) + " has an empty answer id");
}

void validate(const DataTextPair& p) {
  if (p.data.etype == KnowledgeType::Text) throw InvalidInput("data-text pair built from Text evidence");
  if (p.text.empty()) throw InvalidInput("data-text pair with empty text");
  validate(p.data);
}

std::string linearize_kg_fact(std::string_view /*page_title*/, std::string_view subject, std::string_view relation,
                              std::string_view object, std::span<const PropertyValue> qualifiers) {
  if (subject.empty() || relation.empty() || object.empty())
    throw InvalidInput("KG fact needs non-empty subject, relation and object");
  std::string out;
  append_field(out, subject);
  append_field(out, relation);
  append_field(out, object);
  for (const auto& [rel, val] : qualifiers) {
    append_field(out, rel);
    append_field(out, val);
  }
  return out;
}

std::string linearize_table_row(std::string_view page_title, std::span<const PropertyValue> cells) {
  if (page_title.empty()) throw InvalidInput("table row needs a page title");
  std::string out(page_title);
  for (const auto& [header, value] : cells) {
    if (header.empty()) throw InvalidInput("table header must be non-empty");
    out += kSep;
    out += header;
    out += " is";
    if (!value.empty()) {
      out += ' ';
      out += value;
    }
  }
  return out;
}

std::string linearize_infobox(std::string_view page_title, std::string_view subject,
                              std::span<const PropertyValue> pairs) {
  if (page_title.empty() || subject.empty()) throw InvalidInput("infobox needs page title and subject");
  std::string out(page_title);
  append_field(out, subject);
  for (const auto& [prop, val] : pairs) {
    append_field(out, prop);
    append_field(out, val);
  }
  return out;
}

std::vector<std::string> split_fields(std::string_view s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(kSep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(s.substr(start));
      break;
    }
    parts.emplace_back(s.substr(start, pos - start));
    start = pos + kSep.size();
  }
  return parts;
}

bool label_relevance(const QuestionRecord& question, const EvidenceRecord& evidence, const RelevanceOptions& opts) {
  if (!question.answer_entities.empty()) {
    for (const auto& a : question.answer_entities)
      for (const auto& e : evidence.entities)
        if (a.id == e.id) return true;
    return false;
  }
  if (!opts.answer_text_fallback || question.answer_text.empty()) return false;
  const auto needle = tokenize(question.answer_text);
  if (needle.empty()) return false;
  const auto hay = tokenize(evidence.text);
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

RelevanceIndex::RelevanceIndex(std::span<const EvidenceRecord> corpus, RelevanceOptions opts)
    : corpus_(corpus), opts_(opts) {
  for (std::size_t r = 0; r < corpus.size(); ++r)
    for (const auto& e : corpus[r].entities) by_entity_.emplace_back(e.id, r);
  std::sort(by_entity_.begin(), by_entity_.end());
}

std::vector<std::size_t> RelevanceIndex::relevant_rows(const QuestionRecord& question) const {
  std::vector<std::size_t> rows;
  if (question.answer_entities.empty()) {
    for (std::size_t r = 0; r < corpus_.size(); ++r)
      if (label_relevance(question, corpus_[r], opts_)) rows.push_back(r);
    return rows;
  }
  for (const auto& a : question.answer_entities) {
    auto it = std::lower_bound(by_entity_.begin(), by_entity_.end(), std::make_pair(a.id, std::size_t{0}));
    for (; it != by_entity_.end() && it->first == a.id; ++it) rows.push_back(it->second);
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

CorpusStats corpus_stats(std::span<const EvidenceRecord> corpus) {
  if (corpus.empty()) throw InvalidInput("corpus_stats on an empty corpus");
  std::array<std::size_t, kNumTypes> words{};
  CorpusStats s;
  for (const auto& e : corpus) {
    const auto t = type_index(e.etype);
    s.per_type[t].count += 1;
    words[t] += word_count(e.text);
  }
  std::size_t total_words = 0;
  for (std::size_t t = 0; t < kNumTypes; ++t) {
    auto& ts = s.per_type[t];
    s.total.count += ts.count;
    total_words += words[t];
    ts.avg_length = ts.count ? static_cast<double>(words[t]) / static_cast<double>(ts.count) : 0.0;
  }
  const double n = static_cast<double>(s.total.count);
  for (auto& ts : s.per_type) ts.percentage = 100.0 * static_cast<double>(ts.count) / n;
  s.total.avg_length = static_cast<double>(total_words) / n;
  s.total.percentage = 100.0;
  return s;
}

namespace {
std::string with_thousands(std::size_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  const int n = static_cast<int>(digits.size());
  for (int i = 0; i < n; ++i) {
    if (i > 0 && (n - i) % 3 == 0) out += ',';
    out += digits[static_cast<std::size_t>(i)];
  }
  return out;
}
}  // namespace

std::string format_corpus_stats(const CorpusStats& stats) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %12s %14s %11s\n", "Types", "Avg. length", "Count", "Percentage");
  os << line;
  auto row = [&](std::string_view name, const TypeStats& ts) {
    const std::string pct = [&] {
      char b[32];
      std::snprintf(b, sizeof b, "%.2f%%", ts.percentage);
      return std::string(b);
    }();
    std::snprintf(line, sizeof line, "%-8.*s %12.2f %14s %11s\n", static_cast<int>(name.size()), name.data(),
                  ts.avg_length, with_thousands(ts.count).c_str(), pct.c_str());
    os << line;
  };
  for (auto t : kAllTypes) row(display_name(t), stats.per_type[type_index(t)]);
  row("Sum", stats.total);
  return os.str();
}

}  // namespace hgkr
