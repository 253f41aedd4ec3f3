#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hgkr {

enum class KnowledgeType : std::uint8_t { Text = 0, KG = 1, Table = 2, Info = 3 };

inline constexpr std::array<KnowledgeType, 4> kAllTypes = {KnowledgeType::Text, KnowledgeType::KG,
                                                           KnowledgeType::Table, KnowledgeType::Info};
inline constexpr std::size_t kNumTypes = kAllTypes.size();

constexpr std::size_t type_index(KnowledgeType t) { return static_cast<std::size_t>(t); }

// "text", "kg", "table", "info" (the evidence JSONL "source" values).
std::string_view source_code(KnowledgeType t);
KnowledgeType parse_source_code(std::string_view code);
// "Text", "KG", "Table", "Infobox" (table row labels).
std::string_view display_name(KnowledgeType t);

struct EntityRef {
  std::string id;
  std::string label;

  bool operator==(const EntityRef&) const = default;
};

using EvidenceId = std::int64_t;

struct EvidenceRecord {
  EvidenceId evidence_id = 0;
  KnowledgeType etype = KnowledgeType::Text;
  std::string text;
  std::vector<EntityRef> entities;
  std::string page_title;
  std::optional<EntityRef> retrieved_for;
  // Parsed and stored, never consulted by scoring or relevance.
  std::vector<std::pair<std::string, std::string>> disambiguations;
};

struct QuestionRecord {
  std::int64_t question_id = 0;
  std::string text;
  std::string domain;
  std::string answer_text;
  std::vector<EntityRef> answer_entities;
};

struct DataTextPair {
  EvidenceRecord data;
  std::string text;
};

struct TypeStats {
  std::size_t count = 0;
  double avg_length = 0.0;
  double percentage = 0.0;
};

struct CorpusStats {
  std::array<TypeStats, kNumTypes> per_type{};
  TypeStats total{};
};

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Throws InvalidInput when a record violates its invariants.
void validate(const EvidenceRecord& e);
void validate(const QuestionRecord& q);
void validate(const DataTextPair& p);

using PropertyValue = std::pair<std::string, std::string>;

std::string linearize_kg_fact(std::string_view page_title, std::string_view subject, std::string_view relation,
                              std::string_view object, std::span<const PropertyValue> qualifiers = {});

std::string linearize_table_row(std::string_view page_title, std::span<const PropertyValue> cells);

std::string linearize_infobox(std::string_view page_title, std::string_view subject,
                              std::span<const PropertyValue> pairs);

struct RelevanceOptions {
  bool answer_text_fallback = true;
};

// Entity-id overlap between question answers and evidence annotations. With no answer
// entities, optionally falls back to case-insensitive whole-token containment of the
// answer text.
bool label_relevance(const QuestionRecord& question, const EvidenceRecord& evidence,
                     const RelevanceOptions& opts = {});

// Entity-id inverted map over a corpus; relevant_rows(q) lists, in ascending row order,
// exactly the rows r with label_relevance(q, corpus[r]).
class RelevanceIndex {
 public:
  RelevanceIndex(std::span<const EvidenceRecord> corpus, RelevanceOptions opts = {});
  std::vector<std::size_t> relevant_rows(const QuestionRecord& question) const;

 private:
  std::span<const EvidenceRecord> corpus_;
  RelevanceOptions opts_;
  std::vector<std::pair<std::string, std::size_t>> by_entity_;  // sorted (entity id, row)
};

CorpusStats corpus_stats(std::span<const EvidenceRecord> corpus);
std::string format_corpus_stats(const CorpusStats& stats);

// Splits on the exact separator ", ".
std::vector<std::string> split_fields(std::string_view s);

}  // namespace hgkr
