#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hgkr/corpus.h"

namespace hgkr {

// Evidence JSONL: "linearized evidence text", "wikidata entities", "source",
// optional "retrieved for entity", "disambiguations", "evidence id".
// Records without "evidence id" are numbered by line order.
std::vector<EvidenceRecord> read_evidence_jsonl(std::istream& in);
std::vector<EvidenceRecord> read_evidence_jsonl(const std::string& path);
void write_evidence_jsonl(std::ostream& out, const std::vector<EvidenceRecord>& corpus);
void write_evidence_jsonl(const std::string& path, const std::vector<EvidenceRecord>& corpus);

// Question JSONL: "question id", "question", "domain", "answers", "answer text".
std::vector<QuestionRecord> read_questions_jsonl(std::istream& in);
std::vector<QuestionRecord> read_questions_jsonl(const std::string& path);
void write_questions_jsonl(std::ostream& out, const std::vector<QuestionRecord>& questions);
void write_questions_jsonl(const std::string& path, const std::vector<QuestionRecord>& questions);

// Data-text pairs: {"evidence id", "source", "data", "text"}.
void write_pairs_jsonl(const std::string& path, const std::vector<DataTextPair>& pairs);
std::vector<DataTextPair> read_pairs_jsonl(const std::string& path);

// Page title for Wikipedia-derived evidence is the first ", "-separated field; KG facts have none.
std::string derive_page_title(KnowledgeType t, const std::string& text);

}  // namespace hgkr
