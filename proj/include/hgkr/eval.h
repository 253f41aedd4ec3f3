#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hgkr/bm25.h"
#include "hgkr/corpus.h"
#include "hgkr/encoder.h"
#include "hgkr/index.h"
#include "hgkr/instructions.h"
#include "hgkr/textproc.h"

namespace hgkr {

inline constexpr std::size_t kRunDepth = 100;

struct RunHit {
  EvidenceId id = 0;
  double score = 0.0;
  bool relevant = false;
  KnowledgeType etype = KnowledgeType::Text;

  bool operator==(const RunHit&) const = default;
};

struct RunResult {
  std::int64_t question_id = 0;
  InstructionGroup group = InstructionGroup::All;
  std::vector<RunHit> hits;  // rank order, at most kRunDepth

  bool operator==(const RunResult&) const = default;
};

int hit_at_k(const RunResult& result, std::size_t k);
double mrr_at_k(const RunResult& result, std::size_t k = kRunDepth);
int type_hit(const RunResult& result, KnowledgeType t, std::size_t k = kRunDepth);

struct MetricCell {
  double value = 0.0;  // percentage
  std::size_t denominator = 0;
  bool present() const { return denominator > 0; }
};

struct MetricReport {
  MetricCell hit5, hit10, hit100, mrr100;        // scenario 1
  std::array<MetricCell, kNumTypes> type_hit{};  // scenario 2, indexed by type_index
};

// Scenario 1 from I_All runs, scenario 2 from the runs whose group targets a type.
MetricReport aggregate(std::span<const RunResult> runs);

// Maps a retrieval query to its ranked (id, score) list, best first.
using Ranker = std::function<std::vector<Scored>(const RetrievalQuery&)>;

// Scenario 1: every question under canonical I_All. Scenario 2: for each type, every
// question with a relevant evidence of that type under canonical I_type.
// The ranker must be safe to call concurrently.
std::vector<RunResult> run_scenarios(std::span<const QuestionRecord> questions, std::span<const EvidenceRecord> corpus,
                                     const InstructionSet& instructions, const Ranker& ranker);

Ranker dense_ranker(const EncoderParams& encoder, const Vocabulary& vocab, const VectorIndex& index);
// Lexical baseline; scores the question text alone and ignores the instruction.
Ranker bm25_ranker(const Bm25Index& bm25);

// Checks the index fingerprint against the encoder, then runs both scenarios.
std::vector<RunResult> evaluate_dense(const EncoderParams& encoder, const Vocabulary& vocab, const VectorIndex& index,
                                      std::span<const QuestionRecord> questions, std::span<const EvidenceRecord> corpus,
                                      const InstructionSet& instructions);

// JSONL {question_id, group, hits: [{id, score, relevant, type}]}.
void write_run_jsonl(const std::string& path, std::span<const RunResult> runs);
std::vector<RunResult> read_run_jsonl(const std::string& path);

// Values rounded to two decimals, with denominators; absent cells are null.
std::string metrics_json(const MetricReport& report);
void write_metrics_json(const std::string& path, const MetricReport& report);
std::string format_metric_report(const MetricReport& report);

}  // namespace hgkr
