#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hgkr/corpus.h"
#include "hgkr/encoder.h"
#include "hgkr/textproc.h"

namespace hgkr {

struct SearchHit {
  EvidenceId evidence_id = 0;
  double score = 0.0;
  int rank = 0;  // 1-based
  KnowledgeType etype = KnowledgeType::Text;
};

// Exact dense index. Rows are float32, unit norm, in ascending evidence id order.
class VectorIndex {
 public:
  VectorIndex() = default;
  VectorIndex(std::size_t dim, std::uint64_t fingerprint) : dim_(dim), fingerprint_(fingerprint) {}

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  std::span<const float> rows() const { return rows_; }
  std::span<const float> row(std::size_t r) const { return std::span<const float>(rows_).subspan(r * dim_, dim_); }
  std::span<const EvidenceId> ids() const { return ids_; }
  std::span<const KnowledgeType> types() const { return types_; }

  // Rows must arrive in strictly ascending id order.
  void append(EvidenceId id, KnowledgeType t, std::span<const double> vec);

  // Header (magic "HGIX", version, |E|, d, fingerprint) + float32 rows + ids + types + CRC-32.
  void save(const std::string& path) const;
  static VectorIndex load(const std::string& path);

  bool operator==(const VectorIndex&) const = default;

 private:
  std::size_t dim_ = 0;
  std::uint64_t fingerprint_ = 0;
  std::vector<float> rows_;
  std::vector<EvidenceId> ids_;
  std::vector<KnowledgeType> types_;
};

// Encodes every evidence text; throws InvalidInput on an empty corpus.
VectorIndex build_index(const EncoderParams& encoder, const Vocabulary& vocab, std::span<const EvidenceRecord> corpus);

// k highest dot products, ties by ascending evidence id. Throws for k < 1.
std::vector<SearchHit> top_k_search(const VectorIndex& index, std::span<const double> query, std::size_t k);

namespace serial {
VectorIndex build_index(const EncoderParams& encoder, const Vocabulary& vocab, std::span<const EvidenceRecord> corpus);
std::vector<SearchHit> top_k_search(const VectorIndex& index, std::span<const double> query, std::size_t k);
}  // namespace serial

}  // namespace hgkr
