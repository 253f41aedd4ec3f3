#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hgkr/corpus.h"
#include "hgkr/kernels.h"

namespace hgkr {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Okapi BM25 over whitespace/punctuation tokens with idf = ln((N - df + 0.5)/(df + 0.5) + 1).
class Bm25Index {
 public:
  Bm25Index() = default;
  explicit Bm25Index(std::span<const EvidenceRecord> corpus, Bm25Params params = {});

  std::size_t size() const { return ids_.size(); }
  double avg_doc_length() const { return avgdl_; }
  double idf(const std::string& term) const;
  std::size_t doc_freq(const std::string& term) const;

  // Throws std::out_of_range for an unknown evidence id.
  double score(std::span<const std::string> query, EvidenceId id) const;

  // Scores of every document, in index row order. Parallel over documents.
  std::vector<double> score_all(std::span<const std::string> query) const;

  std::vector<Scored> top_k(std::span<const std::string> query, std::size_t k) const;

  std::span<const EvidenceId> ids() const { return ids_; }

  // Term-at-a-time accumulation over postings; reference for score_all.
  std::vector<double> score_all_serial(std::span<const std::string> query) const;

 private:
  using TermId = std::int32_t;
  struct Posting {
    std::size_t row;
    std::uint32_t tf;
  };
  double term_weight(TermId term, std::uint32_t tf, std::size_t row) const;
  std::uint32_t tf_in_row(TermId term, std::size_t row) const;
  std::vector<TermId> lookup(std::span<const std::string> query) const;  // -1 for unseen terms

  Bm25Params params_;
  std::unordered_map<std::string, TermId> terms_;
  std::vector<std::vector<Posting>> postings_;  // by term
  std::vector<double> idf_;                       // by term
  std::vector<std::vector<std::pair<TermId, std::uint32_t>>> forward_;  // by row, sorted by term
  std::vector<double> doc_len_;
  std::vector<EvidenceId> ids_;
  std::unordered_map<EvidenceId, std::size_t> row_of_;
  double avgdl_ = 0.0;
};

}  // namespace hgkr
