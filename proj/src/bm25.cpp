#include "hgkr/bm25.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "hgkr/textproc.h"

namespace hgkr {

Bm25Index::Bm25Index(std::span<const EvidenceRecord> corpus, Bm25Params params) : params_(params) {
  forward_.resize(corpus.size());
  doc_len_.resize(corpus.size());
  ids_.reserve(corpus.size());
  double total_len = 0.0;
  for (std::size_t row = 0; row < corpus.size(); ++row) {
    const auto toks = tokenize(corpus[row].text);
    std::map<TermId, std::uint32_t> tf;
    for (const auto& t : toks) {
      auto [it, fresh] = terms_.try_emplace(t, static_cast<TermId>(terms_.size()));
      if (fresh) postings_.emplace_back();
      ++tf[it->second];
    }
    for (const auto& [term, count] : tf) {
      postings_[static_cast<std::size_t>(term)].push_back({row, count});
      forward_[row].emplace_back(term, count);
    }
    doc_len_[row] = static_cast<double>(toks.size());
    total_len += doc_len_[row];
    ids_.push_back(corpus[row].evidence_id);
    if (!row_of_.emplace(corpus[row].evidence_id, row).second)
      throw std::invalid_argument("duplicate evidence id in BM25 index");
  }
  const double n = static_cast<double>(corpus.size());
  avgdl_ = corpus.empty() ? 0.0 : total_len / n;
  idf_.resize(postings_.size());
  for (std::size_t t = 0; t < postings_.size(); ++t) {
    const double df = static_cast<double>(postings_[t].size());
    idf_[t] = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
  }
}

std::size_t Bm25Index::doc_freq(const std::string& term) const {
  const auto it = terms_.find(term);
  return it == terms_.end() ? 0 : postings_[static_cast<std::size_t>(it->second)].size();
}

double Bm25Index::idf(const std::string& term) const {
  const auto it = terms_.find(term);
  if (it != terms_.end()) return idf_[static_cast<std::size_t>(it->second)];
  const double n = static_cast<double>(ids_.size());
  return std::log((n + 0.5) / 0.5 + 1.0);
}

double Bm25Index::term_weight(TermId term, std::uint32_t tf, std::size_t row) const {
  const double f = static_cast<double>(tf);
  const double norm = params_.k1 * (1.0 - params_.b + params_.b * doc_len_[row] / avgdl_);
  return idf_[static_cast<std::size_t>(term)] * f * (params_.k1 + 1.0) / (f + norm);
}

std::uint32_t Bm25Index::tf_in_row(TermId term, std::size_t row) const {
  const auto& fw = forward_[row];
  const auto it = std::lower_bound(fw.begin(), fw.end(), term, [](const auto& p, TermId t) { return p.first < t; });
  return (it != fw.end() && it->first == term) ? it->second : 0u;
}

std::vector<Bm25Index::TermId> Bm25Index::lookup(std::span<const std::string> query) const {
  std::vector<TermId> out;
  out.reserve(query.size());
  for (const auto& q : query) {
    const auto it = terms_.find(q);
    out.push_back(it == terms_.end() ? -1 : it->second);
  }
  return out;
}

double Bm25Index::score(std::span<const std::string> query, EvidenceId id) const {
  const auto it = row_of_.find(id);
  if (it == row_of_.end()) throw std::out_of_range("unknown evidence id " + std::to_string(id));
  const std::size_t row = it->second;
  double s = 0.0;
  for (TermId term : lookup(query)) {
    if (term < 0) continue;
    const auto tf = tf_in_row(term, row);
    if (tf > 0) s += term_weight(term, tf, row);
  }
  return s;
}

std::vector<double> Bm25Index::score_all(std::span<const std::string> query) const {
  const auto terms = lookup(query);
  std::vector<double> scores(ids_.size(), 0.0);
  const auto n = static_cast<std::int64_t>(ids_.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) {
    const auto row = static_cast<std::size_t>(r);
    double s = 0.0;
    for (TermId term : terms) {
      if (term < 0) continue;
      const auto tf = tf_in_row(term, row);
      if (tf > 0) s += term_weight(term, tf, row);
    }
    scores[row] = s;
  }
  return scores;
}

std::vector<double> Bm25Index::score_all_serial(std::span<const std::string> query) const {
  std::vector<double> scores(ids_.size(), 0.0);
  for (TermId term : lookup(query)) {
    if (term < 0) continue;
    for (const auto& p : postings_[static_cast<std::size_t>(term)]) scores[p.row] += term_weight(term, p.tf, p.row);
  }
  return scores;
}

std::vector<Scored> Bm25Index::top_k(std::span<const std::string> query, std::size_t k) const {
  const auto scores = score_all(query);
  return select_top_k(scores, ids_, k);
}

}  // namespace hgkr
