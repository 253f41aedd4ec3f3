#include "hgkr/index.h"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "hgkr/binary_io.h"
#include "hgkr/kernels.h"

namespace hgkr {

namespace {
constexpr char kMagic[5] = "HGIX";
constexpr std::uint32_t kVersion = 1;

std::vector<std::size_t> id_order(std::span<const EvidenceRecord> corpus) {
  if (corpus.empty()) throw InvalidInput("cannot index an empty corpus");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return corpus[a].evidence_id < corpus[b].evidence_id; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (corpus[order[i]].evidence_id == corpus[order[i - 1]].evidence_id)
      throw InvalidInput("duplicate evidence id " + std::to_string(corpus[order[i]].evidence_id));
  return order;
}

VectorIndex assemble(const EncoderParams& encoder, std::span<const EvidenceRecord> corpus,
                     std::span<const std::size_t> order, std::span<const EmbeddingVector> vecs) {
  VectorIndex index(encoder.dim(), encoder.fingerprint());
  for (std::size_t i = 0; i < order.size(); ++i) index.append(corpus[order[i]].evidence_id, corpus[order[i]].etype, vecs[i].values);
  return index;
}

std::vector<SearchHit> to_hits(const VectorIndex& index, const std::vector<Scored>& top) {
  std::vector<SearchHit> hits;
  hits.reserve(top.size());
  for (std::size_t i = 0; i < top.size(); ++i)
    hits.push_back({top[i].id, top[i].score, static_cast<int>(i + 1), index.types()[top[i].row]});
  return hits;
}

void check_query(const VectorIndex& index, std::span<const double> query, std::size_t k) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (query.size() != index.dim()) throw std::invalid_argument("query dimension does not match the index");
}
}  // namespace

void VectorIndex::append(EvidenceId id, KnowledgeType t, std::span<const double> vec) {
  if (vec.size() != dim_) throw std::invalid_argument("index row has the wrong dimension");
  if (!ids_.empty() && id <= ids_.back()) throw std::invalid_argument("index rows must be in ascending id order");
  for (double v : vec) rows_.push_back(static_cast<float>(v));
  ids_.push_back(id);
  types_.push_back(t);
}

void VectorIndex::save(const std::string& path) const {
  ByteWriter w;
  w.magic(kMagic);
  w.u32(kVersion);
  w.u64(ids_.size());
  w.u32(static_cast<std::uint32_t>(dim_));
  w.u64(fingerprint_);
  for (float v : rows_) w.f32(v);
  for (auto id : ids_) w.i64(id);
  for (auto t : types_) w.u8(static_cast<std::uint8_t>(t));
  w.write_with_checksum(path);
}

VectorIndex VectorIndex::load(const std::string& path) {
  auto r = ByteReader::from_checksummed_file(path);
  r.expect_magic(kMagic);
  if (const auto v = r.u32(); v != kVersion) throw std::runtime_error("unsupported index file version " + std::to_string(v));
  VectorIndex index;
  const auto n = r.u64();
  index.dim_ = r.u32();
  index.fingerprint_ = r.u64();
  index.rows_.resize(n * index.dim_);
  for (auto& v : index.rows_) v = r.f32();
  index.ids_.resize(n);
  for (auto& id : index.ids_) id = r.i64();
  index.types_.resize(n);
  for (auto& t : index.types_) {
    const auto b = r.u8();
    if (b >= kNumTypes) throw std::runtime_error("bad evidence type in " + path);
    t = static_cast<KnowledgeType>(b);
  }
  if (!r.at_end()) throw std::runtime_error("trailing bytes in index file: " + path);
  return index;
}

VectorIndex build_index(const EncoderParams& encoder, const Vocabulary& vocab, std::span<const EvidenceRecord> corpus) {
  const auto order = id_order(corpus);
  std::vector<TokenSequence> seqs(order.size());
  const auto n = static_cast<std::int64_t>(order.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    seqs[ui] = vocab.encode(corpus[order[ui]].text);
  }
  const auto vecs = encode_batch(encoder, seqs, true);
  return assemble(encoder, corpus, order, vecs);
}

std::vector<SearchHit> top_k_search(const VectorIndex& index, std::span<const double> query, std::size_t k) {
  check_query(index, query, k);
  std::vector<double> scores(index.size());
  score_rows(query, index.rows(), index.dim(), scores);
  return to_hits(index, select_top_k(scores, index.ids(), k));
}

namespace serial {

VectorIndex build_index(const EncoderParams& encoder, const Vocabulary& vocab, std::span<const EvidenceRecord> corpus) {
  const auto order = id_order(corpus);
  std::vector<TokenSequence> seqs;
  for (auto r : order) seqs.push_back(vocab.encode(corpus[r].text));
  const auto vecs = serial::encode_batch(encoder, seqs, true);
  return assemble(encoder, corpus, order, vecs);
}

std::vector<SearchHit> top_k_search(const VectorIndex& index, std::span<const double> query, std::size_t k) {
  check_query(index, query, k);
  std::vector<double> scores(index.size());
  serial::score_rows(query, index.rows(), index.dim(), scores);
  return to_hits(index, serial::select_top_k(scores, index.ids(), k));
}

}  // namespace serial

}  // namespace hgkr
