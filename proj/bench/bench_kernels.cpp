// Serial reference vs OpenMP kernel timings.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "hgkr/bm25.h"
#include "hgkr/encoder.h"
#include "hgkr/kernels.h"

using namespace hgkr;

namespace {

constexpr std::size_t kDim = 64;

std::vector<TokenSequence> sequences(std::size_t n, std::size_t vocab) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<TokenId> tok(4, static_cast<TokenId>(vocab - 1));
  std::vector<TokenSequence> out(n);
  for (auto& s : out) {
    s.ids.resize(8 + rng() % 40);
    for (auto& t : s.ids) t = tok(rng);
    s.original_length = s.ids.size();
  }
  return out;
}

struct Rows {
  std::vector<float> data;
  std::vector<std::int64_t> ids;
  std::vector<double> query;
};

Rows rows(std::size_t n) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  Rows r;
  r.data.resize(n * kDim);
  for (auto& x : r.data) x = static_cast<float>(g(rng));
  r.ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.ids[i] = static_cast<std::int64_t>(i);
  r.query.resize(kDim);
  for (auto& x : r.query) x = g(rng);
  return r;
}

std::vector<EvidenceRecord> corpus(std::size_t n) {
  std::mt19937_64 rng(3);
  std::vector<EvidenceRecord> c(n);
  for (std::size_t i = 0; i < n; ++i) {
    c[i].evidence_id = static_cast<EvidenceId>(i);
    for (int k = 0; k < 20; ++k) c[i].text += "w" + std::to_string(rng() % 2000) + " ";
  }
  return c;
}

void BM_EncodeBatch(benchmark::State& state) {
  const EncoderParams enc(5000, kDim, 1);
  const auto seqs = sequences(static_cast<std::size_t>(state.range(0)), 5000);
  for (auto _ : state) benchmark::DoNotOptimize(encode_batch(enc, seqs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EncodeBatchSerial(benchmark::State& state) {
  const EncoderParams enc(5000, kDim, 1);
  const auto seqs = sequences(static_cast<std::size_t>(state.range(0)), 5000);
  for (auto _ : state) benchmark::DoNotOptimize(serial::encode_batch(enc, seqs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Search(benchmark::State& state) {
  const auto r = rows(static_cast<std::size_t>(state.range(0)));
  std::vector<double> scores(r.ids.size());
  for (auto _ : state) {
    score_rows(r.query, r.data, kDim, scores);
    benchmark::DoNotOptimize(select_top_k(scores, r.ids, 100));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SearchSerial(benchmark::State& state) {
  const auto r = rows(static_cast<std::size_t>(state.range(0)));
  std::vector<double> scores(r.ids.size());
  for (auto _ : state) {
    serial::score_rows(r.query, r.data, kDim, scores);
    benchmark::DoNotOptimize(serial::select_top_k(scores, r.ids, 100));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Bm25(benchmark::State& state) {
  const auto c = corpus(static_cast<std::size_t>(state.range(0)));
  const Bm25Index idx(c);
  const std::vector<std::string> q = {"w1", "w17", "w300", "w1999"};
  for (auto _ : state) benchmark::DoNotOptimize(idx.score_all(q));
}

void BM_Bm25Serial(benchmark::State& state) {
  const auto c = corpus(static_cast<std::size_t>(state.range(0)));
  const Bm25Index idx(c);
  const std::vector<std::string> q = {"w1", "w17", "w300", "w1999"};
  for (auto _ : state) benchmark::DoNotOptimize(idx.score_all_serial(q));
}

}  // namespace

BENCHMARK(BM_EncodeBatch)->Arg(1000)->Arg(10000);
BENCHMARK(BM_EncodeBatchSerial)->Arg(1000)->Arg(10000);
BENCHMARK(BM_Search)->Arg(5000)->Arg(50000);
BENCHMARK(BM_SearchSerial)->Arg(5000)->Arg(50000);
BENCHMARK(BM_Bm25)->Arg(5000)->Arg(50000);
BENCHMARK(BM_Bm25Serial)->Arg(5000)->Arg(50000);

BENCHMARK_MAIN();
