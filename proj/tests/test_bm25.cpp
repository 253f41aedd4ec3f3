#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "hgkr/bm25.h"
#include "hgkr/textproc.h"
#include "oracles.h"

using namespace hgkr;

namespace {

std::vector<EvidenceRecord> docs(const std::vector<std::string>& texts) {
  std::vector<EvidenceRecord> out(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out[i].evidence_id = static_cast<EvidenceId>(10 + i);
    out[i].text = texts[i];
  }
  return out;
}

// Textbook Okapi BM25 written out per document.
double expand(const std::vector<EvidenceRecord>& corpus, const std::vector<std::string>& query, std::size_t row) {
  const double k1 = 1.2, b = 0.75;
  double avgdl = 0.0;
  std::vector<std::vector<std::string>> toks;
  for (const auto& e : corpus) {
    toks.push_back(tokenize(e.text));
    avgdl += static_cast<double>(toks.back().size());
  }
  avgdl /= static_cast<double>(corpus.size());
  const double n = static_cast<double>(corpus.size());
  double score = 0.0;
  for (const auto& term : query) {
    double df = 0.0;
    for (const auto& t : toks) df += std::count(t.begin(), t.end(), term) > 0;
    const double tf = static_cast<double>(std::count(toks[row].begin(), toks[row].end(), term));
    if (tf == 0.0) continue;
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    const double len = static_cast<double>(toks[row].size());
    score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avgdl));
  }
  return score;
}

}  // namespace

TEST_SUITE("bm25") {

TEST_CASE("two documents sharing a term") {
  const auto corpus = docs({"alpha beta", "alpha gamma delta"});
  const Bm25Index bm(corpus);
  CHECK(bm.idf("alpha") == doctest::Approx(std::log(1.2)).epsilon(1e-12));
  const std::vector<std::string> q = {"alpha"};
  const double avgdl = 2.5;
  const double want = std::log(1.2) * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 2.0 / avgdl));
  CHECK(bm.score(q, 10) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("no overlap, duplicates, unknown ids") {
  const auto corpus = docs({"alpha beta", "gamma delta", "alpha alpha"});
  const Bm25Index bm(corpus);
  const std::vector<std::string> none = {"omega"};
  CHECK(bm.score(none, 11) == 0.0);
  const std::vector<std::string> one = {"alpha"}, two = {"alpha", "alpha"};
  CHECK(bm.score(two, 10) == doctest::Approx(2.0 * bm.score(one, 10)));
  CHECK_THROWS_AS(bm.score(one, 99), std::out_of_range);
}

TEST_CASE("scores match the textbook expansion") {
  std::mt19937_64 rng(9);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g"};
  std::vector<std::string> texts;
  for (int i = 0; i < 60; ++i) {
    std::string t;
    for (std::size_t k = 0, n = 1 + rng() % 12; k < n; ++k) t += words[rng() % words.size()] + " ";
    texts.push_back(t);
  }
  const auto corpus = docs(texts);
  const Bm25Index bm(corpus);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> q;
    for (std::size_t k = 0, n = 1 + rng() % 4; k < n; ++k) q.push_back(words[rng() % words.size()]);
    const auto all = bm.score_all(q);
    const auto serial = bm.score_all_serial(q);
    for (std::size_t r = 0; r < corpus.size(); ++r) {
      CHECK(all[r] == doctest::Approx(expand(corpus, q, r)).epsilon(1e-12));
      CHECK(all[r] == doctest::Approx(serial[r]).epsilon(1e-12));
      CHECK(all[r] >= 0.0);
    }
    const auto top = bm.top_k(q, 10);
    const auto want = oracle::argsort_top_k(all, bm.ids(), 10);
    REQUIRE(top.size() == want.size());
    for (std::size_t i = 0; i < top.size(); ++i) CHECK(top[i].id == want[i]);
  }
}

TEST_CASE("score grows with term frequency at fixed length") {
  const auto corpus = docs({"x y z w", "x x z w", "x x x w", "q q q q"});
  const Bm25Index bm(corpus);
  const std::vector<std::string> q = {"x"};
  CHECK(bm.score(q, 10) < bm.score(q, 11));
  CHECK(bm.score(q, 11) < bm.score(q, 12));
}

}
