#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hgkr/encoder.h"
#include "hgkr/kernels.h"
#include "oracles.h"

using namespace hgkr;

namespace {

TokenSequence seq(std::vector<TokenId> ids) {
  TokenSequence s;
  s.original_length = ids.size();
  s.ids = std::move(ids);
  return s;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("init is seeded, bounded and float32 representable") {
  EncoderParams a(30, 8, 11), b(30, 8, 11), c(30, 8, 12);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (double x : a.data()) {
    CHECK(std::abs(x) <= EncoderParams::kDefaultInitScale);
    CHECK(static_cast<double>(static_cast<float>(x)) == x);
  }
  CHECK(a.all_finite());
}

TEST_CASE("pooling and normalization") {
  EncoderParams p(10, 6, 1);
  const auto one = encode(p, seq({4}));
  const auto row = p.row(4);
  double n = 0.0;
  for (double x : row) n += x * x;
  n = std::sqrt(n);
  for (std::size_t k = 0; k < 6; ++k) CHECK(one.values[k] == doctest::Approx(row[k] / n).epsilon(1e-12));
  CHECK(one.normalized);

  const auto twice = encode(p, seq({4, 4}));
  for (std::size_t k = 0; k < 6; ++k) CHECK(twice.values[k] == doctest::Approx(one.values[k]).epsilon(1e-12));

  const auto ab = encode(p, seq({2, 7}));
  const auto want = oracle::embed(p, std::vector<TokenId>{2, 7});
  for (std::size_t k = 0; k < 6; ++k) CHECK(ab.values[k] == doctest::Approx(want[k]).epsilon(1e-12));

  const auto empty = encode(p, seq({}));
  const auto unk = encode(p, seq({Vocabulary::kUnk}));
  CHECK(empty.values == unk.values);

  const auto raw = encode(p, seq({2, 7}), false);
  CHECK_FALSE(raw.normalized);
  CHECK(raw.values == oracle::pooled(p, std::vector<TokenId>{2, 7}));
  CHECK_THROWS(encode(p, seq({10})));
  CHECK_THROWS(encode(p, seq({-1})));
}

TEST_CASE("similarity") {
  EncoderParams p(10, 6, 2);
  const auto u = encode(p, seq({3, 5}));
  CHECK(similarity(u, u) == doctest::Approx(1.0).epsilon(1e-6));
  EmbeddingVector x{{1, 0, 0}, true}, y{{0, 1, 0}, true}, z{{1, 0}, true};
  CHECK(similarity(x, y) == 0.0);
  CHECK_THROWS(similarity(x, z));

  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int i = 0; i < 50; ++i) {
    EmbeddingVector a, b;
    for (int k = 0; k < 17; ++k) {
      a.values.push_back(g(rng));
      b.values.push_back(g(rng));
    }
    double s = 0.0;
    for (int k = 16; k >= 0; --k) s += a.values[static_cast<std::size_t>(k)] * b.values[static_cast<std::size_t>(k)];
    CHECK(similarity(a, b) == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("rescaling the table leaves normalized encodings unchanged") {
  EncoderParams p(20, 8, 3), q(20, 8, 3);
  for (auto& x : q.data()) x *= 7.5;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 30; ++i) {
    const auto s = oracle::random_sequence(rng, 20, 1, 9);
    const auto a = encode(p, s), b = encode(q, s);
    for (std::size_t k = 0; k < 8; ++k) CHECK(a.values[k] == doctest::Approx(b.values[k]).epsilon(1e-6));
  }
}

TEST_CASE("batch encode equals sequential encode") {
  EncoderParams p(50, 16, 6);
  std::mt19937_64 rng(7);
  std::vector<TokenSequence> batch;
  for (int i = 0; i < 100; ++i) batch.push_back(oracle::random_sequence(rng, 50, 0, 30));
  const auto par = encode_batch(p, batch);
  const auto ser = serial::encode_batch(p, batch);
  REQUIRE(par.size() == 100);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CHECK(par[i].values == encode(p, batch[i]).values);
    CHECK(ser[i].values == par[i].values);
  }
  std::vector<TokenSequence> rev(batch.rbegin(), batch.rend());
  const auto back = encode_batch(p, rev);
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(back[i].values == par[batch.size() - 1 - i].values);
}

TEST_CASE("backprop through normalization and pooling") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    EncoderParams p(12, 5, rng(), 0.5);
    const auto s = oracle::random_sequence(rng, 12, 8, 8);
    std::vector<double> w(5);
    for (auto& x : w) x = u(rng);
    const auto f = encode_forward(p, s.ids, true);
    GradientBuffer g(12, 5);
    backprop_pooled(s.ids, f, w, g);
    auto loss = [&] { return oracle::dot(oracle::embed(p, s.ids), w); };
    CHECK(oracle::fd_relative_error(p.data(), oracle::flatten(g), loss, 1e-5) < 1e-4);
  }
}

TEST_CASE("radial upstream gradient vanishes") {
  EncoderParams p(12, 5, 9);
  const std::vector<TokenId> toks = {2, 3, 4};
  const auto f = encode_forward(p, toks, true);
  const auto pg = pooled_gradient(f, f.output.values);
  for (double x : pg) CHECK(std::abs(x) < 1e-12);
}

TEST_CASE("repeated tokens accumulate every share") {
  GradientBuffer g(6, 2);
  const std::vector<TokenId> toks = {3, 3, 4};
  const std::vector<double> up = {3.0, -6.0};
  g.scatter_mean(toks, up);
  CHECK(g.row_view(3)[0] == doctest::Approx(2.0));
  CHECK(g.row_view(3)[1] == doctest::Approx(-4.0));
  CHECK(g.row_view(4)[0] == doctest::Approx(1.0));
  CHECK(g.touched().size() == 2);
  g.zero();
  CHECK(g.is_zero());
  CHECK(g.touched().empty());
}

TEST_CASE("zero pooled vector clamps the norm") {
  EncoderParams p(4, 3, 1);
  for (auto& x : p.row(2)) x = 0.0;
  const std::vector<TokenId> toks = {2};
  const auto f = encode_forward(p, toks, true);
  CHECK(f.norm_clamped);
  GradientBuffer g(4, 3);
  const std::vector<double> up = {1, 0, 0};
  CHECK_FALSE(backprop_pooled(toks, f, up, g));
}

TEST_CASE("sgd clips the global norm and quantizes") {
  EncoderParams p(4, 2, 1);
  const auto before = std::vector<double>(p.data().begin(), p.data().end());
  GradientBuffer g(4, 2);
  g.row(1)[0] = 30.0;
  g.row(2)[1] = 40.0;
  const double norm = sgd_step(p, g, 0.1, 1.0);
  CHECK(norm == doctest::Approx(50.0));
  CHECK(p.data()[2] == doctest::Approx(static_cast<float>(before[2] - 0.1 * 0.6)));
  CHECK(p.data()[5] == doctest::Approx(static_cast<float>(before[5] - 0.1 * 0.8)));
  for (double x : p.data()) CHECK(static_cast<double>(static_cast<float>(x)) == x);
  CHECK(g.is_zero());
}

TEST_CASE("parameter file round trip") {
  EncoderParams p(25, 7, 10);
  const auto path = (std::filesystem::temp_directory_path() / "hgkr_encoder_test.bin").string();
  p.save(path);
  const auto q = EncoderParams::load(path);
  CHECK(q == p);
  CHECK(q.fingerprint() == p.fingerprint());
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  CHECK_THROWS(EncoderParams::load(path));
  std::filesystem::remove(path);
}

TEST_CASE("kernels agree with serial references") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  const std::size_t n = 777, d = 9;
  std::vector<float> rows(n * d);
  for (auto& x : rows) x = static_cast<float>(g(rng));
  for (std::size_t r = 5; r < n; r += 50) std::copy_n(rows.begin() + 0, d, rows.begin() + static_cast<long>(r * d));
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(3 * i + 1);
  std::vector<double> q(d);
  for (auto& x : q) x = g(rng);
  std::vector<double> a(n), b(n);
  score_rows(q, rows, d, a);
  serial::score_rows(q, rows, d, b);
  CHECK(a == b);
  for (std::size_t k : {std::size_t{1}, std::size_t{17}, n, n + 3}) {
    const auto x = select_top_k(a, ids, k), y = serial::select_top_k(b, ids, k);
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i].id == y[i].id);
  }
}


TEST_CASE("top k over many chunks, alone and inside a parallel region") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> coarse(0, 300);
  const std::size_t n = 50000;
  std::vector<double> scores(n);
  for (auto& x : scores) x = coarse(rng) / 300.0;
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(i);
  const auto want = serial::select_top_k(scores, ids, 100);
  const int before = max_threads();
  set_num_threads(4);
  const auto alone = select_top_k(scores, ids, 100);
  std::vector<std::vector<Scored>> nested(8);
#pragma omp parallel for num_threads(4)
  for (int i = 0; i < 8; ++i) nested[static_cast<std::size_t>(i)] = select_top_k(scores, ids, 100);
  set_num_threads(before);
  REQUIRE(alone.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(alone[i].id == want[i].id);
  for (const auto& got : nested) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i].id == want[i].id);
  }
}

}
