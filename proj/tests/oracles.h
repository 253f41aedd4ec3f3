#pragma once

// Straightforward reimplementations used as references by the unit tests and the
// acceptance runner. Nothing here calls the library's math paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "hgkr/encoder.h"
#include "hgkr/eval.h"
#include "hgkr/training.h"

namespace oracle {

using hgkr::TokenId;

inline std::vector<double> pooled(const hgkr::EncoderParams& e, std::span<const TokenId> tokens) {
  const std::size_t d = e.dim();
  std::vector<double> p(d, 0.0);
  if (tokens.empty()) {
    for (std::size_t k = 0; k < d; ++k) p[k] = e.data()[k];
    return p;
  }
  for (auto t : tokens)
    for (std::size_t k = 0; k < d; ++k) p[k] += e.data()[static_cast<std::size_t>(t) * d + k];
  for (auto& x : p) x /= static_cast<double>(tokens.size());
  return p;
}

inline std::vector<double> embed(const hgkr::EncoderParams& e, std::span<const TokenId> tokens) {
  auto p = pooled(e, tokens);
  double n = 0.0;
  for (double x : p) n += x * x;
  n = std::max(std::sqrt(n), 1e-8);
  for (auto& x : p) x /= n;
  return p;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// -log softmax(logits)[target], computed with an explicit max shift.
inline double cross_entropy(const std::vector<double>& logits, std::size_t target) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  return -(logits[target] - m - std::log(z));
}

inline double stage1_loss(const hgkr::EncoderParams& e, const hgkr::DecoderParams& dec,
                          const hgkr::MaskedSample& s) {
  const auto h = pooled(e, s.encoder_view);
  std::vector<double> logits(dec.vocab_size);
  for (std::size_t v = 0; v < dec.vocab_size; ++v) {
    double z = dec.bias[v];
    for (std::size_t k = 0; k < dec.dim; ++k) z += dec.weights[v * dec.dim + k] * h[k];
    logits[v] = z;
  }
  double loss = 0.0;
  for (auto pos : s.target_positions) loss += cross_entropy(logits, static_cast<std::size_t>(s.clean[pos]));
  return loss;
}

inline double stage2_loss(const hgkr::EncoderParams& e, const hgkr::ContrastiveBatch& b, double tau) {
  const auto n = b.size();
  std::vector<std::vector<double>> a(n), t(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = embed(e, b.anchors[i].ids);
    t[i] = embed(e, b.positives[i].ids);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logits(n);
    for (std::size_t j = 0; j < n; ++j) logits[j] = dot(a[i], t[j]) / tau;
    total += cross_entropy(logits, i);
  }
  return total / static_cast<double>(n);
}

struct Stage3Terms {
  double total = 0.0;
  double align = 0.0;
  double uniformity = 0.0;
};

inline Stage3Terms stage3_terms(const hgkr::EncoderParams& e, const hgkr::Stage3Instance& inst, double tau) {
  const auto q = embed(e, inst.query.ids);
  std::vector<double> logits = {dot(q, embed(e, inst.positive.ids)) / tau};
  for (const auto& g : inst.group) logits.push_back(dot(q, embed(e, g.ids)) / tau);
  for (const auto& g : inst.in_batch) logits.push_back(dot(q, embed(e, g.ids)) / tau);
  Stage3Terms out;
  out.total = cross_entropy(logits, 0);
  out.align = logits[0];
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  out.uniformity = m + std::log(z);
  return out;
}

// Central differences over every coordinate of `params`; returns ||analytic - numeric|| / max(norms).
inline double fd_relative_error(std::span<double> params, std::span<const double> analytic,
                                const std::function<double()>& loss, double h) {
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss();
    params[i] = keep - h;
    const double down = loss();
    params[i] = keep;
    const double num = (up - down) / (2.0 * h);
    diff2 += (analytic[i] - num) * (analytic[i] - num);
    a2 += analytic[i] * analytic[i];
    n2 += num * num;
  }
  const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  return std::sqrt(diff2) / scale;
}

// Central differences; returns ||analytic - numeric||.
inline double fd_absolute_error(std::span<double> params, std::span<const double> analytic,
                                const std::function<double()>& loss, double h) {
  double diff2 = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss();
    params[i] = keep - h;
    const double down = loss();
    params[i] = keep;
    const double num = (up - down) / (2.0 * h);
    diff2 += (analytic[i] - num) * (analytic[i] - num);
  }
  return std::sqrt(diff2);
}

inline std::vector<double> flatten(const hgkr::GradientBuffer& g) {
  std::vector<double> out;
  out.reserve(g.rows() * g.dim());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const auto row = g.row_view(r);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

// Full argsort by (score desc, id asc), then the first k.
inline std::vector<std::int64_t> argsort_top_k(const std::vector<double>& scores, std::span<const std::int64_t> ids,
                                               std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back(ids[order[i]]);
  return out;
}

inline int hit(const hgkr::RunResult& r, std::size_t k) {
  int found = 0;
  for (std::size_t i = 0; i < r.hits.size(); ++i)
    if (i < k && r.hits[i].relevant) found = 1;
  return found;
}

inline double rr(const hgkr::RunResult& r, std::size_t k) {
  for (std::size_t i = 0; i < r.hits.size() && i < k; ++i)
    if (r.hits[i].relevant) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

inline int type_hit(const hgkr::RunResult& r, hgkr::KnowledgeType t, std::size_t k) {
  std::vector<hgkr::RunHit> kept;
  for (std::size_t i = 0; i < r.hits.size() && i < k; ++i)
    if (r.hits[i].etype == t) kept.push_back(r.hits[i]);
  return std::any_of(kept.begin(), kept.end(), [](const hgkr::RunHit& h) { return h.relevant; }) ? 1 : 0;
}

// Random run with ids 0..n-1 in shuffled order, relevance and types drawn independently.
inline hgkr::RunResult random_run(std::mt19937_64& rng, std::int64_t qid, hgkr::InstructionGroup g) {
  hgkr::RunResult r;
  r.question_id = qid;
  r.group = g;
  const auto n = std::uniform_int_distribution<std::size_t>(0, hgkr::kRunDepth)(rng);
  const double p = std::uniform_real_distribution<double>(0.0, 0.05)(rng);
  std::vector<std::int64_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::int64_t{0});
  std::shuffle(ids.begin(), ids.end(), rng);
  double score = 1.0;
  for (auto id : ids) {
    score -= std::uniform_real_distribution<double>(0.0, 0.01)(rng);
    hgkr::RunHit h;
    h.id = id;
    h.score = score;
    h.relevant = std::bernoulli_distribution(p)(rng);
    h.etype = hgkr::kAllTypes[std::uniform_int_distribution<std::size_t>(0, 3)(rng)];
    r.hits.push_back(h);
  }
  return r;
}

inline hgkr::TokenSequence random_sequence(std::mt19937_64& rng, std::size_t vocab, std::size_t lo, std::size_t hi) {
  hgkr::TokenSequence s;
  const auto n = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  std::uniform_int_distribution<TokenId> tok(0, static_cast<TokenId>(vocab - 1));
  for (std::size_t i = 0; i < n; ++i) s.ids.push_back(tok(rng));
  s.original_length = n;
  return s;
}

inline hgkr::Stage3Instance random_stage3_instance(std::mt19937_64& rng, std::size_t vocab) {
  hgkr::Stage3Instance inst;
  inst.query = random_sequence(rng, vocab, 1, 10);
  inst.positive = random_sequence(rng, vocab, 1, 10);
  const auto g = std::uniform_int_distribution<std::size_t>(0, 15)(rng);
  const auto b = std::uniform_int_distribution<std::size_t>(g == 0 ? 1 : 0, 6)(rng);
  for (std::size_t i = 0; i < g; ++i) {
    inst.group.push_back(random_sequence(rng, vocab, 1, 10));
    inst.group_types.push_back(hgkr::kAllTypes[std::uniform_int_distribution<std::size_t>(0, 3)(rng)]);
  }
  for (std::size_t i = 0; i < b; ++i) inst.in_batch.push_back(random_sequence(rng, vocab, 1, 10));
  return inst;
}

inline hgkr::ContrastiveBatch random_stage2_batch(std::mt19937_64& rng, std::size_t vocab) {
  hgkr::ContrastiveBatch b;
  const auto n = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
  for (std::size_t i = 0; i < n; ++i) {
    b.anchors.push_back(random_sequence(rng, vocab, 1, 10));
    b.positives.push_back(random_sequence(rng, vocab, 1, 10));
  }
  return b;
}

}  // namespace oracle
