#include "hgkr/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "hgkr/bm25.h"
#include "hgkr/kernels.h"
#include "json.hpp"

namespace hgkr {

namespace {

// Seed offsets keep the stages' random streams independent of each other.
constexpr std::uint64_t kStage1Stream = 0x5354414745310000ull;
constexpr std::uint64_t kStage2Stream = 0x5354414745320000ull;
constexpr std::uint64_t kStage3Stream = 0x5354414745330000ull;
constexpr std::uint64_t kDecoderStream = 0x4445434f44455200ull;
constexpr std::uint64_t kHeldoutStream = 0x48454c444f555400ull;

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// A deferred scatter of a pooled-vector gradient onto the rows of one sequence.
struct ScatterOp {
  const std::vector<TokenId>* tokens;
  std::vector<double> grad;
};

void apply_ops(const std::vector<ScatterOp>& ops, GradientBuffer& grad) {
  for (const auto& op : ops) {
    grad.scatter_mean(*op.tokens, op.grad);
    grad.note_accumulation();
  }
}

double log_sum_exp(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

template <typename T>
void shuffle_in_place(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (unfollowing_probability < 0.0 || unfollowing_probability > 1.0)
    throw std::invalid_argument("unfollowing probability must lie in [0, 1]");
  for (const auto* s : {&stage1, &stage2, &stage3}) {
    if (s->epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    if (s->batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (!(s->learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  }
  if (stage2.batch_size < 2) throw std::invalid_argument("stage-2 batch size must be at least 2");
  if (group_capacity == 0) throw std::invalid_argument("group capacity must be positive");
}

void append_report_jsonl(const std::string& path, const StageReport& report) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  if (report.initial_heldout_loss)
    out << nlohmann::json{{"stage", report.stage}, {"epoch", 0}, {"samples", 0}, {"heldout_loss", *report.initial_heldout_loss}}
               .dump()
        << '\n';
  for (const auto& e : report.epochs) {
    nlohmann::json j = {{"stage", e.stage},
                        {"epoch", e.epoch},
                        {"mean_loss", e.mean_loss},
                        {"samples", e.samples},
                        {"wall_ms", e.wall_ms}};
    if (e.heldout_loss) j["heldout_loss"] = *e.heldout_loss;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Stage 1

DecoderParams::DecoderParams(std::size_t vocab, std::size_t d, std::uint64_t seed, double init_scale)
    : vocab_size(vocab), dim(d), weights(vocab * d), bias(vocab, 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-init_scale, init_scale);
  for (auto& w : weights) w = u(rng);
}

namespace {

std::vector<std::size_t> draw_positions(std::size_t n, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::size_t masked_count(std::size_t n, double ratio) {
  const auto c = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  return std::clamp<std::size_t>(c, 1, n);
}

}  // namespace

std::optional<MaskedSample> make_masked_sample(std::span<const TokenId> tokens, std::mt19937_64& rng) {
  const std::size_t n = tokens.size();
  if (n < 2) return std::nullopt;
  MaskedSample s;
  s.clean.assign(tokens.begin(), tokens.end());
  s.encoder_view = s.clean;
  s.masked_positions = draw_positions(n, masked_count(n, kEncoderMaskRatio), rng);
  for (auto p : s.masked_positions) s.encoder_view[p] = Vocabulary::kMask;
  s.target_positions = draw_positions(n, masked_count(n, kDecoderMaskRatio), rng);
  return s;
}

namespace {

struct Stage1Work {
  double loss = 0.0;
  std::vector<double> h;
  std::vector<double> dlogits;
  std::vector<double> dh;
};

Stage1Work stage1_forward_backward(const EncoderParams& enc, const DecoderParams& dec, const MaskedSample& sample,
                                   bool want_grad) {
  const std::size_t v = dec.vocab_size;
  const std::size_t d = dec.dim;
  if (enc.vocab_size() != v || enc.dim() != d) throw std::invalid_argument("stage1: encoder/decoder shape mismatch");
  Stage1Work w;
  w.h = encode_forward(enc, sample.encoder_view, false).pooled;
  std::vector<double> logits(v);
  for (std::size_t r = 0; r < v; ++r) {
    double s = dec.bias[r];
    const double* row = dec.weights.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) s += row[i] * w.h[i];
    logits[r] = s;
  }
  const double lse = log_sum_exp(logits);
  for (auto p : sample.target_positions) w.loss += lse - logits[static_cast<std::size_t>(sample.clean[p])];
  if (!want_grad) return w;

  const double m = static_cast<double>(sample.target_positions.size());
  w.dlogits.resize(v);
  for (std::size_t r = 0; r < v; ++r) w.dlogits[r] = m * std::exp(logits[r] - lse);
  for (auto p : sample.target_positions) w.dlogits[static_cast<std::size_t>(sample.clean[p])] -= 1.0;
  w.dh.assign(d, 0.0);
  for (std::size_t r = 0; r < v; ++r) {
    const double g = w.dlogits[r];
    const double* row = dec.weights.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) w.dh[i] += g * row[i];
  }
  return w;
}

void accumulate_stage1(const Stage1Work& w, const MaskedSample& sample, Stage1Grads& grads, double scale) {
  const std::size_t d = w.h.size();
  for (std::size_t r = 0; r < w.dlogits.size(); ++r) {
    const double g = w.dlogits[r] * scale;
    auto row = grads.decoder_weights.row(r);
    for (std::size_t i = 0; i < d; ++i) row[i] += g * w.h[i];
    grads.decoder_bias.row(r)[0] += g;
  }
  std::vector<double> dh(w.dh);
  for (auto& x : dh) x *= scale;
  grads.encoder.scatter_mean(sample.encoder_view, dh);
  grads.encoder.note_accumulation();
}

std::vector<TokenId> concat_pair_tokens(const DataTextPair& p, const Vocabulary& vocab) {
  auto ids = vocab.encode(p.data.text).ids;
  const auto t = vocab.encode(p.text).ids;
  ids.insert(ids.end(), t.begin(), t.end());
  if (ids.size() > kMaxSequenceLength) ids.resize(kMaxSequenceLength);
  return ids;
}

}  // namespace

double stage1_loss(const EncoderParams& enc, const DecoderParams& dec, const MaskedSample& sample,
                   Stage1Grads* grads) {
  const auto w = stage1_forward_backward(enc, dec, sample, grads != nullptr);
  if (grads) accumulate_stage1(w, sample, *grads, 1.0);
  return w.loss;
}

StageReport stage1_pretrain(EncoderParams& enc, std::span<const DataTextPair> pairs, const Vocabulary& vocab,
                            const TrainConfig& config) {
  config.validate();
  if (pairs.empty()) throw std::invalid_argument("stage 1 needs at least one data-text pair");
  if (enc.vocab_size() != vocab.size()) throw std::invalid_argument("encoder does not match vocabulary");

  StageReport report;
  report.stage = 1;
  std::vector<std::vector<TokenId>> inputs;
  inputs.reserve(pairs.size());
  for (const auto& p : pairs) inputs.push_back(concat_pair_tokens(p, vocab));

  DecoderParams dec(enc.vocab_size(), enc.dim(), config.seed ^ kDecoderStream);
  Stage1Grads grads(enc.vocab_size(), enc.dim());

  // Fixed held-out masks over a prefix of the pairs, for a loss trace that does not move with sampling.
  std::vector<MaskedSample> heldout;
  {
    std::mt19937_64 hrng(config.seed ^ kHeldoutStream);
    for (std::size_t i = 0; i < inputs.size() && heldout.size() < 256; ++i)
      if (auto s = make_masked_sample(inputs[i], hrng)) heldout.push_back(std::move(*s));
  }
  auto heldout_loss = [&] {
    if (heldout.empty()) return 0.0;
    std::vector<double> losses(heldout.size());
    const auto n = static_cast<std::int64_t>(heldout.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::int64_t i = 0; i < n; ++i)
      losses[static_cast<std::size_t>(i)] =
          stage1_forward_backward(enc, dec, heldout[static_cast<std::size_t>(i)], false).loss;
    double s = 0.0;
    for (double l : losses) s += l;
    return s / static_cast<double>(losses.size());
  };
  report.initial_heldout_loss = heldout_loss();

  std::mt19937_64 rng(config.seed ^ kStage1Stream);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SgdTarget targets[3] = {{enc.data(), &grads.encoder, true},
                          {std::span<double>(dec.weights), &grads.decoder_weights, false},
                          {std::span<double>(dec.bias), &grads.decoder_bias, false}};

  for (int epoch = 0; epoch < config.stage1.epochs; ++epoch) {
    const auto t0 = Clock::now();
    shuffle_in_place(order, rng);
    std::vector<MaskedSample> samples;
    samples.reserve(order.size());
    for (auto i : order) {
      if (auto s = make_masked_sample(inputs[i], rng))
        samples.push_back(std::move(*s));
      else
        ++report.skipped_samples;
    }
    double loss_sum = 0.0;
    const std::size_t bs = config.stage1.batch_size;
    for (std::size_t start = 0; start < samples.size(); start += bs) {
      const std::size_t end = std::min(samples.size(), start + bs);
      std::vector<Stage1Work> work(end - start);
      const auto nb = static_cast<std::int64_t>(work.size());
#pragma omp parallel for schedule(dynamic, 1)
      for (std::int64_t j = 0; j < nb; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        work[uj] = stage1_forward_backward(enc, dec, samples[start + uj], true);
      }
      const double scale = 1.0 / static_cast<double>(work.size());
      for (std::size_t j = 0; j < work.size(); ++j) {
        loss_sum += work[j].loss;
        accumulate_stage1(work[j], samples[start + j], grads, scale);
      }
      sgd_step(targets, config.stage1.learning_rate, config.clip_norm);
    }
    EpochRecord rec;
    rec.stage = 1;
    rec.epoch = epoch + 1;
    rec.samples = samples.size();
    rec.mean_loss = samples.empty() ? 0.0 : loss_sum / static_cast<double>(samples.size());
    rec.heldout_loss = heldout_loss();
    rec.wall_ms = elapsed_ms(t0);
    report.epochs.push_back(rec);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Stage 2

namespace {

double stage2_forward_backward(const EncoderParams& enc, const ContrastiveBatch& batch, double tau,
                               std::vector<ScatterOp>* ops) {
  const std::size_t b = batch.size();
  if (b < 2 || batch.positives.size() != b) throw std::invalid_argument("stage 2 needs a batch of at least 2 pairs");
  const std::size_t d = enc.dim();
  std::vector<Encoding> da(b), tb(b);
  for (std::size_t i = 0; i < b; ++i) {
    da[i] = encode_forward(enc, batch.anchors[i].ids, true);
    tb[i] = encode_forward(enc, batch.positives[i].ids, true);
  }
  std::vector<double> logits(b * b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j)
      logits[i * b + j] = dot(std::span<const double>(da[i].output.values), std::span<const double>(tb[j].output.values)) / tau;

  double loss = 0.0;
  std::vector<double> dlogit(b * b);
  for (std::size_t i = 0; i < b; ++i) {
    std::span<const double> row(logits.data() + i * b, b);
    const double lse = log_sum_exp(row);
    loss += lse - row[i];
    for (std::size_t j = 0; j < b; ++j) dlogit[i * b + j] = (std::exp(row[j] - lse) - (i == j ? 1.0 : 0.0)) / static_cast<double>(b);
  }
  loss /= static_cast<double>(b);
  if (!ops) return loss;

  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> gd(d, 0.0);
    for (std::size_t j = 0; j < b; ++j) {
      const double c = dlogit[i * b + j] / tau;
      for (std::size_t k = 0; k < d; ++k) gd[k] += c * tb[j].output.values[k];
    }
    ops->push_back({&batch.anchors[i].ids, pooled_gradient(da[i], gd)});
  }
  for (std::size_t j = 0; j < b; ++j) {
    std::vector<double> gt(d, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      const double c = dlogit[i * b + j] / tau;
      for (std::size_t k = 0; k < d; ++k) gt[k] += c * da[i].output.values[k];
    }
    ops->push_back({&batch.positives[j].ids, pooled_gradient(tb[j], gt)});
  }
  return loss;
}

}  // namespace

double stage2_loss(const EncoderParams& enc, const ContrastiveBatch& batch, double temperature, GradientBuffer* grad) {
  if (!grad) return stage2_forward_backward(enc, batch, temperature, nullptr);
  std::vector<ScatterOp> ops;
  const double loss = stage2_forward_backward(enc, batch, temperature, &ops);
  apply_ops(ops, *grad);
  return loss;
}

StageReport stage2_align(EncoderParams& enc, std::span<const DataTextPair> pairs, const Vocabulary& vocab,
                         const TrainConfig& config) {
  config.validate();
  if (pairs.size() < 2) throw std::invalid_argument("stage 2 needs at least two data-text pairs");
  if (enc.vocab_size() != vocab.size()) throw std::invalid_argument("encoder does not match vocabulary");
  StageReport report;
  report.stage = 2;
  std::vector<TokenSequence> data, text;
  for (const auto& p : pairs) {
    data.push_back(vocab.encode(p.data.text));
    text.push_back(vocab.encode(p.text));
  }
  GradientBuffer grad(enc.vocab_size(), enc.dim());
  std::mt19937_64 rng(config.seed ^ kStage2Stream);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = config.stage2.batch_size;

  for (int epoch = 0; epoch < config.stage2.epochs; ++epoch) {
    const auto t0 = Clock::now();
    shuffle_in_place(order, rng);
    double loss_sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      ContrastiveBatch batch;
      for (std::size_t k = start; k < end; ++k) {
        batch.anchors.push_back(data[order[k]]);
        batch.positives.push_back(text[order[k]]);
      }
      if (batch.size() < 2) break;
      std::vector<ScatterOp> ops;
      const double loss = stage2_forward_backward(enc, batch, config.temperature, &ops);
      apply_ops(ops, grad);
      sgd_step(enc, grad, config.stage2.learning_rate, config.clip_norm);
      loss_sum += loss * static_cast<double>(batch.size());
      counted += batch.size();
    }
    EpochRecord rec;
    rec.stage = 2;
    rec.epoch = epoch + 1;
    rec.samples = counted;
    rec.mean_loss = counted ? loss_sum / static_cast<double>(counted) : 0.0;
    rec.wall_ms = elapsed_ms(t0);
    report.epochs.push_back(rec);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Stage 3

TypedPools mine_hard_negatives(const QuestionRecord& question, std::span<const EvidenceRecord> corpus,
                               std::span<const double> scores, std::size_t pool_size) {
  if (scores.size() != corpus.size()) throw std::invalid_argument("mine_hard_negatives: one score per evidence");
  std::array<std::vector<Scored>, kNumTypes> cand;
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    if (label_relevance(question, corpus[r])) continue;
    cand[type_index(corpus[r].etype)].push_back({corpus[r].evidence_id, scores[r], r});
  }
  TypedPools pools;
  for (std::size_t t = 0; t < kNumTypes; ++t) {
    auto& c = cand[t];
    const auto k = std::min(pool_size, c.size());
    std::partial_sort(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(k), c.end(), ranks_before);
    for (std::size_t i = 0; i < k; ++i) pools[t].push_back(c[i].row);
  }
  return pools;
}

NegativeGroup build_negative_group(const TypedPools& pools, std::span<const EvidenceRecord> corpus,
                                   const GroupRequest& request, std::mt19937_64& rng) {
  NegativeGroup g;
  g.preferred = request.preferred;
  std::size_t slots = request.capacity;

  if (request.preferred) {
    std::bernoulli_distribution coin(request.unfollowing_probability);
    if (coin(rng)) {
      std::vector<std::size_t> wrong_type;
      for (auto r : request.relevant_rows)
        if (corpus[r].etype != *request.preferred) wrong_type.push_back(r);
      if (!wrong_type.empty() && slots > 0) {
        std::uniform_int_distribution<std::size_t> pick(0, wrong_type.size() - 1);
        g.unfollowing_member = wrong_type[pick(rng)];
        --slots;
      }
    }
  }

  std::vector<std::size_t> order;
  for (auto t : kAllTypes)
    if (!request.preferred || *request.preferred != t) order.push_back(type_index(t));
  std::array<std::size_t, kNumTypes> take{};
  bool progressed = true;
  while (slots > 0 && progressed) {
    progressed = false;
    for (auto t : order) {
      if (slots == 0) break;
      if (take[t] < pools[t].size()) {
        ++take[t];
        --slots;
        progressed = true;
      }
    }
  }
  // Members of each type are a uniform draw without replacement from its pool.
  for (auto t : order) {
    std::vector<std::size_t> pool(pools[t]);
    for (std::size_t i = 0; i < take[t]; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      g.members.push_back(pool[i]);
    }
    g.counts[t] = take[t];
  }
  if (g.unfollowing_member) {
    g.members.push_back(*g.unfollowing_member);
    g.counts[type_index(corpus[*g.unfollowing_member].etype)] += 1;
  }
  g.short_group = g.members.size() < request.capacity;
  return g;
}

namespace {

LossBreakdown stage3_forward_backward(const EncoderParams& enc, const Stage3Instance& inst, double tau,
                                      std::vector<ScatterOp>* ops) {
  if (inst.group.size() != inst.group_types.size()) throw std::invalid_argument("stage3: group types mismatch");
  if (inst.group.empty() && inst.in_batch.empty()) throw std::invalid_argument("stage3: no negatives");
  const std::size_t d = enc.dim();
  const std::size_t ng = inst.group.size();
  const std::size_t nb = inst.in_batch.size();
  const std::size_t n = 1 + ng + nb;  // slot 0 is the positive

  const Encoding q = encode_forward(enc, inst.query.ids, true);
  std::vector<Encoding> e(n);
  std::vector<const std::vector<TokenId>*> toks(n);
  toks[0] = &inst.positive.ids;
  for (std::size_t j = 0; j < ng; ++j) toks[1 + j] = &inst.group[j].ids;
  for (std::size_t j = 0; j < nb; ++j) toks[1 + ng + j] = &inst.in_batch[j].ids;
  for (std::size_t j = 0; j < n; ++j) e[j] = encode_forward(enc, *toks[j], true);

  std::vector<double> logits(n);
  for (std::size_t j = 0; j < n; ++j)
    logits[j] = dot(std::span<const double>(q.output.values), std::span<const double>(e[j].output.values)) / tau;

  LossBreakdown out;
  const double lse = log_sum_exp(logits);
  out.total = lse - logits[0];
  out.align = logits[0];
  for (std::size_t j = 0; j < ng; ++j) {
    const double x = std::exp(logits[1 + j]);
    out.repel_by_type[type_index(inst.group_types[j])] += x;
  }
  for (double x : out.repel_by_type) out.repel += x;
  for (std::size_t j = 0; j < nb; ++j) out.in_batch += std::exp(logits[1 + ng + j]);
  out.uniformity = std::log(std::exp(out.align) + out.repel + out.in_batch);
  if (!ops) return out;

  std::vector<double> gq(d, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double c = (std::exp(logits[j] - lse) - (j == 0 ? 1.0 : 0.0)) / tau;
    for (std::size_t k = 0; k < d; ++k) gq[k] += c * e[j].output.values[k];
    std::vector<double> ge(d);
    for (std::size_t k = 0; k < d; ++k) ge[k] = c * q.output.values[k];
    ops->push_back({toks[j], pooled_gradient(e[j], ge)});
  }
  ops->push_back({&inst.query.ids, pooled_gradient(q, gq)});
  return out;
}

}  // namespace

LossBreakdown stage3_loss(const EncoderParams& enc, const Stage3Instance& instance, double temperature,
                          GradientBuffer* grad) {
  if (!grad) return stage3_forward_backward(enc, instance, temperature, nullptr);
  std::vector<ScatterOp> ops;
  const auto out = stage3_forward_backward(enc, instance, temperature, &ops);
  apply_ops(ops, *grad);
  return out;
}

std::vector<std::size_t> select_positives(std::span<const std::size_t> relevant_rows,
                                          std::span<const EvidenceRecord> corpus, std::size_t max_positives) {
  std::array<std::vector<std::size_t>, kNumTypes> by_type;
  for (auto r : relevant_rows) by_type[type_index(corpus[r].etype)].push_back(r);
  for (auto& v : by_type)
    std::sort(v.begin(), v.end(), [&](auto a, auto b) { return corpus[a].evidence_id < corpus[b].evidence_id; });
  std::vector<std::size_t> out;
  std::array<std::size_t, kNumTypes> cur{};
  bool progressed = true;
  while (out.size() < max_positives && progressed) {
    progressed = false;
    for (std::size_t t = 0; t < kNumTypes && out.size() < max_positives; ++t) {
      if (cur[t] < by_type[t].size()) {
        out.push_back(by_type[t][cur[t]++]);
        progressed = true;
      }
    }
  }
  return out;
}

std::vector<TrainingSample> make_training_samples(std::span<const QuestionRecord> questions,
                                                  std::span<const EvidenceRecord> corpus,
                                                  std::span<const TypedPools> pools,
                                                  std::span<const std::vector<std::size_t>> relevant,
                                                  const InstructionSet& instructions, const TrainConfig& config,
                                                  std::mt19937_64& rng) {
  std::vector<TrainingSample> out;
  for (std::size_t qi = 0; qi < questions.size(); ++qi) {
    const auto& q = questions[qi];
    for (auto pos : select_positives(relevant[qi], corpus, config.max_positives)) {
      const auto lambda = corpus[pos].etype;

      TrainingSample s1;
      s1.scenario = 1;
      s1.positive_row = pos;
      s1.query = build_retrieval_query(instructions.sample(InstructionGroup::All, q.domain, rng), q);
      s1.negatives = build_negative_group(pools[qi], corpus,
                                          {std::nullopt, config.group_capacity, config.unfollowing_probability,
                                           relevant[qi]},
                                          rng);
      out.push_back(std::move(s1));

      TrainingSample s2;
      s2.scenario = 2;
      s2.positive_row = pos;
      s2.query = build_retrieval_query(instructions.sample(group_for(lambda), q.domain, rng), q);
      s2.negatives = build_negative_group(pools[qi], corpus,
                                          {lambda, config.group_capacity, config.unfollowing_probability,
                                           relevant[qi]},
                                          rng);
      out.push_back(std::move(s2));
    }
  }
  return out;
}

StageReport stage3_finetune(EncoderParams& enc, std::span<const QuestionRecord> questions,
                            std::span<const EvidenceRecord> corpus, const Vocabulary& vocab,
                            const InstructionSet& instructions, const TrainConfig& config) {
  config.validate();
  if (enc.vocab_size() != vocab.size()) throw std::invalid_argument("encoder does not match vocabulary");
  StageReport report;
  report.stage = 3;

  std::vector<TokenSequence> evidence_tokens(corpus.size());
  for (std::size_t r = 0; r < corpus.size(); ++r) evidence_tokens[r] = vocab.encode(corpus[r].text);

  const RelevanceIndex rel_index(corpus);
  std::vector<std::vector<std::size_t>> relevant(questions.size());
  bool any_positive = false;
  for (std::size_t qi = 0; qi < questions.size(); ++qi) {
    relevant[qi] = rel_index.relevant_rows(questions[qi]);
    any_positive = any_positive || !relevant[qi].empty();
  }
  if (!any_positive) throw std::invalid_argument("stage 3 needs at least one question with a relevant evidence");

  // Mining uses the incoming (stage-2) encoder, or BM25 when asked.
  std::vector<TypedPools> pools(questions.size());
  {
    const auto nq = static_cast<std::int64_t>(questions.size());
    if (config.use_bm25_miner) {
      const Bm25Index bm25(corpus);
      for (std::int64_t i = 0; i < nq; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const auto qt = tokenize(questions[ui].text);
        pools[ui] = mine_hard_negatives(questions[ui], corpus, bm25.score_all(qt), config.pool_size);
      }
    } else {
      const auto ev = encode_batch(enc, evidence_tokens, true);
      std::vector<TokenSequence> qtoks(questions.size());
      for (std::size_t qi = 0; qi < questions.size(); ++qi)
        qtoks[qi] = vocab.encode(
            build_retrieval_query(instructions.render(InstructionGroup::All, questions[qi].domain, 0), questions[qi]).text);
#pragma omp parallel for schedule(dynamic, 4)
      for (std::int64_t i = 0; i < nq; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const auto qv = encode(enc, qtoks[ui], true);
        std::vector<double> scores(corpus.size());
        for (std::size_t r = 0; r < corpus.size(); ++r)
          scores[r] = dot(std::span<const double>(qv.values), std::span<const double>(ev[r].values));
        pools[ui] = mine_hard_negatives(questions[ui], corpus, scores, config.pool_size);
      }
    }
  }

  GradientBuffer grad(enc.vocab_size(), enc.dim());
  std::mt19937_64 rng(config.seed ^ kStage3Stream);
  const std::size_t bs = config.stage3.batch_size;

  auto is_relevant = [&](std::size_t qi, std::size_t row) {
    return std::binary_search(relevant[qi].begin(), relevant[qi].end(), row);
  };
  std::vector<std::size_t> question_of;  // sample -> question index, rebuilt per epoch

  for (int epoch = 0; epoch < config.stage3.epochs; ++epoch) {
    const auto t0 = Clock::now();
    auto samples = make_training_samples(questions, corpus, pools, relevant, instructions, config, rng);
    question_of.clear();
    for (std::size_t qi = 0; qi < questions.size(); ++qi) {
      const auto npos = select_positives(relevant[qi], corpus, config.max_positives).size();
      question_of.insert(question_of.end(), 2 * npos, qi);
    }
    for (const auto& s : samples) {
      if (s.negatives.short_group) ++report.short_groups;
      if (s.scenario == 2) {
        ++report.scenario2_samples;
        if (s.negatives.unfollowing_member) ++report.unfollowing_members;
      }
    }
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_in_place(order, rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const std::size_t b = end - start;
      std::vector<Stage3Instance> inst(b);
      for (std::size_t i = 0; i < b; ++i) {
        const auto& s = samples[order[start + i]];
        const auto qi = question_of[order[start + i]];
        auto& in = inst[i];
        in.query = vocab.encode(s.query.text);
        in.positive = evidence_tokens[s.positive_row];
        for (auto r : s.negatives.members) {
          in.group.push_back(evidence_tokens[r]);
          in.group_types.push_back(corpus[r].etype);
        }
        for (std::size_t j = 0; j < b; ++j) {
          if (j == i) continue;
          const auto other = samples[order[start + j]].positive_row;
          if (other == s.positive_row || is_relevant(qi, other)) continue;
          in.in_batch.push_back(evidence_tokens[other]);
        }
      }
      std::vector<std::vector<ScatterOp>> ops(b);
      std::vector<double> losses(b, 0.0);
      const auto nb = static_cast<std::int64_t>(b);
#pragma omp parallel for schedule(dynamic, 1)
      for (std::int64_t i = 0; i < nb; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (inst[ui].group.empty() && inst[ui].in_batch.empty()) continue;
        losses[ui] = stage3_forward_backward(enc, inst[ui], config.temperature, &ops[ui]).total;
      }
      for (std::size_t i = 0; i < b; ++i) {
        for (auto& op : ops[i]) {
          for (auto& x : op.grad) x /= static_cast<double>(b);
        }
        apply_ops(ops[i], grad);
        loss_sum += losses[i];
      }
      sgd_step(enc, grad, config.stage3.learning_rate, config.clip_norm);
    }
    EpochRecord rec;
    rec.stage = 3;
    rec.epoch = epoch + 1;
    rec.samples = samples.size();
    rec.mean_loss = samples.empty() ? 0.0 : loss_sum / static_cast<double>(samples.size());
    rec.wall_ms = elapsed_ms(t0);
    report.epochs.push_back(rec);
  }
  return report;
}

}  // namespace hgkr
