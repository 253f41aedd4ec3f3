#include "hgkr/encoder.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "hgkr/binary_io.h"
#include "hgkr/kernels.h"

namespace hgkr {

namespace {
constexpr char kMagic[5] = "HGEN";
constexpr std::uint32_t kVersion = 1;

double to_float_precision(double v) { return static_cast<double>(static_cast<float>(v)); }
}  // namespace

EncoderParams::EncoderParams(std::size_t vocab_size, std::size_t dim, std::uint64_t seed, double init_scale)
    : vocab_size_(vocab_size), dim_(dim), seed_(seed), table_(vocab_size * dim) {
  if (vocab_size < 2 || dim == 0) throw std::invalid_argument("encoder needs |V| >= 2 and d >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-init_scale, init_scale);
  for (auto& v : table_) v = to_float_precision(u(rng));
}

void EncoderParams::quantize_row(std::size_t id) {
  for (auto& v : row(id)) v = to_float_precision(v);
}

void EncoderParams::quantize_all() {
  for (auto& v : table_) v = to_float_precision(v);
}

bool EncoderParams::all_finite() const {
  for (double v : table_)
    if (!std::isfinite(v)) return false;
  return true;
}

void EncoderParams::save(const std::string& path) const {
  ByteWriter w;
  w.magic(kMagic);
  w.u32(kVersion);
  w.u64(vocab_size_);
  w.u32(static_cast<std::uint32_t>(dim_));
  w.u64(seed_);
  for (double v : table_) w.f32(static_cast<float>(v));
  w.write_with_checksum(path);
}

EncoderParams EncoderParams::load(const std::string& path) {
  auto r = ByteReader::from_checksummed_file(path);
  r.expect_magic(kMagic);
  if (const auto v = r.u32(); v != kVersion) throw std::runtime_error("unsupported encoder file version " + std::to_string(v));
  EncoderParams p;
  p.vocab_size_ = r.u64();
  p.dim_ = r.u32();
  p.seed_ = r.u64();
  p.table_.resize(p.vocab_size_ * p.dim_);
  for (auto& v : p.table_) v = static_cast<double>(r.f32());
  if (!r.at_end()) throw std::runtime_error("trailing bytes in encoder file: " + path);
  if (!p.all_finite()) throw std::runtime_error("non-finite encoder parameters in " + path);
  return p;
}

std::uint64_t EncoderParams::fingerprint() const {
  ByteWriter w;
  w.u64(vocab_size_);
  w.u32(static_cast<std::uint32_t>(dim_));
  for (double v : table_) w.f32(static_cast<float>(v));
  const std::uint64_t crc = crc32_of(w.data());
  return (crc << 32) | (static_cast<std::uint64_t>(vocab_size_ * 131u + dim_) & 0xffffffffu);
}

Encoding encode_forward(const EncoderParams& params, std::span<const TokenId> tokens, bool normalize) {
  const std::size_t d = params.dim();
  Encoding enc;
  enc.pooled.assign(d, 0.0);
  auto add_row = [&](TokenId id) {
    if (id < 0 || static_cast<std::size_t>(id) >= params.vocab_size())
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    const auto r = params.row(static_cast<std::size_t>(id));
    for (std::size_t i = 0; i < d; ++i) enc.pooled[i] += r[i];
  };
  if (tokens.empty()) {
    add_row(Vocabulary::kUnk);
  } else {
    for (TokenId t : tokens) add_row(t);
    const double inv = 1.0 / static_cast<double>(tokens.size());
    for (auto& v : enc.pooled) v *= inv;
  }
  double sq = 0.0;
  for (double v : enc.pooled) sq += v * v;
  enc.pooled_norm = std::sqrt(sq);
  if (enc.pooled_norm < kMinNorm) {
    enc.pooled_norm = kMinNorm;
    enc.norm_clamped = true;
  }
  enc.output.normalized = normalize;
  enc.output.values = enc.pooled;
  if (normalize)
    for (auto& v : enc.output.values) v /= enc.pooled_norm;
  return enc;
}

EmbeddingVector encode(const EncoderParams& params, const TokenSequence& tokens, bool normalize) {
  return encode_forward(params, tokens.ids, normalize).output;
}

double similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.values.size() != v.values.size()) throw std::invalid_argument("similarity: dimension mismatch");
  return dot(std::span<const double>(u.values), std::span<const double>(v.values));
}

std::vector<EmbeddingVector> encode_batch(const EncoderParams& params, std::span<const TokenSequence> sequences,
                                          bool normalize) {
  std::vector<EmbeddingVector> out(sequences.size());
  const auto n = static_cast<std::int64_t>(sequences.size());
  // Exceptions cannot leave an OpenMP region; validate first.
  for (const auto& s : sequences)
    for (TokenId t : s.ids)
      if (t < 0 || static_cast<std::size_t>(t) >= params.vocab_size())
        throw std::out_of_range("token id " + std::to_string(t) + " outside vocabulary");
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    out[ui] = encode_forward(params, sequences[ui].ids, normalize).output;
  }
  return out;
}

namespace serial {
std::vector<EmbeddingVector> encode_batch(const EncoderParams& params, std::span<const TokenSequence> sequences,
                                          bool normalize) {
  std::vector<EmbeddingVector> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) out.push_back(encode(params, s, normalize));
  return out;
}
}  // namespace serial

std::span<double> GradientBuffer::row(std::size_t id) {
  if (id >= rows_) throw std::out_of_range("gradient row out of range");
  if (!touched_[id]) {
    touched_[id] = 1;
    touched_list_.push_back(id);
  }
  return {g_.data() + id * dim_, dim_};
}

double GradientBuffer::squared_norm() const {
  double s = 0.0;
  for (auto id : touched_list_)
    for (double v : row_view(id)) s += v * v;
  return s;
}

void GradientBuffer::scale(double s) {
  for (auto id : touched_list_)
    for (std::size_t i = 0; i < dim_; ++i) g_[id * dim_ + i] *= s;
}

void GradientBuffer::zero() {
  for (auto id : touched_list_) {
    std::fill_n(g_.begin() + static_cast<std::ptrdiff_t>(id * dim_), dim_, 0.0);
    touched_[id] = 0;
  }
  touched_list_.clear();
  count_ = 0;
}

bool GradientBuffer::is_zero() const {
  for (double v : g_)
    if (v != 0.0) return false;
  return true;
}

void GradientBuffer::scatter_mean(std::span<const TokenId> tokens, std::span<const double> pooled_grad) {
  if (tokens.empty()) {
    auto r = row(Vocabulary::kUnk);
    for (std::size_t i = 0; i < dim_; ++i) r[i] += pooled_grad[i];
    return;
  }
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (TokenId t : tokens) {
    auto r = row(static_cast<std::size_t>(t));
    for (std::size_t i = 0; i < dim_; ++i) r[i] += pooled_grad[i] * inv;
  }
}

std::vector<double> pooled_gradient(const Encoding& enc, std::span<const double> upstream) {
  const std::size_t d = enc.pooled.size();
  std::vector<double> g(upstream.begin(), upstream.end());
  if (!enc.output.normalized) return g;
  const auto& v = enc.output.values;
  double radial = 0.0;
  for (std::size_t i = 0; i < d; ++i) radial += v[i] * upstream[i];
  for (std::size_t i = 0; i < d; ++i) g[i] = (upstream[i] - radial * v[i]) / enc.pooled_norm;
  return g;
}

bool backprop_pooled(std::span<const TokenId> tokens, const Encoding& enc, std::span<const double> upstream,
                     GradientBuffer& grad) {
  const auto g = pooled_gradient(enc, upstream);
  grad.scatter_mean(tokens, g);
  grad.note_accumulation();
  return !enc.norm_clamped;
}

double sgd_step(std::span<SgdTarget> targets, double learning_rate, double clip_norm) {
  double sq = 0.0;
  for (const auto& t : targets) sq += t.grad->squared_norm();
  const double norm = std::sqrt(sq);
  const double scale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;
  const double step = learning_rate * scale;
  for (auto& t : targets) {
    const std::size_t d = t.grad->dim();
    for (auto id : t.grad->touched()) {
      const auto g = t.grad->row_view(id);
      for (std::size_t i = 0; i < d; ++i) {
        double& p = t.params[id * d + i];
        p -= step * g[i];
        if (t.quantize_float32) p = to_float_precision(p);
      }
    }
    t.grad->zero();
  }
  return norm;
}

double sgd_step(EncoderParams& params, GradientBuffer& grad, double learning_rate, double clip_norm) {
  SgdTarget t{params.data(), &grad, true};
  return sgd_step(std::span<SgdTarget>(&t, 1), learning_rate, clip_norm);
}

}  // namespace hgkr
