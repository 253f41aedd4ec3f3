#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hgkr/textproc.h"

namespace hgkr {

// Token-embedding table. Values live in double for exact gradient work but are kept
// representable in float32 (the on-disk precision) after init and every update.
class EncoderParams {
 public:
  static constexpr std::size_t kDefaultDim = 64;
  static constexpr double kDefaultInitScale = 0.02;

  EncoderParams() = default;
  // i.i.d. uniform(-scale, scale), seeded.
  EncoderParams(std::size_t vocab_size, std::size_t dim, std::uint64_t seed, double init_scale = kDefaultInitScale);

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

  std::span<double> row(std::size_t id) { return {table_.data() + id * dim_, dim_}; }
  std::span<const double> row(std::size_t id) const { return {table_.data() + id * dim_, dim_}; }
  std::span<double> data() { return table_; }
  std::span<const double> data() const { return table_; }

  void quantize_row(std::size_t id);
  void quantize_all();
  bool all_finite() const;

  // Header (magic "HGEN", version, |V|, d, seed) + row-major float32 LE + CRC-32.
  void save(const std::string& path) const;
  static EncoderParams load(const std::string& path);

  // Stable 64-bit identity of the parameter values and shape.
  std::uint64_t fingerprint() const;

  bool operator==(const EncoderParams&) const = default;

 private:
  std::size_t vocab_size_ = 0;
  std::size_t dim_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> table_;
};

struct EmbeddingVector {
  std::vector<double> values;
  bool normalized = false;
};

// Forward values kept for backprop.
struct Encoding {
  EmbeddingVector output;
  std::vector<double> pooled;  // mean of token rows, before normalization
  double pooled_norm = 0.0;     // clamped at kMinNorm
  bool norm_clamped = false;
};

inline constexpr double kMinNorm = 1e-8;

Encoding encode_forward(const EncoderParams& params, std::span<const TokenId> tokens, bool normalize);
EmbeddingVector encode(const EncoderParams& params, const TokenSequence& tokens, bool normalize = true);

double similarity(const EmbeddingVector& u, const EmbeddingVector& v);

std::vector<EmbeddingVector> encode_batch(const EncoderParams& params, std::span<const TokenSequence> sequences,
                                          bool normalize = true);

namespace serial {
std::vector<EmbeddingVector> encode_batch(const EncoderParams& params, std::span<const TokenSequence> sequences,
                                          bool normalize = true);
}

// Dense gradient storage with a touched-row list so steps and resets cost O(touched).
class GradientBuffer {
 public:
  GradientBuffer() = default;
  GradientBuffer(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), g_(rows * dim, 0.0), touched_(rows, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::span<double> row(std::size_t id);
  std::span<const double> row_view(std::size_t id) const { return {g_.data() + id * dim_, dim_}; }
  const std::vector<std::size_t>& touched() const { return touched_list_; }
  std::size_t accumulation_count() const { return count_; }
  void note_accumulation() { ++count_; }
  double squared_norm() const;
  void scale(double s);
  void zero();
  bool is_zero() const;

  // Adds pooled_grad / n to every token row (UNK alone for an empty sequence).
  void scatter_mean(std::span<const TokenId> tokens, std::span<const double> pooled_grad);

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> g_;
  std::vector<std::uint8_t> touched_;
  std::vector<std::size_t> touched_list_;
  std::size_t count_ = 0;
};

// Gradient with respect to the pooled vector given the gradient on the encoder output.
// For normalized outputs this is (I - v v^T) g / ||p||; otherwise g unchanged.
std::vector<double> pooled_gradient(const Encoding& enc, std::span<const double> upstream);

// pooled_gradient followed by scatter_mean; returns false if the norm was clamped.
bool backprop_pooled(std::span<const TokenId> tokens, const Encoding& enc, std::span<const double> upstream,
                     GradientBuffer& grad);

// Plain SGD with one global norm clip across all buffers. Returns the pre-clip norm.
struct SgdTarget {
  std::span<double> params;
  GradientBuffer* grad;
  bool quantize_float32 = false;
};
double sgd_step(std::span<SgdTarget> targets, double learning_rate, double clip_norm = 1.0);

// Convenience for the encoder alone; quantizes updated rows to float32.
double sgd_step(EncoderParams& params, GradientBuffer& grad, double learning_rate, double clip_norm = 1.0);

}  // namespace hgkr
