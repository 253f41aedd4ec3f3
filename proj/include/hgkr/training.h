#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hgkr/corpus.h"
#include "hgkr/encoder.h"
#include "hgkr/instructions.h"
#include "hgkr/textproc.h"

namespace hgkr {

// ---------------------------------------------------------------------------
// Configuration and reports

struct StageConfig {
  double learning_rate = 0.05;
  int epochs = 1;
  std::size_t batch_size = 32;
};

struct TrainConfig {
  double temperature = 0.02;
  StageConfig stage1{0.03, 12, 32};
  StageConfig stage2{2.0, 40, 64};
  StageConfig stage3{0.5, 30, 32};
  std::size_t group_capacity = 15;       // hard negatives per sample; group size 16 with the positive
  double unfollowing_probability = 0.005;
  std::size_t pool_size = 50;            // mined candidates per type
  std::size_t max_positives = 4;         // per question
  double clip_norm = 1.0;
  bool use_bm25_miner = false;
  std::uint64_t seed = 13;

  void validate() const;  // throws std::invalid_argument
};

struct EpochRecord {
  int stage = 0;
  int epoch = 0;
  double mean_loss = 0.0;
  std::size_t samples = 0;
  double wall_ms = 0.0;
  std::optional<double> heldout_loss;
};

struct StageReport {
  int stage = 0;
  std::vector<EpochRecord> epochs;
  std::optional<double> initial_heldout_loss;  // before the first update
  std::size_t skipped_samples = 0;
  std::size_t short_groups = 0;
  std::size_t unfollowing_members = 0;
  std::size_t scenario2_samples = 0;
};

// One JSON object per epoch (numbered from 1): {stage, epoch, mean_loss, samples, wall_ms[, heldout_loss]}.
// A stage with a held-out trace also gets an epoch-0 record {stage, epoch, samples, heldout_loss}.
void append_report_jsonl(const std::string& path, const StageReport& report);

// ---------------------------------------------------------------------------
// Stage 1: masked reconstruction with a temporary linear decoder

struct DecoderParams {
  DecoderParams() = default;
  DecoderParams(std::size_t vocab_size, std::size_t dim, std::uint64_t seed, double init_scale = 0.02);

  std::size_t vocab_size = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // |V| x d, row-major
  std::vector<double> bias;     // |V|
};

struct MaskedSample {
  std::vector<TokenId> clean;
  std::vector<TokenId> encoder_view;
  std::vector<std::size_t> masked_positions;  // replaced by MASK in encoder_view
  std::vector<std::size_t> target_positions;  // reconstructed from the embedding
};

inline constexpr double kEncoderMaskRatio = 0.15;
inline constexpr double kDecoderMaskRatio = 0.50;

// nullopt (skip) when fewer than two tokens.
std::optional<MaskedSample> make_masked_sample(std::span<const TokenId> tokens, std::mt19937_64& rng);

struct Stage1Grads {
  Stage1Grads(std::size_t vocab_size, std::size_t dim)
      : encoder(vocab_size, dim), decoder_weights(vocab_size, dim), decoder_bias(vocab_size, 1) {}
  GradientBuffer encoder;
  GradientBuffer decoder_weights;
  GradientBuffer decoder_bias;
};

// Sum over target positions of cross-entropy of softmax(D h + b), h the unnormalized
// pooled encoding of the masked view. Accumulates gradients when grads is given.
double stage1_loss(const EncoderParams& enc, const DecoderParams& dec, const MaskedSample& sample,
                   Stage1Grads* grads = nullptr);

// Input per pair is tokens(data) ++ tokens(text). The decoder is discarded afterward.
StageReport stage1_pretrain(EncoderParams& enc, std::span<const DataTextPair> pairs, const Vocabulary& vocab,
                            const TrainConfig& config);

// ---------------------------------------------------------------------------
// Stage 2: text-anchored alignment with in-batch negatives

struct ContrastiveBatch {
  std::vector<TokenSequence> anchors;    // linearized data
  std::vector<TokenSequence> positives;  // its text form
  std::size_t size() const { return anchors.size(); }
};

// Batch mean of -log softmax over row i of f(d_i, t_j)/tau. Throws for B < 2.
double stage2_loss(const EncoderParams& enc, const ContrastiveBatch& batch, double temperature,
                   GradientBuffer* grad = nullptr);

StageReport stage2_align(EncoderParams& enc, std::span<const DataTextPair> pairs, const Vocabulary& vocab,
                         const TrainConfig& config);

// ---------------------------------------------------------------------------
// Stage 3: instruction-aware fine-tuning with typed hard negatives

using TypedPools = std::array<std::vector<std::size_t>, kNumTypes>;  // corpus rows, best first

// Top pool_size non-relevant rows per type by score, ties by ascending evidence id.
// `scores` is indexed by corpus row.
TypedPools mine_hard_negatives(const QuestionRecord& question, std::span<const EvidenceRecord> corpus,
                               std::span<const double> scores, std::size_t pool_size = 50);

struct NegativeGroup {
  std::optional<KnowledgeType> preferred;  // lambda; none for a balanced group
  std::vector<std::size_t> members;         // corpus rows
  std::array<std::size_t, kNumTypes> counts{};
  std::optional<std::size_t> unfollowing_member;  // relevant row of a type other than lambda
  bool short_group = false;
};

struct GroupRequest {
  std::optional<KnowledgeType> preferred;
  std::size_t capacity = 15;
  double unfollowing_probability = 0.005;
  // Rows relevant to the question; the unfollowing member is drawn from those with etype != lambda.
  std::span<const std::size_t> relevant_rows;
};

NegativeGroup build_negative_group(const TypedPools& pools, std::span<const EvidenceRecord> corpus,
                                   const GroupRequest& request, std::mt19937_64& rng);

struct TrainingSample {
  RetrievalQuery query;
  std::size_t positive_row = 0;
  NegativeGroup negatives;
  int scenario = 1;
};

struct LossBreakdown {
  double total = 0.0;
  double align = 0.0;       // f(q, e+) / tau
  double uniformity = 0.0;  // log(exp(align) + repel + in-batch term)
  double repel = 0.0;       // sum over group members of exp(f / tau)
  std::array<double, kNumTypes> repel_by_type{};
  double in_batch = 0.0;    // sum over in-batch negatives of exp(f / tau)
};

struct Stage3Instance {
  TokenSequence query;
  TokenSequence positive;
  std::vector<TokenSequence> group;
  std::vector<KnowledgeType> group_types;
  std::vector<TokenSequence> in_batch;
};

LossBreakdown stage3_loss(const EncoderParams& enc, const Stage3Instance& instance, double temperature,
                          GradientBuffer* grad = nullptr);

StageReport stage3_finetune(EncoderParams& enc, std::span<const QuestionRecord> questions,
                            std::span<const EvidenceRecord> corpus, const Vocabulary& vocab,
                            const InstructionSet& instructions, const TrainConfig& config);

// Samples for one epoch, exposed for structural checks. `pools` and `positives` are per question.
std::vector<TrainingSample> make_training_samples(std::span<const QuestionRecord> questions,
                                                  std::span<const EvidenceRecord> corpus,
                                                  std::span<const TypedPools> pools,
                                                  std::span<const std::vector<std::size_t>> relevant,
                                                  const InstructionSet& instructions, const TrainConfig& config,
                                                  std::mt19937_64& rng);

// Positives per question: relevant rows, round-robin over types, ascending id within a type.
std::vector<std::size_t> select_positives(std::span<const std::size_t> relevant_rows,
                                          std::span<const EvidenceRecord> corpus, std::size_t max_positives);

}  // namespace hgkr
