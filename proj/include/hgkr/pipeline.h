#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgkr/eval.h"
#include "hgkr/index.h"
#include "hgkr/synth.h"
#include "hgkr/training.h"
#include "hgkr/verbalizer.h"

namespace hgkr {

// Bad configuration or missing inputs; the CLI maps it to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PathsConfig {
  std::string corpus;
  std::string questions_train;
  std::string questions_test;
  std::string paraphrases = std::string(HGKR_DATA_DIR) + "/paraphrases.txt";
};

struct VocabConfig {
  std::size_t min_frequency = 1;
  std::size_t max_size = 50000;
};

struct EncoderConfig {
  std::size_t dim = EncoderParams::kDefaultDim;
  double init_scale = EncoderParams::kDefaultInitScale;
};

struct PipelineConfig {
  std::uint64_t seed = 13;
  std::string workdir = "work";
  PathsConfig paths;
  VocabConfig vocab;
  EncoderConfig encoder;
  TrainConfig train;
  ExternalVerbalizerConfig verbalizer;
  SynthConfig synth;
  bool bm25_baseline = true;
};

// TOML. Relative paths resolve against the directory of the file.
PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config(const std::string& toml_text, const std::string& base_dir = ".");

// Fixed artifact names inside the workdir.
namespace artifacts {
inline constexpr const char* kCorpus = "corpus.jsonl";
inline constexpr const char* kPairs = "pairs.jsonl";
inline constexpr const char* kVocab = "vocab.tsv";
inline constexpr const char* kEncoder = "encoder.bin";
inline constexpr const char* kEncoderInit = "encoder.init.bin";
inline constexpr const char* kEncoderStage1 = "encoder.stage1.bin";
inline constexpr const char* kEncoderStage2 = "encoder.stage2.bin";
inline constexpr const char* kEncoderStage3 = "encoder.stage3.bin";
inline constexpr const char* kIndex = "index.hgix";
inline constexpr const char* kRun = "run.jsonl";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kMetricsText = "metrics.txt";
inline constexpr const char* kBm25Run = "bm25_run.jsonl";
inline constexpr const char* kBm25Metrics = "bm25_metrics.json";
inline constexpr const char* kReports = "train_report.jsonl";
inline constexpr const char* kLock = ".lock";
}  // namespace artifacts

std::string workdir_path(const PipelineConfig& config, const char* artifact);

// Exclusive use of a workdir for the lifetime of the object. A lock left by a dead
// process is taken over.
class WorkdirLock {
 public:
  explicit WorkdirLock(const std::string& workdir);
  ~WorkdirLock();
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  std::string path_;
};

void run_ingest(const PipelineConfig& config, std::ostream& log);
void run_pairs(const PipelineConfig& config, std::ostream& log);
void run_pretrain(const PipelineConfig& config, std::ostream& log);
void run_align(const PipelineConfig& config, std::ostream& log);
void run_finetune(const PipelineConfig& config, std::ostream& log);
void run_index(const PipelineConfig& config, std::ostream& log);
MetricReport run_eval(const PipelineConfig& config, std::ostream& log);
void run_stats(const PipelineConfig& config, std::ostream& out);
void run_synth(const PipelineConfig& config, const std::string& out_dir, std::ostream& log);
void run_pipeline(const PipelineConfig& config, std::ostream& log);

struct SearchRequest {
  std::string query;
  InstructionGroup group = InstructionGroup::All;
  std::string domain;
  std::size_t k = 10;
};
std::vector<SearchHit> run_search(const PipelineConfig& config, const SearchRequest& request);

// Scenario metrics for an arbitrary encoder snapshot against the configured test questions.
MetricReport evaluate_snapshot(const PipelineConfig& config, const std::string& encoder_path);
MetricReport evaluate_bm25(const PipelineConfig& config);

}  // namespace hgkr
