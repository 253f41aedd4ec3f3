#pragma once

#include <string>
#include <vector>

#include "hgkr/corpus.h"

namespace hgkr {

// Deterministic data-to-text templates over linearized structured evidence.
//   KG     "s, r, o"               -> "The r of s is o."
//   Table  "P, h1 is v1, h2 is v2" -> "In P, h1 is v1, and h2 is v2."
//   Info   "P, S, p1, v1, p2, v2"  -> "The p1 of S is v1. The p2 of S is v2."
// Throws InvalidInput for Text evidence.
std::string verbalize(const EvidenceRecord& data);

struct ExternalVerbalizerConfig {
  std::string url;  // e.g. http://127.0.0.1:8080/verbalize; empty disables the client
  std::string token_env = "HGKR_VERBALIZER_TOKEN";
  int timeout_ms = 5000;
  int retries = 2;
};

// Posts {"evidence", "source"} and expects {"text"}; falls back to the template
// on any failure and records a warning.
class Verbalizer {
 public:
  Verbalizer() = default;
  explicit Verbalizer(ExternalVerbalizerConfig cfg) : cfg_(std::move(cfg)) {}

  std::string operator()(const EvidenceRecord& data);

  const std::vector<std::string>& warnings() const { return warnings_; }
  std::size_t external_successes() const { return external_ok_; }

 private:
  ExternalVerbalizerConfig cfg_;
  std::vector<std::string> warnings_;
  std::size_t external_ok_ = 0;
};

// One pair per non-Text evidence, in corpus order.
std::vector<DataTextPair> build_data_text_pairs(const std::vector<EvidenceRecord>& corpus, Verbalizer& verbalizer);

}  // namespace hgkr
