#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgkr/corpus.h"

namespace hgkr {

// Seeded toy world: invented subjects and people across the five instruction domains.
// Every question asks for the people linked to one subject by one relation; the
// question words for a relation never occur in evidence text.
struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t subjects_per_domain = 3;
  std::size_t relations_per_domain = 40;
  std::size_t distractor_relations_per_domain = 10;
  std::size_t questions = 500;
  std::size_t test_questions = 100;
  std::size_t min_cast = 4;           // people per distractor relation and subject
  std::size_t max_cast = 16;
  std::size_t filler_passages = 55;   // per subject, no people
  std::size_t unasked_relations = 6;  // question relations stated for a subject but never asked
};

struct SynthWorld {
  std::vector<EvidenceRecord> corpus;
  std::vector<QuestionRecord> train;
  std::vector<QuestionRecord> test;
};

SynthWorld generate_synth(const SynthConfig& config);

// corpus.jsonl, questions_train.jsonl, questions_test.jsonl under `dir`.
void write_synth(const std::string& dir, const SynthWorld& world);

}  // namespace hgkr
