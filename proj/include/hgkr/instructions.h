#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hgkr/corpus.h"

namespace hgkr {

enum class InstructionGroup : std::uint8_t { All = 0, Text = 1, KG = 2, Table = 3, Info = 4 };

inline constexpr std::array<InstructionGroup, 5> kAllGroups = {InstructionGroup::All, InstructionGroup::Text,
                                                               InstructionGroup::KG, InstructionGroup::Table,
                                                               InstructionGroup::Info};

std::string_view group_name(InstructionGroup g);  // "I_All", "I_Text", ...
InstructionGroup parse_group(std::string_view name);
std::string_view source_string(InstructionGroup g);  // "All Knowledge Sources", "Text", ...
InstructionGroup group_for(KnowledgeType t);
std::optional<KnowledgeType> target_type(InstructionGroup g);

class InvalidDomain : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Maps dataset codes ("tvseries", "soccer") and display names to the display form.
// Empty stays empty; anything else throws InvalidDomain.
std::string normalize_domain(std::string_view domain);

struct RenderedInstruction {
  InstructionGroup group = InstructionGroup::All;
  std::string domain;
  std::string text;
  int paraphrase_index = 0;
};

struct RetrievalQuery {
  RenderedInstruction instruction;
  QuestionRecord question;
  std::string text;
};

class InstructionSet {
 public:
  static constexpr std::string_view kCanonical =
      "Given a question in the [domain] domain, retrieve relevant evidence to answer the question from the [source].";
  static constexpr std::string_view kCanonicalNoDomain =
      "Given a question, retrieve relevant evidence to answer the question from the [source].";
  // Substituted for [domain] in paraphrases when the question has no domain.
  static constexpr std::string_view kGeneralDomain = "general";

  InstructionSet() = default;

  // Sections "[I_All]" ... "[I_Info]", one template per line; '#' starts a comment.
  static InstructionSet parse(std::string_view contents);
  static InstructionSet load(const std::string& path);

  std::size_t paraphrase_count(InstructionGroup g) const { return paraphrases_[idx(g)].size(); }

  RenderedInstruction render(InstructionGroup g, std::string_view domain, int paraphrase_index = 0) const;

  // Uniform over the canonical form and every loaded paraphrase.
  RenderedInstruction sample(InstructionGroup g, std::string_view domain, std::mt19937_64& rng) const;

 private:
  static std::size_t idx(InstructionGroup g) { return static_cast<std::size_t>(g); }
  std::array<std::vector<std::string>, 5> paraphrases_;
};

RetrievalQuery build_retrieval_query(const RenderedInstruction& instruction, const QuestionRecord& question);

}  // namespace hgkr
