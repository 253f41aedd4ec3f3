#include "hgkr/instructions.h"

#include <fstream>
#include <sstream>

namespace hgkr {

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string_view group_name(InstructionGroup g) {
  switch (g) {
    case InstructionGroup::All: return "I_All";
    case InstructionGroup::Text: return "I_Text";
    case InstructionGroup::KG: return "I_KG";
    case InstructionGroup::Table: return "I_Table";
    case InstructionGroup::Info: return "I_Info";
  }
  return "I_All";
}

InstructionGroup parse_group(std::string_view name) {
  for (auto g : kAllGroups)
    if (group_name(g) == name) return g;
  throw std::invalid_argument("unknown instruction group: " + std::string(name));
}

std::string_view source_string(InstructionGroup g) {
  switch (g) {
    case InstructionGroup::All: return "All Knowledge Sources";
    case InstructionGroup::Text: return "Text";
    case InstructionGroup::KG: return "Knowledge Graph Triples";
    case InstructionGroup::Table: return "Table";
    case InstructionGroup::Info: return "Infobox";
  }
  return "All Knowledge Sources";
}

InstructionGroup group_for(KnowledgeType t) {
  switch (t) {
    case KnowledgeType::Text: return InstructionGroup::Text;
    case KnowledgeType::KG: return InstructionGroup::KG;
    case KnowledgeType::Table: return InstructionGroup::Table;
    case KnowledgeType::Info: return InstructionGroup::Info;
  }
  return InstructionGroup::All;
}

std::optional<KnowledgeType> target_type(InstructionGroup g) {
  switch (g) {
    case InstructionGroup::All: return std::nullopt;
    case InstructionGroup::Text: return KnowledgeType::Text;
    case InstructionGroup::KG: return KnowledgeType::KG;
    case InstructionGroup::Table: return KnowledgeType::Table;
    case InstructionGroup::Info: return KnowledgeType::Info;
  }
  return std::nullopt;
}

std::string normalize_domain(std::string_view domain) {
  struct Alias {
    std::string_view code;
    std::string_view display;
  };
  static constexpr Alias kAliases[] = {
      {"books", "books"},     {"movies", "movies"},           {"music", "music"},
      {"tvseries", "television series"}, {"television series", "television series"},
      {"soccer", "football"}, {"football", "football"},
  };
  if (domain.empty()) return {};
  for (const auto& a : kAliases)
    if (a.code == domain) return std::string(a.display);
  throw InvalidDomain("unknown domain: " + std::string(domain));
}

InstructionSet InstructionSet::parse(std::string_view contents) {
  InstructionSet set;
  std::optional<InstructionGroup> current;
  std::istringstream in{std::string(contents)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[' && line.back() == ']' && line.find(' ') == std::string_view::npos) {
      current = parse_group(line.substr(1, line.size() - 2));
      continue;
    }
    if (!current) throw std::invalid_argument("paraphrase line " + std::to_string(lineno) + " outside a section");
    if (line.find("[domain]") == std::string_view::npos || line.find("[source]") == std::string_view::npos)
      throw std::invalid_argument("paraphrase line " + std::to_string(lineno) + " lacks [domain] or [source]");
    set.paraphrases_[idx(*current)].emplace_back(line);
  }
  return set;
}

InstructionSet InstructionSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open paraphrase file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

RenderedInstruction InstructionSet::render(InstructionGroup g, std::string_view domain, int paraphrase_index) const {
  const auto& list = paraphrases_[idx(g)];
  if (paraphrase_index < 0 || static_cast<std::size_t>(paraphrase_index) > list.size())
    throw std::out_of_range("paraphrase index " + std::to_string(paraphrase_index) + " outside [0, " +
                            std::to_string(list.size()) + "]");
  RenderedInstruction r;
  r.group = g;
  r.domain = normalize_domain(domain);
  r.paraphrase_index = paraphrase_index;
  if (paraphrase_index == 0) {
    r.text = std::string(r.domain.empty() ? kCanonicalNoDomain : kCanonical);
  } else {
    r.text = list[static_cast<std::size_t>(paraphrase_index - 1)];
  }
  replace_all(r.text, "[domain]", r.domain.empty() ? kGeneralDomain : std::string_view(r.domain));
  replace_all(r.text, "[source]", source_string(g));
  return r;
}

RenderedInstruction InstructionSet::sample(InstructionGroup g, std::string_view domain, std::mt19937_64& rng) const {
  const auto n = paraphrase_count(g);
  if (n == 0) return render(g, domain, 0);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(n));
  return render(g, domain, pick(rng));
}

RetrievalQuery build_retrieval_query(const RenderedInstruction& instruction, const QuestionRecord& question) {
  RetrievalQuery q{instruction, question, {}};
  q.text.reserve(instruction.text.size() + 1 + question.text.size());
  q.text = instruction.text;
  q.text += ' ';
  q.text += question.text;
  return q;
}

}  // namespace hgkr
