#include <doctest.h>

#include <random>
#include <stdexcept>

#include "hgkr/instructions.h"

using namespace hgkr;

namespace {

InstructionSet shipped() { return InstructionSet::load(std::string(HGKR_DATA_DIR) + "/paraphrases.txt"); }

std::size_t occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("instructions") {

TEST_CASE("canonical renders") {
  const auto set = shipped();
  CHECK(set.render(InstructionGroup::KG, "music").text ==
        "Given a question in the music domain, retrieve relevant evidence to answer the question from the Knowledge "
        "Graph Triples.");
  CHECK(set.render(InstructionGroup::All, "football").text ==
        "Given a question in the football domain, retrieve relevant evidence to answer the question from the All "
        "Knowledge Sources.");
  CHECK(set.render(InstructionGroup::Text, "").text ==
        "Given a question, retrieve relevant evidence to answer the question from the Text.");
  CHECK_THROWS_AS(set.render(InstructionGroup::Table, "cooking"), InvalidDomain);
  CHECK_THROWS_AS(set.render(InstructionGroup::Table, "music", 21), std::out_of_range);
  CHECK_THROWS_AS(set.render(InstructionGroup::Table, "music", -1), std::out_of_range);
}

TEST_CASE("dataset domain codes map to display names") {
  CHECK(normalize_domain("tvseries") == "television series");
  CHECK(normalize_domain("soccer") == "football");
  CHECK(normalize_domain("books") == "books");
  CHECK(normalize_domain("") == "");
  CHECK_THROWS_AS(normalize_domain("Music"), InvalidDomain);
}

TEST_CASE("every canonical render names domain and source once") {
  const auto set = shipped();
  for (auto g : kAllGroups)
    for (const char* d : {"books", "movies", "music", "television series", "football"}) {
      const auto r = set.render(g, d);
      CHECK(occurrences(r.text, std::string(" ") + d + " domain") == 1);
      CHECK(occurrences(r.text, "from the " + std::string(source_string(g)) + ".") == 1);
      CHECK(r.text.find('[') == std::string::npos);
    }
}

TEST_CASE("paraphrases have no unfilled placeholders") {
  const auto set = shipped();
  for (auto g : kAllGroups) {
    CHECK(set.paraphrase_count(g) == 20);
    for (int i = 0; i <= static_cast<int>(set.paraphrase_count(g)); ++i) {
      for (const char* d : {"music", ""}) {
        const auto r = set.render(g, d, i);
        CHECK(r.paraphrase_index == i);
        CHECK(r.text.find('[') == std::string::npos);
        CHECK(r.text == set.render(g, d, i).text);
      }
    }
  }
}

TEST_CASE("query is instruction space question") {
  RenderedInstruction ri;
  ri.text = "X.";
  QuestionRecord q;
  q.text = "Y?";
  CHECK(build_retrieval_query(ri, q).text == "X. Y?");

  const auto set = shipped();
  QuestionRecord meg;
  meg.text = "Who was the voice actor for Meg Griffin in Family Guy?";
  meg.domain = "tvseries";
  const auto inst = set.render(InstructionGroup::All, meg.domain);
  const auto query = build_retrieval_query(inst, meg);
  CHECK(query.text ==
        "Given a question in the television series domain, retrieve relevant evidence to answer the question from the "
        "All Knowledge Sources. Who was the voice actor for Meg Griffin in Family Guy?");
  CHECK(query.text.size() == inst.text.size() + 1 + meg.text.size());

  const auto no_domain = build_retrieval_query(set.render(InstructionGroup::All, ""), meg);
  CHECK(no_domain.text.rfind("Given a question, retrieve", 0) == 0);
}

TEST_CASE("sampling is uniform over canonical and paraphrases") {
  const auto set = shipped();
  std::mt19937_64 rng(17);
  std::vector<int> counts(21, 0);
  for (int i = 0; i < 21000; ++i) ++counts[static_cast<std::size_t>(set.sample(InstructionGroup::Info, "books", rng).paraphrase_index)];
  for (int c : counts) CHECK(std::abs(c - 1000) <= 150);

  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 50; ++i)
    CHECK(set.sample(InstructionGroup::KG, "music", a).text == set.sample(InstructionGroup::KG, "music", b).text);

  const auto bare = InstructionSet::parse("[I_All]\n");
  for (int i = 0; i < 20; ++i) CHECK(bare.sample(InstructionGroup::All, "music", rng).paraphrase_index == 0);
}

TEST_CASE("paraphrase file parsing") {
  const auto set = InstructionSet::parse(
      "# comment\n[I_KG]\nFor a [domain] question, search the [source].\n\n[I_Text]\nUse the [source] for [domain].\n");
  CHECK(set.paraphrase_count(InstructionGroup::KG) == 1);
  CHECK(set.paraphrase_count(InstructionGroup::Text) == 1);
  CHECK(set.paraphrase_count(InstructionGroup::All) == 0);
  CHECK(set.render(InstructionGroup::KG, "music", 1).text == "For a music question, search the Knowledge Graph Triples.");
  CHECK_THROWS(InstructionSet::parse("line before any header\n"));
  CHECK_THROWS(InstructionSet::parse("[I_Video]\nx [source]\n"));
}

TEST_CASE("group names") {
  for (auto g : kAllGroups) CHECK(parse_group(group_name(g)) == g);
  CHECK(group_name(InstructionGroup::Info) == "I_Info");
  CHECK(target_type(InstructionGroup::All) == std::nullopt);
  for (auto t : kAllTypes) CHECK(target_type(group_for(t)) == t);
  CHECK_THROWS(parse_group("I_Video"));
}

}
