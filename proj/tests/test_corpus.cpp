#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>

#include "hgkr/corpus.h"
#include "hgkr/corpus_io.h"
#include "hgkr/verbalizer.h"

using namespace hgkr;

TEST_SUITE("corpus") {

TEST_CASE("kg facts join fields with comma space") {
  CHECK(linearize_kg_fact("", "Maverick", "cast member", "Robert Colbert") == "Maverick, cast member, Robert Colbert");
  const std::vector<PropertyValue> q = {{"name of the character role", "'Comtesse de Barot'"}};
  CHECK(linearize_kg_fact("", "Maverick", "cast member", "Roxane Berard", q) ==
        "Maverick, cast member, Roxane Berard, name of the character role, 'Comtesse de Barot'");
  CHECK(linearize_kg_fact("", "A", "r", "B") == "A, r, B");
  CHECK(linearize_kg_fact("Ignored Title", "A", "r", "B") == "A, r, B");
  CHECK_THROWS_AS(linearize_kg_fact("", "", "r", "B"), InvalidInput);
  CHECK_THROWS_AS(linearize_kg_fact("", "A", "", "B"), InvalidInput);
  CHECK_THROWS_AS(linearize_kg_fact("", "A", "r", ""), InvalidInput);
}

TEST_CASE("table rows use header is value") {
  const std::vector<PropertyValue> row = {{"Year", "1975"},
                                          {"Title", "It Seemed Like a Good Idea at the Time"},
                                          {"Role", "Georgia Price"},
                                          {"Notes", ""}};
  CHECK(linearize_table_row("Stefanie Powers", row) ==
        "Stefanie Powers, Year is 1975, Title is It Seemed Like a Good Idea at the Time, Role is Georgia Price, Notes is");
  CHECK(linearize_table_row("X", {}) == "X");
  CHECK_THROWS_AS(linearize_table_row("", row), InvalidInput);
  const std::vector<PropertyValue> bad = {{"", "v"}};
  CHECK_THROWS_AS(linearize_table_row("X", bad), InvalidInput);
}

TEST_CASE("table rows split back into their cells") {
  std::mt19937_64 rng(1);
  const std::vector<std::string> words = {"alpha", "beta", "gamma", "Year", "1999", "x y"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PropertyValue> cells;
    const auto n = rng() % 5;
    for (std::size_t i = 0; i < n; ++i) cells.emplace_back(words[rng() % 3], words[rng() % words.size()]);
    const auto s = linearize_table_row("Page", cells);
    const auto parts = split_fields(s);
    REQUIRE(parts.size() == n + 1);
    CHECK(parts[0] == "Page");
    for (std::size_t i = 0; i < n; ++i) CHECK(parts[i + 1] == cells[i].first + " is " + cells[i].second);
    CHECK(linearize_table_row("Page", cells) == s);
  }
}

TEST_CASE("infobox slices") {
  const std::vector<PropertyValue> p = {{"Directed by", "Rob Reiner"}};
  CHECK(linearize_infobox("When Harry Met Sally...", "When Harry Met Sally…", p) ==
        "When Harry Met Sally..., When Harry Met Sally…, Directed by, Rob Reiner");
  CHECK(linearize_infobox("P", "S", {}) == "P, S");
  CHECK_THROWS_AS(linearize_infobox("", "S", {}), InvalidInput);
}

TEST_CASE("relevance by entity id with text fallback") {
  QuestionRecord q;
  q.text = "Who voiced Meg?";
  q.answer_entities = {{"Q37628", "Mila Kunis"}};
  EvidenceRecord e;
  e.text = "Family Guy, cast member, Mila Kunis";
  e.entities = {{"Q5930", "Family Guy"}, {"Q37628", "Mila Kunis"}};
  CHECK(label_relevance(q, e));
  std::reverse(e.entities.begin(), e.entities.end());
  CHECK(label_relevance(q, e));

  EvidenceRecord none;
  none.text = "nothing here";
  CHECK_FALSE(label_relevance(q, none));

  QuestionRecord t;
  t.text = "?";
  t.answer_text = "Mila Kunis";
  EvidenceRecord mention;
  mention.text = "Meg was voiced by Mila Kunis from 1999.";
  CHECK(label_relevance(t, mention));
  CHECK_FALSE(label_relevance(t, mention, RelevanceOptions{false}));
  mention.text = "Meg was voiced by Milan Kunisz.";
  CHECK_FALSE(label_relevance(t, mention));
}

TEST_CASE("relevance index agrees with pairwise labels") {
  std::mt19937_64 rng(2);
  std::vector<EvidenceRecord> corpus(300);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    corpus[i].evidence_id = static_cast<EvidenceId>(i);
    corpus[i].text = "t";
    for (int k = 0; k < 3; ++k) corpus[i].entities.push_back({"Q" + std::to_string(rng() % 40), "x"});
  }
  for (int trial = 0; trial < 50; ++trial) {
    QuestionRecord q;
    q.text = "q";
    for (int k = 0; k < 2; ++k) q.answer_entities.push_back({"Q" + std::to_string(rng() % 40), "x"});
    std::vector<std::size_t> want;
    for (std::size_t r = 0; r < corpus.size(); ++r)
      if (label_relevance(q, corpus[r])) want.push_back(r);
    CHECK(RelevanceIndex(corpus).relevant_rows(q) == want);
  }
}

TEST_CASE("corpus statistics") {
  std::vector<EvidenceRecord> two(2);
  two[0].text = "a b c";
  two[1].text = "a b c d e";
  auto s = corpus_stats(two);
  CHECK(s.per_type[type_index(KnowledgeType::Text)].count == 2);
  CHECK(s.per_type[type_index(KnowledgeType::Text)].avg_length == doctest::Approx(4.0));
  CHECK(s.per_type[type_index(KnowledgeType::Text)].percentage == doctest::Approx(100.0));

  std::vector<EvidenceRecord> four(4);
  for (std::size_t i = 0; i < 4; ++i) {
    four[i].etype = kAllTypes[i];
    four[i].text = "one two";
  }
  s = corpus_stats(four);
  double total = 0.0;
  for (const auto& t : s.per_type) {
    CHECK(t.percentage == doctest::Approx(25.0));
    total += t.percentage;
  }
  CHECK(total == doctest::Approx(100.0).epsilon(1e-4));
  CHECK(s.total.count == 4);
  CHECK(format_corpus_stats(s).find("Percentage") != std::string::npos);
  CHECK_THROWS_AS(corpus_stats(std::vector<EvidenceRecord>{}), InvalidInput);
}

TEST_CASE("template verbalizer") {
  EvidenceRecord kg;
  kg.etype = KnowledgeType::KG;
  kg.text = "Divergent, author, Veronica Roth";
  CHECK(verbalize(kg) == "The author of Divergent is Veronica Roth.");

  EvidenceRecord info;
  info.etype = KnowledgeType::Info;
  const std::vector<PropertyValue> genre = {{"Genre", "Rock"}};
  info.text = linearize_infobox("P", "S", genre);
  CHECK(verbalize(info) == "The Genre of S is Rock.");

  EvidenceRecord table;
  table.etype = KnowledgeType::Table;
  const std::vector<PropertyValue> cells = {{"Year", "1975"}, {"Role", "Little Moon"}};
  table.text = linearize_table_row("Stefanie Powers", cells);
  CHECK(verbalize(table) == "In Stefanie Powers, Year is 1975, and Role is Little Moon.");

  EvidenceRecord text;
  text.text = "plain";
  CHECK_THROWS_AS(verbalize(text), InvalidInput);
}

TEST_CASE("unreachable external verbalizer falls back with a warning") {
  ExternalVerbalizerConfig cfg;
  cfg.url = "http://127.0.0.1:9/verbalize";
  cfg.timeout_ms = 200;
  cfg.retries = 0;
  Verbalizer v(cfg);
  EvidenceRecord kg;
  kg.etype = KnowledgeType::KG;
  kg.text = "A, r, B";
  CHECK(v(kg) == "The r of A is B.");
  CHECK(v.warnings().size() == 1);
  CHECK(v.external_successes() == 0);
}

TEST_CASE("evidence and question jsonl round trip") {
  std::istringstream in(
      R"J({"linearized evidence text": "Maverick, cast member, Robert Colbert", "wikidata entities": [{"id": "Q1", "label": "Maverick"}, {"id": "Q2", "label": "Robert Colbert"}], "source": "kg", "retrieved for entity": {"id": "Q1", "label": "Maverick"}, "disambiguations": [["Maverick", "Maverick (TV series)"]]})J"
      "\n"
      R"J({"linearized evidence text": "Stefanie Powers, Year is 1975", "wikidata entities": [], "source": "table"})J"
      "\n");
  const auto corpus = read_evidence_jsonl(in);
  REQUIRE(corpus.size() == 2);
  CHECK(corpus[0].evidence_id == 0);
  CHECK(corpus[1].evidence_id == 1);
  CHECK(corpus[0].etype == KnowledgeType::KG);
  CHECK(corpus[0].page_title.empty());
  CHECK(corpus[1].page_title == "Stefanie Powers");
  CHECK(corpus[0].retrieved_for->id == "Q1");
  CHECK(corpus[0].disambiguations.size() == 1);

  std::ostringstream out;
  write_evidence_jsonl(out, corpus);
  std::istringstream again(out.str());
  const auto back = read_evidence_jsonl(again);
  REQUIRE(back.size() == 2);
  CHECK(back[0].text == corpus[0].text);
  CHECK(back[0].entities == corpus[0].entities);
  CHECK(back[1].etype == KnowledgeType::Table);

  std::istringstream qin(
      R"J({"question id": 7, "question": "Who played Meg?", "domain": "tvseries", "answers": [{"id": "Q37628", "label": "Mila Kunis"}], "answer text": "Mila Kunis"})J"
      "\n");
  const auto qs = read_questions_jsonl(qin);
  REQUIRE(qs.size() == 1);
  CHECK(qs[0].question_id == 7);
  CHECK(qs[0].domain == "tvseries");
  CHECK(qs[0].answer_entities[0].label == "Mila Kunis");
}

TEST_CASE("malformed records are rejected") {
  std::istringstream bad_source(R"J({"linearized evidence text": "x", "wikidata entities": [], "source": "video"})J");
  CHECK_THROWS(read_evidence_jsonl(bad_source));
  std::istringstream no_answer(R"J({"question id": 1, "question": "q", "domain": "", "answers": [], "answer text": ""})J");
  CHECK_THROWS(read_questions_jsonl(no_answer));
}

}
