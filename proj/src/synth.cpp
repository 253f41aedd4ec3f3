#include "hgkr/synth.h"

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "hgkr/corpus_io.h"

namespace hgkr {

namespace {

constexpr std::array<const char*, 5> kDomains = {"books", "movies", "music", "tvseries", "soccer"};
constexpr std::array<const char*, 5> kNouns = {"novel", "film", "album", "series", "club"};

constexpr std::array<const char*, 48> kFiller = {
    "was",     "later",  "became",  "known",   "for",     "its",    "early",  "years",   "and",    "with",
    "many",    "people", "during",  "after",   "before",  "when",   "several", "other",  "first",  "second",
    "major",   "widely", "regarded", "as",     "one",     "most",   "notable", "work",   "time",   "also",
    "received", "praise", "critics", "local",  "public",  "long",   "since",  "region",  "new",    "version",
    "original", "later", "period",  "success", "under",   "through", "while", "remained"};

constexpr std::array<const char*, 3> kQuestionForms = {"who %q %s?", "which person %q %s?", "%s was %q by whom?"};

class Words {
 public:
  explicit Words(std::mt19937_64& rng) : rng_(rng) {}

  std::string fresh(bool capitalized) {
    static constexpr std::string_view kC = "bdfgklmnprstvz";
    static constexpr std::string_view kV = "aeiou";
    std::uniform_int_distribution<std::size_t> c(0, kC.size() - 1), v(0, kV.size() - 1), len(2, 3), tail(0, 2);
    while (true) {
      std::string w;
      const auto n = len(rng_);
      for (std::size_t i = 0; i < n; ++i) {
        w += kC[c(rng_)];
        w += kV[v(rng_)];
      }
      if (tail(rng_) == 0) w += kC[c(rng_)];
      if (!used_.insert(w).second) continue;
      if (capitalized) w[0] = static_cast<char>(w[0] - 'a' + 'A');
      return w;
    }
  }

 private:
  std::mt19937_64& rng_;
  std::set<std::string> used_;
};

struct Relation {
  std::string evidence_word;
  std::string question_word;
};

struct Entity {
  std::string id;
  std::string label;
};

struct Builder {
  std::mt19937_64 rng;
  std::vector<EvidenceRecord> corpus;
  std::size_t next_entity = 1;

  explicit Builder(std::uint64_t seed) : rng(seed) {}

  Entity entity(std::string label) { return {"Q" + std::to_string(next_entity++), std::move(label)}; }

  bool coin(double p) { return std::bernoulli_distribution(p)(rng); }

  std::string year() { return std::to_string(std::uniform_int_distribution<int>(1950, 2020)(rng)); }

  std::string filler(std::size_t lo, std::size_t hi) {
    std::uniform_int_distribution<std::size_t> n(lo, hi), w(0, kFiller.size() - 1);
    std::string s;
    const auto k = n(rng);
    for (std::size_t i = 0; i < k; ++i) {
      if (i) s += ' ';
      s += kFiller[w(rng)];
    }
    return s;
  }

  void add(KnowledgeType t, std::string text, const Entity& subject, std::vector<Entity> people) {
    EvidenceRecord e;
    e.evidence_id = static_cast<EvidenceId>(corpus.size());
    e.etype = t;
    e.text = std::move(text);
    e.page_title = t == KnowledgeType::KG ? "" : subject.label;
    e.entities.push_back({subject.id, subject.label});
    for (auto& p : people) e.entities.push_back({p.id, p.label});
    e.retrieved_for = EntityRef{subject.id, subject.label};
    corpus.push_back(std::move(e));
  }

  // Emits the fact (subject, relation, people) in a random subset of the four forms.
  void state_fact(const Entity& subject, const std::string& noun, const std::string& rel,
                  const std::vector<Entity>& people, std::array<double, kNumTypes> p) {
    std::array<bool, kNumTypes> use{};
    bool any = false;
    for (std::size_t t = 0; t < kNumTypes; ++t) any |= (use[t] = coin(p[t]));
    if (!any) use[std::uniform_int_distribution<std::size_t>(0, kNumTypes - 1)(rng)] = true;

    if (use[type_index(KnowledgeType::KG)]) {
      for (const auto& person : people) {
        std::vector<PropertyValue> quals;
        if (coin(0.2)) quals.emplace_back("point in time", year());
        add(KnowledgeType::KG, linearize_kg_fact("", subject.label, rel, person.label, quals), subject, {person});
      }
    }
    if (use[type_index(KnowledgeType::Info)]) {
      std::vector<PropertyValue> pairs;
      for (const auto& person : people) pairs.emplace_back(rel, person.label);
      if (coin(0.3)) pairs.emplace_back("year", year());
      add(KnowledgeType::Info, linearize_infobox(subject.label, subject.label, pairs), subject, people);
    }
    if (use[type_index(KnowledgeType::Table)]) {
      for (const auto& person : people) {
        std::vector<PropertyValue> cells = {{"Year", year()}, {rel, person.label}};
        cells.emplace_back("Notes", coin(0.4) ? filler(2, 5) : "");
        add(KnowledgeType::Table, linearize_table_row(subject.label, cells), subject, {person});
      }
    }
    if (use[type_index(KnowledgeType::Text)]) {
      std::string names;
      for (std::size_t i = 0; i < people.size(); ++i) {
        if (i) names += i + 1 == people.size() ? " and " : ", ";
        names += people[i].label;
      }
      const std::string text = subject.label + ", in " + year() + " " + names + " " + rel + " the " + noun + " " +
                               subject.label + " " + filler(6, 16) + ".";
      add(KnowledgeType::Text, text, subject, people);
    }
  }
};

}  // namespace

SynthWorld generate_synth(const SynthConfig& cfg) {
  if (cfg.test_questions >= cfg.questions) throw std::invalid_argument("synth: test split must leave training questions");
  if (cfg.subjects_per_domain == 0 || cfg.relations_per_domain == 0 || cfg.min_cast == 0 || cfg.max_cast < cfg.min_cast)
    throw std::invalid_argument("synth: empty world");

  Builder b(cfg.seed);
  Words words(b.rng);

  auto person = [&] { return b.entity(words.fresh(true) + " " + words.fresh(true)); };

  const std::array<double, kNumTypes> answer_p = {0.5, 0.55, 0.35, 0.4};     // Text, KG, Table, Info
  const std::array<double, kNumTypes> distract_p = {0.3, 0.45, 0.35, 0.2};

  struct Slot {
    std::size_t domain;
    Entity subject;
    std::size_t relation;
  };
  std::vector<std::vector<Relation>> relations(kDomains.size());
  std::vector<std::vector<Slot>> candidates(kDomains.size());

  for (std::size_t d = 0; d < kDomains.size(); ++d) {
    for (std::size_t r = 0; r < cfg.relations_per_domain; ++r) relations[d].push_back({words.fresh(false), words.fresh(false)});
    std::vector<std::string> distractors;
    for (std::size_t r = 0; r < cfg.distractor_relations_per_domain; ++r) distractors.push_back(words.fresh(false));

    for (std::size_t s = 0; s < cfg.subjects_per_domain; ++s) {
      const Entity subject = b.entity(words.fresh(true) + " " + words.fresh(true));
      for (const auto& rel : distractors) {
        const auto cast = std::uniform_int_distribution<std::size_t>(cfg.min_cast, cfg.max_cast)(b.rng);
        for (std::size_t i = 0; i < cast; ++i) b.state_fact(subject, kNouns[d], rel, {person()}, distract_p);
      }
      for (std::size_t i = 0; i < cfg.filler_passages; ++i)
        b.add(KnowledgeType::Text,
              subject.label + ", the " + kNouns[d] + " " + subject.label + " " + b.filler(10, 22) + ".", subject, {});
      std::vector<std::size_t> rel_order(cfg.relations_per_domain);
      std::iota(rel_order.begin(), rel_order.end(), std::size_t{0});
      std::shuffle(rel_order.begin(), rel_order.end(), b.rng);
      const auto unasked = std::min(cfg.unasked_relations, rel_order.size());
      for (std::size_t i = 0; i < unasked; ++i) {
        std::vector<Entity> people = {person()};
        b.state_fact(subject, kNouns[d], relations[d][rel_order[i]].evidence_word, people, distract_p);
      }
      for (std::size_t i = unasked; i < rel_order.size(); ++i) candidates[d].push_back({d, subject, rel_order[i]});
    }
    std::shuffle(candidates[d].begin(), candidates[d].end(), b.rng);
  }

  // Questions are dealt round-robin over domains.
  std::vector<Slot> asked;
  std::vector<std::size_t> cursor(kDomains.size(), 0);
  for (std::size_t q = 0; asked.size() < cfg.questions; ++q) {
    const auto d = q % kDomains.size();
    if (cursor[d] < candidates[d].size()) asked.push_back(candidates[d][cursor[d]++]);
    bool exhausted = true;
    for (std::size_t k = 0; k < kDomains.size(); ++k) exhausted &= cursor[k] >= candidates[k].size();
    if (exhausted && asked.size() < cfg.questions) throw std::invalid_argument("synth: not enough (subject, relation) slots");
  }

  std::vector<QuestionRecord> questions;
  std::discrete_distribution<int> answer_count({0.0, 0.6, 0.3, 0.1});
  std::uniform_int_distribution<std::size_t> form(0, kQuestionForms.size() - 1);
  for (std::size_t qi = 0; qi < asked.size(); ++qi) {
    const auto& slot = asked[qi];
    const auto& rel = relations[slot.domain][slot.relation];
    std::vector<Entity> answers;
    for (int i = answer_count(b.rng); i > 0; --i) answers.push_back(person());
    b.state_fact(slot.subject, kNouns[slot.domain], rel.evidence_word, answers, answer_p);

    std::string text = kQuestionForms[form(b.rng)];
    text.replace(text.find("%q"), 2, rel.question_word);
    text.replace(text.find("%s"), 2, slot.subject.label);
    QuestionRecord q;
    q.question_id = static_cast<std::int64_t>(qi);
    q.text = text;
    q.domain = kDomains[slot.domain];
    q.answer_text = answers.front().label;
    for (const auto& a : answers) q.answer_entities.push_back({a.id, a.label});
    questions.push_back(std::move(q));
  }

  // Test questions only use relations that also occur in training questions.
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> remaining;
  for (const auto& s : asked) ++remaining[{s.domain, s.relation}];
  std::vector<std::size_t> order(questions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), b.rng);
  std::vector<bool> is_test(questions.size(), false);
  std::size_t n_test = 0;
  for (auto qi : order) {
    if (n_test == cfg.test_questions) break;
    auto& left = remaining[{asked[qi].domain, asked[qi].relation}];
    if (left < 2) continue;
    --left;
    is_test[qi] = true;
    ++n_test;
  }
  if (n_test < cfg.test_questions) throw std::invalid_argument("synth: cannot form a test split with seen relations");

  SynthWorld world;
  world.corpus = std::move(b.corpus);
  for (std::size_t qi = 0; qi < questions.size(); ++qi) (is_test[qi] ? world.test : world.train).push_back(questions[qi]);
  return world;
}

void write_synth(const std::string& dir, const SynthWorld& world) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path p(dir);
  write_evidence_jsonl((p / "corpus.jsonl").string(), world.corpus);
  write_questions_jsonl((p / "questions_train.jsonl").string(), world.train);
  write_questions_jsonl((p / "questions_test.jsonl").string(), world.test);
}

}  // namespace hgkr
