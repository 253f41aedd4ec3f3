#include "hgkr/eval.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace hgkr {

int hit_at_k(const RunResult& result, std::size_t k) {
  const auto n = std::min(k, result.hits.size());
  for (std::size_t i = 0; i < n; ++i)
    if (result.hits[i].relevant) return 1;
  return 0;
}

double mrr_at_k(const RunResult& result, std::size_t k) {
  const auto n = std::min(k, result.hits.size());
  for (std::size_t i = 0; i < n; ++i)
    if (result.hits[i].relevant) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

int type_hit(const RunResult& result, KnowledgeType t, std::size_t k) {
  const auto n = std::min(k, result.hits.size());
  for (std::size_t i = 0; i < n; ++i)
    if (result.hits[i].relevant && result.hits[i].etype == t) return 1;
  return 0;
}

MetricReport aggregate(std::span<const RunResult> runs) {
  MetricReport rep;
  std::array<double, 4> s1{};
  std::array<double, kNumTypes> s2{};
  for (const auto& r : runs) {
    if (r.group == InstructionGroup::All) {
      s1[0] += hit_at_k(r, 5);
      s1[1] += hit_at_k(r, 10);
      s1[2] += hit_at_k(r, 100);
      s1[3] += mrr_at_k(r, 100);
      rep.hit5.denominator += 1;
    } else {
      const auto t = *target_type(r.group);
      s2[type_index(t)] += type_hit(r, t, 100);
      rep.type_hit[type_index(t)].denominator += 1;
    }
  }
  const std::size_t n1 = rep.hit5.denominator;
  rep.hit10.denominator = rep.hit100.denominator = rep.mrr100.denominator = n1;
  if (n1) {
    rep.hit5.value = 100.0 * s1[0] / static_cast<double>(n1);
    rep.hit10.value = 100.0 * s1[1] / static_cast<double>(n1);
    rep.hit100.value = 100.0 * s1[2] / static_cast<double>(n1);
    rep.mrr100.value = 100.0 * s1[3] / static_cast<double>(n1);
  }
  for (std::size_t t = 0; t < kNumTypes; ++t) {
    auto& c = rep.type_hit[t];
    if (c.denominator) c.value = 100.0 * s2[t] / static_cast<double>(c.denominator);
  }
  return rep;
}

std::vector<RunResult> run_scenarios(std::span<const QuestionRecord> questions, std::span<const EvidenceRecord> corpus,
                                     const InstructionSet& instructions, const Ranker& ranker) {
  const RelevanceIndex rel(corpus);
  std::unordered_map<EvidenceId, KnowledgeType> type_of;
  for (const auto& e : corpus) type_of.emplace(e.evidence_id, e.etype);

  struct Job {
    std::size_t question;
    InstructionGroup group;
  };
  std::vector<std::unordered_set<EvidenceId>> relevant(questions.size());
  std::vector<Job> jobs;
  for (std::size_t qi = 0; qi < questions.size(); ++qi) {
    std::array<bool, kNumTypes> has{};
    for (auto r : rel.relevant_rows(questions[qi])) {
      relevant[qi].insert(corpus[r].evidence_id);
      has[type_index(corpus[r].etype)] = true;
    }
    jobs.push_back({qi, InstructionGroup::All});
    for (auto t : kAllTypes)
      if (has[type_index(t)]) jobs.push_back({qi, group_for(t)});
  }

  std::vector<RetrievalQuery> queries;
  queries.reserve(jobs.size());
  for (const auto& j : jobs)
    queries.push_back(build_retrieval_query(instructions.render(j.group, questions[j.question].domain, 0),
                                            questions[j.question]));

  std::vector<RunResult> runs(jobs.size());
  const auto n = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto& job = jobs[ui];
    auto& run = runs[ui];
    run.question_id = questions[job.question].question_id;
    run.group = job.group;
    auto ranked = ranker(queries[ui]);
    if (ranked.size() > kRunDepth) ranked.resize(kRunDepth);
    for (const auto& s : ranked)
      run.hits.push_back({s.id, s.score, relevant[job.question].count(s.id) > 0, type_of.at(s.id)});
  }
  return runs;
}

Ranker dense_ranker(const EncoderParams& encoder, const Vocabulary& vocab, const VectorIndex& index) {
  return [&encoder, &vocab, &index](const RetrievalQuery& q) {
    const auto v = encode(encoder, vocab.encode(q.text), true);
    const auto hits = top_k_search(index, v.values, kRunDepth);
    std::vector<Scored> out;
    out.reserve(hits.size());
    for (const auto& h : hits) out.push_back({h.evidence_id, h.score, 0});
    return out;
  };
}

Ranker bm25_ranker(const Bm25Index& bm25) {
  return [&bm25](const RetrievalQuery& q) { return bm25.top_k(tokenize(q.question.text), kRunDepth); };
}

std::vector<RunResult> evaluate_dense(const EncoderParams& encoder, const Vocabulary& vocab, const VectorIndex& index,
                                      std::span<const QuestionRecord> questions, std::span<const EvidenceRecord> corpus,
                                      const InstructionSet& instructions) {
  if (index.fingerprint() != encoder.fingerprint())
    throw std::invalid_argument("index was built with a different encoder");
  if (index.dim() != encoder.dim()) throw std::invalid_argument("index dimension does not match the encoder");
  return run_scenarios(questions, corpus, instructions, dense_ranker(encoder, vocab, index));
}

void write_run_jsonl(const std::string& path, std::span<const RunResult> runs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& r : runs) {
    nlohmann::json hits = nlohmann::json::array();
    for (const auto& h : r.hits)
      hits.push_back({{"id", h.id}, {"score", h.score}, {"relevant", h.relevant}, {"type", source_code(h.etype)}});
    nlohmann::json j = {{"question_id", r.question_id}, {"group", group_name(r.group)}, {"hits", std::move(hits)}};
    out << j.dump() << '\n';
  }
}

std::vector<RunResult> read_run_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<RunResult> runs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RunResult r;
      r.question_id = j.at("question_id").get<std::int64_t>();
      r.group = parse_group(j.at("group").get<std::string>());
      for (const auto& h : j.at("hits"))
        r.hits.push_back({h.at("id").get<EvidenceId>(), h.at("score").get<double>(), h.at("relevant").get<bool>(),
                          parse_source_code(h.at("type").get<std::string>())});
      runs.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw InvalidInput(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return runs;
}

namespace {
nlohmann::json cell_json(const MetricCell& c) {
  nlohmann::json v = nullptr;
  if (c.present()) v = std::round(c.value * 100.0) / 100.0;
  return {{"value", v}, {"denominator", c.denominator}};
}

std::string cell_text(const MetricCell& c) {
  if (!c.present()) return "-";
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", c.value);
  return b;
}
}  // namespace

std::string metrics_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["hit@5"] = cell_json(report.hit5);
  j["hit@10"] = cell_json(report.hit10);
  j["hit@100"] = cell_json(report.hit100);
  j["mrr@100"] = cell_json(report.mrr100);
  for (auto t : {KnowledgeType::KG, KnowledgeType::Text, KnowledgeType::Table, KnowledgeType::Info})
    j[std::string(source_code(t)) + "_hit"] = cell_json(report.type_hit[type_index(t)]);
  return j.dump(2) + "\n";
}

void write_metrics_json(const std::string& path, const MetricReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << metrics_json(report);
}

std::string format_metric_report(const MetricReport& report) {
  const std::array<std::pair<const char*, const MetricCell*>, 8> cells = {{
      {"Hit@5", &report.hit5},
      {"Hit@10", &report.hit10},
      {"Hit@100", &report.hit100},
      {"MRR@100", &report.mrr100},
      {"KG-Hit", &report.type_hit[type_index(KnowledgeType::KG)]},
      {"Text-Hit", &report.type_hit[type_index(KnowledgeType::Text)]},
      {"Table-Hit", &report.type_hit[type_index(KnowledgeType::Table)]},
      {"Info-Hit", &report.type_hit[type_index(KnowledgeType::Info)]},
  }};
  std::ostringstream head, vals, dens;
  char b[64];
  for (const auto& [name, c] : cells) {
    std::snprintf(b, sizeof b, "%10s", name);
    head << b;
    std::snprintf(b, sizeof b, "%10s", cell_text(*c).c_str());
    vals << b;
    std::snprintf(b, sizeof b, "%10zu", c->denominator);
    dens << b;
  }
  return head.str() + "\n" + vals.str() + "\n" + dens.str() + "  (n)\n";
}

}  // namespace hgkr
