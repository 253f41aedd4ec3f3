#include "hgkr/corpus_io.h"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace hgkr {

using nlohmann::json;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

EntityRef entity_from_json(const json& j) {
  EntityRef e;
  e.id = j.at("id").get<std::string>();
  if (auto it = j.find("label"); it != j.end() && it->is_string()) e.label = it->get<std::string>();
  if (e.id.empty()) throw InvalidInput("entity with empty id");
  return e;
}

json entity_to_json(const EntityRef& e) { return json{{"id", e.id}, {"label", e.label}}; }

std::vector<EntityRef> entities_from_json(const json& j) {
  std::vector<EntityRef> out;
  if (j.is_null()) return out;
  for (const auto& item : j) out.push_back(entity_from_json(item));
  return out;
}

json entities_to_json(const std::vector<EntityRef>& es) {
  json arr = json::array();
  for (const auto& e : es) arr.push_back(entity_to_json(e));
  return arr;
}

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& ex) {
      throw InvalidInput("line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const InvalidInput& ex) {
      throw InvalidInput("line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
}

std::int64_t id_from_json(const json& j) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    std::size_t used = 0;
    const auto v = std::stoll(s, &used);
    if (used != s.size()) throw InvalidInput("non-numeric id: " + s);
    return v;
  }
  throw InvalidInput("id must be an integer or numeric string");
}

}  // namespace

std::string derive_page_title(KnowledgeType t, const std::string& text) {
  if (t == KnowledgeType::KG) return {};
  const auto pos = text.find(", ");
  return pos == std::string::npos ? text : text.substr(0, pos);
}

std::vector<EvidenceRecord> read_evidence_jsonl(std::istream& in) {
  std::vector<EvidenceRecord> out;
  std::set<EvidenceId> seen;
  for_each_line(in, [&](const json& j) {
    EvidenceRecord e;
    e.evidence_id = j.contains("evidence id") ? id_from_json(j["evidence id"]) : static_cast<EvidenceId>(out.size());
    e.text = j.at("linearized evidence text").get<std::string>();
    e.etype = parse_source_code(j.at("source").get<std::string>());
    if (j.contains("wikidata entities")) e.entities = entities_from_json(j["wikidata entities"]);
    if (auto it = j.find("retrieved for entity"); it != j.end() && it->is_object())
      e.retrieved_for = entity_from_json(*it);
    if (auto it = j.find("disambiguations"); it != j.end() && it->is_array()) {
      for (const auto& d : *it) {
        if (d.is_array() && d.size() >= 2 && d[0].is_string() && d[1].is_string())
          e.disambiguations.emplace_back(d[0].get<std::string>(), d[1].get<std::string>());
      }
    }
    e.page_title = derive_page_title(e.etype, e.text);
    validate(e);
    if (!seen.insert(e.evidence_id).second) throw InvalidInput("duplicate evidence id " + std::to_string(e.evidence_id));
    out.push_back(std::move(e));
  });
  return out;
}

std::vector<EvidenceRecord> read_evidence_jsonl(const std::string& path) {
  auto in = open_in(path);
  return read_evidence_jsonl(in);
}

void write_evidence_jsonl(std::ostream& out, const std::vector<EvidenceRecord>& corpus) {
  for (const auto& e : corpus) {
    json j;
    j["evidence id"] = e.evidence_id;
    j["linearized evidence text"] = e.text;
    j["wikidata entities"] = entities_to_json(e.entities);
    j["source"] = std::string(source_code(e.etype));
    if (e.retrieved_for) j["retrieved for entity"] = entity_to_json(*e.retrieved_for);
    if (!e.disambiguations.empty()) {
      json d = json::array();
      for (const auto& [a, b] : e.disambiguations) d.push_back(json::array({a, b}));
      j["disambiguations"] = std::move(d);
    }
    out << j.dump() << '\n';
  }
}

void write_evidence_jsonl(const std::string& path, const std::vector<EvidenceRecord>& corpus) {
  auto out = open_out(path);
  write_evidence_jsonl(out, corpus);
}

std::vector<QuestionRecord> read_questions_jsonl(std::istream& in) {
  std::vector<QuestionRecord> out;
  std::set<std::int64_t> seen;
  for_each_line(in, [&](const json& j) {
    QuestionRecord q;
    q.question_id = id_from_json(j.at("question id"));
    q.text = j.at("question").get<std::string>();
    if (auto it = j.find("domain"); it != j.end() && it->is_string()) q.domain = it->get<std::string>();
    if (j.contains("answers")) q.answer_entities = entities_from_json(j["answers"]);
    if (auto it = j.find("answer text"); it != j.end() && it->is_string()) q.answer_text = it->get<std::string>();
    validate(q);
    if (!seen.insert(q.question_id).second) throw InvalidInput("duplicate question id " + std::to_string(q.question_id));
    out.push_back(std::move(q));
  });
  return out;
}

std::vector<QuestionRecord> read_questions_jsonl(const std::string& path) {
  auto in = open_in(path);
  return read_questions_jsonl(in);
}

void write_questions_jsonl(std::ostream& out, const std::vector<QuestionRecord>& questions) {
  for (const auto& q : questions) {
    json j;
    j["question id"] = std::to_string(q.question_id);
    j["question"] = q.text;
    j["domain"] = q.domain;
    j["answers"] = entities_to_json(q.answer_entities);
    j["answer text"] = q.answer_text;
    out << j.dump() << '\n';
  }
}

void write_questions_jsonl(const std::string& path, const std::vector<QuestionRecord>& questions) {
  auto out = open_out(path);
  write_questions_jsonl(out, questions);
}

void write_pairs_jsonl(const std::string& path, const std::vector<DataTextPair>& pairs) {
  auto out = open_out(path);
  for (const auto& p : pairs) {
    json j;
    j["evidence id"] = p.data.evidence_id;
    j["source"] = std::string(source_code(p.data.etype));
    j["data"] = p.data.text;
    j["text"] = p.text;
    j["wikidata entities"] = entities_to_json(p.data.entities);
    out << j.dump() << '\n';
  }
}

std::vector<DataTextPair> read_pairs_jsonl(const std::string& path) {
  auto in = open_in(path);
  std::vector<DataTextPair> out;
  for_each_line(in, [&](const json& j) {
    DataTextPair p;
    p.data.evidence_id = id_from_json(j.at("evidence id"));
    p.data.etype = parse_source_code(j.at("source").get<std::string>());
    p.data.text = j.at("data").get<std::string>();
    p.data.page_title = derive_page_title(p.data.etype, p.data.text);
    if (j.contains("wikidata entities")) p.data.entities = entities_from_json(j["wikidata entities"]);
    p.text = j.at("text").get<std::string>();
    validate(p);
    out.push_back(std::move(p));
  });
  return out;
}

}  // namespace hgkr
