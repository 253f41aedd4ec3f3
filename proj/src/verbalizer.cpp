#include "hgkr/verbalizer.h"

#include <cstdlib>
#include <regex>

#include "httplib.h"
#include "json.hpp"

namespace hgkr {

namespace {

std::string verbalize_kg(const std::vector<std::string>& f) {
  if (f.size() < 3) return f.empty() ? std::string{} : f[0] + ".";
  std::string out = "The " + f[1] + " of " + f[0] + " is " + f[2];
  // Qualifier pairs; a dangling field is kept as a trailing clause.
  for (std::size_t i = 3; i + 1 < f.size(); i += 2) out += ", with " + f[i] + " " + f[i + 1];
  if (f.size() > 3 && (f.size() - 3) % 2 == 1) out += ", " + f.back();
  return out + ".";
}

std::string verbalize_table(const std::vector<std::string>& f) {
  // Re-join fields that are not "header is value" cells; they come from values containing ", ".
  std::vector<std::pair<std::string, std::string>> cells;
  for (std::size_t i = 1; i < f.size(); ++i) {
    const auto& piece = f[i];
    const auto pos = piece.find(" is");
    const bool is_cell = pos != std::string::npos && (pos + 3 == piece.size() || piece[pos + 3] == ' ');
    if (!is_cell && !cells.empty()) {
      cells.back().second += ", " + piece;
      continue;
    }
    if (!is_cell) {
      cells.emplace_back(piece, "");
      continue;
    }
    std::string value = pos + 3 < piece.size() ? piece.substr(pos + 4) : std::string{};
    cells.emplace_back(piece.substr(0, pos), std::move(value));
  }
  std::erase_if(cells, [](const auto& c) { return c.second.empty(); });
  std::string out = "In " + f[0];
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out += ", ";
    if (i + 1 == cells.size() && cells.size() > 1) out += "and ";
    out += cells[i].first + " is " + cells[i].second;
  }
  return out + ".";
}

std::string verbalize_info(const std::vector<std::string>& f) {
  if (f.size() < 2) return f.empty() ? std::string{} : f[0] + ".";
  const std::string& subject = f[1];
  std::string out;
  for (std::size_t i = 2; i + 1 < f.size(); i += 2) {
    if (!out.empty()) out += ' ';
    out += "The " + f[i] + " of " + subject + " is " + f[i + 1] + ".";
  }
  if (out.empty()) out = subject + ".";
  return out;
}

}  // namespace

std::string verbalize(const EvidenceRecord& data) {
  const auto fields = split_fields(data.text);
  switch (data.etype) {
    case KnowledgeType::KG: return verbalize_kg(fields);
    case KnowledgeType::Table: return verbalize_table(fields);
    case KnowledgeType::Info: return verbalize_info(fields);
    case KnowledgeType::Text: break;
  }
  throw InvalidInput("verbalize: Text evidence has no data-to-text form");
}

std::string Verbalizer::operator()(const EvidenceRecord& data) {
  std::string fallback = verbalize(data);
  if (cfg_.url.empty()) return fallback;

  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.url, m, url_re)) {
    warnings_.push_back("verbalizer url not understood: " + cfg_.url);
    return fallback;
  }
  const std::string host = m[1].str();
  const std::string path = m[2].matched ? m[2].str() : "/";

  httplib::Client cli(host);
  const auto secs = cfg_.timeout_ms / 1000;
  const auto usecs = (cfg_.timeout_ms % 1000) * 1000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (const char* tok = std::getenv(cfg_.token_env.c_str()); tok && *tok)
    headers.emplace("Authorization", std::string("Bearer ") + tok);

  const nlohmann::json body = {{"evidence", data.text}, {"source", std::string(source_code(data.etype))}};
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("text") || !j["text"].is_string() || j["text"].get<std::string>().empty()) {
      last_error = "malformed response";
      continue;
    }
    ++external_ok_;
    return j["text"].get<std::string>();
  }
  warnings_.push_back("external verbalizer failed for evidence " + std::to_string(data.evidence_id) + " (" +
                      last_error + "); used template");
  return fallback;
}

std::vector<DataTextPair> build_data_text_pairs(const std::vector<EvidenceRecord>& corpus, Verbalizer& verbalizer) {
  std::vector<DataTextPair> pairs;
  for (const auto& e : corpus) {
    if (e.etype == KnowledgeType::Text) continue;
    DataTextPair p{e, verbalizer(e)};
    validate(p);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace hgkr
