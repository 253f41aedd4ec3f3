#include "hgkr/pipeline.h"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "hgkr/bm25.h"
#include "hgkr/corpus_io.h"
#include "toml.hpp"

namespace fs = std::filesystem;

namespace hgkr {

namespace {

template <typename T>
T read_value(const toml::table& tbl, std::string_view key, T fallback) {
  const auto* node = tbl.get(key);
  if (!node) return fallback;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node->value<bool>()) return *v;
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node->value<std::string>()) return *v;
  } else if constexpr (std::is_floating_point_v<T>) {
    if (auto v = node->value<double>()) return *v;
  } else {
    if (auto v = node->value<std::int64_t>()) {
      if (*v < 0) throw ValidationError("config key '" + std::string(key) + "' must be non-negative");
      return static_cast<T>(*v);
    }
  }
  throw ValidationError("config key '" + std::string(key) + "' has the wrong type");
}

const toml::table& sub(const toml::table& tbl, std::string_view key) {
  static const toml::table empty;
  const auto* node = tbl.get(key);
  if (!node) return empty;
  if (const auto* t = node->as_table()) return *t;
  throw ValidationError("config key '" + std::string(key) + "' must be a table");
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

void read_stage(const toml::table& tbl, StageConfig& s) {
  s.learning_rate = read_value(tbl, "learning_rate", s.learning_rate);
  s.epochs = static_cast<int>(read_value<std::size_t>(tbl, "epochs", static_cast<std::size_t>(s.epochs)));
  s.batch_size = read_value(tbl, "batch_size", s.batch_size);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ValidationError(what + " path is not configured");
  if (!fs::is_regular_file(path)) throw ValidationError(what + " not found: " + path);
}

std::string artifact(const PipelineConfig& c, const char* name) { return workdir_path(c, name); }

std::string require_artifact(const PipelineConfig& c, const char* name, const char* producer) {
  const auto p = artifact(c, name);
  if (!fs::is_regular_file(p)) throw ValidationError("missing " + p + " (run '" + producer + "' first)");
  return p;
}

std::vector<EvidenceRecord> load_workdir_corpus(const PipelineConfig& c) {
  return read_evidence_jsonl(require_artifact(c, artifacts::kCorpus, "ingest"));
}

std::vector<QuestionRecord> load_questions(const std::string& path, const char* what) {
  require_file(path, what);
  auto qs = read_questions_jsonl(path);
  for (const auto& q : qs) validate(q);
  return qs;
}

InstructionSet load_instructions(const PipelineConfig& c) {
  require_file(c.paths.paraphrases, "paraphrase file");
  return InstructionSet::load(c.paths.paraphrases);
}

Vocabulary load_vocab(const PipelineConfig& c) { return Vocabulary::load(require_artifact(c, artifacts::kVocab, "pairs")); }

EncoderParams load_encoder(const std::string& path, const Vocabulary& vocab) {
  if (!fs::is_regular_file(path)) throw ValidationError("missing encoder file: " + path);
  auto enc = EncoderParams::load(path);
  if (enc.vocab_size() != vocab.size()) throw ValidationError("encoder " + path + " does not match vocab.tsv");
  return enc;
}

void log_report(std::ostream& log, const StageReport& r) {
  for (const auto& e : r.epochs) {
    log << "stage " << e.stage << " epoch " << e.epoch << " loss " << e.mean_loss << " samples " << e.samples;
    if (e.heldout_loss) log << " heldout " << *e.heldout_loss;
    log << '\n';
  }
}

std::vector<std::string> instruction_texts(const InstructionSet& instructions) {
  static constexpr std::array<std::string_view, 6> kDomains = {"", "books", "movies", "music", "tvseries", "soccer"};
  std::vector<std::string> out;
  for (auto g : kAllGroups)
    for (auto d : kDomains)
      for (std::size_t i = 0; i <= instructions.paraphrase_count(g); ++i)
        out.push_back(instructions.render(g, d, static_cast<int>(i)).text);
  return out;
}

void save_stage(const PipelineConfig& c, const EncoderParams& enc, const char* snapshot, const StageReport& report) {
  enc.save(artifact(c, snapshot));
  enc.save(artifact(c, artifacts::kEncoder));
  append_report_jsonl(artifact(c, artifacts::kReports), report);
}

}  // namespace

PipelineConfig parse_config(const std::string& toml_text, const std::string& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw ValidationError(std::string("config parse error: ") + std::string(e.description()));
  }
  PipelineConfig c;
  c.seed = read_value<std::uint64_t>(root, "seed", c.seed);
  c.workdir = resolve(base_dir, read_value(root, "workdir", c.workdir));
  c.bm25_baseline = read_value(root, "bm25_baseline", c.bm25_baseline);

  const auto& paths = sub(root, "paths");
  c.paths.corpus = resolve(base_dir, read_value(paths, "corpus", c.paths.corpus));
  c.paths.questions_train = resolve(base_dir, read_value(paths, "questions_train", c.paths.questions_train));
  c.paths.questions_test = resolve(base_dir, read_value(paths, "questions_test", c.paths.questions_test));
  c.paths.paraphrases = resolve(base_dir, read_value(paths, "paraphrases", c.paths.paraphrases));

  const auto& vocab = sub(root, "vocab");
  c.vocab.min_frequency = read_value(vocab, "min_frequency", c.vocab.min_frequency);
  c.vocab.max_size = read_value(vocab, "max_size", c.vocab.max_size);

  const auto& enc = sub(root, "encoder");
  c.encoder.dim = read_value(enc, "dim", c.encoder.dim);
  c.encoder.init_scale = read_value(enc, "init_scale", c.encoder.init_scale);

  const auto& train = sub(root, "train");
  auto& t = c.train;
  t.temperature = read_value(train, "temperature", t.temperature);
  t.group_capacity = read_value(train, "group_capacity", t.group_capacity);
  t.unfollowing_probability = read_value(train, "unfollowing_probability", t.unfollowing_probability);
  t.pool_size = read_value(train, "pool_size", t.pool_size);
  t.max_positives = read_value(train, "max_positives", t.max_positives);
  t.clip_norm = read_value(train, "clip_norm", t.clip_norm);
  const auto miner = read_value<std::string>(train, "miner", "encoder");
  if (miner != "encoder" && miner != "bm25") throw ValidationError("train.miner must be 'encoder' or 'bm25'");
  t.use_bm25_miner = miner == "bm25";
  read_stage(sub(train, "stage1"), t.stage1);
  read_stage(sub(train, "stage2"), t.stage2);
  read_stage(sub(train, "stage3"), t.stage3);

  const auto& verb = sub(root, "verbalizer");
  c.verbalizer.url = read_value(verb, "url", c.verbalizer.url);
  c.verbalizer.token_env = read_value(verb, "token_env", c.verbalizer.token_env);
  c.verbalizer.timeout_ms = static_cast<int>(read_value<std::size_t>(verb, "timeout_ms", 5000));
  c.verbalizer.retries = static_cast<int>(read_value<std::size_t>(verb, "retries", 2));

  const auto& syn = sub(root, "synth");
  auto& s = c.synth;
  s.seed = read_value(syn, "seed", s.seed);
  s.subjects_per_domain = read_value(syn, "subjects_per_domain", s.subjects_per_domain);
  s.relations_per_domain = read_value(syn, "relations_per_domain", s.relations_per_domain);
  s.distractor_relations_per_domain = read_value(syn, "distractor_relations_per_domain", s.distractor_relations_per_domain);
  s.questions = read_value(syn, "questions", s.questions);
  s.test_questions = read_value(syn, "test_questions", s.test_questions);
  s.min_cast = read_value(syn, "min_cast", s.min_cast);
  s.max_cast = read_value(syn, "max_cast", s.max_cast);
  s.filler_passages = read_value(syn, "filler_passages", s.filler_passages);
  s.unasked_relations = read_value(syn, "unasked_relations", s.unasked_relations);

  t.seed = c.seed;
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  if (c.encoder.dim == 0) throw ValidationError("encoder.dim must be positive");
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config file not found: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, fs::path(path).parent_path().string());
}

std::string workdir_path(const PipelineConfig& config, const char* name) {
  return (fs::path(config.workdir) / name).string();
}

WorkdirLock::WorkdirLock(const std::string& workdir) : path_((fs::path(workdir) / artifacts::kLock).string()) {
  fs::create_directories(workdir);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const auto pid = std::to_string(::getpid());
      [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) throw std::runtime_error("cannot create lock " + path_ + ": " + std::strerror(errno));
    std::ifstream in(path_);
    long owner = 0;
    in >> owner;
    if (owner > 0 && ::kill(static_cast<pid_t>(owner), 0) == 0)
      throw std::runtime_error("workdir is in use by process " + std::to_string(owner) + " (" + path_ + ")");
    fs::remove(path_);
  }
  throw std::runtime_error("cannot acquire lock " + path_);
}

WorkdirLock::~WorkdirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

void run_ingest(const PipelineConfig& c, std::ostream& log) {
  require_file(c.paths.corpus, "corpus");
  const auto corpus = read_evidence_jsonl(c.paths.corpus);
  if (corpus.empty()) throw ValidationError("corpus is empty: " + c.paths.corpus);
  for (const auto& e : corpus) validate(e);
  const auto train = load_questions(c.paths.questions_train, "training questions");
  for (const auto& q : train) normalize_domain(q.domain);
  fs::create_directories(c.workdir);
  write_evidence_jsonl(artifact(c, artifacts::kCorpus), corpus);
  log << "ingested " << corpus.size() << " evidences, " << train.size() << " training questions\n";
}

void run_pairs(const PipelineConfig& c, std::ostream& log) {
  const auto corpus = load_workdir_corpus(c);
  const auto instructions = load_instructions(c);
  const auto train = load_questions(c.paths.questions_train, "training questions");
  Verbalizer verbalizer(c.verbalizer);
  const auto pairs = build_data_text_pairs(corpus, verbalizer);
  for (const auto& w : verbalizer.warnings()) log << "warning: " << w << '\n';
  write_pairs_jsonl(artifact(c, artifacts::kPairs), pairs);

  std::vector<std::string> texts;
  for (const auto& e : corpus) texts.push_back(e.text);
  for (const auto& p : pairs) texts.push_back(p.text);
  for (auto& t : instruction_texts(instructions)) texts.push_back(std::move(t));
  for (const auto& q : train) texts.push_back(q.text);
  const auto vocab = Vocabulary::build(texts, c.vocab.min_frequency, c.vocab.max_size);
  vocab.save(artifact(c, artifacts::kVocab));
  log << "built " << pairs.size() << " data-text pairs, vocabulary of " << vocab.size() << " tokens\n";
}

void run_pretrain(const PipelineConfig& c, std::ostream& log) {
  const auto pairs_path = artifact(c, artifacts::kPairs);
  if (!fs::is_regular_file(pairs_path)) throw ValidationError("missing pairs file: " + pairs_path);
  const auto pairs = read_pairs_jsonl(pairs_path);
  const auto vocab = load_vocab(c);
  EncoderParams enc(vocab.size(), c.encoder.dim, c.seed, c.encoder.init_scale);
  enc.save(artifact(c, artifacts::kEncoderInit));
  fs::remove(artifact(c, artifacts::kReports));
  const auto report = stage1_pretrain(enc, pairs, vocab, c.train);
  if (report.initial_heldout_loss) log << "stage 1 held-out loss before training " << *report.initial_heldout_loss << '\n';
  log_report(log, report);
  save_stage(c, enc, artifacts::kEncoderStage1, report);
}

void run_align(const PipelineConfig& c, std::ostream& log) {
  const auto pairs_path = artifact(c, artifacts::kPairs);
  if (!fs::is_regular_file(pairs_path)) throw ValidationError("missing pairs file: " + pairs_path);
  const auto pairs = read_pairs_jsonl(pairs_path);
  const auto vocab = load_vocab(c);
  auto enc = load_encoder(require_artifact(c, artifacts::kEncoderStage1, "pretrain"), vocab);
  const auto report = stage2_align(enc, pairs, vocab, c.train);
  log_report(log, report);
  save_stage(c, enc, artifacts::kEncoderStage2, report);
}

void run_finetune(const PipelineConfig& c, std::ostream& log) {
  const auto corpus = load_workdir_corpus(c);
  const auto train = load_questions(c.paths.questions_train, "training questions");
  const auto instructions = load_instructions(c);
  const auto vocab = load_vocab(c);
  auto enc = load_encoder(require_artifact(c, artifacts::kEncoderStage2, "align"), vocab);
  const auto report = stage3_finetune(enc, train, corpus, vocab, instructions, c.train);
  log_report(log, report);
  log << "stage 3 scenario-2 samples " << report.scenario2_samples << ", unfollowing members "
      << report.unfollowing_members << ", short groups " << report.short_groups << '\n';
  save_stage(c, enc, artifacts::kEncoderStage3, report);
}

void run_index(const PipelineConfig& c, std::ostream& log) {
  const auto corpus = load_workdir_corpus(c);
  const auto vocab = load_vocab(c);
  const auto enc = load_encoder(require_artifact(c, artifacts::kEncoder, "pretrain"), vocab);
  const auto index = build_index(enc, vocab, corpus);
  index.save(artifact(c, artifacts::kIndex));
  log << "indexed " << index.size() << " evidences\n";
}

MetricReport run_eval(const PipelineConfig& c, std::ostream& log) {
  const auto corpus = load_workdir_corpus(c);
  const auto test = load_questions(c.paths.questions_test, "test questions");
  const auto instructions = load_instructions(c);
  const auto vocab = load_vocab(c);
  const auto enc = load_encoder(require_artifact(c, artifacts::kEncoder, "pretrain"), vocab);
  const auto index = VectorIndex::load(require_artifact(c, artifacts::kIndex, "index"));
  const auto runs = evaluate_dense(enc, vocab, index, test, corpus, instructions);
  write_run_jsonl(artifact(c, artifacts::kRun), runs);
  const auto report = aggregate(runs);
  write_metrics_json(artifact(c, artifacts::kMetrics), report);
  const auto table = format_metric_report(report);
  {
    std::ofstream out(artifact(c, artifacts::kMetricsText), std::ios::trunc);
    out << table;
  }
  log << "dense retrieval\n" << table;
  if (c.bm25_baseline) {
    const Bm25Index bm25(corpus);
    const auto bruns = run_scenarios(test, corpus, instructions, bm25_ranker(bm25));
    write_run_jsonl(artifact(c, artifacts::kBm25Run), bruns);
    const auto brep = aggregate(bruns);
    write_metrics_json(artifact(c, artifacts::kBm25Metrics), brep);
    log << "BM25\n" << format_metric_report(brep);
  }
  return report;
}

void run_stats(const PipelineConfig& c, std::ostream& out) {
  std::vector<EvidenceRecord> corpus;
  if (fs::is_regular_file(artifact(c, artifacts::kCorpus))) {
    corpus = read_evidence_jsonl(artifact(c, artifacts::kCorpus));
  } else {
    require_file(c.paths.corpus, "corpus");
    corpus = read_evidence_jsonl(c.paths.corpus);
  }
  out << format_corpus_stats(corpus_stats(corpus));
}

void run_synth(const PipelineConfig& c, const std::string& out_dir, std::ostream& log) {
  const auto world = generate_synth(c.synth);
  write_synth(out_dir, world);
  log << "wrote " << world.corpus.size() << " evidences, " << world.train.size() << " training and "
      << world.test.size() << " test questions to " << out_dir << '\n';
}

void run_pipeline(const PipelineConfig& c, std::ostream& log) {
  run_ingest(c, log);
  run_pairs(c, log);
  run_pretrain(c, log);
  run_align(c, log);
  run_finetune(c, log);
  run_index(c, log);
  run_eval(c, log);
}

std::vector<SearchHit> run_search(const PipelineConfig& c, const SearchRequest& req) {
  if (req.query.empty()) throw ValidationError("search needs a non-empty --query");
  if (req.k < 1) throw ValidationError("--k must be at least 1");
  const auto instructions = load_instructions(c);
  const auto vocab = load_vocab(c);
  const auto enc = load_encoder(require_artifact(c, artifacts::kEncoder, "pretrain"), vocab);
  const auto index = VectorIndex::load(require_artifact(c, artifacts::kIndex, "index"));
  if (index.fingerprint() != enc.fingerprint()) throw ValidationError("index.hgix was built with a different encoder");
  QuestionRecord q;
  q.text = req.query;
  q.domain = req.domain;
  const auto query = build_retrieval_query(instructions.render(req.group, req.domain, 0), q);
  const auto v = encode(enc, vocab.encode(query.text), true);
  return top_k_search(index, v.values, req.k);
}

MetricReport evaluate_snapshot(const PipelineConfig& c, const std::string& encoder_path) {
  const auto corpus = load_workdir_corpus(c);
  const auto test = load_questions(c.paths.questions_test, "test questions");
  const auto instructions = load_instructions(c);
  const auto vocab = load_vocab(c);
  const auto enc = load_encoder(encoder_path, vocab);
  const auto index = build_index(enc, vocab, corpus);
  return aggregate(evaluate_dense(enc, vocab, index, test, corpus, instructions));
}

MetricReport evaluate_bm25(const PipelineConfig& c) {
  const auto corpus = load_workdir_corpus(c);
  const auto test = load_questions(c.paths.questions_test, "test questions");
  const auto instructions = load_instructions(c);
  const Bm25Index bm25(corpus);
  return aggregate(run_scenarios(test, corpus, instructions, bm25_ranker(bm25)));
}

}  // namespace hgkr
