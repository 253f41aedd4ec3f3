#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hgkr/kernels.h"
#include "hgkr/pipeline.h"

namespace {

using namespace hgkr;

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string workdir;
  std::size_t k = 10;
  std::string group = "I_All";
  std::string domain;
  std::string query;
  int threads = 0;
  std::string out;
};

PipelineConfig make_config(const Flags& f) {
  PipelineConfig c = f.config.empty() ? PipelineConfig{} : load_config(f.config);
  if (f.seed) {
    c.seed = *f.seed;
    c.train.seed = *f.seed;
  }
  if (!f.workdir.empty()) c.workdir = f.workdir;
  return c;
}

int dispatch(const std::string& name, const Flags& f) {
  if (f.threads > 0) set_num_threads(f.threads);
  const auto config = make_config(f);
  auto& log = std::cerr;

  if (name == "stats") {
    run_stats(config, std::cout);
    return kOk;
  }
  if (name == "synth") {
    run_synth(config, f.out.empty() ? config.workdir : f.out, log);
    return kOk;
  }
  if (name == "search") {
    SearchRequest req{f.query, parse_group(f.group), f.domain, f.k};
    for (const auto& h : run_search(config, req))
      std::printf("%d\t%lld\t%s\t%.6f\n", h.rank, static_cast<long long>(h.evidence_id),
                  std::string(display_name(h.etype)).c_str(), h.score);
    return kOk;
  }

  const std::map<std::string, std::function<void()>> phases = {
      {"ingest", [&] { run_ingest(config, log); }},
      {"pairs", [&] { run_pairs(config, log); }},
      {"pretrain", [&] { run_pretrain(config, log); }},
      {"align", [&] { run_align(config, log); }},
      {"finetune", [&] { run_finetune(config, log); }},
      {"index", [&] { run_index(config, log); }},
      {"eval", [&] { run_eval(config, log); }},
      {"pipeline", [&] { run_pipeline(config, log); }},
  };
  const auto it = phases.find(name);
  if (it == phases.end()) throw ValidationError("unknown subcommand: " + name);
  WorkdirLock lock(config.workdir);
  it->second();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous knowledge retrieval: train, index, search and evaluate"};
  app.require_subcommand(1, 1);
  Flags f;
  app.add_option("--config", f.config, "TOML configuration file");
  app.add_option("--workdir", f.workdir, "Artifact directory (overrides the config)");
  app.add_option("--seed", f.seed, "Seed for initialization and training");
  app.add_option("--threads", f.threads, "OpenMP thread count");

  const char* names[] = {"ingest", "pairs", "pretrain", "align", "finetune", "index",
                         "search", "eval",  "stats",    "pipeline", "synth"};
  for (const char* n : names) {
    auto* sc = app.add_subcommand(n);
    sc->fallthrough();
    if (std::string(n) == "search") {
      sc->add_option("--query", f.query, "Question text")->required();
      sc->add_option("--group", f.group, "I_All, I_Text, I_KG, I_Table or I_Info");
      sc->add_option("--domain", f.domain, "Instruction domain");
      sc->add_option("--k", f.k, "Number of hits");
    }
    if (std::string(n) == "synth") sc->add_option("--out", f.out, "Output directory (default: the workdir)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    return dispatch(app.get_subcommands().front()->get_name(), f);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}
