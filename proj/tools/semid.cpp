#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "semid/pipeline.hpp"
#include "semid/synthetic.hpp"

namespace {

int write_mini_corpus(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto corpus = semid::synthetic::mini_corpus();
  std::ofstream reviews(dir / "reviews.jsonl"), meta(dir / "meta.jsonl");
  if (!reviews || !meta) throw semid::DataError("cannot write into " + dir.string());
  for (const auto& l : corpus.review_lines) reviews << l << '\n';
  for (const auto& l : corpus.metadata_lines) meta << l << '\n';
  std::cout << "wrote " << corpus.review_lines.size() << " review lines and " << corpus.metadata_lines.size()
            << " metadata lines to " << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semid: user semantic IDs, prompt corpora and verbalized ranking"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> workdir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> scorer;
  bool verbose = false;
  app.add_option("--config", config_path, "pipeline config (JSON)");
  app.add_option("--workdir", workdir, "override paths.workdir");
  app.add_option("--seed", seed, "override every seed in the config");
  app.add_option("--index-mode", mode, "override index.mode (P-ID, N-ID, O-ID)");
  app.add_option("--scorer", scorer, "override rank.scorer");
  app.add_flag("-v,--verbose", verbose, "log every artifact written");

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"prepare", "ingest, k-core filter and split the corpus"},
      {"embed", "embed reviews and user ids"},
      {"train-index", "train the quantizer jointly with fusion and assign user ids"},
      {"gen-prompts", "build the mixed instruction corpus"},
      {"rank", "retrieve candidates and rank them with the configured scorer"},
      {"eval", "compute ranking metrics"},
      {"all", "run every stage in order"},
      {"ablate-index", "compare P-ID, N-ID and O-ID on the same candidates"},
  };
  for (const auto& [name, help] : stages) app.add_subcommand(name, help);

  std::string mini_out = "data/mini";
  auto* mini = app.add_subcommand("make-mini-corpus", "write the synthetic mini corpus");
  mini->add_option("--out", mini_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (mini->parsed()) return write_mini_corpus(mini_out);
    if (config_path.empty()) throw semid::UsageError("--config is required");

    auto cfg = semid::PipelineConfig::load(config_path);
    if (workdir) cfg.paths.workdir = *workdir;
    if (seed) cfg.override_seed(*seed);
    if (mode) cfg.index_mode = semid::parse_index_mode(*mode);
    if (scorer) cfg.rank.scorer = *scorer;

    semid::Pipeline pipe(cfg, std::cerr, verbose);
    const std::string cmd = app.get_subcommands().front()->get_name();
    const auto start = std::chrono::steady_clock::now();
    if (cmd == "prepare") {
      pipe.prepare();
    } else if (cmd == "embed") {
      pipe.embed();
    } else if (cmd == "train-index") {
      pipe.train_index();
    } else if (cmd == "gen-prompts") {
      pipe.gen_prompts();
    } else if (cmd == "rank") {
      pipe.rank();
    } else if (cmd == "eval") {
      std::cout << semid::format_report(pipe.eval());
    } else if (cmd == "all") {
      std::cout << semid::format_report(pipe.all());
    } else if (cmd == "ablate-index") {
      std::cout << semid::Pipeline::format_ablation(pipe.ablate_index());
    }
    pipe.write_manifest(cmd);
    if (verbose) {
      const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
      std::cerr << cmd << " finished in " << took.count() << " s\n";
    }
    return 0;
  } catch (const semid::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
