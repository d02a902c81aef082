#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include <json.hpp>

#include "semid/pipeline.hpp"
#include "semid/synthetic.hpp"

namespace fixtures {

namespace fs = std::filesystem;

inline fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("semid_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Writes the synthetic mini corpus and a config next to it. Returns the config path.
inline fs::path mini_setup(const fs::path& dir, std::size_t epochs = 30) {
  const auto mini = semid::synthetic::mini_corpus();
  {
    std::ofstream r(dir / "reviews.jsonl"), m(dir / "meta.jsonl");
    for (const auto& l : mini.review_lines) r << l << '\n';
    for (const auto& l : mini.metadata_lines) m << l << '\n';
  }
  nlohmann::json cfg = {{"paths", {{"reviews", "reviews.jsonl"}, {"metadata", "meta.jsonl"}, {"workdir", "work"}}},
                        {"corpus", {{"kcore", 5}}},
                        {"embed", {{"provider", "hashing"}, {"dim", 64}, {"seed", 0}}},
                        {"rqvae", {{"K", 256}, {"p", 4}, {"d_code", 32}, {"epochs", epochs}, {"seed", 0}}},
                        {"index", {{"mode", "P-ID"}}},
                        {"prompts", {{"total", 600}, {"seed", 0}}},
                        {"rank", {{"retriever", "cooc"}, {"scorer", "toy-overlap"}, {"top_k", 20}}},
                        {"eval", {{"ks", {5, 10, 20}}}}};
  const auto path = dir / "config.json";
  std::ofstream(path) << cfg.dump(2);
  return path;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixtures
