#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <vector>

#include <unistd.h>

namespace semalign::testing {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("semalign-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

SyntheticRun synthetic_run(std::uint64_t seed, SynthConfig cfg) {
  cfg.seed = seed;
  auto data = generate(cfg);
  auto split = split_interactions(data.interactions, {}, seed);
  auto semantic = align_store(data.semantic, split.train.users, split.train.items);
  return {std::move(data), std::move(split), std::move(semantic)};
}

TrainConfig experiment_config(TrainMode mode, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.seed = seed;
  cfg.adam.lr = 1e-2;
  cfg.patience = 10;
  cfg.eval_every = 5;
  cfg.max_epochs = 300;
  return cfg;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_corpus(const std::filesystem::path& dir, std::size_t users, std::size_t items) {
  std::filesystem::create_directories(dir);
  std::vector<std::vector<std::size_t>> reviewers(items);
  {
    std::ofstream tsv(dir / "interactions.tsv", std::ios::binary);
    for (std::size_t u = 0; u < users; ++u) {
      for (std::size_t k = 0; k < 6; ++k) {
        const auto v = (u * 7 + k * 5) % items;
        reviewers[v].push_back(u);
        tsv << "user" << u << '\t' << "item" << v << '\t' << 4 << '\t' << 1000 + u * 10 + k << '\n';
      }
    }
  }
  std::ofstream jsonl(dir / "items.jsonl", std::ios::binary);
  for (std::size_t v = 0; v < items; ++v) {
    jsonl << R"({"id":"item)" << v << R"(","title":"Item number )" << v << '"';
    if (v % 2 == 0) {
      jsonl << R"(,"description":"A plain description of item )" << v << R"(.")";
    } else {
      jsonl << R"(,"attributes":{"genre":"genre )" << v % 3 << R"(","year":")" << 1990 + v << R"("})";
      jsonl << R"(,"reviews":[)";
      for (std::size_t r = 0; r < reviewers[v].size(); ++r) {
        jsonl << (r ? "," : "") << R"({"user":"user)" << reviewers[v][r] << R"(","text":"Review )" << r
              << " of item " << v << R"(."})";
      }
      jsonl << ']';
    }
    jsonl << "}\n";
  }
}

}  // namespace semalign::testing
