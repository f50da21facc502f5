// End-to-end checks of the CLI surface: exit codes, stdin piping, manifests,
// and the PROTLMKIT_SEED fallback. The binary path arrives via PLMKIT_BIN.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "plmkit/fasta.hpp"

using namespace plmkit;
namespace fs = std::filesystem;

namespace {

std::string cli() {
  const char* bin = std::getenv("PLMKIT_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "PLMKIT_BIN must point at the plmkit binary");
  return bin;
}

int run(const std::string& args) {
  const std::string cmd = cli() + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path workdir() {
  const auto dir = fs::temp_directory_path() / "plmkit_cli_test";
  fs::create_directories(dir);
  return dir;
}

void write_corpus(const fs::path& path, int n = 12) {
  Rng rng(3);
  std::vector<SequenceRecord> records;
  for (int i = 0; i < n; ++i) {
    std::string s;
    for (int j = 0; j < 25 + int(rng.uniform_int(15)); ++j)
      s.push_back("ACDEFGHIKLMNPQRSTVWY"[rng.uniform_int(20)]);
    records.push_back({"c" + std::to_string(i), "", s});
  }
  std::ofstream out(path);
  write_fasta(out, records);
}

}  // namespace

TEST_CASE("exit codes: usage errors are 1, help is 0") {
  CHECK(run("definitely-not-a-subcommand") == 1);
  CHECK(run("--help") == 0);
  CHECK(run("prepare --help") == 0);
  CHECK(run("prepare --in /nonexistent.fasta --shards 2 --out /tmp/plmkit_nope") == 1);
  CHECK(run("eval --pred missing.tsv --gold missing.tsv --states 3") == 1);
}

TEST_CASE("prepare writes shards and a manifest") {
  const auto dir = workdir() / "prep";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_corpus(dir / "corpus.fasta");
  REQUIRE(run("prepare --in " + (dir / "corpus.fasta").string() + " --shards 3 --out " +
              (dir / "data").string()) == 0);
  CHECK(fs::exists(dir / "data" / "shard_00000.plms"));
  CHECK(fs::exists(dir / "data" / "shard_00002.plms"));
  const auto manifest =
      nlohmann::json::parse(std::ifstream(dir / "data" / "run.json"));
  CHECK(manifest.at("command") == "prepare");
  CHECK(manifest.at("config").at("shards") == 3);
}

TEST_CASE("stdin piping with --in -") {
  const auto dir = workdir() / "stdin";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_corpus(dir / "corpus.fasta", 8);

  // train a tiny model first
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << R"({"data_dir": ")" << (dir / "data").string() << R"(",
      "encoder": {"layers": 1, "d_model": 16, "ff_width": 16, "heads": 2, "dropout": 0.0},
      "schedule": {"kind": "linear-warmup-constant", "warmup_steps": 5, "peak_lr": 0.001},
      "phases": [{"max_len": 32, "steps": 6, "batch_size": 4}]})";
  }
  REQUIRE(run("prepare --in " + (dir / "corpus.fasta").string() + " --shards 1 --out " +
              (dir / "data").string()) == 0);
  REQUIRE(run("pretrain --config " + (dir / "cfg.json").string() + " --out " +
              (dir / "m.plmc").string() + " --seed 1") == 0);
  REQUIRE(run("embed --ckpt " + (dir / "m.plmc").string() + " --in " +
              (dir / "corpus.fasta").string() + " --out " + (dir / "e.plme").string()) == 0);
  {
    auto corpus = parse_fasta_file((dir / "corpus.fasta").string());
    std::ofstream labels(dir / "labels.tsv");
    Rng rng(4);
    for (const auto& rec : corpus) {
      std::string ss8;
      for (std::size_t i = 0; i < rec.residues.size(); ++i)
        ss8.push_back("HE-STGBI"[rng.uniform_int(8)]);
      labels << rec.id << '\t' << rec.residues << '\t' << ss8 << '\n';
    }
  }
  REQUIRE(run("train-head --kind logreg --features " + (dir / "e.plme").string() +
              " --labels " + (dir / "labels.tsv").string() + " --out " +
              (dir / "h.plmh").string() + " --seed 2") == 0);

  // predict reading FASTA from standard input
  const std::string piped = "cat " + (dir / "corpus.fasta").string() + " | " + cli() +
                            " predict --model " + (dir / "h.plmh").string() +
                            " --ckpt " + (dir / "m.plmc").string() + " --in - --out " +
                            (dir / "pred.tsv").string() + " > /dev/null 2>&1";
  REQUIRE(std::system(piped.c_str()) == 0);
  std::ifstream pred(dir / "pred.tsv");
  std::string line;
  int lines = 0;
  while (std::getline(pred, line)) {
    lines++;
    CHECK(line.find('\t') != std::string::npos);
  }
  CHECK(lines == 8);
}

TEST_CASE("PROTLMKIT_SEED environment fallback") {
  const auto dir = workdir() / "envseed";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_corpus(dir / "corpus.fasta", 8);
  REQUIRE(run("prepare --in " + (dir / "corpus.fasta").string() + " --shards 1 --out " +
              (dir / "data").string()) == 0);
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << R"({"data_dir": ")" << (dir / "data").string() << R"(",
      "encoder": {"layers": 1, "d_model": 16, "ff_width": 16, "heads": 2, "dropout": 0.0},
      "schedule": {"kind": "linear-warmup-constant", "warmup_steps": 5, "peak_lr": 0.001},
      "phases": [{"max_len": 32, "steps": 5, "batch_size": 4}]})";
  }
  auto run_env = [&](const std::string& out, const std::string& env) {
    const std::string cmd = env + " " + cli() + " pretrain --config " +
                            (dir / "cfg.json").string() + " --out " +
                            (dir / out).string() + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  REQUIRE(run_env("env7a.plmc", "PROTLMKIT_SEED=7") == 0);
  REQUIRE(run_env("env7b.plmc", "PROTLMKIT_SEED=7") == 0);
  REQUIRE(run_env("env9.plmc", "PROTLMKIT_SEED=9") == 0);

  auto bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string{std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>()};
  };
  CHECK(bytes(dir / "env7a.plmc") == bytes(dir / "env7b.plmc"));
  CHECK(bytes(dir / "env7a.plmc") != bytes(dir / "env9.plmc"));

  // explicit --seed overrides the environment
  const std::string cmd = "PROTLMKIT_SEED=7 " + cli() + " pretrain --config " +
                          (dir / "cfg.json").string() + " --out " +
                          (dir / "flag9.plmc").string() + " --seed 9 > /dev/null 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(bytes(dir / "flag9.plmc") == bytes(dir / "env9.plmc"));
}
