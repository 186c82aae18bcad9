#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "cli.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "ewmlab");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return ewmlab::cli_main(static_cast<int>(argv.size()), argv.data());
}

fs::path write_config(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p;
}

const char* kTiny = R"({
  "world": {"train_size": 24, "val_size": 4, "test_size": 8},
  "train": {"steps": 3, "batch_size": 4},
  "eval": {"kappas": [1.0, 0.5]}
})";

}  // namespace

TEST_CASE("cli exit codes") {
  const auto root = fs::temp_directory_path() / "ewmlab_cli_test";
  fs::remove_all(root);
  setenv("EWM_LAB_OUT", root.c_str(), 1);
  const auto cfg = write_config("ewmlab_cli_tiny.json", kTiny).string();

  CHECK(run({}) == 1);
  CHECK(run({"train", "--config", cfg, "--frobnicate"}) == 1);
  CHECK(run({"train"}) == 1);
  CHECK(run({"train", "--config", "/nonexistent.json"}) == 1);
  CHECK(run({"train", "--config", write_config("ewmlab_cli_bad.json", R"({"ewm": {"nope": 1}})").string()}) == 1);
  CHECK(run({"sweep", "--config", cfg, "--axis", "colour"}) == 1);

  CHECK(run({"gen-data", "--config", cfg, "--seed", "5"}) == 0);
  CHECK(fs::exists(root / "data" / "world-5" / "manifest.json"));

  const auto train_dir = root / "t";
  CHECK(run({"train", "--config", cfg, "--seed", "2", "--out", train_dir.string(),
             "--data", (root / "data" / "world-5").string()}) == 0);
  CHECK(fs::exists(train_dir / "eval.csv"));
  CHECK(fs::exists(train_dir / "train.csv"));
  CHECK(fs::exists(train_dir / "model.manifest"));

  CHECK(run({"eval", "--config", cfg, "--seed", "2", "--checkpoint", (train_dir / "model").string(), "--data",
             (root / "data" / "world-5").string()}) == 0);
  // A checkpoint from a different architecture is a runtime failure.
  const auto other = write_config("ewmlab_cli_other.json", R"({"ewm": {"steps": 2}})").string();
  CHECK(run({"eval", "--config", other, "--checkpoint", (train_dir / "model").string()}) == 2);

  CHECK(run({"dump-attention", "--config", cfg, "--checkpoint", (train_dir / "model").string(), "--samples", "2",
             "--out", (root / "att").string()}) == 0);
  std::ifstream att(root / "att" / "attention.csv");
  std::string header;
  std::getline(att, header);
  CHECK(header == "sample_id,belief_idx,memory_idx,memory_modality,step,weight");
  unsetenv("EWM_LAB_OUT");
}

TEST_CASE("cli runs are deterministic and sweeps write per-point outputs") {
  const auto root = fs::temp_directory_path() / "ewmlab_cli_det";
  fs::remove_all(root);
  setenv("EWM_LAB_OUT", root.c_str(), 1);
  const auto cfg = write_config("ewmlab_cli_det.json", kTiny).string();
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  REQUIRE(run({"train", "--config", cfg, "--seed", "7", "--out", (root / "a").string()}) == 0);
  REQUIRE(run({"train", "--config", cfg, "--seed", "7", "--out", (root / "b").string()}) == 0);
  for (const char* f : {"train.csv", "eval.csv"}) {
    CHECK(!slurp(root / "a" / f).empty());
    CHECK(slurp(root / "a" / f) == slurp(root / "b" / f));
  }

  REQUIRE(run({"sweep", "--config", cfg, "--axis", "rollout_steps", "--seeds", "1", "--seed", "7"}) == 0);
  const auto sweep = root / "sweep" / "rollout_steps";
  CHECK(fs::exists(sweep / "summary.csv"));
  std::size_t points = 0;
  for (const auto& e : fs::directory_iterator(sweep))
    if (e.is_directory()) points += fs::exists(e.path() / "seed7" / "eval.csv");
  CHECK(points == 5);
  unsetenv("EWM_LAB_OUT");
}
