#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ewmlab/config.hpp"
#include "ewmlab/errors.hpp"
#include "ewmlab/metrics.hpp"

using namespace ewmlab;

namespace {

// Support-weighted F1 from precision and recall, zero when undefined.
double f1_oracle(const ConfusionMatrix& cm) {
  const auto k = cm.classes();
  double n = 0, acc = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = static_cast<double>(cm.at(c, c)), row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += static_cast<double>(cm.at(c, j));
      col += static_cast<double>(cm.at(j, c));
    }
    n += row;
    const double p = col > 0 ? tp / col : 0.0;
    const double r = row > 0 ? tp / row : 0.0;
    acc += row * (p + r > 0 ? 2 * p * r / (p + r) : 0.0);
  }
  return acc / n;
}

}  // namespace

TEST_CASE("weighted F1 agrees with the precision/recall oracle") {
  Rng rng(42);
  std::uniform_int_distribution<int> count(0, 30), cls(2, 6);
  for (int t = 0; t < 100; ++t) {
    ConfusionMatrix cm(static_cast<std::size_t>(cls(rng)));
    for (std::size_t i = 0; i < cm.classes(); ++i)
      for (std::size_t j = 0; j < cm.classes(); ++j) cm.at(i, j) = static_cast<std::size_t>(count(rng) * (count(rng) > 8));
    cm.at(0, 0) += 1;
    CHECK(std::abs(cm.weighted_f1() - f1_oracle(cm)) < 1e-12);
  }
  const std::vector<int> truth{0, 0, 1, 1}, pred{0, 1, 1, 1};
  const auto cm = confusion(truth, pred, 2);
  CHECK(cm.accuracy() == 0.75);
  CHECK(cm.weighted_f1() == doctest::Approx(0.5 * (2.0 / 3.0) + 0.5 * 0.8));
  ConfusionMatrix empty(3);
  CHECK_THROWS_AS(empty.accuracy(), ContractError);
}

TEST_CASE("csv output is stable") {
  const auto path = std::filesystem::temp_directory_path() / "ewmlab_csv_test.csv";
  {
    CsvWriter w(path, {"a", "b"});
    w.row({fmt(0.1), fmt(std::size_t{3})});
    CHECK_THROWS(w.row({"x"}));
  }
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "a,b\n0.1,3\n");
}

TEST_CASE("config round trip and validation") {
  RunConfig c;
  c.seed = 7;
  c.model.ewm.steps = 2;
  c.model.belief_source = BeliefSource::Pooling;
  c.eval.kappas = {1.0, 0.3};
  c.finalize();
  const auto back = run_config_from_json(run_config_to_json(c));
  CHECK(back.seed == 7);
  CHECK(back.model.ewm.steps == 2);
  CHECK(back.model.belief_source == BeliefSource::Pooling);
  CHECK(config_hash(back) == config_hash(c));
  c.seed = 8;
  CHECK(config_hash(back) != config_hash(c));

  CHECK_THROWS_WITH_AS(run_config_from_json(R"({"ewm": {"stepz": 3}})"), doctest::Contains("ewm.stepz"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(R"({"ewm": {"steps": "three"}})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json("{not json"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(R"({"model": {"belief_source": "oracle"}})"), ConfigError);

  RunConfig bad;
  bad.model.ewm.d_w = 10;
  bad.model.ewm.heads = 4;
  CHECK_THROWS_AS(bad.finalize(), ConfigError);
  RunConfig zero;
  zero.model.ewm.steps = 0;
  CHECK_THROWS_AS(zero.finalize(), ConfigError);
}

TEST_CASE("missing keys keep defaults") {
  const auto c = run_config_from_json(R"({"train": {"steps": 5}})");
  CHECK(c.train.steps == 5);
  CHECK(c.train.batch_size == TrainConfig{}.batch_size);
  CHECK(c.model.ewm.n_base == EwmConfig{}.n_base);
}
