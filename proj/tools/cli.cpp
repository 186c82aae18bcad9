#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ewmlab/checkpoint.hpp"
#include "ewmlab/errors.hpp"
#include "ewmlab/experiments.hpp"
#include "ewmlab/metrics.hpp"
#include "ewmlab/trainer.hpp"

namespace ewmlab {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  long long seed = -1;
  std::size_t threads = 1;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration (JSON)")->required();
  cmd->add_option("--seed", c.seed, "Seed; overrides the seed in the config");
  cmd->add_option("--threads", c.threads, "Maximum worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "Output directory (default: $EWM_LAB_OUT/<command>/...)");
}

fs::path output_root() {
  if (const char* env = std::getenv("EWM_LAB_OUT"); env && *env) return env;
  return "runs";
}

RunConfig load(const Common& c) {
  if (!fs::exists(c.config)) throw ConfigError("config file not found: " + c.config);
  RunConfig cfg = load_run_config(c.config);
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  cfg.finalize();
  return cfg;
}

fs::path out_dir(const Common& c, const std::string& command, const std::string& leaf) {
  return c.out.empty() ? output_root() / command / leaf : fs::path(c.out);
}

Dataset load_data(const std::string& data_dir, const RunConfig& cfg) {
  return data_dir.empty() ? make_dataset(cfg.world) : read_dataset(data_dir);
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < count; ++i) seeds.push_back(first + i);
  return seeds;
}

void print_evals(const RunResult& r) {
  for (const auto& e : r.evals) {
    std::cout << corruption_name(e.mode) << " kappa=" << e.kappa << " accuracy=" << e.accuracy
              << " weighted_f1=" << e.weighted_f1 << " n=" << e.n << '\n';
  }
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"ewmlab: emotion world module experiments"};
  app.require_subcommand(1);

  Common gen, train, eval, ablate, sweep, dump;
  std::string train_data, eval_data, eval_ckpt, dump_ckpt, table = "beliefs", axis;
  std::size_t ablate_seeds = 3, sweep_seeds = 3, dump_samples = 8;

  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic episode dataset");
  add_common(gen_cmd, gen);

  auto* train_cmd = app.add_subcommand("train", "Train one model and evaluate it on the test split");
  add_common(train_cmd, train);
  train_cmd->add_option("--data", train_data, "Dataset directory written by gen-data");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved checkpoint");
  add_common(eval_cmd, eval);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint stem written by train")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset directory written by gen-data");

  auto* ablate_cmd = app.add_subcommand("ablate", "Component or belief-source ablation table");
  add_common(ablate_cmd, ablate);
  ablate_cmd->add_option("--table", table, "components | beliefs")->check(CLI::IsMember({"components", "beliefs"}));
  ablate_cmd->add_option("--seeds", ablate_seeds, "Number of init seeds per row")->check(CLI::PositiveNumber);

  auto* sweep_cmd = app.add_subcommand("sweep", "Mechanism sweep along one axis");
  add_common(sweep_cmd, sweep);
  sweep_cmd->add_option("--axis", axis, "Sweep axis")->required()->check(CLI::IsMember(sweep_axes()));
  sweep_cmd->add_option("--seeds", sweep_seeds, "Number of init seeds per grid point")->check(CLI::PositiveNumber);

  auto* dump_cmd = app.add_subcommand("dump-attention", "Write belief-to-memory attention for test episodes");
  add_common(dump_cmd, dump);
  dump_cmd->add_option("--checkpoint", dump_ckpt, "Checkpoint stem; trains from scratch when omitted");
  dump_cmd->add_option("--samples", dump_samples, "Number of test episodes")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (gen_cmd->parsed()) {
      RunConfig cfg = load(gen);
      if (gen.seed >= 0) cfg.world.seed = static_cast<std::uint64_t>(gen.seed);
      const auto dir = out_dir(gen, "data", "world-" + std::to_string(cfg.world.seed));
      write_dataset(dir, cfg.world, make_dataset(cfg.world));
      std::cout << "wrote " << dir.string() << '\n';
    } else if (train_cmd->parsed()) {
      const RunConfig cfg = load(train);
      const Dataset data = load_data(train_data, cfg);
      const auto dir = out_dir(train, "train", config_hash(cfg) + "-seed" + std::to_string(cfg.seed));
      std::unique_ptr<Model> model;
      const auto result = run_experiment(cfg, data, train.threads, &model);
      write_run_outputs(dir, cfg, result);
      save_checkpoint(model->store(), dir / "model");
      print_evals(result);
      std::cout << "wrote " << dir.string() << '\n';
    } else if (eval_cmd->parsed()) {
      const RunConfig cfg = load(eval);
      const Dataset data = load_data(eval_data, cfg);
      auto model = build_model(cfg);
      load_checkpoint(model->store(), eval_ckpt);
      RunResult result;
      result.config_hash = config_hash(cfg);
      std::span<const Episode> test = data.test;
      if (cfg.eval.limit > 0 && cfg.eval.limit < test.size()) test = test.first(cfg.eval.limit);
      for (auto mode : cfg.eval.modes)
        for (double kappa : cfg.eval.kappas) result.evals.push_back(evaluate(*model, test, {mode, kappa}, eval.threads));
      const auto dir = out_dir(eval, "eval", config_hash(cfg) + "-seed" + std::to_string(cfg.seed));
      write_run_outputs(dir, cfg, result);
      print_evals(result);
    } else if (ablate_cmd->parsed()) {
      const RunConfig cfg = load(ablate);
      const auto grid = table == "components" ? component_ablation_grid(cfg) : belief_source_grid(cfg);
      const auto dir = out_dir(ablate, "ablate", table);
      const auto results = run_grid(grid, seed_list(cfg.seed, ablate_seeds), make_dataset(cfg.world), dir,
                                    ablate.threads);
      write_grid_summary(dir / "summary.csv", results);
      std::cout << "wrote " << (dir / "summary.csv").string() << '\n';
    } else if (sweep_cmd->parsed()) {
      const RunConfig cfg = load(sweep);
      const auto dir = out_dir(sweep, "sweep", axis);
      const auto results =
          run_grid(sweep_grid(cfg, axis), seed_list(cfg.seed, sweep_seeds), make_dataset(cfg.world), dir, sweep.threads);
      write_grid_summary(dir / "summary.csv", results);
      write_fidelity_summary(dir / "fidelity.csv", results);
      std::cout << "wrote " << (dir / "summary.csv").string() << '\n';
    } else if (dump_cmd->parsed()) {
      const RunConfig cfg = load(dump);
      if (cfg.model.belief_source != BeliefSource::Mama) throw ConfigError("dump-attention needs belief_source mama");
      const Dataset data = make_dataset(cfg.world);
      std::unique_ptr<Model> model;
      if (dump_ckpt.empty()) {
        run_experiment(cfg, data, dump.threads, &model);
      } else {
        model = build_model(cfg);
        load_checkpoint(model->store(), dump_ckpt);
      }
      const auto dir = out_dir(dump, "attention", config_hash(cfg) + "-seed" + std::to_string(cfg.seed));
      CsvWriter rows(dir / "attention.csv", {"sample_id", "belief_idx", "memory_idx", "memory_modality", "step", "weight"});
      CsvWriter mass(dir / "modality_mass.csv", {"sample_id", "belief_idx", "video_mass", "audio_mass"});
      const auto n = std::min(dump_samples, data.test.size());
      for (std::size_t i = 0; i < n; ++i) {
        BeliefDiagnostics diag;
        model->predict(data.test[i], {}, &diag);
        for (const auto& r : export_attention_mass(*diag.belief, *diag.memory)) {
          rows.row({fmt(i), fmt(r.belief_idx), fmt(r.memory_idx),
                    modality_name(static_cast<Modality>(r.memory_modality)), fmt(r.step), fmt(r.weight)});
        }
        const auto m = modality_attention_mass(*diag.belief, *diag.memory);
        for (std::size_t b = 0; b < m.size(); ++b) mass.row({fmt(i), fmt(b), fmt(m[b][0]), fmt(m[b][1])});
      }
      std::cout << "wrote " << dir.string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace ewmlab
