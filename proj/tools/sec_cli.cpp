// Command-line entry point for the experiment harness.
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "sec/error.hpp"
#include "sec/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  sec::CommandOptions opt;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "experiment config (JSON)")->required();
  cmd->add_option("--seed", f.seed, "override the command's seed");
  cmd->add_option("--out", f.opt.out, "output directory")->required();
  cmd->add_flag("--overwrite", f.opt.overwrite, "reuse a non-empty output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stratified expert cloning: data generation, training, selection and evaluation"};
  app.set_version_flag("--version", sec::kToolVersion);
  app.require_subcommand(1);
  Flags f;
  std::string trajectories, checkpoint, bank;

  auto* gen = app.add_subcommand("gen-data", "simulate expert trajectories");
  add_common(gen, f);
  auto* train = app.add_subcommand("train", "stratify and fit the multi-level policy");
  add_common(train, f);
  train->add_option("--trajectories", trajectories, "trajectory JSONL (overrides paths.trajectories)");
  auto* cent = app.add_subcommand("build-centroids", "cluster encoded expert states per level");
  add_common(cent, f);
  cent->add_option("--checkpoint", checkpoint, "policy checkpoint (overrides paths.checkpoint)");
  auto* eval = app.add_subcommand("evaluate", "evaluate adaptive selection and every fixed level");
  add_common(eval, f);
  eval->add_option("--checkpoint", checkpoint, "policy checkpoint (overrides paths.checkpoint)");
  eval->add_option("--bank", bank, "centroid bank (overrides paths.bank)");
  auto* ablate = app.add_subcommand("ablate", "full vs no_multilevel vs no_aer on paired seeds");
  add_common(ablate, f);
  auto* sweep = app.add_subcommand("sweep-lambda", "return time across the lambda grid");
  add_common(sweep, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    const sec::ExperimentConfig cfg = sec::load_config(f.config);
    sec::CommandOptions opt = f.opt;
    for (auto* cmd : app.get_subcommands()) {
      if (cmd->count("--seed")) opt.seed = f.seed;
    }
    if (!trajectories.empty()) opt.trajectories = trajectories;
    if (!checkpoint.empty()) opt.checkpoint = checkpoint;
    if (!bank.empty()) opt.bank = bank;

    if (gen->parsed()) sec::cmd_gen_data(cfg, opt);
    else if (train->parsed()) sec::cmd_train(cfg, opt);
    else if (cent->parsed()) sec::cmd_build_centroids(cfg, opt);
    else if (eval->parsed()) sec::cmd_evaluate(cfg, opt);
    else if (ablate->parsed()) sec::cmd_ablate(cfg, opt);
    else if (sweep->parsed()) sec::cmd_sweep_lambda(cfg, opt);
    return kOk;
  } catch (const sec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const sec::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const sec::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const sec::ContractError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
}
