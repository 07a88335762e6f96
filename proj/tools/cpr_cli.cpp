// cpr: command-line driver for dataset generation and the three pipeline
// phases. Exit codes: 2 missing input, 3 configuration error, 4 runtime
// failure.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpr/error.hpp"
#include "cpr/pipeline.hpp"

namespace {

int exit_code(cpr::ErrorCategory c) {
  switch (c) {
    case cpr::ErrorCategory::MissingInput:
      return 2;
    case cpr::ErrorCategory::Config:
      return 3;
    case cpr::ErrorCategory::Runtime:
      return 4;
  }
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal path reasoning over knowledge graphs"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed, alphas, branch_out, active_set, max_hop, hint_weight, workers, out;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--alpha", alphas, "risk levels, comma separated");
  app.add_option("--branch-out", branch_out, "TreeG branch-out B");
  app.add_option("--active-set", active_set, "TreeG active set A");
  app.add_option("--max-hop", max_hop, "maximum path length for rollouts and retrieval");
  app.add_option("--hint-weight", hint_weight, "weight of the hint bonus");
  app.add_option("--workers", workers, "worker threads (results do not depend on it)");
  app.add_option("--out", out, "output directory");
  app.add_option("--set", overrides, "any setting as key=value (repeatable)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark");
  auto* collect = app.add_subcommand("collect", "PUCT rollouts: relation priors and training pairs");
  auto* train = app.add_subcommand("train", "train the residual value network");
  auto* retrieve = app.add_subcommand("retrieve", "retrieve scored path pools");
  std::string split = "test";
  retrieve->add_option("--split", split, "cal or test")->check(CLI::IsMember({"cal", "test"}));
  auto* calibrate = app.add_subcommand("calibrate", "calibration scores and thresholds");
  auto* evaluate = app.add_subcommand("evaluate", "prediction sets and metrics over the alpha grid");
  auto* e2e = app.add_subcommand("e2e", "every phase in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }

  try {
    cpr::RunConfig cfg;
    if (!config_path.empty()) cpr::load_config_file(config_path, cfg);
    if (!seed.empty()) cfg.set("seed", seed);
    if (!alphas.empty()) cfg.set("alphas", alphas);
    if (!branch_out.empty()) cfg.set("treeg.branch_out", branch_out);
    if (!active_set.empty()) cfg.set("treeg.active_set", active_set);
    if (!max_hop.empty()) {
      cfg.set("treeg.max_hop", max_hop);
      cfg.set("puct.max_hop", max_hop);
    }
    if (!hint_weight.empty()) cfg.set("treeg.hint_weight", hint_weight);
    if (!workers.empty()) cfg.set("workers", workers);
    if (!out.empty()) cfg.set("out", out);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw cpr::ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }

    if (synth->parsed()) {
      cpr::phase_synth(cfg);
    } else if (collect->parsed()) {
      cpr::phase_collect(cfg);
    } else if (train->parsed()) {
      cpr::phase_train(cfg);
    } else if (retrieve->parsed()) {
      cpr::phase_retrieve(cfg, split);
    } else if (calibrate->parsed()) {
      cpr::phase_calibrate(cfg);
    } else if (evaluate->parsed() || e2e->parsed()) {
      const auto rows = evaluate->parsed() ? cpr::phase_evaluate(cfg) : cpr::phase_e2e(cfg);
      cpr::write_report_table(std::cout, rows);
    }
  } catch (const cpr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
