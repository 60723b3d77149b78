// Command-line front end: validate configs, run experiments, and run the
// exit-gate suite.  Exit codes: 0 success, 1 run or suite failure, 2 config
// or usage error.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aruba/acceptance.hpp"
#include "aruba/experiment.hpp"

namespace {

int cmd_validate(const std::string& config_path, bool quiet, bool json) {
  aruba::ExperimentConfig cfg = aruba::parse_config_file(config_path);
  if (json) {
    aruba::Json out;
    out["ok"] = true;
    out["experiment"] = cfg.id;
    out["kind"] = aruba::to_string(cfg.kind);
    out["seeds"] = cfg.seeds;
    out["output"] = cfg.output;
    std::printf("%s\n", out.dump(2).c_str());
  } else if (!quiet) {
    std::printf("config ok: %s (kind %s, %zu seed%s)\n", cfg.id.c_str(),
                aruba::to_string(cfg.kind), cfg.seeds.size(), cfg.seeds.size() == 1 ? "" : "s");
  }
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_path,
            const std::vector<std::uint64_t>& seeds, int jobs, bool quiet, bool json) {
  aruba::ExperimentConfig cfg = aruba::parse_config_file(config_path);
  if (!seeds.empty()) cfg.seeds = seeds;
  aruba::ExperimentOutcome outcome = aruba::run_experiment(cfg, jobs);
  aruba::WrittenFiles files = aruba::write_experiment_files(cfg, outcome, out_path);
  if (json) {
    std::printf("%s\n", outcome.summary.dump(2).c_str());
  } else if (!quiet) {
    std::printf("wrote %s\n", files.csv_path.c_str());
    std::printf("wrote %s\n", files.summary_path.c_str());
  }
  if (!outcome.ok) {
    for (const auto& err : outcome.summary["errors"]) {
      std::fprintf(stderr, "run failure: %s\n", err.get<std::string>().c_str());
    }
    return 1;
  }
  return 0;
}

int cmd_suite(const std::string& only, const std::string& out_dir, bool quiet, bool json) {
  aruba::SuiteOptions opt;
  opt.only = only;
  opt.out_dir = out_dir;
  aruba::SuiteReport report = aruba::run_acceptance_suite(opt);
  if (report.results.empty()) {
    std::fprintf(stderr, "no criteria match the filter '%s'\n", only.c_str());
    return 2;
  }
  if (json) {
    aruba::Json out;
    out["all_passed"] = report.all_passed();
    out["criteria"] = aruba::Json::array();
    for (const auto& r : report.results) {
      out["criteria"].push_back({{"number", r.number},
                                 {"name", r.name},
                                 {"passed", r.passed},
                                 {"detail", r.detail}});
    }
    std::printf("%s\n", out.dump(2).c_str());
  } else {
    int passed = 0;
    for (const auto& r : report.results) {
      if (!quiet) {
        std::printf("[%s] %2d %-22s %s\n", r.passed ? "PASS" : "FAIL", r.number, r.name.c_str(),
                    r.detail.c_str());
      }
      passed += r.passed ? 1 : 0;
    }
    std::printf("%d/%zu criteria passed\n", passed, report.results.size());
  }
  return report.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online meta-learning experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_path, only, out_dir;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
  bool quiet = false, json = false;

  CLI::App* validate = app.add_subcommand("validate", "parse a config and report every problem");
  validate->add_option("--config", config_path, "experiment config (JSON)")->required();
  validate->add_flag("--quiet", quiet, "suppress the confirmation line");
  validate->add_flag("--json", json, "machine-readable output");

  CLI::App* run = app.add_subcommand("run", "run one experiment and write CSV plus summary");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--out", out_path, "CSV path override (summary lands next to it)");
  run->add_option("--seed", seeds, "override the config's seed list (repeatable)");
  run->add_option("--jobs", jobs, "worker threads; output is identical for any value")
      ->check(CLI::PositiveNumber);
  run->add_flag("--quiet", quiet, "suppress the file listing");
  run->add_flag("--json", json, "print the summary JSON instead");

  CLI::App* suite = app.add_subcommand("suite", "run the exit-gate checks");
  suite->add_option("--only", only, "substring filter on criterion names");
  suite->add_option("--out-dir", out_dir, "write the determinism-check CSVs here");
  suite->add_flag("--quiet", quiet, "print only the final tally");
  suite->add_flag("--json", json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(validate)) return cmd_validate(config_path, quiet, json);
    if (app.got_subcommand(run)) return cmd_run(config_path, out_path, seeds, jobs, quiet, json);
    return cmd_suite(only, out_dir, quiet, json);
  } catch (const aruba::ConfigError& e) {
    if (json) {
      aruba::Json out;
      out["ok"] = false;
      out["errors"] = e.errors();
      std::printf("%s\n", out.dump(2).c_str());
    } else {
      for (const auto& err : e.errors()) std::fprintf(stderr, "config error: %s\n", err.c_str());
    }
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
