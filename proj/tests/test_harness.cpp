#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aruba/experiment.hpp"

using namespace aruba;

namespace {

ExperimentConfig parse_ok(const std::string& text) {
  return parse_config(text);
}

std::vector<std::string> parse_errors(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.errors();
  }
  return {};
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors) {
    if (e.find(needle) != std::string::npos) return true;
  }
  return false;
}

// Rows of one CSV body split into (experiment, seed, t, metric, value-text).
struct Row {
  std::string experiment;
  std::uint64_t seed;
  int t;
  std::string metric;
  std::string value;
};

std::vector<Row> parse_rows(const std::string& csv) {
  std::vector<Row> rows;
  std::istringstream in(csv);
  std::string line;
  REQUIRE(std::getline(in, line));
  REQUIRE(line == "experiment,seed,t,metric,value");
  while (std::getline(in, line)) {
    Row r;
    std::istringstream ls(line);
    std::string seed, t;
    REQUIRE(std::getline(ls, r.experiment, ','));
    REQUIRE(std::getline(ls, seed, ','));
    REQUIRE(std::getline(ls, t, ','));
    REQUIRE(std::getline(ls, r.metric, ','));
    REQUIRE(std::getline(ls, r.value));
    r.seed = std::stoull(seed);
    r.t = std::stoi(t);
    rows.push_back(std::move(r));
  }
  return rows;
}

const char* kStaticConfig = R"({
  "experiment": "static-demo",
  "kind": "static",
  "seeds": [1, 2],
  "env": {
    "dimensions": 2,
    "tasks": 30,
    "samples_per_task": 5,
    "deviation": 0.1,
    "domain": {"shape": "ball", "radius": 1.0}
  },
  "meta": {"scale": "eps_ftl"}
})";

}  // namespace

TEST_CASE("config parsing fills defaults and validates everything at once") {
  SECTION("minimal static config is valid with defaults") {
    ExperimentConfig cfg = parse_ok(R"({
      "experiment": "min",
      "kind": "static",
      "env": {"dimensions": 2, "tasks": 5, "samples_per_task": 4, "deviation": 0.1}
    })");
    CHECK(cfg.id == "min");
    CHECK(cfg.kind == ExperimentKind::static_sim);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1});
    CHECK(cfg.repetitions == 1);
    CHECK(cfg.output == "min.csv");
    CHECK(cfg.env.kind == EnvKind::static_similar);
    CHECK(cfg.env.domain.kind == Domain::Kind::euclidean_ball);
    CHECK(cfg.meta.scale == ScaleMode::eps_ftl);
    CHECK(cfg.meta.within == WithinMode::omd_linearized);
  }

  SECTION("negative epsilon names the offending field") {
    auto errors = parse_errors(R"({
      "experiment": "e",
      "kind": "static",
      "env": {"dimensions": 2, "tasks": 5, "samples_per_task": 4},
      "meta": {"epsilon": -1}
    })");
    REQUIRE_FALSE(errors.empty());
    CHECK(mentions(errors, "meta.epsilon"));
    CHECK(mentions(errors, "must be > 0"));
  }

  SECTION("federated block with the reference settings is valid") {
    ExperimentConfig cfg = parse_ok(R"({
      "experiment": "fed",
      "kind": "federated",
      "federated": {"clients": 100, "dimensions": 10, "rounds": 200,
                     "clients_per_round": 10, "epsilon": 0.05, "zeta": 0.05, "p": 1.0}
    })");
    CHECK(cfg.federated.fed.epsilon == 0.05);
    CHECK(cfg.federated.fed.zeta == 0.05);
    CHECK(cfg.federated.fed.p == 1.0);
    CHECK(cfg.federated.rounds == 200);
    CHECK(cfg.federated.fed.mode == FedScaleMode::per_coordinate);
  }

  SECTION("unknown keys are rejected at every level") {
    auto errors = parse_errors(R"({
      "experiment": "u",
      "kind": "static",
      "mystery": 1,
      "env": {"dimensions": 2, "tasks": 5, "samples_per_task": 4,
               "bogus": true, "domain": {"shape": "ball", "radios": 2}},
      "meta": {"scale": "eps_ftl", "turbo": "on"}
    })");
    CHECK(mentions(errors, "mystery: unknown key"));
    CHECK(mentions(errors, "env.bogus: unknown key"));
    CHECK(mentions(errors, "env.domain.radios: unknown key"));
    CHECK(mentions(errors, "meta.turbo: unknown key"));
  }

  SECTION("all problems are reported together") {
    auto errors = parse_errors(R"({
      "experiment": "bad id!",
      "kind": "static",
      "repetitions": 0,
      "env": {"dimensions": 0, "tasks": 5, "samples_per_task": 4}
    })");
    CHECK(errors.size() >= 3);
    CHECK(mentions(errors, "experiment"));
    CHECK(mentions(errors, "repetitions"));
    CHECK(mentions(errors, "env.dimensions"));
  }

  SECTION("type mismatches are schema errors") {
    auto errors = parse_errors(R"({
      "experiment": "t",
      "kind": "static",
      "seeds": 7,
      "env": {"dimensions": 2, "tasks": "many", "samples_per_task": 4}
    })");
    CHECK(mentions(errors, "seeds"));
    CHECK(mentions(errors, "env.tasks: expected an integer"));
  }

  SECTION("kind-specific constraints") {
    CHECK(mentions(parse_errors(R"({
      "experiment": "d", "kind": "dynamic",
      "env": {"dimensions": 2, "tasks": 10, "samples_per_task": 4}
    })"), "phases"));

    CHECK(mentions(parse_errors(R"({
      "experiment": "g", "kind": "geometry",
      "env": {"dimensions": 3, "tasks": 10, "samples_per_task": 4,
               "coordinate_deviations": [1.0, 0.5]}
    })"), "coordinate_deviations"));

    CHECK(mentions(parse_errors(R"({
      "experiment": "b", "kind": "batch",
      "env": {"dimensions": 2, "tasks": 10, "samples_per_task": 4, "dispersion": 0.1},
      "meta": {"scale": "per_coordinate"}
    })"), "batch experiments need a scalar scale"));

    CHECK(mentions(parse_errors(R"({
      "experiment": "f", "kind": "federated",
      "env": {"dimensions": 2, "tasks": 10, "samples_per_task": 4},
      "federated": {"clients": 4, "dimensions": 2}
    })"), "env: federated experiments use the federated block"));

    CHECK(mentions(parse_errors(R"({
      "experiment": "s", "kind": "static",
      "env": {"dimensions": 2, "tasks": 10, "samples_per_task": 4},
      "federated": {"clients": 4, "dimensions": 2}
    })"), "only federated experiments take this block"));
  }

  SECTION("broken JSON is a single clear error") {
    auto errors = parse_errors("{not json");
    REQUIRE(errors.size() == 1);
    CHECK(mentions(errors, "not valid JSON"));
  }

  SECTION("dynamic phases parse into the environment spec") {
    ExperimentConfig cfg = parse_ok(R"({
      "experiment": "dyn",
      "kind": "dynamic",
      "env": {"dimensions": 2, "tasks": 10, "samples_per_task": 4, "deviation": 0.05,
               "domain": {"shape": "box", "half_width": 2.0},
               "phases": [{"center": [-1.0, 0.0], "length": 5},
                           {"center": [1.0, 0.0], "length": 5}]}
    })");
    REQUIRE(cfg.env.phases.size() == 2);
    CHECK(cfg.env.phases[0].length == 5);
    CHECK(cfg.env.phases[1].center[0] == 1.0);
  }
}

TEST_CASE("experiments run deterministically and summaries reduce the CSV") {
  ExperimentConfig cfg = parse_config(kStaticConfig);

  ExperimentOutcome a = run_experiment(cfg);
  ExperimentOutcome b = run_experiment(cfg);
  CHECK(a.ok);
  CHECK(a.csv == b.csv);
  CHECK(a.summary.dump() == b.summary.dump());

  auto rows = parse_rows(a.csv);
  REQUIRE_FALSE(rows.empty());

  SECTION("seed blocks appear in config order") {
    CHECK(rows.front().seed == 1);
    CHECK(rows.back().seed == 2);
    bool seen_two = false;
    for (const auto& r : rows) {
      if (r.seed == 2) seen_two = true;
      if (seen_two) CHECK(r.seed == 2);  // once the second block starts it never reverts
      CHECK(r.experiment == "static-demo");
    }
  }

  SECTION("summary finals equal the last CSV rows per seed") {
    for (const auto& per_seed : a.summary["per_seed"]) {
      std::uint64_t seed = per_seed["seed"].get<std::uint64_t>();
      double last_tar = 0.0, last_rub = 0.0;
      for (const auto& r : rows) {
        if (r.seed != seed) continue;
        if (r.metric == "tar") last_tar = std::strtod(r.value.c_str(), nullptr);
        if (r.metric == "rub") last_rub = std::strtod(r.value.c_str(), nullptr);
      }
      CHECK(per_seed["final_tar"].get<double>() == last_tar);
      CHECK(per_seed["final_rub"].get<double>() == last_rub);
    }
    double mean_tar = 0.0;
    for (const auto& per_seed : a.summary["per_seed"]) {
      mean_tar += per_seed["final_tar"].get<double>();
    }
    mean_tar /= 2.0;
    CHECK(a.summary["aggregate"]["mean_final_tar"].get<double>() == mean_tar);
  }

  SECTION("worker count does not change the bytes") {
    ExperimentOutcome parallel = run_experiment(cfg, 4);
    CHECK(parallel.csv == a.csv);
    CHECK(parallel.summary.dump() == a.summary.dump());
  }

  SECTION("repetitions re-run seeds and must agree") {
    ExperimentConfig reps = cfg;
    reps.repetitions = 2;
    ExperimentOutcome doubled = run_experiment(reps, 2);
    CHECK(doubled.ok);
    CHECK(parse_rows(doubled.csv).size() == rows.size());  // blocks emitted once
  }

  SECTION("scalar scale runs emit the v metric") {
    bool has_v = false;
    for (const auto& r : rows) has_v = has_v || r.metric == "v";
    CHECK(has_v);
  }
}

TEST_CASE("dynamic, batch, and federated kinds emit their extra metrics") {
  SECTION("dynamic adds a path length row") {
    ExperimentConfig cfg = parse_config(R"({
      "experiment": "dyn",
      "kind": "dynamic",
      "seeds": [3],
      "env": {"dimensions": 2, "tasks": 10, "samples_per_task": 4, "deviation": 0.05,
               "domain": {"shape": "box", "half_width": 2.0},
               "phases": [{"center": [-1.0, 0.0], "length": 5},
                           {"center": [1.0, 0.0], "length": 5}]}
    })");
    ExperimentOutcome out = run_experiment(cfg);
    REQUIRE(out.ok);
    auto rows = parse_rows(out.csv);
    double path = -1.0;
    for (const auto& r : rows) {
      if (r.metric == "path_length") {
        CHECK(r.t == 10);
        path = std::strtod(r.value.c_str(), nullptr);
      }
    }
    CHECK(path == 2.0);  // one jump between the phase centers
    CHECK(out.summary["per_seed"][0]["path_length"].get<double>() == 2.0);
  }

  SECTION("batch adds a transfer risk row") {
    ExperimentConfig cfg = parse_config(R"({
      "experiment": "bat",
      "kind": "batch",
      "seeds": [5],
      "heldout_tasks": 4,
      "risk_samples": 60,
      "env": {"dimensions": 2, "tasks": 20, "samples_per_task": 6,
               "dispersion": 0.2, "task_noise": 0.1,
               "domain": {"shape": "ball", "radius": 1.0}},
      "meta": {"scale": "eps_ftl"}
    })");
    ExperimentOutcome out = run_experiment(cfg);
    REQUIRE(out.ok);
    auto rows = parse_rows(out.csv);
    int risk_rows = 0;
    double risk = 0.0;
    for (const auto& r : rows) {
      if (r.metric == "risk") {
        ++risk_rows;
        CHECK(r.t == 20);
        risk = std::strtod(r.value.c_str(), nullptr);
      }
    }
    CHECK(risk_rows == 1);
    CHECK(risk > 0.0);
    CHECK(out.summary["per_seed"][0]["risk"].get<double>() == risk);
  }

  SECTION("federated emits per-round rates and payload counts") {
    ExperimentConfig cfg = parse_config(R"({
      "experiment": "fed",
      "kind": "federated",
      "seeds": [7],
      "federated": {"clients": 8, "dimensions": 3, "samples_per_client": 12,
                     "dispersion": 0.3, "sample_noise": 0.1, "rounds": 5,
                     "clients_per_round": 3, "local_steps": 4, "batch_size": 4,
                     "epsilon": 0.05, "zeta": 0.05, "p": 1.0, "refine_steps": 5}
    })");
    ExperimentOutcome out = run_experiment(cfg);
    REQUIRE(out.ok);
    auto rows = parse_rows(out.csv);
    long long payload_sum = 0;
    int payload_rows = 0, risk_rows = 0;
    for (const auto& r : rows) {
      if (r.metric == "payload_scalars") {
        ++payload_rows;
        payload_sum += static_cast<long long>(std::strtod(r.value.c_str(), nullptr));
      }
      if (r.metric == "risk") ++risk_rows;
    }
    CHECK(payload_rows == 5);
    CHECK(risk_rows == 1);
    // summary ledger total is the column-wise reduction of the CSV
    CHECK(out.summary["per_seed"][0]["payload_scalars"].get<long long>() == payload_sum);
    CHECK(out.summary["aggregate"]["payload_scalars_total"].get<long long>() == payload_sum);
    // per-coordinate d=3: up 2d+1 = 7, down 2d = 6 per client, 3 clients per round
    CHECK(payload_sum == 5LL * 3LL * 13LL);
  }

  SECTION("run failures flag partial output") {
    ExperimentConfig cfg = parse_config(R"({
      "experiment": "boom",
      "kind": "static",
      "env": {"dimensions": 2, "tasks": 5, "samples_per_task": 4, "deviation": 5.0,
               "domain": {"shape": "ball", "radius": 1.0}}
    })");
    ExperimentOutcome out = run_experiment(cfg);
    CHECK_FALSE(out.ok);
    CHECK(out.summary["partial"].get<bool>());
    REQUIRE_FALSE(out.summary["errors"].empty());
    CHECK(parse_rows(out.csv).empty());  // header only
  }
}

TEST_CASE("experiment files land on disk with derived summary paths") {
  CHECK(summary_path_for("runs/out.csv") ==
        (std::filesystem::path("runs") / "out.summary.json").string());
  CHECK(summary_path_for("plain") == "plain.summary.json");

  ExperimentConfig cfg = parse_config(kStaticConfig);
  cfg.seeds = {1};
  ExperimentOutcome out = run_experiment(cfg);
  auto dir = std::filesystem::temp_directory_path() / "aruba_harness_files";
  std::filesystem::remove_all(dir);
  WrittenFiles files = write_experiment_files(cfg, out, (dir / "demo.csv").string());
  CHECK(files.ok);

  std::ifstream csv(files.csv_path, std::ios::binary);
  std::stringstream csv_buf;
  csv_buf << csv.rdbuf();
  CHECK(csv_buf.str() == out.csv);

  std::ifstream js(files.summary_path, std::ios::binary);
  std::stringstream js_buf;
  js_buf << js.rdbuf();
  CHECK(Json::parse(js_buf.str()).dump() == out.summary.dump());
  std::filesystem::remove_all(dir);
}

// Exercises the installed command-line tool as a subprocess.  Skipped when
// the binary is not sitting next to the test (e.g. a partial build).
TEST_CASE("the command-line tool validates, runs, and reports exit codes") {
  namespace fs = std::filesystem;
  const std::string exe = "./aruba";
  if (!fs::exists(exe)) {
    SUCCEED("CLI binary not built alongside the tests");
    return;
  }
  fs::path dir = fs::temp_directory_path() / "aruba-cli-test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto shell = [&](const std::string& args) {
    std::string cmd = exe + " " + args + " > " + (dir / "out.txt").string() + " 2> " +
                      (dir / "err.txt").string();
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  auto write_file = [](const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
  };

  fs::path good = dir / "good.json";
  write_file(good, R"({"experiment":"cli-demo","kind":"static","seeds":[1,2],
      "env":{"dimensions":2,"tasks":15,"samples_per_task":5,"deviation":0.1,
             "domain":{"shape":"ball","radius":1.0}},
      "meta":{"scale":"eps_ftl"}})");

  SECTION("validate accepts a good config and rejects a bad one with every error") {
    CHECK(shell("validate --config " + good.string()) == 0);
    CHECK(slurp(dir / "out.txt").find("config ok: cli-demo") != std::string::npos);

    fs::path bad = dir / "bad.json";
    write_file(bad, R"({"experiment":"bad id!","kind":"nope","seeds":[]})");
    CHECK(shell("validate --config " + bad.string()) == 2);
    std::string err = slurp(dir / "err.txt");
    CHECK(err.find("id may use") != std::string::npos);
    CHECK(err.find("unknown value") != std::string::npos);
    CHECK(err.find("seeds") != std::string::npos);

    CHECK(shell("validate --config " + (dir / "missing.json").string()) == 2);
    CHECK(shell("validate --json --config " + bad.string()) == 2);
    Json parsed = Json::parse(slurp(dir / "out.txt"));
    CHECK(parsed["ok"] == false);
    CHECK(parsed["errors"].size() >= 3);
  }

  SECTION("run writes the CSV and summary and is worker-count invariant") {
    fs::path csv1 = dir / "run1.csv";
    fs::path csv3 = dir / "run3.csv";
    CHECK(shell("run --config " + good.string() + " --out " + csv1.string()) == 0);
    CHECK(shell("run --config " + good.string() + " --out " + csv3.string() + " --jobs 3") == 0);
    std::string bytes1 = slurp(csv1);
    CHECK(bytes1.rfind("experiment,seed,t,metric,value\n", 0) == 0);
    CHECK(bytes1 == slurp(csv3));
    CHECK(fs::exists(dir / "run1.summary.json"));

    CHECK(shell("run --config " + good.string() + " --out " + csv1.string() + " --seed 7") == 0);
    std::string seeded = slurp(csv1);
    CHECK(seeded.find("cli-demo,7,1,") != std::string::npos);
    CHECK(seeded.find("cli-demo,1,1,") == std::string::npos);
  }

  SECTION("a config that parses but cannot run exits with the run-failure code") {
    fs::path doomed = dir / "doomed.json";
    write_file(doomed, R"({"experiment":"doomed","kind":"static","seeds":[1],
        "env":{"dimensions":2,"tasks":5,"samples_per_task":3,"deviation":5.0,
               "domain":{"shape":"ball","radius":1.0}},
        "meta":{"scale":"eps_ftl"}})");
    CHECK(shell("run --config " + doomed.string() + " --out " + (dir / "d.csv").string()) == 1);
    CHECK(slurp(dir / "err.txt").find("run failure") != std::string::npos);
  }

  SECTION("usage errors and empty suite filters are config errors") {
    CHECK(shell("run --no-such-flag") == 2);
    CHECK(shell("frobnicate") == 2);
    CHECK(shell("suite --only no-criterion-has-this-name") == 2);
  }
}
