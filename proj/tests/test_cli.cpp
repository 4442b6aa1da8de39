#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dmh/config.hpp"

using namespace dmh;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;  // stdout and stderr combined
};

RunResult run_cli(const std::string& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir + "' && '" + DMH_CLI_PATH + "' " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[512];
  while (std::fgets(buf, sizeof(buf), pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh scratch directory with a synthetic schema and a small config.
struct Scratch {
  std::string dir;

  Scratch() {
    dir = (fs::temp_directory_path() / "dmh_cli_test").string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream schema(dir + "/schema.txt");
    schema << "name=cli-synth\n"
           << "target=power\n"
           << "n_train=4\n"
           << "n_test=1\n"
           << "synthetic_trials=5\n"
           << "synthetic_length=100\n"
           << "synthetic_informative=3\n"
           << "synthetic_noise_features=3\n"
           << "synthetic_seed=11\n";
    std::ofstream cfg(dir + "/exp.cfg");
    cfg << "# compact experiment\n"
        << "schema = schema.txt\n"
        << "mode = T\n"
        << "head = MLP\n"
        << "W = 5\n"
        << "horizon = 1\n"
        << "epochs = 2\n"
        << "batch_size = 16\n"
        << "lr = 0.02\n"
        << "seed = 11\n";
  }
};

}  // namespace

TEST_CASE("analyze emits the grouping artifacts and a complete partition") {
  Scratch s;
  RunResult r = run_cli(s.dir, "analyze --config exp.cfg --out a");
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("partition complete") != std::string::npos);
  CHECK(fs::exists(s.dir + "/a/groups.txt"));
  CHECK(fs::exists(s.dir + "/a/correlations.csv"));

  std::vector<std::string> names;
  GroupSpec spec = load_group_spec(s.dir + "/a/groups.txt", &names);
  CHECK(spec.feature_count() == 6);
  CHECK(names.size() == 6);
  std::size_t assigned = 0;
  for (const auto& g : spec.groups) assigned += g.size();
  CHECK(assigned == 6);

  const std::string report = slurp(s.dir + "/a/correlations.csv");
  CHECK(report.rfind("feature,coefficient,group,degenerate\n", 0) == 0);
}

TEST_CASE("analyze assigns a constant feature to the first group as degenerate") {
  Scratch s;
  // file-based dataset with a flat feature
  for (int k = 0; k < 2; ++k) {
    Trial t;
    t.name = "t" + std::to_string(k);
    FeatureSeries flat{"flat", {}};
    FeatureSeries ramp{"ramp", {}};
    for (int i = 0; i < 40; ++i) {
      flat.values.push_back(3.25);
      ramp.values.push_back(0.1 * i + k);
      t.power.push_back(5.0 + 0.2 * i);
    }
    t.features = {flat, ramp};
    save_trial(t, s.dir + "/t" + std::to_string(k) + ".csv");
  }
  std::ofstream schema(s.dir + "/flat_schema.txt");
  schema << "name=flat-set\nfeatures=flat,ramp\ntarget=power\ntrials=t0.csv,t1.csv\n"
         << "n_train=1\nn_test=1\n";
  schema.close();

  RunResult r = run_cli(s.dir, "analyze --schema flat_schema.txt --seed 3 --out flat_out");
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  const std::string report = slurp(s.dir + "/flat_out/correlations.csv");
  CHECK(report.find("flat,0,FG_1,1") != std::string::npos);   // degenerate -> FG_1
  CHECK(report.find("ramp,") != std::string::npos);
}

TEST_CASE("train produces checkpoint, run log and deterministic metrics") {
  Scratch s;
  RunResult r1 = run_cli(s.dir, "train --config exp.cfg --out r1");
  CAPTURE(r1.out);
  REQUIRE(r1.code == 0);
  CHECK(fs::exists(s.dir + "/r1/checkpoint.dmh"));
  CHECK(fs::exists(s.dir + "/r1/runlog.csv"));
  const std::string metrics = slurp(s.dir + "/r1/metrics.csv");
  CHECK(metrics.find("dataset,cli-synth") != std::string::npos);
  CHECK(metrics.find("system,T") != std::string::npos);

  RunResult r2 = run_cli(s.dir, "train --config exp.cfg --out r2");
  REQUIRE(r2.code == 0);
  CHECK(slurp(s.dir + "/r2/metrics.csv") == metrics);  // rerun is byte-identical
}

TEST_CASE("eval reproduces the training metrics from the checkpoint") {
  Scratch s;
  REQUIRE(run_cli(s.dir, "train --config exp.cfg --out tr").code == 0);
  RunResult r = run_cli(s.dir, "eval --config exp.cfg --checkpoint tr/checkpoint.dmh --out ev");
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  CHECK(slurp(s.dir + "/ev/metrics.csv") == slurp(s.dir + "/tr/metrics.csv"));

  SUBCASE("mode mismatch is a config error") {
    RunResult bad = run_cli(s.dir, "eval --config exp.cfg --mode E --checkpoint tr/checkpoint.dmh");
    CHECK(bad.code == 2);
    CHECK(bad.out.find("DMH-T") != std::string::npos);
  }
  SUBCASE("missing checkpoint is a runtime failure") {
    RunResult bad = run_cli(s.dir, "eval --config exp.cfg --checkpoint nowhere.dmh");
    CHECK(bad.code == 3);
    CHECK(bad.out.find("missing checkpoint") != std::string::npos);
  }
}

TEST_CASE("simulate reports the fifth of the centralized traffic and matches train") {
  Scratch s;
  REQUIRE(run_cli(s.dir, "train --config exp.cfg --out mono").code == 0);
  RunResult r = run_cli(s.dir, "simulate --config exp.cfg --out sim");
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("transmission ratio 0.200000") != std::string::npos);
  CHECK(fs::exists(s.dir + "/sim/checkpoint_c1.dmh"));
  const std::string ledger = slurp(s.dir + "/sim/ledger_c1.csv");
  CHECK(ledger.find("transmission_ratio,0.200000") != std::string::npos);
  // the split run trains the same model as the monolithic run, byte for byte
  CHECK(slurp(s.dir + "/sim/metrics.csv") == slurp(s.dir + "/mono/metrics.csv"));

  SUBCASE("over a byte stream too") {
    RunResult rs = run_cli(s.dir, "simulate --config exp.cfg --transport stream --out sim2");
    REQUIRE(rs.code == 0);
    CHECK(slurp(s.dir + "/sim2/metrics.csv") == slurp(s.dir + "/mono/metrics.csv"));
  }
}

TEST_CASE("report assembles one row per system") {
  Scratch s;
  REQUIRE(run_cli(s.dir, "train --config exp.cfg --out rt").code == 0);
  REQUIRE(run_cli(s.dir, "train --config exp.cfg --mode E --out re").code == 0);
  REQUIRE(run_cli(s.dir, "train --config exp.cfg --mode BS --out rb").code == 0);

  RunResult r = run_cli(s.dir, "report rt re rb --out report.csv");
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  const std::string table = slurp(s.dir + "/report.csv");
  std::size_t lines = 0;
  for (char c : table) lines += c == '\n';
  CHECK(lines == 4);  // header + {T, E, BS}
  CHECK(table.rfind("system,cli-synth MAE,cli-synth MSE\n", 0) == 0);
  CHECK(table.find("\nT,") != std::string::npos);
  CHECK(table.find("\nE,") != std::string::npos);
  CHECK(table.find("\nBS,") != std::string::npos);

  SUBCASE("a directory without metrics is a runtime failure") {
    RunResult bad = run_cli(s.dir, "report rt nowhere");
    CHECK(bad.code == 3);
    CHECK(bad.out.find("missing artifacts") != std::string::npos);
  }
}

TEST_CASE("jobs fan out over consecutive seeds") {
  Scratch s;
  RunResult r = run_cli(s.dir, "train --config exp.cfg --jobs 2 --out fan");
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(s.dir + "/fan/seed_11/metrics.csv"));
  CHECK(fs::exists(s.dir + "/fan/seed_12/metrics.csv"));
  CHECK(slurp(s.dir + "/fan/seed_11/metrics.csv") != slurp(s.dir + "/fan/seed_12/metrics.csv"));
}

TEST_CASE("the output root falls back to the environment variable") {
  Scratch s;
  const std::string cmd = "cd '" + s.dir + "' && DMH_OUT=envroot '" + DMH_CLI_PATH +
                          "' analyze --config exp.cfg 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[256];
  while (std::fgets(buf, sizeof(buf), pipe)) {
  }
  REQUIRE(WEXITSTATUS(pclose(pipe)) == 0);
  CHECK(fs::exists(s.dir + "/envroot/groups.txt"));
}

TEST_CASE("configuration mistakes exit with code 2") {
  Scratch s;
  CHECK(run_cli(s.dir, "train --config missing.cfg").code == 2);
  CHECK(run_cli(s.dir, "train --config exp.cfg --mode X").code == 2);
  CHECK(run_cli(s.dir, "train --config exp.cfg --window 0").code == 2);
  CHECK(run_cli(s.dir, "simulate --config exp.cfg --mode BS").code == 2);
  CHECK(run_cli(s.dir, "frobnicate").code == 2);
  CHECK(run_cli(s.dir, "").code == 2);

  std::ofstream bad(s.dir + "/bad.cfg");
  bad << "thresholds = 0,0.5,0.3,1\nschema = schema.txt\n";
  bad.close();
  RunResult r = run_cli(s.dir, "train --config bad.cfg");
  CHECK(r.code == 2);
  CHECK(r.out.find("strictly increasing") != std::string::npos);

  std::ofstream unknown(s.dir + "/unknown.cfg");
  unknown << "schema = schema.txt\nwibble = 3\n";
  unknown.close();
  CHECK(run_cli(s.dir, "train --config unknown.cfg").code == 2);
}

TEST_CASE("config file loader applies documented keys and overrides") {
  Scratch s;
  std::ofstream full(s.dir + "/full.cfg");
  full << "schema = schema.txt\n"
       << "mode = dmh-e\n"
       << "head = lstm\n"
       << "thresholds = 0, 0.1, 1\n"
       << "W = 7\nhorizon = 5\nepochs = 9\nbatch_size = 8\nlr = 0.5\nseed = 42\n"
       << "balancing = off\ntransport = stream\nclients = 2\nout_dir = somewhere\n";
  full.close();
  ExperimentConfig cfg = load_experiment_config(s.dir + "/full.cfg");
  CHECK(cfg.system == "E");
  CHECK(cfg.head == HeadKind::Lstm);
  CHECK(cfg.thresholds == std::vector<double>{0.0, 0.1, 1.0});
  CHECK(cfg.W == 7);
  CHECK(cfg.horizon == 5);
  CHECK(cfg.epochs == 9);
  CHECK(cfg.batch_size == 8);
  CHECK(cfg.lr == 0.5);
  CHECK(cfg.seed == 42);
  CHECK_FALSE(cfg.balancing);
  CHECK(cfg.transport == TransportKind::Stream);
  CHECK(cfg.clients == 2);
  CHECK(cfg.out_dir == "somewhere");
  CHECK_NOTHROW(validate_config(cfg));

  CHECK_THROWS_AS(load_experiment_config(s.dir + "/nope.cfg"), ConfigError);
  CHECK(canonical_system("fs-a") == "FS-A");
  CHECK_THROWS_AS(canonical_system("Q"), ConfigError);

  ExperimentConfig bad = cfg;
  bad.horizon = 0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = cfg;
  bad.thresholds = {0.0, 1.5};
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = cfg;
  bad.lr = 0.0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
}

TEST_CASE("horizon and head overrides reach the engine") {
  Scratch s;
  RunResult r = run_cli(s.dir, "train --config exp.cfg --horizon 5 --epochs 1 --out h5");
  CAPTURE(r.out);
  REQUIRE(r.code == 0);
  Checkpoint ckpt = load_checkpoint(s.dir + "/h5/checkpoint.dmh");
  CHECK(ckpt.model.horizon == 5);
}
