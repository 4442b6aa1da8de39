// dmh — analyze / train / eval / simulate / report for the distributed
// multi-head power predictor. Exit codes: 0 ok, 2 bad configuration,
// 3 runtime failure.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "dmh/config.hpp"

namespace fs = std::filesystem;
using namespace dmh;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string output_root(const ExperimentConfig& cfg) {
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  if (const char* env = std::getenv("DMH_OUT")) return env;
  return "runs";
}

struct Dataset {
  DatasetSchema schema;
  std::vector<Trial> train;
  std::vector<Trial> test;
};

Dataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.schema.empty()) {
    throw ConfigError("no dataset schema configured (schema= in the config or --schema)");
  }
  Dataset d;
  d.schema = load_schema(cfg.schema);
  std::string dir = cfg.data_dir;
  if (dir.empty()) {
    dir = fs::path(cfg.schema).parent_path().string();
    if (dir.empty()) dir = ".";
  }
  LoadStats stats;
  std::vector<Trial> trials = realize_trials(d.schema, dir, &stats);
  if (stats.dropped_rows > 0) {
    std::cerr << "warning: dropped " << stats.dropped_rows << " unparseable rows\n";
  }
  std::size_t n_train = d.schema.n_train, n_test = d.schema.n_test;
  if (n_train == 0 && n_test == 0) {  // default: hold out one fifth, at least one trial
    n_test = std::max<std::size_t>(1, trials.size() / 5);
    n_train = trials.size() - n_test;
  }
  auto parts = split_dataset(trials, n_train, n_test, cfg.seed);
  d.train = std::move(parts.first);
  d.test = std::move(parts.second);
  if (d.train.empty()) throw ConfigError("dataset split leaves no training trials");
  if (d.test.empty()) throw ConfigError("dataset split leaves no test trials");
  return d;
}

std::vector<std::string> feature_names(const Trial& t) {
  std::vector<std::string> names;
  for (const auto& f : t.features) names.push_back(f.name);
  return names;
}

void write_metrics(const std::string& path, const std::string& dataset,
                   const std::string& system, const Metrics& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "dataset," << dataset << "\n";
  out << "system," << system << "\n";
  out << "mae," << format_double(m.mae) << "\n";
  out << "mse," << format_double(m.mse) << "\n";
  out << "samples," << m.samples << "\n";
}

// -- analyze ----------------------------------------------------------------------

int cmd_analyze(const ExperimentConfig& cfg) {
  Dataset data = load_dataset(cfg);
  auto corr = correlations_to_power(data.train);
  std::vector<double> coeffs;
  for (const auto& c : corr) coeffs.push_back(c.value_or(0.0));
  GroupSpec spec = group_features(coeffs, cfg.effective_thresholds());

  std::vector<std::size_t> group_of(coeffs.size(), 0);
  for (std::size_t h = 0; h < spec.group_count(); ++h) {
    for (std::size_t m : spec.groups[h]) group_of[m] = h + 1;
  }

  const std::string out = output_root(cfg);
  fs::create_directories(out);
  std::vector<std::string> names = feature_names(data.train[0]);
  save_group_spec(spec, names, out + "/groups.txt");

  std::ofstream report(out + "/correlations.csv");
  if (!report) throw IoError("cannot write " + out + "/correlations.csv");
  report << "feature,coefficient,group,degenerate\n";
  for (std::size_t m = 0; m < coeffs.size(); ++m) {
    report << names[m] << "," << format_double(coeffs[m]) << ",FG_" << group_of[m] << ","
           << (corr[m].has_value() ? 0 : 1) << "\n";
  }

  std::size_t assigned = 0;
  std::cout << "dataset " << data.schema.name << ": " << coeffs.size() << " features, "
            << spec.group_count() << " groups\n";
  for (std::size_t h = 0; h < spec.group_count(); ++h) {
    assigned += spec.groups[h].size();
    std::cout << "  FG_" << h + 1 << ": " << spec.groups[h].size() << " features\n";
  }
  if (assigned != coeffs.size()) {
    throw std::runtime_error("grouping lost features: " + std::to_string(assigned) + " of " +
                             std::to_string(coeffs.size()) + " assigned");
  }
  std::cout << "  total " << assigned << " = M, partition complete\n";
  std::cout << "wrote " << out << "/groups.txt and " << out << "/correlations.csv\n";
  return kOk;
}

// -- train ------------------------------------------------------------------------

int train_one(const ExperimentConfig& cfg) {
  Dataset data = load_dataset(cfg);
  auto corr = correlations_to_power(data.train);
  std::vector<double> coeffs;
  for (const auto& c : corr) coeffs.push_back(c.value_or(0.0));

  const std::string out = output_root(cfg);
  fs::create_directories(out);

  if (cfg.is_baseline()) {
    BaselineResult r = run_baseline(cfg.baseline(), cfg.head, data.train, data.test, coeffs,
                                    cfg.W, cfg.horizon, cfg.train_config());
    write_run_log(out + "/runlog.csv", r.log);
    write_metrics(out + "/metrics.csv", data.schema.name, cfg.system, r.metrics);
    std::cout << cfg.system << " on " << data.schema.name << ": best epoch " << r.best_epoch
              << ", test MAE " << format_fixed(r.metrics.mae) << ", MSE "
              << format_fixed(r.metrics.mse) << " (" << r.kept_features.size()
              << " features kept)\n";
    return kOk;
  }

  GroupSpec spec = group_features(coeffs, cfg.effective_thresholds());
  Normalizer norm = fit_normalizer(data.train);
  std::vector<Trial> normalized;
  for (const Trial& t : data.train) normalized.push_back(norm.apply(t));

  DmhModel model = build_dmh_model(cfg.dmh_mode(), cfg.head, spec, cfg.W, cfg.horizon, cfg.seed);
  TrainResult r = train(model, normalized, cfg.train_config());
  write_run_log(out + "/runlog.csv", r.log);
  if (r.aborted) throw std::runtime_error("training aborted: " + r.abort_reason);

  save_checkpoint(out + "/checkpoint.dmh", r.best, norm, r.best_epoch, r.best_l0);
  Metrics m = evaluate(r.best, data.test, norm);
  write_metrics(out + "/metrics.csv", data.schema.name, cfg.system, m);
  std::cout << "DMH-" << cfg.system << " on " << data.schema.name << ": best epoch "
            << r.best_epoch << " (L0 " << format_fixed(r.best_l0) << "), test MAE "
            << format_fixed(m.mae) << ", MSE " << format_fixed(m.mse) << "\n";
  return kOk;
}

// -- eval -------------------------------------------------------------------------

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
  std::string path = checkpoint_path;
  if (path.empty()) path = output_root(cfg) + "/checkpoint.dmh";
  if (!fs::exists(path)) throw std::runtime_error("missing checkpoint " + path);
  if (cfg.is_baseline()) {
    throw ConfigError("eval needs a DMH system; " + cfg.system + " produces metrics at train time");
  }
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.model.mode != cfg.dmh_mode()) {
    throw ConfigError("checkpoint holds a DMH-" + to_string(ckpt.model.mode) +
                      " model but the config says DMH-" + cfg.system);
  }
  Dataset data = load_dataset(cfg);
  Metrics m = evaluate(ckpt.model, data.test, ckpt.normalizer);
  const std::string out = output_root(cfg);
  fs::create_directories(out);
  write_metrics(out + "/metrics.csv", data.schema.name, cfg.system, m);
  std::cout << "DMH-" << cfg.system << " checkpoint (epoch " << ckpt.epoch << ") on "
            << data.schema.name << ": test MAE " << format_fixed(m.mae) << ", MSE "
            << format_fixed(m.mse) << " over " << m.samples << " samples\n";
  return kOk;
}

// -- simulate ---------------------------------------------------------------------

int simulate_one(const ExperimentConfig& cfg) {
  if (cfg.is_baseline()) {
    throw ConfigError("simulate runs the split protocol; system must be T or E");
  }
  Dataset data = load_dataset(cfg);
  auto corr = correlations_to_power(data.train);
  std::vector<double> coeffs;
  for (const auto& c : corr) coeffs.push_back(c.value_or(0.0));
  GroupSpec spec = group_features(coeffs, cfg.effective_thresholds());

  // deal trials round-robin; every client normalizes its own data locally
  std::vector<std::vector<Trial>> per_client(cfg.clients);
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    per_client[i % cfg.clients].push_back(data.train[i]);
  }
  std::vector<Normalizer> norms;
  std::vector<SplitClientInput> inputs;
  for (std::size_t k = 0; k < cfg.clients; ++k) {
    if (per_client[k].empty()) {
      throw ConfigError("client " + std::to_string(k + 1) + " received no trials; lower clients=");
    }
    Normalizer n = fit_normalizer(per_client[k]);
    SplitClientInput input;
    for (const Trial& t : per_client[k]) input.normalized.push_back(n.apply(t));
    input.spec = spec;
    input.seed = cfg.seed + k;
    norms.push_back(n);
    inputs.push_back(std::move(input));
  }

  SplitConfig scfg;
  scfg.mode = cfg.dmh_mode();
  scfg.kind = cfg.head;
  scfg.W = cfg.W;
  scfg.horizon = cfg.horizon;
  scfg.train = cfg.train_config();
  auto results = run_split_training(inputs, scfg, cfg.transport);

  const std::string out = output_root(cfg);
  fs::create_directories(out);
  const std::size_t M = spec.feature_count();
  bool failed = false;
  for (std::size_t k = 0; k < results.size(); ++k) {
    const SplitClientResult& r = results[k];
    const std::string tag = "_c" + std::to_string(k + 1);
    write_ledger(out + "/ledger" + tag + ".csv", r.ledger, M, cfg.W);
    if (r.aborted) {
      std::cerr << "client " << k + 1 << " aborted: " << r.abort_reason << "\n";
      failed = true;
      continue;
    }
    save_checkpoint(out + "/checkpoint" + tag + ".dmh", r.model, norms[k], r.best_epoch,
                    r.best_l0);
    std::cout << "client " << k + 1 << ": " << r.ledger.steps << " steps, "
              << r.ledger.to_server_bytes << " bytes up, " << r.ledger.to_client_bytes
              << " bytes down, transmission ratio " << format_fixed(r.ratio) << "\n";
  }
  if (failed) throw std::runtime_error("at least one split client aborted");

  Metrics m = evaluate(results[0].model, data.test, norms[0]);
  write_metrics(out + "/metrics.csv", data.schema.name, cfg.system, m);
  std::cout << "DMH-" << cfg.system << " (split, " << to_string(cfg.transport) << ") on "
            << data.schema.name << ": test MAE " << format_fixed(m.mae) << ", MSE "
            << format_fixed(m.mse) << "\n";
  return kOk;
}

// -- report -----------------------------------------------------------------------

struct RunEntry {
  std::string dataset;
  std::string system;
  double mae = 0.0;
  double mse = 0.0;
};

RunEntry read_metrics(const std::string& dir) {
  const std::string path = dir + "/metrics.csv";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing artifacts: cannot open " + path);
  RunEntry e;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) continue;
    const std::string key = line.substr(0, comma);
    const std::string val = line.substr(comma + 1);
    if (key == "dataset") e.dataset = val;
    else if (key == "system") e.system = val;
    else if (key == "mae") e.mae = std::stod(val);
    else if (key == "mse") e.mse = std::stod(val);
  }
  if (e.system.empty()) throw std::runtime_error("missing artifacts: no system in " + path);
  return e;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out_path) {
  std::vector<RunEntry> entries;
  for (const std::string& dir : dirs) entries.push_back(read_metrics(dir));

  std::vector<std::string> systems, datasets;
  for (const RunEntry& e : entries) {
    if (std::find(systems.begin(), systems.end(), e.system) == systems.end()) {
      systems.push_back(e.system);
    }
    if (std::find(datasets.begin(), datasets.end(), e.dataset) == datasets.end()) {
      datasets.push_back(e.dataset);
    }
  }

  std::map<std::pair<std::string, std::string>, RunEntry> cell;
  for (const RunEntry& e : entries) cell[{e.system, e.dataset}] = e;

  std::ostringstream table;
  table << "system";
  for (const std::string& d : datasets) table << "," << d << " MAE," << d << " MSE";
  table << "\n";
  for (const std::string& s : systems) {
    table << s;
    for (const std::string& d : datasets) {
      auto it = cell.find({s, d});
      if (it == cell.end()) {
        table << ",,";
      } else {
        table << "," << format_fixed(it->second.mae) << "," << format_fixed(it->second.mse);
      }
    }
    table << "\n";
  }

  std::cout << table.str();
  if (!out_path.empty()) {
    fs::create_directories(fs::path(out_path).parent_path().empty()
                               ? "."
                               : fs::path(out_path).parent_path().string());
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write " + out_path);
    out << table.str();
  }
  return kOk;
}

// -- fan-out over seeds -----------------------------------------------------------

int run_jobs(const ExperimentConfig& cfg, std::size_t jobs, int (*runner)(const ExperimentConfig&)) {
  if (jobs <= 1) return runner(cfg);
  std::vector<int> codes(jobs, kOk);
  std::vector<std::thread> threads;
  std::mutex io;
  for (std::size_t j = 0; j < jobs; ++j) {
    threads.emplace_back([&, j] {
      ExperimentConfig job = cfg;
      job.seed = cfg.seed + j;
      job.out_dir = output_root(cfg) + "/seed_" + std::to_string(job.seed);
      try {
        codes[j] = runner(job);
      } catch (const ConfigError& e) {
        std::lock_guard<std::mutex> lock(io);
        std::cerr << "seed " << job.seed << " config error: " << e.what() << "\n";
        codes[j] = kConfigError;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(io);
        std::cerr << "seed " << job.seed << " failed: " << e.what() << "\n";
        codes[j] = kRuntimeError;
      }
    });
  }
  for (auto& t : threads) t.join();
  int worst = kOk;
  for (int c : codes) worst = std::max(worst, c);
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed multi-head power-consumption prediction"};
  app.require_subcommand(1);

  std::string config_path, schema, mode_s, head_s, transport_s, out_dir, checkpoint, report_out;
  std::uint64_t seed = 0;
  std::size_t horizon = 0, W = 0, epochs = 0, batch = 0, jobs = 1, clients = 0;
  double lr = 0.0;
  bool no_balancing = false;
  std::vector<std::string> report_dirs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file (key = value)");
    sub->add_option("--schema", schema, "dataset schema path");
    sub->add_option("--mode", mode_s, "system: T, E, BS, FS-A, FS-S");
    sub->add_option("--head", head_s, "head network: MLP, CNN, LSTM");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--horizon", horizon, "prediction horizon d >= 1");
    sub->add_option("--window", W, "window length W");
    sub->add_option("--epochs", epochs, "training epochs");
    sub->add_option("--batch-size", batch, "mini-batch size");
    sub->add_option("--lr", lr, "learning rate");
    sub->add_flag("--no-balancing", no_balancing, "freeze all loss multipliers at 1");
    sub->add_option("--transport", transport_s, "split transport: sim or stream");
    sub->add_option("--clients", clients, "split clients");
    sub->add_option("--out", out_dir, "output directory (default $DMH_OUT or ./runs)");
    sub->add_option("--jobs", jobs, "run this many seeds in parallel");
  };

  CLI::App* analyze = app.add_subcommand("analyze", "group features by correlation to power");
  CLI::App* train_cmd = app.add_subcommand("train", "train one system monolithically");
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  CLI::App* simulate = app.add_subcommand("simulate", "train over the split client/server protocol");
  CLI::App* report = app.add_subcommand("report", "combine run metrics into one table");
  for (CLI::App* sub : {analyze, train_cmd, eval_cmd, simulate}) add_common(sub);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint path (default <out>/checkpoint.dmh)");
  report->add_option("dirs", report_dirs, "run directories holding metrics.csv")->required();
  report->add_option("--out", report_out, "also write the table to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kConfigError;
  }

  try {
    if (report->parsed()) return cmd_report(report_dirs, report_out);

    CLI::App* active = app.get_subcommands().front();
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_experiment_config(config_path);
    if (active->count("--schema")) cfg.schema = schema;
    if (active->count("--mode")) cfg.system = canonical_system(mode_s);
    if (active->count("--head")) cfg.head = head_kind_from_string(head_s);
    if (active->count("--seed")) cfg.seed = seed;
    if (active->count("--horizon")) cfg.horizon = horizon;
    if (active->count("--window")) cfg.W = W;
    if (active->count("--epochs")) cfg.epochs = epochs;
    if (active->count("--batch-size")) cfg.batch_size = batch;
    if (active->count("--lr")) cfg.lr = lr;
    if (no_balancing) cfg.balancing = false;
    if (active->count("--transport")) cfg.transport = transport_from_string(transport_s);
    if (active->count("--clients")) cfg.clients = clients;
    if (active->count("--out")) cfg.out_dir = out_dir;
    validate_config(cfg);

    if (analyze->parsed()) return cmd_analyze(cfg);
    if (train_cmd->parsed()) return run_jobs(cfg, jobs, train_one);
    if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint);
    if (simulate->parsed()) return run_jobs(cfg, jobs, simulate_one);
    return kConfigError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
