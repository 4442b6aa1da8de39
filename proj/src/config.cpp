#include "dmh/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace dmh {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(key + ": '" + item + "' is not a number");
    }
  }
  return out;
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& v) {
  try {
    return static_cast<T>(std::stoull(v));
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is not a number");
  }
}

}  // namespace

bool ExperimentConfig::is_baseline() const {
  return system == "BS" || system == "FS-A" || system == "FS-S";
}

DmhMode ExperimentConfig::dmh_mode() const {
  if (system == "T") return DmhMode::T;
  if (system == "E") return DmhMode::E;
  throw ConfigError("system '" + system + "' is not a DMH mode");
}

BaselineKind ExperimentConfig::baseline() const { return baseline_from_string(system); }

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.lr = lr;
  t.seed = seed;
  t.balancing = balancing;
  return t;
}

std::vector<double> ExperimentConfig::effective_thresholds() const {
  return thresholds.empty() ? default_thresholds() : thresholds;
}

std::string canonical_system(const std::string& s) {
  std::string u;
  for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (u == "T" || u == "DMH-T") return "T";
  if (u == "E" || u == "DMH-E") return "E";
  if (u == "BS") return "BS";
  if (u == "FS-A" || u == "FSA") return "FS-A";
  if (u == "FS-S" || u == "FSS") return "FS-S";
  throw ConfigError("unknown system '" + s + "' (expected T, E, BS, FS-A or FS-S)");
}

std::string to_string(DmhMode m) { return m == DmhMode::T ? "T" : "E"; }

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  ExperimentConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "schema") cfg.schema = val;
    else if (key == "data_dir") cfg.data_dir = val;
    else if (key == "system" || key == "mode") cfg.system = canonical_system(val);
    else if (key == "head") cfg.head = head_kind_from_string(val);
    else if (key == "thresholds") cfg.thresholds = parse_list(key, val);
    else if (key == "W" || key == "window") cfg.W = parse_unsigned<std::size_t>(key, val);
    else if (key == "horizon") cfg.horizon = parse_unsigned<std::size_t>(key, val);
    else if (key == "epochs") cfg.epochs = parse_unsigned<std::size_t>(key, val);
    else if (key == "batch_size") cfg.batch_size = parse_unsigned<std::size_t>(key, val);
    else if (key == "lr") cfg.lr = parse_double(key, val);
    else if (key == "seed") cfg.seed = parse_unsigned<std::uint64_t>(key, val);
    else if (key == "balancing") cfg.balancing = parse_bool(key, val);
    else if (key == "transport") cfg.transport = transport_from_string(val);
    else if (key == "clients") cfg.clients = parse_unsigned<std::size_t>(key, val);
    else if (key == "out_dir") cfg.out_dir = val;
    else throw ConfigError(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
  canonical_system(cfg.system);
  if (cfg.W == 0) throw ConfigError("W must be at least 1");
  if (cfg.horizon == 0) throw ConfigError("horizon must be at least 1");
  if (cfg.epochs == 0) throw ConfigError("epochs must be at least 1");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("lr must be positive");
  if (cfg.clients == 0) throw ConfigError("clients must be at least 1");
  const std::vector<double> th = cfg.effective_thresholds();
  if (th.size() < 2) throw ConfigError("thresholds need at least two boundaries");
  for (double t : th) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("thresholds must lie in [0, 1]");
  }
  for (std::size_t i = 1; i < th.size(); ++i) {
    if (!(th[i] > th[i - 1])) throw ConfigError("thresholds must be strictly increasing");
  }
}

}  // namespace dmh
