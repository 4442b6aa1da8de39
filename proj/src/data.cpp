#include "dmh/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dmh/rng.hpp"

namespace dmh {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim whitespace and a possible trailing \r
    std::size_t a = cell.find_first_not_of(" \t\r");
    std::size_t b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

// -- schema --------------------------------------------------------------------

DatasetSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file " + path);
  DatasetSchema s;
  SyntheticSpec syn;
  bool has_syn = false;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw IoError("schema line without '=': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "name") s.name = val;
    else if (key == "features") s.feature_columns = split_list(val);
    else if (key == "target") s.target_column = val;
    else if (key == "trials") s.trial_files = split_list(val);
    else if (key == "n_train") s.n_train = std::stoul(val);
    else if (key == "n_test") s.n_test = std::stoul(val);
    else if (key == "synthetic_trials") { syn.trials = std::stoul(val); has_syn = true; }
    else if (key == "synthetic_length") { syn.length = std::stoul(val); has_syn = true; }
    else if (key == "synthetic_informative") { syn.informative = std::stoul(val); has_syn = true; }
    else if (key == "synthetic_noise_features") { syn.noise_features = std::stoul(val); has_syn = true; }
    else if (key == "synthetic_noise_level") { syn.noise_level = std::stod(val); has_syn = true; }
    else if (key == "synthetic_seed") { syn.seed = std::stoull(val); has_syn = true; }
    else if (key == "synthetic_rule") { syn.rule = val; has_syn = true; }
    else throw IoError("unknown schema key '" + key + "' in " + path);
  }
  if (has_syn) s.synthetic = syn;
  if (!s.synthetic && s.feature_columns.empty()) {
    throw IoError("schema " + path + " lists no feature columns");
  }
  for (const auto& f : s.feature_columns) {
    if (f == s.target_column) {
      throw IoError("schema " + path + ": target column '" + f + "' listed among features");
    }
  }
  return s;
}

void save_schema(const DatasetSchema& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write schema file " + path);
  out << "name=" << s.name << "\n";
  if (!s.feature_columns.empty()) {
    out << "features=";
    for (std::size_t i = 0; i < s.feature_columns.size(); ++i) {
      out << (i ? "," : "") << s.feature_columns[i];
    }
    out << "\n";
  }
  out << "target=" << s.target_column << "\n";
  if (!s.trial_files.empty()) {
    out << "trials=";
    for (std::size_t i = 0; i < s.trial_files.size(); ++i) {
      out << (i ? "," : "") << s.trial_files[i];
    }
    out << "\n";
  }
  out << "n_train=" << s.n_train << "\n";
  out << "n_test=" << s.n_test << "\n";
  if (s.synthetic) {
    const SyntheticSpec& y = *s.synthetic;
    out << "synthetic_trials=" << y.trials << "\n";
    out << "synthetic_length=" << y.length << "\n";
    out << "synthetic_informative=" << y.informative << "\n";
    out << "synthetic_noise_features=" << y.noise_features << "\n";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", y.noise_level);
    out << "synthetic_noise_level=" << buf << "\n";
    out << "synthetic_seed=" << y.seed << "\n";
    out << "synthetic_rule=" << y.rule << "\n";
  }
}

// -- trial files ----------------------------------------------------------------

Trial load_trial_file(const std::string& path, const std::vector<std::string>& feature_columns,
                      const std::string& target_column, std::size_t* dropped) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trial file " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("trial file " + path + " is empty");
  const std::vector<std::string> header = split_csv_line(line);

  auto col_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? static_cast<std::size_t>(-1)
                              : static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t target_col = col_of(target_column);
  if (target_col == static_cast<std::size_t>(-1)) {
    throw IoError("trial file " + path + " lacks target column '" + target_column + "'");
  }
  std::vector<std::size_t> feat_cols;
  for (const auto& f : feature_columns) {
    const std::size_t c = col_of(f);
    if (c == static_cast<std::size_t>(-1)) {
      throw IoError("trial file " + path + " lacks feature column '" + f + "'");
    }
    feat_cols.push_back(c);
  }

  Trial trial;
  trial.name = path;
  trial.target_name = target_column;
  trial.features.resize(feature_columns.size());
  for (std::size_t i = 0; i < feature_columns.size(); ++i) {
    trial.features[i].name = feature_columns[i];
  }

  std::size_t drop_count = 0;
  std::vector<double> row(feature_columns.size());
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    bool ok = true;
    double target = 0.0;
    if (target_col >= cells.size() || !parse_double(cells[target_col], &target)) ok = false;
    for (std::size_t i = 0; ok && i < feat_cols.size(); ++i) {
      if (feat_cols[i] >= cells.size() || !parse_double(cells[feat_cols[i]], &row[i])) ok = false;
    }
    if (!ok) {
      ++drop_count;
      continue;
    }
    for (std::size_t i = 0; i < row.size(); ++i) trial.features[i].values.push_back(row[i]);
    trial.power.push_back(target);
  }
  if (dropped != nullptr) *dropped = drop_count;
  if (trial.power.empty()) {
    throw EmptyTrialError("trial file " + path + " has no parseable data rows");
  }
  return trial;
}

std::vector<Trial> load_trials(const DatasetSchema& schema, const std::string& dir,
                               LoadStats* stats) {
  std::vector<Trial> out;
  for (const auto& file : schema.trial_files) {
    const std::string path = dir.empty() ? file : dir + "/" + file;
    std::size_t dropped = 0;
    out.push_back(load_trial_file(path, schema.feature_columns, schema.target_column, &dropped));
    if (stats != nullptr) {
      stats->dropped_rows += dropped;
      stats->per_file.emplace_back(file, dropped);
    }
  }
  return out;
}

void save_trial(const Trial& trial, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trial file " + path);
  for (std::size_t i = 0; i < trial.features.size(); ++i) {
    out << trial.features[i].name << ",";
  }
  out << trial.target_name << "\n";
  char buf[32];
  for (std::size_t t = 0; t < trial.length(); ++t) {
    for (const auto& f : trial.features) {
      std::snprintf(buf, sizeof buf, "%.17g", f.values[t]);
      out << buf << ",";
    }
    std::snprintf(buf, sizeof buf, "%.17g", trial.power[t]);
    out << buf << "\n";
  }
}

std::pair<std::vector<Trial>, std::vector<Trial>> split_dataset(const std::vector<Trial>& trials,
                                                                std::size_t n_train,
                                                                std::size_t n_test,
                                                                std::uint64_t seed) {
  if (n_train + n_test > trials.size()) {
    throw ConfigError("split_dataset: " + std::to_string(n_train) + "+" +
                      std::to_string(n_test) + " trials requested, only " +
                      std::to_string(trials.size()) + " available");
  }
  std::vector<std::size_t> idx(trials.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 51));
  shuffle_indices(idx, rng);
  std::vector<Trial> train, test;
  for (std::size_t i = 0; i < n_train; ++i) train.push_back(trials[idx[i]]);
  for (std::size_t i = 0; i < n_test; ++i) test.push_back(trials[idx[n_train + i]]);
  return {std::move(train), std::move(test)};
}

// -- synthetic -------------------------------------------------------------------

std::vector<double> synthetic_true_weights(const SyntheticSpec& spec) {
  Rng rng(derive_seed(spec.seed, 9001));
  std::vector<double> w(spec.informative);
  for (std::size_t j = 0; j < w.size(); ++j) {
    w[j] = rng.uniform(0.6, 1.4) * (j % 2 == 0 ? 1.0 : -1.0);
  }
  return w;
}

std::vector<Trial> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.rule != "ar1-linear-v1") {
    throw ConfigError("unknown synthetic rule '" + spec.rule + "'");
  }
  const double phi = 0.9, innovation = 0.4, base_load = 20.0;
  const std::vector<double> w = synthetic_true_weights(spec);

  std::vector<Trial> out;
  for (std::size_t k = 0; k < spec.trials; ++k) {
    Rng rng(derive_seed(spec.seed, 100 + k));
    Trial trial;
    trial.name = "synthetic_" + std::to_string(k);
    const std::size_t M = spec.informative + spec.noise_features;
    trial.features.resize(M);
    for (std::size_t j = 0; j < M; ++j) {
      trial.features[j].name = j < spec.informative
                                   ? "inf_" + std::to_string(j)
                                   : "noise_" + std::to_string(j - spec.informative);
      auto& v = trial.features[j].values;
      v.resize(spec.length);
      v[0] = rng.normal();
      for (std::size_t t = 1; t < spec.length; ++t) {
        v[t] = phi * v[t - 1] + innovation * rng.normal();
      }
    }
    trial.power.resize(spec.length);
    for (std::size_t t = 0; t < spec.length; ++t) {
      double p = base_load;
      for (std::size_t j = 0; j < spec.informative; ++j) {
        p += w[j] * trial.features[j].values[t];
      }
      trial.power[t] = p + spec.noise_level * rng.normal();
    }
    out.push_back(std::move(trial));
  }
  return out;
}

std::vector<Trial> realize_trials(const DatasetSchema& schema, const std::string& dir,
                                  LoadStats* stats) {
  if (schema.synthetic) return generate_synthetic(*schema.synthetic);
  return load_trials(schema, dir, stats);
}

}  // namespace dmh
