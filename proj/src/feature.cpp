#include "dmh/feature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dmh {

std::optional<double> pearson_correlation(const std::vector<double>& f,
                                          const std::vector<double>& p) {
  if (f.size() != p.size()) {
    throw DimensionError("pearson_correlation: series lengths " + std::to_string(f.size()) +
                         " vs " + std::to_string(p.size()));
  }
  const std::size_t n = f.size();
  if (n < 2) throw DimensionError("pearson_correlation: need at least 2 points");
  double mf = 0.0, mp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mf += f[i];
    mp += p[i];
  }
  mf /= static_cast<double>(n);
  mp /= static_cast<double>(n);
  double sff = 0.0, spp = 0.0, sfp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double df = f[i] - mf, dp = p[i] - mp;
    sff += df * df;
    spp += dp * dp;
    sfp += df * dp;
  }
  if (sff == 0.0 || spp == 0.0) return std::nullopt;
  return sfp / std::sqrt(sff * spp);
}

std::vector<std::optional<double>> correlations_to_power(const std::vector<Trial>& trials) {
  if (trials.empty()) throw ConfigError("correlations_to_power: no trials");
  const std::size_t M = trials[0].feature_count();
  for (const Trial& t : trials) {
    if (t.feature_count() != M) {
      throw DimensionError("correlations_to_power: trial '" + t.name + "' has " +
                           std::to_string(t.feature_count()) + " features, expected " +
                           std::to_string(M));
    }
  }
  std::vector<double> power;
  for (const Trial& t : trials) power.insert(power.end(), t.power.begin(), t.power.end());
  std::vector<std::optional<double>> out(M);
  std::vector<double> series;
  for (std::size_t m = 0; m < M; ++m) {
    series.clear();
    for (const Trial& t : trials) {
      series.insert(series.end(), t.features[m].values.begin(), t.features[m].values.end());
    }
    out[m] = pearson_correlation(series, power);
  }
  return out;
}

// -- grouping --------------------------------------------------------------------

std::vector<double> default_thresholds() { return {0.0, 0.05, 0.20, 1.0}; }

std::vector<std::size_t> GroupSpec::sizes() const {
  std::vector<std::size_t> n(groups.size());
  for (std::size_t h = 0; h < groups.size(); ++h) n[h] = groups[h].size();
  return n;
}

void GroupSpec::validate() const {
  if (thresholds.size() < 2 || thresholds.size() != groups.size() + 1) {
    throw ConfigError("GroupSpec: " + std::to_string(thresholds.size()) + " thresholds for " +
                      std::to_string(groups.size()) + " groups");
  }
  if (thresholds.front() != 0.0 || thresholds.back() != 1.0) {
    throw ConfigError("GroupSpec: thresholds must start at 0 and end at 1");
  }
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > thresholds[i - 1])) {
      throw ConfigError("GroupSpec: thresholds not strictly increasing");
    }
  }
  std::vector<bool> seen(feature_count(), false);
  for (const auto& g : groups) {
    for (std::size_t m : g) {
      if (m >= seen.size() || seen[m]) {
        throw ConfigError("GroupSpec: feature " + std::to_string(m) +
                          " missing or assigned twice");
      }
      seen[m] = true;
    }
  }
  for (std::size_t m = 0; m < seen.size(); ++m) {
    if (!seen[m]) throw ConfigError("GroupSpec: feature " + std::to_string(m) + " unassigned");
  }
}

GroupSpec group_features(const std::vector<double>& coefficients,
                         const std::vector<double>& thresholds, GroupingMode mode) {
  GroupSpec spec;
  spec.thresholds = thresholds;
  spec.coefficients = coefficients;
  spec.mode = mode;
  const std::size_t H = thresholds.size() - 1;
  spec.groups.assign(H, {});
  for (std::size_t m = 0; m < coefficients.size(); ++m) {
    const double c = coefficients[m];
    const double key = mode == GroupingMode::Absolute ? std::fabs(c) : c;
    std::size_t h = 0;  // negatives (signed mode) fall through to group 1
    if (key >= thresholds.back()) {
      h = H - 1;  // key = 1 closes the top half-open interval
    } else {
      for (std::size_t i = 1; i <= H; ++i) {
        if (key < thresholds[i]) {
          h = i - 1;
          break;
        }
      }
    }
    spec.groups[h].push_back(m);
  }
  spec.validate();
  return spec;
}

void save_group_spec(const GroupSpec& spec, const std::vector<std::string>& feature_names,
                     const std::string& path) {
  spec.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write group spec " + path);
  char buf[32];
  out << "thresholds=";
  for (std::size_t i = 0; i < spec.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", spec.thresholds[i]);
    out << (i ? "," : "") << buf;
  }
  out << "\nmode=" << (spec.mode == GroupingMode::Absolute ? "absolute" : "signed") << "\n";
  out << "groups=" << spec.group_count() << "\n";
  std::vector<std::size_t> group_of(spec.feature_count());
  for (std::size_t h = 0; h < spec.groups.size(); ++h) {
    for (std::size_t m : spec.groups[h]) group_of[m] = h + 1;
  }
  for (std::size_t m = 0; m < spec.feature_count(); ++m) {
    const std::string name =
        m < feature_names.size() ? feature_names[m] : "f" + std::to_string(m);
    std::snprintf(buf, sizeof buf, "%.17g", spec.coefficients[m]);
    out << "feature=" << name << " " << buf << " " << group_of[m] << "\n";
  }
}

GroupSpec load_group_spec(const std::string& path, std::vector<std::string>* feature_names) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open group spec " + path);
  GroupSpec spec;
  std::vector<std::size_t> group_of;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw IoError("group spec line without '=': " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "thresholds") {
      std::stringstream ss(val);
      std::string tok;
      while (std::getline(ss, tok, ',')) spec.thresholds.push_back(std::stod(tok));
    } else if (key == "mode") {
      spec.mode = val == "signed" ? GroupingMode::Signed : GroupingMode::Absolute;
    } else if (key == "groups") {
      spec.groups.assign(std::stoul(val), {});
    } else if (key == "feature") {
      std::stringstream ss(val);
      std::string name;
      double coeff = 0.0;
      std::size_t group = 0;
      if (!(ss >> name >> coeff >> group) || group == 0 || group > spec.groups.size()) {
        throw IoError("bad feature line in " + path + ": " + line);
      }
      if (feature_names != nullptr) feature_names->push_back(name);
      spec.coefficients.push_back(coeff);
      group_of.push_back(group - 1);
    } else {
      throw IoError("unknown group spec key '" + key + "' in " + path);
    }
  }
  for (std::size_t m = 0; m < group_of.size(); ++m) spec.groups[group_of[m]].push_back(m);
  spec.validate();
  return spec;
}

// -- normalizer --------------------------------------------------------------------

namespace {

double minmax_apply(double x, double lo, double hi) {
  if (hi == lo) return 0.5;
  return (x - lo) / (hi - lo);
}

double minmax_invert(double y, double lo, double hi) {
  if (hi == lo) return lo;
  return lo + y * (hi - lo);
}

}  // namespace

double Normalizer::apply_feature(std::size_t m, double x) const {
  return minmax_apply(x, feat_min.at(m), feat_max.at(m));
}
double Normalizer::invert_feature(std::size_t m, double y) const {
  return minmax_invert(y, feat_min.at(m), feat_max.at(m));
}
double Normalizer::apply_power(double x) const { return minmax_apply(x, power_min, power_max); }
double Normalizer::invert_power(double y) const { return minmax_invert(y, power_min, power_max); }

Trial Normalizer::apply(const Trial& trial) const {
  if (trial.feature_count() != feat_min.size()) {
    throw DimensionError("Normalizer: fitted on " + std::to_string(feat_min.size()) +
                         " features, trial has " + std::to_string(trial.feature_count()));
  }
  Trial out = trial;
  for (std::size_t m = 0; m < out.features.size(); ++m) {
    for (double& v : out.features[m].values) v = apply_feature(m, v);
  }
  for (double& v : out.power) v = apply_power(v);
  return out;
}

Normalizer fit_normalizer(const std::vector<Trial>& training) {
  if (training.empty()) throw ConfigError("fit_normalizer: no training trials");
  const std::size_t M = training[0].feature_count();
  Normalizer n;
  n.feat_min.assign(M, 0.0);
  n.feat_max.assign(M, 0.0);
  for (const Trial& t : training) {
    if (t.feature_count() != M) {
      throw DimensionError("fit_normalizer: inconsistent feature counts across trials");
    }
  }
  for (std::size_t m = 0; m < M; ++m) {
    bool seeded = false;
    for (const Trial& t : training) {
      for (double v : t.features[m].values) {
        if (!seeded) {
          n.feat_min[m] = n.feat_max[m] = v;
          seeded = true;
        } else {
          n.feat_min[m] = std::min(n.feat_min[m], v);
          n.feat_max[m] = std::max(n.feat_max[m], v);
        }
      }
    }
    if (!seeded) throw EmptyTrialError("fit_normalizer: feature " + std::to_string(m) +
                                       " has no values");
  }
  bool seeded = false;
  for (const Trial& t : training) {
    for (double v : t.power) {
      if (!seeded) {
        n.power_min = n.power_max = v;
        seeded = true;
      } else {
        n.power_min = std::min(n.power_min, v);
        n.power_max = std::max(n.power_max, v);
      }
    }
  }
  if (!seeded) throw EmptyTrialError("fit_normalizer: no power values in training trials");
  return n;
}

// -- windows ---------------------------------------------------------------------

std::vector<WindowedSample> pack_windows(const Trial& trial, const GroupSpec& spec,
                                         std::size_t W, std::size_t horizon) {
  spec.validate();
  if (W < 1 || horizon < 1) throw ConfigError("pack_windows: W and horizon must be >= 1");
  if (trial.feature_count() != spec.feature_count()) {
    throw DimensionError("pack_windows: trial has " + std::to_string(trial.feature_count()) +
                         " features, spec describes " + std::to_string(spec.feature_count()));
  }
  const std::size_t N = trial.length();
  if (N < W + horizon) {
    throw EmptyTrialError("pack_windows: trial '" + trial.name + "' length " +
                          std::to_string(N) + " < W + horizon = " +
                          std::to_string(W + horizon));
  }
  std::vector<WindowedSample> out;
  out.reserve(N - W - horizon + 1);
  for (std::size_t t = W + horizon - 1; t < N; ++t) {
    WindowedSample s;
    s.target_time = t;
    s.power_target = trial.power[t];
    const std::size_t start = t + 1 - horizon - W;  // window covers start .. t-horizon
    for (const auto& group : spec.groups) {
      Tensor block({group.size(), W});
      Tensor target({group.size()});
      for (std::size_t i = 0; i < group.size(); ++i) {
        const auto& v = trial.features[group[i]].values;
        for (std::size_t w = 0; w < W; ++w) block.at2(i, w) = v[start + w];
        target[i] = v[t];
      }
      s.blocks.push_back(std::move(block));
      s.head_targets.push_back(std::move(target));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dmh
