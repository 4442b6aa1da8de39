#include "dmh/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dmh/binio.hpp"
#include "dmh/rng.hpp"

namespace dmh {

namespace {

constexpr char kCheckpointMagic[4] = {'D', 'M', 'H', 'K'};
constexpr std::uint8_t kCheckpointVersion = 1;

struct BestTracker {
  double best = std::numeric_limits<double>::infinity();
  bool update(double v) {
    if (v < best) {
      best = v;
      return true;
    }
    return false;
  }
};

}  // namespace

double mean_value(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

std::vector<Parameter*> DmhModel::all_params() {
  std::vector<Parameter*> out;
  for (auto& h : heads) {
    for (auto& p : h.params) out.push_back(&p);
  }
  for (auto& p : pred.params) out.push_back(&p);
  return out;
}

GroupSpec reduce_spec(const GroupSpec& spec, std::vector<std::string>* warnings) {
  GroupSpec out;
  out.coefficients = spec.coefficients;
  out.mode = spec.mode;
  out.thresholds.push_back(spec.thresholds.front());
  for (std::size_t h = 0; h < spec.groups.size(); ++h) {
    if (spec.groups[h].empty()) {
      if (warnings != nullptr) {
        warnings->push_back("group " + std::to_string(h + 1) +
                            " is empty and was dropped (H reduced)");
      }
      continue;
    }
    out.groups.push_back(spec.groups[h]);
    out.thresholds.push_back(spec.thresholds[h + 1]);
  }
  if (out.groups.empty()) throw ConfigError("reduce_spec: every group is empty");
  // if the top group was dropped, the surviving upper bound must close at 1
  out.thresholds.back() = 1.0;
  out.validate();
  return out;
}

DmhModel build_dmh_model(DmhMode mode, HeadKind kind, const GroupSpec& spec, std::size_t W,
                         std::size_t horizon, std::uint64_t seed, ActKind hidden_act) {
  DmhModel model;
  model.mode = mode;
  model.spec = reduce_spec(spec);
  model.W = W;
  model.horizon = horizon;
  const std::size_t H = model.spec.group_count();
  for (std::size_t h = 0; h < H; ++h) {
    model.heads.push_back(build_head(kind, model.spec.groups[h].size(), W, mode,
                                     derive_seed(seed, 10 + h), hidden_act, h + 1));
  }
  std::size_t input_dim = 0;
  for (const auto& head : model.heads) input_dim += head.out_dim;
  model.pred = build_prediction_network(input_dim, derive_seed(seed, 5), hidden_act);
  model.multipliers.assign(H + 1, 1.0);
  return model;
}

Batch make_batch(const std::vector<WindowedSample>& samples,
                 const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw ConfigError("make_batch: empty index set");
  const WindowedSample& first = samples.at(idx[0]);
  const std::size_t H = first.blocks.size();
  const std::size_t B = idx.size();
  Batch batch;
  batch.size = B;
  batch.power = Tensor({B, 1});
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t n_h = first.blocks[h].dim(0);
    const std::size_t W = first.blocks[h].dim(1);
    batch.blocks.emplace_back(Shape{B, n_h, W});
    batch.head_targets.emplace_back(Shape{B, n_h});
  }
  for (std::size_t b = 0; b < B; ++b) {
    const WindowedSample& s = samples.at(idx[b]);
    batch.power.at2(b, 0) = s.power_target;
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t n_h = s.blocks[h].dim(0);
      const std::size_t W = s.blocks[h].dim(1);
      for (std::size_t i = 0; i < n_h; ++i) {
        for (std::size_t w = 0; w < W; ++w) {
          batch.blocks[h].at3(b, i, w) = s.blocks[h].at2(i, w);
        }
        batch.head_targets[h].at2(b, i) = s.head_targets[h][i];
      }
    }
  }
  return batch;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::size_t epoch, std::uint64_t seed) {
  if (n == 0) throw ConfigError("epoch_batches: no samples");
  if (batch_size == 0) throw ConfigError("epoch_batches: batch_size must be >= 1");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 7000 + epoch));
  shuffle_indices(idx, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t at = 0; at < n; at += batch_size) {
    const std::size_t end = std::min(n, at + batch_size);
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(at),
                     idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

ForwardResult forward_heads(Tape& t, std::vector<HeadNetwork>& heads, const Batch& batch) {
  if (batch.blocks.size() != heads.size()) {
    throw DimensionError("forward_heads: batch has " + std::to_string(batch.blocks.size()) +
                         " groups, model has " + std::to_string(heads.size()));
  }
  ForwardResult r;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    r.head_outs.push_back(head_forward(t, heads[h], t.leaf(batch.blocks[h])));
  }
  r.concat = concat_cols(t, r.head_outs);
  return r;
}

ForwardResult forward_dmh(Tape& t, DmhModel& model, const Batch& batch) {
  ForwardResult r = forward_heads(t, model, batch);
  r.prediction = prediction_forward(t, model.pred, r.concat);
  return r;
}

std::vector<Value> head_losses(Tape& t, DmhMode mode, const std::vector<Value>& head_outs,
                               const Batch& batch) {
  std::vector<Value> losses;
  for (std::size_t h = 0; h < head_outs.size(); ++h) {
    losses.push_back(mode == DmhMode::T ? l1_loss(t, head_outs[h], batch.head_targets[h])
                                        : l1_loss(t, head_outs[h], batch.power));
  }
  return losses;
}

Value compose_total_loss(Tape& t, Value l0, const std::vector<Value>& heads,
                         const std::vector<double>& multipliers) {
  if (multipliers.size() != heads.size() + 1) {
    throw ConfigError("compose_total_loss: " + std::to_string(multipliers.size()) +
                      " multipliers for " + std::to_string(heads.size()) + " head losses");
  }
  Value total = nullptr;
  if (l0 != nullptr) total = scale(t, l0, multipliers[0]);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    Value term = scale(t, heads[h], multipliers[h + 1]);
    total = total == nullptr ? term : add(t, total, term);
  }
  if (total == nullptr) throw ConfigError("compose_total_loss: nothing to sum");
  return total;
}

double population_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_value(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

std::vector<double> update_multipliers(const std::vector<std::vector<double>>& prev_head,
                                       const std::vector<double>& prev_l0, bool balancing,
                                       double lo, double hi, bool* warned) {
  std::vector<double> m(prev_head.size() + 1, 1.0);
  if (!balancing) return m;
  const double s0 = population_std(prev_l0);
  if (s0 == 0.0) {
    if (warned != nullptr) *warned = true;
    return m;  // degenerate denominator: keep every multiplier at 1
  }
  for (std::size_t h = 0; h < prev_head.size(); ++h) {
    m[h + 1] = std::clamp(population_std(prev_head[h]) / s0, lo, hi);
  }
  return m;
}

// -- training ---------------------------------------------------------------------

std::vector<WindowedSample> pack_trials(const std::vector<Trial>& trials, const GroupSpec& spec,
                                        std::size_t W, std::size_t horizon) {
  std::vector<WindowedSample> samples;
  for (const Trial& t : trials) {
    auto s = pack_windows(t, spec, W, horizon);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()),
                   std::make_move_iterator(s.end()));
  }
  if (samples.empty()) throw EmptyTrialError("no windowed samples in the given trials");
  return samples;
}

TrainResult train(DmhModel model, const std::vector<Trial>& normalized_trials,
                  const TrainConfig& cfg) {
  auto samples = pack_trials(normalized_trials, model.spec, model.W, model.horizon);
  const std::size_t H = model.head_count();

  AdamOptimizer opt(model.all_params(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  TrainResult result;
  result.best = model;
  BestTracker best;

  std::vector<std::vector<double>> prev_head(H);
  std::vector<double> prev_l0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    model.multipliers = epoch == 1 ? std::vector<double>(H + 1, 1.0)
                                   : update_multipliers(prev_head, prev_l0, cfg.balancing,
                                                        cfg.multiplier_min, cfg.multiplier_max);

    std::vector<std::vector<double>> epoch_head(H);
    std::vector<double> epoch_l0;
    for (const auto& idx : epoch_batches(samples.size(), cfg.batch_size, epoch, cfg.seed)) {
      Batch batch = make_batch(samples, idx);
      Tape tape;
      ForwardResult fwd = forward_dmh(tape, model, batch);
      Value l0 = l1_loss(tape, fwd.prediction, batch.power);
      std::vector<Value> lh = head_losses(tape, model.mode, fwd.head_outs, batch);
      Value total = compose_total_loss(tape, l0, lh, model.multipliers);
      if (!std::isfinite(total->value[0])) {
        result.aborted = true;
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
        break;
      }
      tape.backward(total);
      try {
        opt.step();
      } catch (const NonFiniteError& e) {
        result.aborted = true;
        result.abort_reason = std::string(e.what()) + " at epoch " + std::to_string(epoch);
        break;
      }
      epoch_l0.push_back(l0->value[0]);
      for (std::size_t h = 0; h < H; ++h) epoch_head[h].push_back(lh[h]->value[0]);
    }
    if (result.aborted) break;

    EpochLog log;
    log.epoch = epoch;
    log.l0_mean = mean_value(epoch_l0);
    for (std::size_t h = 0; h < H; ++h) log.head_means.push_back(mean_value(epoch_head[h]));
    log.multipliers.assign(model.multipliers.begin() + 1, model.multipliers.end());
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(std::move(log));

    if (best.update(result.log.back().l0_mean)) {
      result.best = model;
      result.best_epoch = epoch;
      result.best_l0 = best.best;
    }
    prev_head = std::move(epoch_head);
    prev_l0 = std::move(epoch_l0);
  }
  return result;
}

Metrics evaluate(DmhModel& model, const std::vector<Trial>& raw_test, const Normalizer& norm) {
  if (raw_test.empty()) throw EmptyTrialError("evaluate: empty test set");
  Metrics m;
  double abs_sum = 0.0, sq_sum = 0.0;
  for (const Trial& raw : raw_test) {
    std::vector<WindowedSample> samples;
    try {
      samples = pack_windows(norm.apply(raw), model.spec, model.W, model.horizon);
    } catch (const EmptyTrialError&) {
      continue;  // trial shorter than one window; nothing to score
    }
    constexpr std::size_t kEvalBatch = 256;
    for (std::size_t at = 0; at < samples.size(); at += kEvalBatch) {
      std::vector<std::size_t> idx;
      for (std::size_t i = at; i < std::min(samples.size(), at + kEvalBatch); ++i) {
        idx.push_back(i);
      }
      Batch batch = make_batch(samples, idx);
      Tape tape;
      ForwardResult fwd = forward_dmh(tape, model, batch);
      for (std::size_t b = 0; b < batch.size; ++b) {
        const double pred = norm.invert_power(fwd.prediction->value[b]);
        const double truth = norm.invert_power(batch.power.at2(b, 0));
        abs_sum += std::fabs(pred - truth);
        sq_sum += (pred - truth) * (pred - truth);
      }
      m.samples += batch.size;
    }
  }
  if (m.samples == 0) throw EmptyTrialError("evaluate: no windowed samples in the test set");
  m.mae = abs_sum / static_cast<double>(m.samples);
  m.mse = sq_sum / static_cast<double>(m.samples);
  return m;
}

// -- baselines --------------------------------------------------------------------

BaselineKind baseline_from_string(const std::string& s) {
  if (s == "BS" || s == "bs") return BaselineKind::BS;
  if (s == "FS-A" || s == "fs-a" || s == "fsa") return BaselineKind::FsA;
  if (s == "FS-S" || s == "fs-s" || s == "fss") return BaselineKind::FsS;
  throw ConfigError("unknown baseline '" + s + "'");
}

namespace {

Trial filter_features(const Trial& t, const std::vector<std::size_t>& kept) {
  Trial out;
  out.name = t.name;
  out.target_name = t.target_name;
  out.power = t.power;
  for (std::size_t m : kept) out.features.push_back(t.features[m]);
  return out;
}

}  // namespace

BaselineResult run_baseline(BaselineKind kind, HeadKind net_kind,
                            const std::vector<Trial>& raw_train,
                            const std::vector<Trial>& raw_test,
                            const std::vector<double>& coefficients, std::size_t W,
                            std::size_t horizon, const TrainConfig& cfg) {
  if (raw_train.empty()) throw ConfigError("run_baseline: no training trials");
  const std::size_t M = raw_train[0].feature_count();
  if (coefficients.size() != M) {
    throw ConfigError("run_baseline: " + std::to_string(coefficients.size()) +
                      " coefficients for " + std::to_string(M) + " features");
  }

  if (kind == BaselineKind::FsA) net_kind = HeadKind::Lstm;  // FS-A is the recurrent reference

  BaselineResult result;
  if (kind == BaselineKind::FsS) {
    for (std::size_t m = 0; m < M; ++m) {
      if (std::fabs(coefficients[m]) >= 0.2) result.kept_features.push_back(m);
    }
    if (result.kept_features.empty()) {
      throw ConfigError("FS-S: no feature has |C| >= 0.2");
    }
  } else {
    for (std::size_t m = 0; m < M; ++m) result.kept_features.push_back(m);
  }

  std::vector<Trial> train_trials, test_trials;
  for (const Trial& t : raw_train) train_trials.push_back(filter_features(t, result.kept_features));
  for (const Trial& t : raw_test) test_trials.push_back(filter_features(t, result.kept_features));

  // one flat group holding every kept feature; the net is a single mode-E head
  std::vector<double> flat_coeffs;
  for (std::size_t m : result.kept_features) flat_coeffs.push_back(coefficients[m]);
  GroupSpec spec;
  spec.thresholds = {0.0, 1.0};
  spec.groups.push_back({});
  for (std::size_t i = 0; i < result.kept_features.size(); ++i) spec.groups[0].push_back(i);
  spec.coefficients = flat_coeffs;
  spec.validate();

  const Normalizer norm = fit_normalizer(train_trials);
  std::vector<Trial> normalized;
  for (const Trial& t : train_trials) normalized.push_back(norm.apply(t));
  auto samples = pack_trials(normalized, spec, W, horizon);

  result.net = build_head(net_kind, result.kept_features.size(), W, DmhMode::E,
                          derive_seed(cfg.seed, 10), cfg.hidden_act, 1);
  AdamOptimizer opt(result.net.param_ptrs(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  BestTracker best;
  HeadNetwork best_net = result.net;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> losses;
    for (const auto& idx : epoch_batches(samples.size(), cfg.batch_size, epoch, cfg.seed)) {
      Batch batch = make_batch(samples, idx);
      Tape tape;
      Value out = head_forward(tape, result.net, tape.leaf(batch.blocks[0]));
      Value loss = l1_loss(tape, out, batch.power);
      if (!std::isfinite(loss->value[0])) {
        throw NonFiniteError("baseline: non-finite loss at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      opt.step();
      losses.push_back(loss->value[0]);
    }
    EpochLog log;
    log.epoch = epoch;
    log.l0_mean = mean_value(losses);
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(std::move(log));
    if (best.update(result.log.back().l0_mean)) {
      best_net = result.net;
      result.best_epoch = epoch;
      result.best_l0 = best.best;
    }
  }
  result.net = std::move(best_net);

  // evaluate the snapshot on denormalized power, same contract as evaluate()
  if (!test_trials.empty()) {
    double abs_sum = 0.0, sq_sum = 0.0;
    std::size_t count = 0;
    for (const Trial& raw : test_trials) {
      std::vector<WindowedSample> test_samples;
      try {
        test_samples = pack_windows(norm.apply(raw), spec, W, horizon);
      } catch (const EmptyTrialError&) {
        continue;
      }
      constexpr std::size_t kEvalBatch = 256;
      for (std::size_t at = 0; at < test_samples.size(); at += kEvalBatch) {
        std::vector<std::size_t> idx;
        for (std::size_t i = at; i < std::min(test_samples.size(), at + kEvalBatch); ++i) {
          idx.push_back(i);
        }
        Batch batch = make_batch(test_samples, idx);
        Tape tape;
        Value out = head_forward(tape, result.net, tape.leaf(batch.blocks[0]));
        for (std::size_t b = 0; b < batch.size; ++b) {
          const double pred = norm.invert_power(out->value[b]);
          const double truth = norm.invert_power(batch.power.at2(b, 0));
          abs_sum += std::fabs(pred - truth);
          sq_sum += (pred - truth) * (pred - truth);
        }
        count += batch.size;
      }
    }
    if (count == 0) throw EmptyTrialError("run_baseline: no windowed samples in the test set");
    result.metrics.samples = count;
    result.metrics.mae = abs_sum / static_cast<double>(count);
    result.metrics.mse = sq_sum / static_cast<double>(count);
  }
  return result;
}

// -- checkpoint files ---------------------------------------------------------------

namespace {

void write_group_spec(std::ostream& out, const GroupSpec& spec) {
  io::write_u32(out, static_cast<std::uint32_t>(spec.thresholds.size()));
  for (double t : spec.thresholds) io::write_f64(out, t);
  io::write_u32(out, static_cast<std::uint32_t>(spec.groups.size()));
  for (const auto& g : spec.groups) {
    io::write_u32(out, static_cast<std::uint32_t>(g.size()));
    for (std::size_t m : g) io::write_u32(out, static_cast<std::uint32_t>(m));
  }
  io::write_u32(out, static_cast<std::uint32_t>(spec.coefficients.size()));
  for (double c : spec.coefficients) io::write_f64(out, c);
  io::write_u8(out, spec.mode == GroupingMode::Absolute ? 0 : 1);
}

GroupSpec read_group_spec(std::istream& in) {
  GroupSpec spec;
  const std::uint32_t nt = io::read_u32(in);
  for (std::uint32_t i = 0; i < nt; ++i) spec.thresholds.push_back(io::read_f64(in));
  const std::uint32_t ng = io::read_u32(in);
  for (std::uint32_t g = 0; g < ng; ++g) {
    std::vector<std::size_t> group(io::read_u32(in));
    for (auto& m : group) m = io::read_u32(in);
    spec.groups.push_back(std::move(group));
  }
  const std::uint32_t nc = io::read_u32(in);
  for (std::uint32_t i = 0; i < nc; ++i) spec.coefficients.push_back(io::read_f64(in));
  spec.mode = io::read_u8(in) == 0 ? GroupingMode::Absolute : GroupingMode::Signed;
  spec.validate();
  return spec;
}

void write_normalizer(std::ostream& out, const Normalizer& n) {
  io::write_u32(out, static_cast<std::uint32_t>(n.feat_min.size()));
  for (std::size_t m = 0; m < n.feat_min.size(); ++m) {
    io::write_f64(out, n.feat_min[m]);
    io::write_f64(out, n.feat_max[m]);
  }
  io::write_f64(out, n.power_min);
  io::write_f64(out, n.power_max);
}

Normalizer read_normalizer(std::istream& in) {
  Normalizer n;
  const std::uint32_t M = io::read_u32(in);
  n.feat_min.resize(M);
  n.feat_max.resize(M);
  for (std::uint32_t m = 0; m < M; ++m) {
    n.feat_min[m] = io::read_f64(in);
    n.feat_max[m] = io::read_f64(in);
  }
  n.power_min = io::read_f64(in);
  n.power_max = io::read_f64(in);
  return n;
}

}  // namespace

void save_checkpoint(const std::string& path, const DmhModel& model, const Normalizer& norm,
                     std::size_t epoch, double monitored) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, 4);
  io::write_u8(out, kCheckpointVersion);
  io::write_u8(out, static_cast<std::uint8_t>(model.mode));
  io::write_u32(out, static_cast<std::uint32_t>(model.W));
  io::write_u32(out, static_cast<std::uint32_t>(model.horizon));
  write_group_spec(out, model.spec);
  write_normalizer(out, norm);
  io::write_u32(out, static_cast<std::uint32_t>(model.multipliers.size()));
  for (double m : model.multipliers) io::write_f64(out, m);
  io::write_u64(out, epoch);
  io::write_f64(out, monitored);
  io::write_u32(out, static_cast<std::uint32_t>(model.heads.size()));
  for (const auto& h : model.heads) save_head(out, h);
  save_prediction(out, model.pred);
  if (!out) throw IoError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || magic[0] != 'D' || magic[1] != 'M' || magic[2] != 'H' ||
      magic[3] != 'K') {
    throw IoError(path + " is not a model checkpoint (bad magic)");
  }
  if (io::read_u8(in) != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version in " + path);
  }
  Checkpoint ck;
  ck.model.mode = static_cast<DmhMode>(io::read_u8(in));
  ck.model.W = io::read_u32(in);
  ck.model.horizon = io::read_u32(in);
  ck.model.spec = read_group_spec(in);
  ck.normalizer = read_normalizer(in);
  const std::uint32_t nm = io::read_u32(in);
  for (std::uint32_t i = 0; i < nm; ++i) ck.model.multipliers.push_back(io::read_f64(in));
  ck.epoch = io::read_u64(in);
  ck.monitored = io::read_f64(in);
  const std::uint32_t nh = io::read_u32(in);
  for (std::uint32_t h = 0; h < nh; ++h) ck.model.heads.push_back(load_head(in));
  ck.model.pred = load_prediction(in);
  return ck;
}

void write_run_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write run log " + path);
  std::size_t H = 0;
  for (const auto& e : log) H = std::max(H, e.head_means.size());
  out << "epoch,l0";
  for (std::size_t h = 1; h <= H; ++h) out << ",l" << h;
  for (std::size_t h = 1; h <= H; ++h) out << ",m" << h;
  out << ",seconds\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    out << "," << buf;
  };
  for (const auto& e : log) {
    out << e.epoch;
    put(e.l0_mean);
    for (std::size_t h = 0; h < H; ++h) put(h < e.head_means.size() ? e.head_means[h] : 0.0);
    for (std::size_t h = 0; h < H; ++h) put(h < e.multipliers.size() ? e.multipliers[h] : 1.0);
    put(e.wall_seconds);
    out << "\n";
  }
}

}  // namespace dmh
