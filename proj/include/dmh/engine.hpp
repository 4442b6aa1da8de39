#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmh/adam.hpp"
#include "dmh/autodiff.hpp"
#include "dmh/data.hpp"
#include "dmh/feature.hpp"
#include "dmh/networks.hpp"

namespace dmh {

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 64;
  double lr = 0.1;
  std::uint64_t seed = 1;
  bool balancing = true;
  ActKind hidden_act = ActKind::Sigmoid;
  double multiplier_min = 0.1;
  double multiplier_max = 10.0;
};

/// H heads + 1 prediction network + multiplier state. The group spec inside is
/// reduced (no empty groups), so heads[i] serves spec.groups[i].
struct DmhModel {
  DmhMode mode = DmhMode::T;
  GroupSpec spec;
  std::size_t W = 5;
  std::size_t horizon = 1;
  std::vector<HeadNetwork> heads;
  PredictionNetwork pred;
  std::vector<double> multipliers;  // M_0..M_H, M_0 always 1

  std::size_t head_count() const { return heads.size(); }
  std::vector<Parameter*> all_params();  // heads in group order, then prediction net
};

/// Drops empty groups (H shrinks); appends one note per dropped group.
GroupSpec reduce_spec(const GroupSpec& spec, std::vector<std::string>* warnings = nullptr);

/// Head seeds and the prediction-net seed are derived from `seed`, so one value
/// reproduces the whole model.
DmhModel build_dmh_model(DmhMode mode, HeadKind kind, const GroupSpec& spec, std::size_t W,
                         std::size_t horizon, std::uint64_t seed,
                         ActKind hidden_act = ActKind::Sigmoid);

/// Samples stacked for one optimizer step.
struct Batch {
  std::vector<Tensor> blocks;        // per group (B, n_h, W)
  std::vector<Tensor> head_targets;  // per group (B, n_h)
  Tensor power;                      // (B, 1)
  std::size_t size = 0;
};

Batch make_batch(const std::vector<WindowedSample>& samples,
                 const std::vector<std::size_t>& idx);

/// All windowed samples of all trials, in trial order. The monolithic trainer
/// and the split client both use this, so sample indices agree.
std::vector<WindowedSample> pack_trials(const std::vector<Trial>& trials, const GroupSpec& spec,
                                        std::size_t W, std::size_t horizon);

/// Seeded shuffle then fixed-size chunks (last one may be short). Both the
/// monolithic trainer and the split driver use this, so data order matches.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::size_t epoch, std::uint64_t seed);

struct ForwardResult {
  std::vector<Value> head_outs;  // per head (B, out)
  Value concat = nullptr;        // (B, M) for T, (B, H) for E
  Value prediction = nullptr;    // (B, 1)
};

/// Client half: heads plus the activation concat (what crosses the wire).
ForwardResult forward_heads(Tape& t, std::vector<HeadNetwork>& heads, const Batch& batch);
inline ForwardResult forward_heads(Tape& t, DmhModel& model, const Batch& batch) {
  return forward_heads(t, model.heads, batch);
}
/// Full monolithic forward.
ForwardResult forward_dmh(Tape& t, DmhModel& model, const Batch& batch);

/// Head targets: next-step feature groups (T) or the power label (E).
std::vector<Value> head_losses(Tape& t, DmhMode mode, const std::vector<Value>& head_outs,
                               const Batch& batch);

/// total = M_0 * L_0 + sum_h M_h * L_h; pass l0 = nullptr for the client-local
/// part of the split computation (head losses only).
Value compose_total_loss(Tape& t, Value l0, const std::vector<Value>& heads,
                         const std::vector<double>& multipliers);

double population_std(const std::vector<double>& xs);

/// Plain ordered mean. Trainer and split client share it so epoch means of
/// identical loss sequences agree bit for bit.
double mean_value(const std::vector<double>& xs);

/// M_0 = 1; M_h = clamp(std(prev L_h) / std(prev L_0), lo, hi). Degenerate
/// std(L_0) = 0 yields all-1 multipliers and sets *warned.
std::vector<double> update_multipliers(const std::vector<std::vector<double>>& prev_head,
                                       const std::vector<double>& prev_l0, bool balancing,
                                       double lo = 0.1, double hi = 10.0,
                                       bool* warned = nullptr);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double l0_mean = 0.0;
  std::vector<double> head_means;
  std::vector<double> multipliers;  // M_1..M_H as used this epoch
  double wall_seconds = 0.0;
};

struct TrainResult {
  DmhModel best;  // save-best snapshot
  std::size_t best_epoch = 0;
  double best_l0 = 0.0;
  std::vector<EpochLog> log;
  bool aborted = false;
  std::string abort_reason;
};

/// Trials must already be normalized; losses are in normalized units.
TrainResult train(DmhModel model, const std::vector<Trial>& normalized_trials,
                  const TrainConfig& cfg);

struct Metrics {
  double mae = 0.0;
  double mse = 0.0;
  std::size_t samples = 0;
};

/// Metrics on denormalized power over all windowed samples of all test trials.
Metrics evaluate(DmhModel& model, const std::vector<Trial>& raw_test,
                 const Normalizer& norm);

enum class BaselineKind { BS, FsA, FsS };

BaselineKind baseline_from_string(const std::string& s);

/// Monolithic single-network reference systems. BS/FS-A use every feature;
/// FS-S keeps features with |C| >= 0.2 and refuses to run when none qualify.
struct BaselineResult {
  HeadNetwork net;  // single network, out_dim 1
  std::vector<std::size_t> kept_features;
  Metrics metrics;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_l0 = 0.0;
};

BaselineResult run_baseline(BaselineKind kind, HeadKind net_kind,
                            const std::vector<Trial>& raw_train,
                            const std::vector<Trial>& raw_test,
                            const std::vector<double>& coefficients, std::size_t W,
                            std::size_t horizon, const TrainConfig& cfg);

struct Checkpoint {
  DmhModel model;
  Normalizer normalizer;
  std::size_t epoch = 0;
  double monitored = 0.0;
};

void save_checkpoint(const std::string& path, const DmhModel& model, const Normalizer& norm,
                     std::size_t epoch, double monitored);
Checkpoint load_checkpoint(const std::string& path);

/// One delimited line per epoch: epoch, L_0, L_1..L_H, M_1..M_H, seconds.
void write_run_log(const std::string& path, const std::vector<EpochLog>& log);

}  // namespace dmh
