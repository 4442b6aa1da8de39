#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dmh/engine.hpp"
#include "dmh/transport.hpp"
#include "dmh/wire.hpp"

namespace dmh {

/// Split learning: heads live on the client, the prediction network on the
/// server. With the same seed, data order, and hyperparameters, one split
/// client reproduces monolithic train() parameter for parameter, because both
/// sides run the same forward/backward code in the same order and the wire
/// carries raw 64-bit floats.
struct SplitConfig {
  DmhMode mode = DmhMode::T;
  HeadKind kind = HeadKind::Mlp;
  std::size_t W = 5;
  std::size_t horizon = 1;
  TrainConfig train;                 // epochs, batch size, lr, balancing, activation
  bool shared_server_model = false;  // one prediction net applied session after session
};

struct SplitClientInput {
  std::vector<Trial> normalized;  // this client's training trials, already normalized
  GroupSpec spec;                 // fitted on the same trials
  std::uint64_t seed = 1;         // model init and shuffle seed, as in monolithic train()
};

struct SplitClientResult {
  std::uint32_t client_id = 0;
  DmhModel model;  // best heads + best server prediction net, assembled for evaluation
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_l0 = 0.0;
  LedgerTotals ledger;
  double ratio = 0.0;  // activation floats per sample over M*W
  bool aborted = false;
  std::string abort_reason;
};

/// Server half of one session: prediction network, its optimizer, and the
/// save-best snapshot. Persists across sessions in shared-model mode.
struct ServerState {
  PredictionNetwork pred;
  PredictionNetwork best;
  std::unique_ptr<AdamOptimizer> opt;
  bool built = false;
  double best_l0 = 0.0;
  std::size_t best_epoch = 0;
  std::vector<double> epoch_l0;
};

/// Serves one client until Close or a protocol error. Handles Init, training
/// and inference Forward, and epoch-boundary Metric markers. Never sees raw
/// feature windows; never ships prediction-network parameters.
void serve_session(Transport& transport, const TrainConfig& cfg, ServerState& state);

/// Client half: local heads, local head losses, server round-trip per batch.
/// The returned model has an empty prediction net; run_split_training fills it
/// from the server's save-best snapshot.
SplitClientResult run_client_session(Transport& transport, const SplitClientInput& input,
                                     const SplitConfig& cfg, std::uint32_t client_id);

/// Local heads forward + server inference round-trip; returns predictions.
std::vector<double> split_predict(Transport& transport, std::vector<HeadNetwork>& heads,
                                  const Batch& batch, std::uint32_t client_id,
                                  std::uint64_t step);

enum class TransportKind { InProcess, Stream };
TransportKind transport_from_string(const std::string& s);
std::string to_string(TransportKind k);

/// One session per client. Per-session server models run concurrently;
/// shared-model mode runs clients one after another against one network.
std::vector<SplitClientResult> run_split_training(const std::vector<SplitClientInput>& clients,
                                                  const SplitConfig& cfg,
                                                  TransportKind transport);

}  // namespace dmh
