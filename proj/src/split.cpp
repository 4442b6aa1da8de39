#include "dmh/split.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "dmh/rng.hpp"

namespace dmh {

namespace {

// Init payload layout; the seed rides as two u32 halves so it survives the
// double-only payload without precision loss.
constexpr std::size_t kInitFloats = 7;

struct InitFields {
  DmhMode mode;
  std::size_t activation_dim;
  std::size_t W;
  std::size_t M;
  bool training;
  std::uint64_t seed;
};

std::vector<double> pack_init(const InitFields& f) {
  return {static_cast<double>(static_cast<std::uint8_t>(f.mode)),
          static_cast<double>(f.activation_dim),
          static_cast<double>(f.W),
          static_cast<double>(f.M),
          f.training ? 1.0 : 0.0,
          static_cast<double>(static_cast<std::uint32_t>(f.seed)),
          static_cast<double>(static_cast<std::uint32_t>(f.seed >> 32))};
}

InitFields unpack_init(const std::vector<double>& p) {
  if (p.size() != kInitFloats) {
    throw WireError("init payload has " + std::to_string(p.size()) + " floats, expected " +
                    std::to_string(kInitFloats));
  }
  InitFields f;
  f.mode = p[0] == 0.0 ? DmhMode::T : DmhMode::E;
  f.activation_dim = static_cast<std::size_t>(p[1]);
  f.W = static_cast<std::size_t>(p[2]);
  f.M = static_cast<std::size_t>(p[3]);
  f.training = p[4] != 0.0;
  f.seed = static_cast<std::uint64_t>(p[5]) |
           (static_cast<std::uint64_t>(p[6]) << 32);
  return f;
}

WireMessage reply(MsgType type, std::uint32_t client_id, std::uint64_t step,
                  std::vector<double> payload = {}) {
  WireMessage m;
  m.type = type;
  m.client_id = client_id;
  m.step = step;
  m.payload = std::move(payload);
  return m;
}

}  // namespace

void serve_session(Transport& transport, const TrainConfig& cfg, ServerState& state) {
  std::size_t A = 0;
  bool training = true;
  try {
    for (;;) {
      WireMessage msg = transport.receive();
      switch (msg.type) {
        case MsgType::Init: {
          InitFields f = unpack_init(msg.payload);
          if (f.activation_dim == 0) {
            transport.send(reply(MsgType::Close, msg.client_id, msg.step));
            return;
          }
          A = f.activation_dim;
          training = f.training;
          if (!state.built) {
            state.pred =
                build_prediction_network(A, derive_seed(f.seed, 5), cfg.hidden_act);
            state.opt = std::make_unique<AdamOptimizer>(
                state.pred.param_ptrs(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
            state.built = true;
          } else if (state.pred.input_dim != A) {
            transport.send(reply(MsgType::Close, msg.client_id, msg.step));
            return;
          }
          // save-best tracking restarts per session
          state.best = state.pred;
          state.best_l0 = std::numeric_limits<double>::infinity();
          state.best_epoch = 0;
          state.epoch_l0.clear();
          transport.send(reply(MsgType::Init, msg.client_id, msg.step));
          break;
        }
        case MsgType::Forward: {
          if (A == 0 || !state.built) {  // this session has not introduced itself
            transport.send(reply(MsgType::Close, msg.client_id, msg.step));
            return;
          }
          if (training) {
            if (msg.payload.empty() || msg.payload.size() % (A + 1) != 0) {
              transport.send(reply(MsgType::Close, msg.client_id, msg.step));
              return;
            }
            const std::size_t B = msg.payload.size() / (A + 1);
            Tensor acts({B, A},
                        std::vector<double>(msg.payload.begin(),
                                            msg.payload.begin() + static_cast<long>(B * A)));
            Tensor labels({B, 1},
                          std::vector<double>(msg.payload.begin() + static_cast<long>(B * A),
                                              msg.payload.end()));
            Tape tape;
            Value x = tape.leaf(std::move(acts), true);
            Value p = prediction_forward(tape, state.pred, x);
            Value l0 = l1_loss(tape, p, labels);
            const double l0_value = l0->value[0];

            WireMessage grad = reply(MsgType::Grad, msg.client_id, msg.step);
            if (std::isfinite(l0_value)) {
              tape.backward(l0);
              grad.payload.assign(x->grad.data(), x->grad.data() + B * A);
              try {
                state.opt->step();
              } catch (const NonFiniteError&) {
                transport.send(reply(MsgType::Close, msg.client_id, msg.step));
                return;
              }
            } else {
              // poisoned batch: touch nothing, let the client see the loss and abort
              grad.payload.assign(B * A, 0.0);
            }
            transport.send(grad);
            transport.send(reply(MsgType::Metric, msg.client_id, msg.step, {l0_value}));
            state.epoch_l0.push_back(l0_value);
          } else {
            if (msg.payload.empty() || msg.payload.size() % A != 0) {
              transport.send(reply(MsgType::Close, msg.client_id, msg.step));
              return;
            }
            const std::size_t B = msg.payload.size() / A;
            Tensor acts({B, A}, msg.payload);
            Tape tape;
            Value p = prediction_forward(tape, state.pred, tape.leaf(std::move(acts)));
            transport.send(reply(MsgType::Forward, msg.client_id, msg.step,
                                 std::vector<double>(p->value.data(), p->value.data() + B)));
          }
          break;
        }
        case MsgType::Metric: {  // epoch boundary: close out this epoch's save-best
          if (!state.epoch_l0.empty()) {
            const double epoch_mean = mean_value(state.epoch_l0);
            state.epoch_l0.clear();
            if (epoch_mean < state.best_l0) {
              state.best_l0 = epoch_mean;
              state.best_epoch = msg.step;
              state.best = state.pred;
            }
          }
          break;
        }
        case MsgType::Close:
          return;
        default:
          transport.send(reply(MsgType::Close, msg.client_id, msg.step));
          return;
      }
    }
  } catch (const TransportError&) {
    // peer vanished; the session is simply over
  } catch (const WireError&) {
    // malformed frame; terminate this session only
  }
}

SplitClientResult run_client_session(Transport& transport, const SplitClientInput& input,
                                     const SplitConfig& cfg, std::uint32_t client_id) {
  SplitClientResult result;
  result.client_id = client_id;

  GroupSpec spec = reduce_spec(input.spec);
  const std::size_t H = spec.group_count();
  const std::size_t M = spec.feature_count();

  std::vector<HeadNetwork> heads;
  for (std::size_t h = 0; h < H; ++h) {
    heads.push_back(build_head(cfg.kind, spec.groups[h].size(), cfg.W, cfg.mode,
                               derive_seed(input.seed, 10 + h), cfg.train.hidden_act, h + 1));
  }
  std::size_t A = 0;
  for (const auto& head : heads) A += head.out_dim;

  auto samples = pack_trials(input.normalized, spec, cfg.W, cfg.horizon);

  std::vector<Parameter*> head_params;
  for (auto& head : heads) {
    for (auto& p : head.params) head_params.push_back(&p);
  }
  AdamOptimizer opt(head_params, AdamConfig{cfg.train.lr, 0.9, 0.999, 1e-8});

  std::vector<HeadNetwork> best_heads = heads;
  std::vector<double> multipliers(H + 1, 1.0);
  std::vector<double> best_multipliers = multipliers;
  double best_l0 = std::numeric_limits<double>::infinity();

  TransmissionLedger ledger;
  auto send = [&](const WireMessage& msg) {
    ledger.record_to_server(msg);
    transport.send(msg);
  };
  auto receive = [&]() {
    WireMessage msg = transport.receive();
    ledger.record_to_client(msg);
    return msg;
  };
  auto finish = [&]() {
    result.model.mode = cfg.mode;
    result.model.spec = spec;
    result.model.W = cfg.W;
    result.model.horizon = cfg.horizon;
    result.model.heads = best_heads;
    result.model.multipliers = best_multipliers;
    result.best_l0 = best_l0;
    result.ledger = ledger.snapshot();
    if (result.ledger.samples > 0) result.ratio = transmission_ratio(result.ledger, M, cfg.W);
    return result;
  };
  auto abort_run = [&](const std::string& why) {
    result.aborted = true;
    result.abort_reason = why;
    heads = best_heads;  // restore the last checkpoint, as the monolithic trainer does
    try {
      send(reply(MsgType::Close, client_id, 0));
    } catch (const TransportError&) {
    }
    return finish();
  };

  // handshake
  InitFields init{cfg.mode, A, cfg.W, M, true, input.seed};
  try {
    send(reply(MsgType::Init, client_id, 0, pack_init(init)));
    WireMessage ack = receive();
    if (ack.type != MsgType::Init) return abort_run("handshake rejected by server");
  } catch (const TransportError& e) {
    result.aborted = true;
    result.abort_reason = std::string("handshake failed: ") + e.what();
    return finish();
  }

  std::vector<std::vector<double>> prev_head(H);
  std::vector<double> prev_l0;
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    multipliers = epoch == 1
                      ? std::vector<double>(H + 1, 1.0)
                      : update_multipliers(prev_head, prev_l0, cfg.train.balancing,
                                           cfg.train.multiplier_min, cfg.train.multiplier_max);

    std::vector<std::vector<double>> epoch_head(H);
    std::vector<double> epoch_l0;
    for (const auto& idx :
         epoch_batches(samples.size(), cfg.train.batch_size, epoch, input.seed)) {
      Batch batch = make_batch(samples, idx);
      const std::size_t B = batch.size;
      Tape tape;
      ForwardResult fwd = forward_heads(tape, heads, batch);
      std::vector<Value> lh = head_losses(tape, cfg.mode, fwd.head_outs, batch);
      for (const Value& l : lh) {
        if (!std::isfinite(l->value[0])) {
          return abort_run("non-finite head loss at epoch " + std::to_string(epoch));
        }
      }

      WireMessage fwd_msg = reply(MsgType::Forward, client_id, ++step);
      fwd_msg.payload.assign(fwd.concat->value.data(), fwd.concat->value.data() + B * A);
      for (std::size_t b = 0; b < B; ++b) fwd_msg.payload.push_back(batch.power.at2(b, 0));
      try {
        send(fwd_msg);
        ledger.record_forward(B * A, B, B, static_cast<std::uint32_t>(8 * fwd_msg.payload.size()));

        WireMessage grad_msg = receive();
        if (grad_msg.type == MsgType::Close) {
          return abort_run("server closed the session at epoch " + std::to_string(epoch));
        }
        if (grad_msg.type != MsgType::Grad || grad_msg.payload.size() != B * A) {
          return abort_run("unexpected gradient reply at epoch " + std::to_string(epoch));
        }
        WireMessage metric_msg = receive();
        if (metric_msg.type != MsgType::Metric || metric_msg.payload.size() != 1) {
          return abort_run("unexpected metric reply at epoch " + std::to_string(epoch));
        }
        const double l0_value = metric_msg.payload[0];
        if (!std::isfinite(l0_value)) {
          return abort_run("non-finite power loss at epoch " + std::to_string(epoch));
        }

        Value total = compose_total_loss(tape, nullptr, lh, multipliers);
        Tensor seed_grad({B, A}, std::move(grad_msg.payload));
        tape.backward(total, {Tape::GradSeed{fwd.concat, std::move(seed_grad)}});
        try {
          opt.step();
        } catch (const NonFiniteError& e) {
          return abort_run(std::string(e.what()) + " at epoch " + std::to_string(epoch));
        }

        epoch_l0.push_back(l0_value);
        for (std::size_t h = 0; h < H; ++h) epoch_head[h].push_back(lh[h]->value[0]);
      } catch (const TransportError& e) {
        result.aborted = true;
        result.abort_reason = std::string("transport failed: ") + e.what();
        heads = best_heads;
        return finish();
      }
    }

    try {
      send(reply(MsgType::Metric, client_id, epoch));  // epoch boundary marker
    } catch (const TransportError& e) {
      result.aborted = true;
      result.abort_reason = std::string("transport failed: ") + e.what();
      heads = best_heads;
      return finish();
    }

    EpochLog log;
    log.epoch = epoch;
    log.l0_mean = mean_value(epoch_l0);
    for (std::size_t h = 0; h < H; ++h) log.head_means.push_back(mean_value(epoch_head[h]));
    log.multipliers.assign(multipliers.begin() + 1, multipliers.end());
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(std::move(log));

    if (result.log.back().l0_mean < best_l0) {
      best_l0 = result.log.back().l0_mean;
      result.best_epoch = epoch;
      best_heads = heads;
      best_multipliers = multipliers;
    }
    prev_head = std::move(epoch_head);
    prev_l0 = std::move(epoch_l0);
  }

  try {
    send(reply(MsgType::Close, client_id, ++step));
  } catch (const TransportError&) {
  }
  return finish();
}

std::vector<double> split_predict(Transport& transport, std::vector<HeadNetwork>& heads,
                                  const Batch& batch, std::uint32_t client_id,
                                  std::uint64_t step) {
  Tape tape;
  ForwardResult fwd = forward_heads(tape, heads, batch);
  const std::size_t B = batch.size;
  std::size_t A = 0;
  for (const auto& head : heads) A += head.out_dim;

  WireMessage msg = reply(MsgType::Forward, client_id, step);
  msg.payload.assign(fwd.concat->value.data(), fwd.concat->value.data() + B * A);
  transport.send(msg);
  WireMessage back = transport.receive();
  if (back.type != MsgType::Forward || back.payload.size() != B) {
    throw WireError("inference reply malformed");
  }
  return back.payload;
}

TransportKind transport_from_string(const std::string& s) {
  if (s == "sim" || s == "in-process" || s == "queue") return TransportKind::InProcess;
  if (s == "stream" || s == "socket") return TransportKind::Stream;
  throw ConfigError("unknown transport '" + s + "'");
}

std::string to_string(TransportKind k) {
  return k == TransportKind::InProcess ? "sim" : "stream";
}

std::vector<SplitClientResult> run_split_training(const std::vector<SplitClientInput>& clients,
                                                  const SplitConfig& cfg,
                                                  TransportKind transport) {
  if (clients.empty()) throw ConfigError("run_split_training: no clients");
  auto make_pair = [&] {
    return transport == TransportKind::InProcess ? make_queue_pair() : make_stream_pair();
  };
  std::vector<SplitClientResult> results(clients.size());

  if (cfg.shared_server_model) {
    ServerState state;  // one prediction network, fed by every client in turn
    for (std::size_t k = 0; k < clients.size(); ++k) {
      TransportPair pair = make_pair();
      std::thread server([&, end = std::move(pair.second)]() mutable {
        try {
          serve_session(*end, cfg.train, state);
        } catch (...) {
        }
      });
      results[k] = run_client_session(*pair.first, clients[k], cfg,
                                      static_cast<std::uint32_t>(k + 1));
      pair.first.reset();  // release the channel so the server sees the close
      server.join();
      results[k].model.pred = state.best;
    }
    return results;
  }

  std::vector<ServerState> states(clients.size());
  std::vector<std::thread> threads;
  threads.reserve(2 * clients.size());
  for (std::size_t k = 0; k < clients.size(); ++k) {
    TransportPair pair = make_pair();
    threads.emplace_back([&, k, end = std::move(pair.second)]() mutable {
      try {
        serve_session(*end, cfg.train, states[k]);
      } catch (...) {
      }
    });
    threads.emplace_back([&, k, end = std::move(pair.first)]() mutable {
      try {
        results[k] = run_client_session(*end, clients[k], cfg,
                                        static_cast<std::uint32_t>(k + 1));
      } catch (const std::exception& e) {
        results[k].client_id = static_cast<std::uint32_t>(k + 1);
        results[k].aborted = true;
        results[k].abort_reason = e.what();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (std::size_t k = 0; k < clients.size(); ++k) results[k].model.pred = states[k].best;
  return results;
}

}  // namespace dmh
