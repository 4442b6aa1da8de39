// Acceptance gate: one line per criterion, nonzero exit if any fail.
// Tolerances are pinned here, next to the checks they govern.
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dmh/engine.hpp"
#include "dmh/gradcheck.hpp"
#include "dmh/rng.hpp"
#include "dmh/split.hpp"
#include "dmh/wire.hpp"

using namespace dmh;

namespace {

struct Harness {
  int failures = 0;
  int index = 0;

  void run(const std::string& name, const std::function<std::string()>& body) {
    ++index;
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string detail;
    try {
      detail = body();
    } catch (const std::exception& e) {
      pass = false;
      detail = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%2d %s %s: %s  [%.1f s]\n", index, pass ? "PASS" : "FAIL", name.c_str(),
                detail.c_str(), secs);
    std::fflush(stdout);
    if (!pass) ++failures;
  }
};

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw CheckFailure(what);
}

std::string fmt(const char* f, ...) {
  char buf[256];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// -- 1. gradient correctness --------------------------------------------------------

GradCheckTarget tensor_target(Shape shape, std::function<Value(Tape&, Value)> build) {
  GradCheckTarget t;
  t.f = [build, shape](const Tensor& point) {
    Tape tape;
    Parameter p("p", point.reshaped(shape));
    return build(tape, tape.leaf(p))->value[0];
  };
  t.analytic_grad = [build, shape](const Tensor& point) {
    Tape tape;
    Parameter p("p", point.reshaped(shape));
    tape.backward(build(tape, tape.leaf(p)));
    return p.grad.reshaped({point.size()});
  };
  return t;
}

std::size_t param_size(std::vector<Parameter*> ps) {
  std::size_t n = 0;
  for (Parameter* p : ps) n += p->value.size();
  return n;
}

void scatter(const Tensor& point, std::vector<Parameter*> ps) {
  std::size_t at = 0;
  for (Parameter* p : ps) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = point[at++];
  }
}

Tensor gather_grads(std::vector<Parameter*> ps) {
  Tensor out({param_size(ps)});
  std::size_t at = 0;
  for (Parameter* p : ps) {
    for (std::size_t i = 0; i < p->grad.size(); ++i) out[at++] = p->grad[i];
  }
  return out;
}

// whole network as one flat coordinate vector; loss = balanced training total
GradCheckTarget model_target(DmhMode mode, HeadKind kind, std::uint64_t seed,
                             const Batch& batch) {
  GroupSpec spec = group_features({0.01, 0.1, 0.1, 0.5}, default_thresholds());
  auto eval = [mode, kind, seed, spec, batch](const Tensor& point, bool want_grad) {
    DmhModel model = build_dmh_model(mode, kind, spec, 5, 1, seed);
    scatter(point, model.all_params());
    Tape tape;
    ForwardResult fwd = forward_dmh(tape, model, batch);
    Value l0 = l1_loss(tape, fwd.prediction, batch.power);
    std::vector<Value> lh = head_losses(tape, mode, fwd.head_outs, batch);
    Value total = compose_total_loss(tape, l0, lh, std::vector<double>(lh.size() + 1, 1.0));
    if (!want_grad) return std::make_pair(total->value[0], Tensor({1}));
    tape.backward(total);
    return std::make_pair(total->value[0], gather_grads(model.all_params()));
  };
  GradCheckTarget t;
  t.f = [eval](const Tensor& point) { return eval(point, false).first; };
  t.analytic_grad = [eval](const Tensor& point) { return eval(point, true).second; };
  return t;
}

Tensor model_point(DmhMode mode, HeadKind kind, std::uint64_t seed) {
  GroupSpec spec = group_features({0.01, 0.1, 0.1, 0.5}, default_thresholds());
  DmhModel model = build_dmh_model(mode, kind, spec, 5, 1, seed);
  auto ps = model.all_params();
  Tensor point({param_size(ps)});
  std::size_t at = 0;
  for (Parameter* p : ps) {
    for (std::size_t i = 0; i < p->value.size(); ++i) point[at++] = p->value[i];
  }
  return point;
}

Batch toy_batch(std::uint64_t seed) {
  SyntheticSpec s;
  s.trials = 1;
  s.length = 20;
  s.informative = 2;
  s.noise_features = 2;
  s.seed = seed;
  auto trials = generate_synthetic(s);
  Normalizer norm = fit_normalizer(trials);
  std::vector<Trial> normalized = {norm.apply(trials[0])};
  GroupSpec spec = group_features({0.01, 0.1, 0.1, 0.5}, default_thresholds());
  auto samples = pack_trials(normalized, spec, 5, 1);
  return make_batch(samples, {0, 1, 2});
}

std::string criterion_gradients() {
  double worst = 0.0;
  const double kTol = 1e-4;  // max relative error, analytic vs central differences
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng(seed * 31 + 7);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({4, 2}, rng);
    Tensor tgt = random_tensor({3, 2}, rng, 0.1, 0.9);
    Tensor tgt34 = random_tensor({3, 4}, rng, 0.1, 0.9);
    Tensor conv_in = random_tensor({2, 6}, rng);
    Tensor conv_tgt = random_tensor({2, 6}, rng);

    auto probe = [&](const GradCheckTarget& t, const Tensor& point, std::size_t max_coords) {
      worst = std::max(worst,
                       finite_difference_check(t, point, 1e-5, max_coords, seed * 977 + 3));
    };

    // linear wrt weight, bias and input
    probe(tensor_target({4, 2},
                        [x, tgt](Tape& t, Value p) {
                          Value b = t.leaf(Tensor({2}, {0.05, -0.1}));
                          return l1_loss(t, linear_forward(t, t.leaf(x), p, b), tgt);
                        }),
          random_tensor({8}, rng), 0);
    probe(tensor_target({2},
                        [x, w, tgt](Tape& t, Value p) {
                          return l1_loss(t, linear_forward(t, t.leaf(x), t.leaf(w), p), tgt);
                        }),
          random_tensor({2}, rng), 0);
    probe(tensor_target({3, 4},
                        [w, tgt](Tape& t, Value p) {
                          return l1_loss(t, linear_forward(t, p, t.leaf(w), nullptr), tgt);
                        }),
          random_tensor({12}, rng), 0);
    // sigmoid, leaky relu, plain l1
    probe(tensor_target(
              {3, 4}, [tgt34](Tape& t, Value p) { return l1_loss(t, sigmoid(t, p), tgt34); }),
          random_tensor({12}, rng), 0);
    probe(tensor_target(
              {3, 4}, [tgt34](Tape& t, Value p) { return l1_loss(t, leaky_relu(t, p), tgt34); }),
          random_tensor({12}, rng), 0);
    probe(tensor_target({3, 4}, [tgt34](Tape& t, Value p) { return l1_loss(t, p, tgt34); }),
          random_tensor({12}, rng), 0);
    // conv1d (same padding) wrt kernel, bias and input
    probe(tensor_target({2, 2, 3},
                        [conv_in, conv_tgt](Tape& t, Value k) {
                          Value b = t.leaf(Tensor({2}, {0.02, -0.03}));
                          return l1_loss(t, conv1d_same(t, t.leaf(conv_in), k, b), conv_tgt);
                        }),
          random_tensor({12}, rng), 0);
    probe(tensor_target({2, 6},
                        [conv_tgt](Tape& t, Value p) {
                          Value k = t.leaf(Tensor({2, 2, 3}, {0.1, -0.2, 0.3, 0.2, 0.1, -0.1,
                                                              -0.3, 0.2, 0.1, 0.05, -0.05, 0.2}));
                          Value b = t.leaf(Tensor({2}, {0.02, -0.03}));
                          return l1_loss(t, conv1d_same(t, p, k, b), conv_tgt);
                        }),
          random_tensor({12}, rng), 0);

    // composed networks, all parameters as one vector, sampled coordinates
    Batch batch = toy_batch(seed);
    probe(model_target(DmhMode::T, HeadKind::Mlp, seed, batch),
          model_point(DmhMode::T, HeadKind::Mlp, seed), 40);
    probe(model_target(DmhMode::E, HeadKind::Cnn, seed, batch),
          model_point(DmhMode::E, HeadKind::Cnn, seed), 40);
    // two-layer recurrent heads
    probe(model_target(DmhMode::E, HeadKind::Lstm, seed, batch),
          model_point(DmhMode::E, HeadKind::Lstm, seed), 24);

    require(worst < kTol, fmt("max relative error %.3g at seed %llu exceeds %.0e", worst,
                              static_cast<unsigned long long>(seed), kTol));
  }
  return fmt("max relative error %.3g over 100 seeded cases (tolerance %.0e)", worst, kTol);
}

// -- 2. split equals monolithic -------------------------------------------------------

struct EquivalenceResult {
  double param_gap = 1e9;
  double log_gap = 1e9;
};

std::string criterion_equivalence() {
  const double kTol = 1e-9;  // max-norm over parameters; per-epoch loss gap
  SyntheticSpec s;
  s.trials = 1;
  s.length = 505;  // 500 windowed samples with W = 5, horizon 1
  s.informative = 3;
  s.noise_features = 3;
  s.seed = 77;
  auto trials = generate_synthetic(s);
  Normalizer norm = fit_normalizer(trials);
  std::vector<Trial> normalized = {norm.apply(trials[0])};
  auto corr = correlations_to_power(trials);
  std::vector<double> coeffs;
  for (const auto& c : corr) coeffs.push_back(c.value_or(0.0));
  GroupSpec spec = group_features(coeffs, default_thresholds());

  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 64;
  tc.seed = 77;

  DmhModel mono_model = build_dmh_model(DmhMode::T, HeadKind::Mlp, spec, 5, 1, 77);
  TrainResult mono = train(mono_model, normalized, tc);
  require(!mono.aborted, "monolithic run aborted: " + mono.abort_reason);
  {
    auto samples = pack_trials(normalized, mono_model.spec, 5, 1);
    require(samples.size() == 500, fmt("expected 500 samples, packed %zu", samples.size()));
  }

  SplitConfig scfg;
  scfg.mode = DmhMode::T;
  scfg.kind = HeadKind::Mlp;
  scfg.train = tc;
  auto split = run_split_training({{normalized, spec, 77}}, scfg, TransportKind::InProcess);
  require(!split[0].aborted, "split run aborted: " + split[0].abort_reason);

  auto pa = mono.best.all_params();
  auto pb = split[0].model.all_params();
  require(pa.size() == pb.size(), "parameter tensor counts differ");
  double gap = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    require(pa[i]->value.size() == pb[i]->value.size(), "parameter shapes differ");
    for (std::size_t j = 0; j < pa[i]->value.size(); ++j) {
      gap = std::max(gap, std::fabs(pa[i]->value[j] - pb[i]->value[j]));
    }
  }
  require(gap < kTol, fmt("parameter max-norm gap %.3g exceeds %.0e", gap, kTol));

  require(split[0].log.size() == mono.log.size(), "epoch counts differ");
  double lgap = 0.0;
  for (std::size_t e = 0; e < mono.log.size(); ++e) {
    lgap = std::max(lgap, std::fabs(mono.log[e].l0_mean - split[0].log[e].l0_mean));
  }
  require(lgap < kTol, fmt("per-epoch loss gap %.3g exceeds %.0e", lgap, kTol));
  return fmt("1 client, 5 epochs, 500 samples: param gap %.3g, loss gap %.3g (< %.0e)", gap,
             lgap, kTol);
}

// -- 3. transmission ratio ------------------------------------------------------------

GroupSpec fifteen_feature_spec() {
  std::vector<double> coeffs;
  for (int i = 0; i < 5; ++i) coeffs.push_back(0.01);
  for (int i = 0; i < 5; ++i) coeffs.push_back(0.10);
  for (int i = 0; i < 5; ++i) coeffs.push_back(0.50);
  return group_features(coeffs, default_thresholds());
}

std::string criterion_ratio() {
  SyntheticSpec s;
  s.trials = 1;
  s.length = 40;
  s.informative = 6;
  s.noise_features = 9;  // 15 features total
  s.seed = 5;
  auto trials = generate_synthetic(s);
  Normalizer norm = fit_normalizer(trials);
  std::vector<Trial> normalized = {norm.apply(trials[0])};

  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.seed = 5;
  SplitConfig scfg;
  scfg.train = tc;

  scfg.mode = DmhMode::T;
  auto rt = run_split_training({{normalized, fifteen_feature_spec(), 5}}, scfg,
                               TransportKind::InProcess);
  require(!rt[0].aborted, "next-step run aborted");
  require(rt[0].ratio == 0.2, fmt("next-step ratio %.17g != 0.2 exactly", rt[0].ratio));

  scfg.mode = DmhMode::E;
  auto re = run_split_training({{normalized, fifteen_feature_spec(), 5}}, scfg,
                               TransportKind::InProcess);
  require(!re[0].aborted, "preliminary-power run aborted");
  require(re[0].model.head_count() == 3, "expected 3 groups on the 15-feature schema");
  require(re[0].ratio == 0.04, fmt("preliminary ratio %.17g != 0.04 exactly", re[0].ratio));
  return "activation floats per sample / (M*W): 0.2 and 0.04, both exact";
}

// -- 4. grouping oracle ---------------------------------------------------------------

// Independent correlation: single-pass textbook formula over the concatenated
// series, deliberately different arithmetic from the library's two-pass form.
double oracle_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  const double den = (n * sxx - sx * sx) * (n * syy - sy * sy);
  if (den <= 0.0) return 0.0;  // degenerate -> treated as coefficient 0
  return (n * sxy - sx * sy) / std::sqrt(den);
}

std::string criterion_grouping() {
  const std::vector<double> th = default_thresholds();
  std::size_t datasets = 0;
  for (std::uint64_t k = 1; k <= 100; ++k) {
    SyntheticSpec s;
    s.trials = 1 + k % 3;
    s.length = 30 + k % 17;
    s.informative = 1 + k % 4;
    s.noise_features = k % 5;
    s.seed = 9000 + k;
    auto trials = generate_synthetic(s);
    ++datasets;

    // library pipeline
    auto corr = correlations_to_power(trials);
    std::vector<double> coeffs;
    for (const auto& c : corr) coeffs.push_back(c.value_or(0.0));
    GroupSpec spec = group_features(coeffs, th);

    // brute-force reference: direct correlation + half-open interval scan
    const std::size_t M = trials[0].feature_count();
    std::vector<std::vector<std::size_t>> oracle(th.size() - 1);
    for (std::size_t m = 0; m < M; ++m) {
      std::vector<double> xs, ys;
      for (const Trial& t : trials) {
        xs.insert(xs.end(), t.features[m].values.begin(), t.features[m].values.end());
        ys.insert(ys.end(), t.power.begin(), t.power.end());
      }
      const double c = std::fabs(oracle_correlation(xs, ys));
      std::size_t h = th.size() - 2;  // |C| = top boundary closes the last interval
      for (std::size_t i = 0; i + 1 < th.size(); ++i) {
        if (c >= th[i] && c < th[i + 1]) {
          h = i;
          break;
        }
      }
      oracle[h].push_back(m);
    }
    require(spec.groups == oracle, fmt("grouping differs from the oracle on dataset %llu",
                                       static_cast<unsigned long long>(k)));
  }

  // boundary placement: a coefficient exactly on a threshold opens the next group
  GroupSpec b = group_features({0.05, 0.2, 1.0, 0.049999}, th);
  require(b.groups[1] == std::vector<std::size_t>{0}, "|C| = 0.05 must land in group 2");
  require(b.groups[2] == (std::vector<std::size_t>{1, 2}),
          "|C| = 0.2 in group 3; |C| = 1 stays in the last group");
  require(b.groups[0] == std::vector<std::size_t>{3}, "|C| just below 0.05 stays in group 1");
  return fmt("%zu random datasets partitioned identically; boundaries half-open", datasets);
}

// -- 5. loss-balancing invariants -------------------------------------------------------

std::string criterion_balancing() {
  SyntheticSpec s;
  s.trials = 1;
  s.length = 80;
  s.informative = 3;
  s.noise_features = 3;
  s.seed = 13;
  auto trials = generate_synthetic(s);
  Normalizer norm = fit_normalizer(trials);
  std::vector<Trial> normalized = {norm.apply(trials[0])};
  auto corr = correlations_to_power(trials);
  std::vector<double> coeffs;
  for (const auto& c : corr) coeffs.push_back(c.value_or(0.0));

  TrainConfig tc;
  tc.epochs = 50;
  tc.batch_size = 16;
  tc.lr = 0.02;
  tc.seed = 13;
  DmhModel model =
      build_dmh_model(DmhMode::T, HeadKind::Mlp, group_features(coeffs, default_thresholds()),
                      5, 1, 13);
  TrainResult r = train(model, normalized, tc);
  require(!r.aborted, "run aborted: " + r.abort_reason);
  require(r.log.size() == 50, "expected 50 logged epochs");

  for (double m : r.log[0].multipliers) {
    require(m == 1.0, "epoch-1 multipliers must all be exactly 1");
  }
  for (const EpochLog& e : r.log) {
    for (double m : e.multipliers) {
      require(m >= 0.1 && m <= 10.0, fmt("epoch %zu multiplier %.6g leaves [0.1, 10]", e.epoch, m));
    }
  }
  require(model.multipliers[0] == 1.0, "the power-loss multiplier must stay 1");
  // the leading multiplier is pinned to 1 for any loss history
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<double>> head(2);
    std::vector<double> l0;
    for (int i = 0; i < 8; ++i) {
      head[0].push_back(rng.uniform(0.0, 2.0));
      head[1].push_back(rng.uniform(0.0, 2.0));
      l0.push_back(rng.uniform(0.0, 2.0));
    }
    require(update_multipliers(head, l0, true)[0] == 1.0, "multiplier 0 drifted from 1");
  }
  return "50 epochs: all multipliers in [0.1, 10], epoch 1 all 1, leading multiplier pinned to 1";
}

// -- 6/7. quality trends ----------------------------------------------------------------

struct TrendNumbers {
  bool ran = false;
  double t_d1 = 0, e_d1 = 0, bs_d1 = 0, t_d10 = 0;
};
TrendNumbers g_trend;

double trend_run(const std::string& sys, std::uint64_t seed, std::size_t horizon) {
  SyntheticSpec s;
  s.trials = 6;
  s.length = 60;
  s.informative = 6;
  s.noise_features = 10;
  s.noise_level = 0.05;
  s.seed = seed;
  auto trials = generate_synthetic(s);
  std::vector<Trial> train_set(trials.begin(), trials.end() - 1);
  std::vector<Trial> test_set(trials.end() - 1, trials.end());

  auto corr = correlations_to_power(train_set);
  std::vector<double> coeffs;
  for (const auto& c : corr) coeffs.push_back(c.value_or(0.0));

  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 16;
  tc.lr = 0.02;
  tc.seed = seed;

  if (sys == "BS") {
    return run_baseline(BaselineKind::BS, HeadKind::Mlp, train_set, test_set, coeffs, 5, horizon,
                        tc)
        .metrics.mae;
  }
  GroupSpec spec = group_features(coeffs, default_thresholds());
  Normalizer norm = fit_normalizer(train_set);
  std::vector<Trial> normalized;
  for (const Trial& t : train_set) normalized.push_back(norm.apply(t));
  DmhModel model = build_dmh_model(sys == "T" ? DmhMode::T : DmhMode::E, HeadKind::Mlp, spec, 5,
                                   horizon, seed);
  TrainResult r = train(model, normalized, tc);
  require(!r.aborted, sys + " aborted: " + r.abort_reason);
  return evaluate(r.best, test_set, norm).mae;
}

std::string criterion_effectiveness() {
  double st = 0, se = 0, sb = 0, st10 = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    st += trend_run("T", seed, 1);
    se += trend_run("E", seed, 1);
    sb += trend_run("BS", seed, 1);
    st10 += trend_run("T", seed, 10);
  }
  g_trend = {true, st / 5, se / 5, sb / 5, st10 / 5};
  require(g_trend.e_d1 < g_trend.bs_d1,
          fmt("mean MAE: preliminary-power %.4f is not below the single net %.4f", g_trend.e_d1,
              g_trend.bs_d1));
  require(g_trend.t_d1 < g_trend.bs_d1,
          fmt("mean MAE: next-step %.4f is not below the single net %.4f", g_trend.t_d1,
              g_trend.bs_d1));
  return fmt("5-seed mean test MAE: next-step %.4f, preliminary %.4f, single net %.4f",
             g_trend.t_d1, g_trend.e_d1, g_trend.bs_d1);
}

std::string criterion_horizon() {
  require(g_trend.ran, "trend runs unavailable (previous criterion failed before finishing)");
  require(g_trend.t_d1 <= g_trend.t_d10,
          fmt("mean MAE at horizon 1 (%.4f) exceeds horizon 10 (%.4f)", g_trend.t_d1,
              g_trend.t_d10));
  return fmt("5-seed mean test MAE: horizon 1 %.4f <= horizon 10 %.4f", g_trend.t_d1,
             g_trend.t_d10);
}

// -- 8. wire conformance ------------------------------------------------------------------

std::string criterion_wire() {
  WireMessage empty;
  empty.type = MsgType::Close;
  require(encode_message(empty).size() == 20, "header must be exactly 20 bytes");
  require(kWireHeaderBytes == 20, "header constant must be 20");

  Rng rng(4242);
  for (int i = 0; i < 1000; ++i) {
    WireMessage m;
    m.type = static_cast<MsgType>(rng.next_u64() % 5);
    m.client_id = static_cast<std::uint32_t>(rng.next_u64());
    m.step = rng.next_u64();
    const std::size_t n = rng.next_u64() % 17;
    for (std::size_t j = 0; j < n; ++j) {
      m.payload.push_back(std::bit_cast<double>(rng.next_u64()));  // any bits, NaN included
    }
    const std::vector<std::uint8_t> bytes = encode_message(m);
    require(decode_message(bytes) == m, "round-trip must be bitwise identity");
  }

  std::size_t decoded = 0, rejected = 0;
  for (int i = 0; i < 10000; ++i) {
    Rng fuzz(50000 + i);
    std::vector<std::uint8_t> buf(fuzz.next_u64() % 64);
    for (auto& b : buf) b = static_cast<std::uint8_t>(fuzz.next_u64());
    if (i % 3 == 0 && buf.size() >= 2) {  // steer a third past the magic check
      buf[0] = 'D';
      buf[1] = 'M';
    }
    try {
      decode_message(buf);
      ++decoded;
    } catch (const WireError&) {
      ++rejected;
    }
  }
  return fmt("1000 bitwise round-trips; %zu fuzzed buffers: %zu clean rejections, %zu decoded, "
             "0 crashes",
             static_cast<std::size_t>(10000), rejected, decoded);
}

// -- 9. parameter accounting ----------------------------------------------------------------

std::size_t affine_chain(std::vector<std::size_t> dims) {
  std::size_t total = 0;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    total += dims[i] * dims[i + 1] + dims[i + 1];
  }
  return total;
}

std::string criterion_parameters() {
  HeadNetwork head = build_head(HeadKind::Mlp, 4, 5, DmhMode::T, 1);
  const std::size_t head_count = count_parameters(head);
  const std::size_t head_oracle = affine_chain({20, 256, 64, 16, 4});
  require(head_count == head_oracle, fmt("head: counted %zu, closed form %zu", head_count,
                                         head_oracle));
  require(head_count == 22932, fmt("head: counted %zu, expected 22932", head_count));

  PredictionNetwork pred = build_prediction_network(3, 1);
  const std::size_t pred_count = count_parameters(pred);
  const std::size_t pred_oracle = affine_chain({3, 16, 4, 1});
  require(pred_count == pred_oracle, fmt("prediction net: counted %zu, closed form %zu",
                                         pred_count, pred_oracle));
  require(pred_count == 137, fmt("prediction net: counted %zu, expected 137", pred_count));

  // per-system totals on the 15-feature, 3-group schema used above
  GroupSpec spec = fifteen_feature_spec();
  DmhModel t_model = build_dmh_model(DmhMode::T, HeadKind::Mlp, spec, 5, 1, 1);
  DmhModel e_model = build_dmh_model(DmhMode::E, HeadKind::Mlp, spec, 5, 1, 1);
  std::size_t t_total = 0, e_total = 0;
  for (Parameter* p : t_model.all_params()) t_total += p->value.size();
  for (Parameter* p : e_model.all_params()) e_total += p->value.size();
  const std::size_t bs_total = count_parameters(build_head(HeadKind::Mlp, 15, 5, DmhMode::E, 1));
  std::printf("     per-system totals (15 features, 3 groups, W=5): next-step %zu, "
              "preliminary %zu, single net %zu\n",
              t_total, e_total, bs_total);
  return "head 22932 and prediction net 137, both equal to the closed form";
}

}  // namespace

int main() {
  Harness h;
  std::printf("acceptance checks\n");
  h.run("gradients match finite differences", criterion_gradients);
  h.run("split training equals monolithic", criterion_equivalence);
  h.run("transmission ratio is exact", criterion_ratio);
  h.run("grouping matches a brute-force oracle", criterion_grouping);
  h.run("loss balancing respects its bounds", criterion_balancing);
  h.run("multi-head systems beat the single net", criterion_effectiveness);
  h.run("longer horizons do not improve MAE", criterion_horizon);
  h.run("wire format is total and lossless", criterion_wire);
  h.run("parameter counts match the closed form", criterion_parameters);
  if (h.failures == 0) {
    std::printf("acceptance: all %d criteria passed\n", h.index);
    return 0;
  }
  std::printf("acceptance: %d of %d criteria FAILED\n", h.failures, h.index);
  return 1;
}
