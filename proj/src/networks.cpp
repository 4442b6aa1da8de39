#include "dmh/networks.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "dmh/binio.hpp"
#include "dmh/rng.hpp"

namespace dmh {

namespace {

constexpr std::size_t kMlpWidths[3] = {256, 64, 16};

void init_uniform(Parameter& p, std::size_t fan_in, Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = rng.uniform(-k, k);
}

void push_affine(std::vector<Parameter>& params, const std::string& prefix, std::size_t layer,
                 std::size_t in, std::size_t out, Rng& rng) {
  Parameter w(prefix + ".w" + std::to_string(layer), Tensor({in, out}));
  Parameter b(prefix + ".b" + std::to_string(layer), Tensor({out}));
  init_uniform(w, in, rng);
  init_uniform(b, in, rng);
  params.push_back(std::move(w));
  params.push_back(std::move(b));
}

// affine stack over params[first..]; hidden layers use `act`, the last sigmoid
Value affine_stack(Tape& t, std::vector<Parameter>& params, std::size_t first,
                   std::size_t layers, Value x, ActKind act) {
  for (std::size_t l = 0; l < layers; ++l) {
    Value w = t.leaf(params[first + 2 * l]);
    Value b = t.leaf(params[first + 2 * l + 1]);
    x = linear_forward(t, x, w, b);
    x = l + 1 < layers ? apply_activation(t, x, act) : sigmoid(t, x);
  }
  return x;
}

}  // namespace

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "mlp" || s == "MLP") return HeadKind::Mlp;
  if (s == "cnn" || s == "CNN") return HeadKind::Cnn;
  if (s == "lstm" || s == "LSTM") return HeadKind::Lstm;
  throw ConfigError("unknown head kind '" + s + "'");
}

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::Mlp: return "mlp";
    case HeadKind::Cnn: return "cnn";
    case HeadKind::Lstm: return "lstm";
  }
  return "?";
}

std::vector<Parameter*> HeadNetwork::param_ptrs() {
  std::vector<Parameter*> out;
  out.reserve(params.size());
  for (auto& p : params) out.push_back(&p);
  return out;
}

std::vector<Parameter*> PredictionNetwork::param_ptrs() {
  std::vector<Parameter*> out;
  out.reserve(params.size());
  for (auto& p : params) out.push_back(&p);
  return out;
}

HeadNetwork build_head(HeadKind kind, std::size_t n_h, std::size_t W, DmhMode mode,
                       std::uint64_t seed, ActKind hidden_act, std::size_t group) {
  if (n_h < 1 || W < 1) {
    throw ConfigError("build_head: n_h and W must be >= 1, got n_h=" + std::to_string(n_h) +
                      " W=" + std::to_string(W));
  }
  HeadNetwork net;
  net.kind = kind;
  net.group = group;
  net.n_h = n_h;
  net.W = W;
  net.out_dim = mode == DmhMode::T ? n_h : 1;
  net.hidden_act = hidden_act;

  Rng rng(seed);
  const std::string prefix = "head" + std::to_string(group);
  switch (kind) {
    case HeadKind::Mlp: {
      std::size_t in = n_h * W;
      for (std::size_t l = 0; l < 3; ++l) {
        push_affine(net.params, prefix, l, in, kMlpWidths[l], rng);
        in = kMlpWidths[l];
      }
      push_affine(net.params, prefix, 3, in, net.out_dim, rng);
      break;
    }
    case HeadKind::Cnn: {
      Parameter kern(prefix + ".conv_w", Tensor({n_h, n_h, 3}));
      Parameter kbias(prefix + ".conv_b", Tensor({n_h}));
      init_uniform(kern, n_h * 3, rng);
      init_uniform(kbias, n_h * 3, rng);
      net.params.push_back(std::move(kern));
      net.params.push_back(std::move(kbias));
      std::size_t in = n_h * W;
      for (std::size_t l = 0; l < 3; ++l) {
        push_affine(net.params, prefix, l, in, kMlpWidths[l], rng);
        in = kMlpWidths[l];
      }
      push_affine(net.params, prefix, 3, in, net.out_dim, rng);
      break;
    }
    case HeadKind::Lstm: {
      std::size_t in = n_h;
      for (std::size_t layer = 0; layer < kLstmLayers; ++layer) {
        const std::string lp = prefix + ".lstm" + std::to_string(layer);
        Parameter w_ih(lp + ".w_ih", Tensor({in, 4 * kLstmHidden}));
        Parameter w_hh(lp + ".w_hh", Tensor({kLstmHidden, 4 * kLstmHidden}));
        Parameter bias(lp + ".bias", Tensor({4 * kLstmHidden}));
        init_uniform(w_ih, in, rng);
        init_uniform(w_hh, kLstmHidden, rng);
        init_uniform(bias, in, rng);
        net.params.push_back(std::move(w_ih));
        net.params.push_back(std::move(w_hh));
        net.params.push_back(std::move(bias));
        in = kLstmHidden;
      }
      push_affine(net.params, prefix, 0, kLstmHidden, 64, rng);
      push_affine(net.params, prefix, 1, 64, net.out_dim, rng);
      break;
    }
  }
  return net;
}

PredictionNetwork build_prediction_network(std::size_t input_dim, std::uint64_t seed,
                                           ActKind hidden_act) {
  if (input_dim < 1) throw ConfigError("build_prediction_network: input_dim must be >= 1");
  PredictionNetwork net;
  net.input_dim = input_dim;
  net.hidden_act = hidden_act;
  Rng rng(seed);
  push_affine(net.params, "pred", 0, input_dim, 16, rng);
  push_affine(net.params, "pred", 1, 16, 4, rng);
  push_affine(net.params, "pred", 2, 4, 1, rng);
  return net;
}

Value head_forward(Tape& t, HeadNetwork& net, Value window) {
  const Tensor& x = window->value;
  if (x.rank() != 3 || x.dim(1) != net.n_h || x.dim(2) != net.W) {
    throw DimensionError("head_forward: window " + shape_str(x.shape()) +
                         " does not match head (n_h=" + std::to_string(net.n_h) +
                         ", W=" + std::to_string(net.W) + ")");
  }
  const std::size_t B = x.dim(0);
  switch (net.kind) {
    case HeadKind::Mlp: {
      Value flat = reshape(t, window, {B, net.n_h * net.W});
      return affine_stack(t, net.params, 0, 4, flat, net.hidden_act);
    }
    case HeadKind::Cnn: {
      Value kern = t.leaf(net.params[0]);
      Value kbias = t.leaf(net.params[1]);
      Value conv = apply_activation(t, conv1d_same(t, window, kern, kbias), net.hidden_act);
      Value flat = reshape(t, conv, {B, net.n_h * net.W});
      return affine_stack(t, net.params, 2, 4, flat, net.hidden_act);
    }
    case HeadKind::Lstm: {
      std::vector<LstmLayer> layers(kLstmLayers);
      for (std::size_t l = 0; l < kLstmLayers; ++l) {
        layers[l].w_ih = t.leaf(net.params[3 * l]);
        layers[l].w_hh = t.leaf(net.params[3 * l + 1]);
        layers[l].bias = t.leaf(net.params[3 * l + 2]);
      }
      std::vector<Value> steps;
      steps.reserve(net.W);
      for (std::size_t w = 0; w < net.W; ++w) steps.push_back(time_step(t, window, w));
      Value h = lstm_forward(t, steps, layers, kLstmHidden);
      return affine_stack(t, net.params, 3 * kLstmLayers, 2, h, net.hidden_act);
    }
  }
  throw ConfigError("head_forward: unknown head kind");
}

Value prediction_forward(Tape& t, PredictionNetwork& net, Value x) {
  if (x->value.rank() != 2 || x->value.dim(1) != net.input_dim) {
    throw DimensionError("prediction_forward: input " + shape_str(x->value.shape()) +
                         " does not match input_dim " + std::to_string(net.input_dim));
  }
  return affine_stack(t, net.params, 0, 3, x, net.hidden_act);
}

std::size_t count_parameters(const std::vector<Parameter>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

std::size_t count_parameters(const HeadNetwork& net) { return count_parameters(net.params); }
std::size_t count_parameters(const PredictionNetwork& net) { return count_parameters(net.params); }

// -- checkpoint I/O ---------------------------------------------------------------

namespace {

constexpr char kNetMagic[4] = {'D', 'M', 'H', 'N'};
constexpr std::uint8_t kNetVersion = 1;

void write_params(std::ostream& out, const std::vector<Parameter>& params) {
  io::write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    io::write_string(out, p.name);
    io::write_tensor(out, p.value);
  }
}

std::vector<Parameter> read_params(std::istream& in) {
  const std::uint32_t n = io::read_u32(in);
  if (n > 4096) throw IoError("checkpoint parameter count " + std::to_string(n) + " implausible");
  std::vector<Parameter> params;
  params.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = io::read_string(in);
    Tensor value = io::read_tensor(in);
    params.emplace_back(std::move(name), std::move(value));
  }
  return params;
}

void check_magic(std::istream& in) {
  char m[4];
  in.read(m, 4);
  if (in.gcount() != 4 || m[0] != 'D' || m[1] != 'M' || m[2] != 'H' || m[3] != 'N') {
    throw IoError("not a network checkpoint (bad magic)");
  }
  const std::uint8_t v = io::read_u8(in);
  if (v != kNetVersion) {
    throw IoError("network checkpoint version " + std::to_string(v) + " unsupported");
  }
}

}  // namespace

void save_head(std::ostream& out, const HeadNetwork& net) {
  out.write(kNetMagic, 4);
  io::write_u8(out, kNetVersion);
  io::write_u8(out, 0);  // head record
  io::write_u8(out, static_cast<std::uint8_t>(net.kind));
  io::write_u8(out, static_cast<std::uint8_t>(net.hidden_act));
  io::write_u32(out, static_cast<std::uint32_t>(net.group));
  io::write_u32(out, static_cast<std::uint32_t>(net.n_h));
  io::write_u32(out, static_cast<std::uint32_t>(net.W));
  io::write_u32(out, static_cast<std::uint32_t>(net.out_dim));
  write_params(out, net.params);
}

HeadNetwork load_head(std::istream& in) {
  check_magic(in);
  if (io::read_u8(in) != 0) throw IoError("expected a head record");
  HeadNetwork net;
  net.kind = static_cast<HeadKind>(io::read_u8(in));
  net.hidden_act = static_cast<ActKind>(io::read_u8(in));
  net.group = io::read_u32(in);
  net.n_h = io::read_u32(in);
  net.W = io::read_u32(in);
  net.out_dim = io::read_u32(in);
  net.params = read_params(in);
  return net;
}

void save_prediction(std::ostream& out, const PredictionNetwork& net) {
  out.write(kNetMagic, 4);
  io::write_u8(out, kNetVersion);
  io::write_u8(out, 1);  // prediction record
  io::write_u8(out, static_cast<std::uint8_t>(net.hidden_act));
  io::write_u32(out, static_cast<std::uint32_t>(net.input_dim));
  write_params(out, net.params);
}

PredictionNetwork load_prediction(std::istream& in) {
  check_magic(in);
  if (io::read_u8(in) != 1) throw IoError("expected a prediction-network record");
  PredictionNetwork net;
  net.hidden_act = static_cast<ActKind>(io::read_u8(in));
  net.input_dim = io::read_u32(in);
  net.params = read_params(in);
  return net;
}

}  // namespace dmh
