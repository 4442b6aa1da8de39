#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dmh/autodiff.hpp"
#include "dmh/tensor.hpp"

namespace dmh {

enum class HeadKind : std::uint8_t { Mlp = 0, Cnn = 1, Lstm = 2 };
enum class DmhMode : std::uint8_t { T = 0, E = 1 };

HeadKind head_kind_from_string(const std::string& s);
std::string to_string(HeadKind k);

inline constexpr std::size_t kLstmHidden = 35;
inline constexpr std::size_t kLstmLayers = 2;

/// One client-side head. Output dim is n_h in mode T (next-step features) and
/// 1 in mode E (preliminary power). Hidden activation is configurable; the
/// output activation is always sigmoid, so targets must be normalized to [0,1].
struct HeadNetwork {
  HeadKind kind = HeadKind::Mlp;
  std::size_t group = 0;  // which feature group this head serves
  std::size_t n_h = 0;
  std::size_t W = 0;
  std::size_t out_dim = 0;
  ActKind hidden_act = ActKind::Sigmoid;
  std::vector<Parameter> params;  // fixed declaration order per kind

  std::vector<Parameter*> param_ptrs();
};

/// Server-side aggregator: input_dim -> 16 -> 4 -> 1.
struct PredictionNetwork {
  std::size_t input_dim = 0;
  ActKind hidden_act = ActKind::Sigmoid;
  std::vector<Parameter> params;

  std::vector<Parameter*> param_ptrs();
};

/// Parameters drawn uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], consumed
/// from one seeded stream in declaration order, so equal seeds rebuild equal
/// networks.
HeadNetwork build_head(HeadKind kind, std::size_t n_h, std::size_t W, DmhMode mode,
                       std::uint64_t seed, ActKind hidden_act = ActKind::Sigmoid,
                       std::size_t group = 0);
PredictionNetwork build_prediction_network(std::size_t input_dim, std::uint64_t seed,
                                           ActKind hidden_act = ActKind::Sigmoid);

/// window (B, n_h, W) -> (B, out_dim), all outputs in (0,1).
Value head_forward(Tape& t, HeadNetwork& net, Value window);

/// x (B, input_dim) -> (B, 1).
Value prediction_forward(Tape& t, PredictionNetwork& net, Value x);

std::size_t count_parameters(const std::vector<Parameter>& params);
std::size_t count_parameters(const HeadNetwork& net);
std::size_t count_parameters(const PredictionNetwork& net);

/// Binary layout: magic "DMHN", version, kind/dims header, then parameter
/// tensors in declaration order, f64 little-endian.
void save_head(std::ostream& out, const HeadNetwork& net);
HeadNetwork load_head(std::istream& in);
void save_prediction(std::ostream& out, const PredictionNetwork& net);
PredictionNetwork load_prediction(std::istream& in);

}  // namespace dmh
