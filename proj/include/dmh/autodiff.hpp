#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dmh/tensor.hpp"

namespace dmh {

/// Reverse-mode tape. Records one forward computation; backward() replays it
/// in exact reverse order, so gradient accumulation order is deterministic.
/// A tape can be consumed by backward() exactly once.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on first contribution during backward
    bool needs_grad = false;
    Parameter* param = nullptr;  // set for parameter leaves
    std::function<void(Node&)> backprop;

    bool grad_ready() const { return grad.size() == grad_needed_size; }
    void ensure_grad() {
      if (!grad_ready()) {
        grad = Tensor(value.shape());
        grad_needed_size = value.size();
      }
    }
    std::size_t grad_needed_size = static_cast<std::size_t>(-1);
  };

  /// Gradient injected at a node before the backward sweep runs. Used by the
  /// split-learning client to merge the gradient received from the server
  /// with locally computed loss gradients.
  struct GradSeed {
    Node* node;
    Tensor grad;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant leaf. With track_grad, the node's grad buffer is retained and
  /// readable after backward (used for boundary activations).
  Node* leaf(Tensor value, bool track_grad = false);

  /// Parameter leaf; backward flushes the accumulated gradient into p.grad.
  Node* leaf(Parameter& p);

  Node* make(Tensor value, std::vector<Node*> parents,
             std::function<void(Node&)> backprop);

  /// Backward from a scalar loss, optionally with extra gradient seeds.
  void backward(Node* loss, const std::vector<GradSeed>& seeds = {});

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
  bool consumed_ = false;
};

using Value = Tape::Node*;

// -- operators ---------------------------------------------------------------

/// out[b,j] = sum_i x[b,i] * w[i,j] (+ bias[j]). bias may be null.
Value linear_forward(Tape& t, Value x, Value w, Value bias);

enum class ActKind { Sigmoid, Tanh, LeakyRelu };

Value sigmoid(Tape& t, Value x);
Value tanh_op(Tape& t, Value x);
Value leaky_relu(Tape& t, Value x, double slope = 0.01);
Value apply_activation(Tape& t, Value x, ActKind kind, double slope = 0.01);

/// 1-D convolution, kernel size 3, stride 1, zero padding of 1 on each end.
/// input (C,W) or (B,C,W); kernel (O,C,3); bias (O). Output length equals W.
Value conv1d_same(Tape& t, Value input, Value kernel, Value bias);

/// Elementwise; shapes must match.
Value add(Tape& t, Value a, Value b);
Value sub(Tape& t, Value a, Value b);
Value mul(Tape& t, Value a, Value b);

/// Multiply by a compile-time constant (loss multipliers).
Value scale(Tape& t, Value x, double c);

Value sum(Tape& t, Value x);

/// Mean absolute error against a constant target.
Value l1_loss(Tape& t, Value pred, const Tensor& target);

Value reshape(Tape& t, Value x, Shape s);

/// Concatenate (B, n_i) blocks along columns -> (B, sum n_i).
Value concat_cols(Tape& t, const std::vector<Value>& parts);

/// Select time step t from (B,C,W) -> (B,C).
Value time_step(Tape& t, Value x, std::size_t step);

/// Select column range [c0, c1) from (B,C) -> (B, c1-c0).
Value slice_cols(Tape& t, Value x, std::size_t c0, std::size_t c1);

// -- LSTM --------------------------------------------------------------------

/// One layer's parameters as tape nodes. Gate packing order along the 4H
/// axis is input, forget, cell candidate, output. One combined bias.
struct LstmLayer {
  Value w_ih;  // (input_dim, 4*hidden)
  Value w_hh;  // (hidden, 4*hidden)
  Value bias;  // (4*hidden)
};

/// Stacked LSTM over pre-sliced time steps (each (B, input_dim)); returns the
/// last step's hidden state of the top layer, (B, hidden). Initial hidden and
/// cell states are zero.
Value lstm_forward(Tape& t, const std::vector<Value>& steps,
                   const std::vector<LstmLayer>& layers, std::size_t hidden);

/// Single-sample convenience: input (W, input_dim), returns (hidden).
Value lstm_forward(Tape& t, Value input, const std::vector<LstmLayer>& layers,
                   std::size_t hidden);

// -- tape-free helpers --------------------------------------------------------

double l1_value(const Tensor& a, const Tensor& b);

}  // namespace dmh
