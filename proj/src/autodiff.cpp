#include "dmh/autodiff.hpp"

#include <cmath>
#include <cstring>

namespace dmh {

namespace {

void check_finite_input(const Tensor& v, const char* op) {
  if (!v.all_finite()) {
    throw NonFiniteError(std::string(op) + ": non-finite input value");
  }
}

}  // namespace

Value Tape::leaf(Tensor value, bool track_grad) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  n->needs_grad = track_grad;
  nodes_.push_back(std::move(n));
  return nodes_.back().get();
}

Value Tape::leaf(Parameter& p) {
  auto n = std::make_unique<Node>();
  n->value = p.value;
  n->needs_grad = true;
  n->param = &p;
  nodes_.push_back(std::move(n));
  return nodes_.back().get();
}

Value Tape::make(Tensor value, std::vector<Node*> parents,
                 std::function<void(Node&)> backprop) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  for (Node* p : parents) {
    if (p->needs_grad) {
      n->needs_grad = true;
      break;
    }
  }
  if (n->needs_grad) {
    n->backprop = std::move(backprop);
  }
  nodes_.push_back(std::move(n));
  return nodes_.back().get();
}

void Tape::backward(Node* loss, const std::vector<GradSeed>& seeds) {
  if (consumed_) {
    throw TapeError("backward called on an already-consumed tape");
  }
  if (loss->value.size() != 1) {
    throw TapeError("backward requires a scalar loss, got shape " +
                    shape_str(loss->value.shape()));
  }
  consumed_ = true;

  loss->ensure_grad();
  loss->grad[0] += 1.0;
  for (const auto& s : seeds) {
    if (!s.node->value.same_shape(s.grad)) {
      throw TapeError("gradient seed shape " + shape_str(s.grad.shape()) +
                      " does not match node shape " + shape_str(s.node->value.shape()));
    }
    s.node->ensure_grad();
    for (std::size_t i = 0; i < s.grad.size(); ++i) s.node->grad[i] += s.grad[i];
  }

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.grad_ready()) continue;  // not on any path from the loss or seeds
    if (n.param != nullptr) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
    } else if (n.backprop) {
      n.backprop(n);
    }
  }
}

// -- linear -------------------------------------------------------------------

Value linear_forward(Tape& t, Value x, Value w, Value bias) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(0)) {
    throw DimensionError("linear_forward: input " + shape_str(xv.shape()) +
                         " incompatible with weights " + shape_str(wv.shape()));
  }
  const std::size_t B = xv.dim(0), I = xv.dim(1), O = wv.dim(1);
  if (bias != nullptr && bias->value.size() != O) {
    throw DimensionError("linear_forward: bias " + shape_str(bias->value.shape()) +
                         " incompatible with weights " + shape_str(wv.shape()));
  }

  Tensor out({B, O});
  for (std::size_t b = 0; b < B; ++b) {
    double* orow = out.data() + b * O;
    if (bias != nullptr) {
      std::memcpy(orow, bias->value.data(), O * sizeof(double));
    }
    const double* xrow = xv.data() + b * I;
    for (std::size_t i = 0; i < I; ++i) {
      const double xi = xrow[i];
      const double* wrow = wv.data() + i * O;
      for (std::size_t o = 0; o < O; ++o) orow[o] += xi * wrow[o];
    }
  }

  std::vector<Value> parents = {x, w};
  if (bias != nullptr) parents.push_back(bias);
  return t.make(std::move(out), parents, [x, w, bias, B, I, O](Tape::Node& n) {
    const double* g = n.grad.data();
    if (x->needs_grad) {
      x->ensure_grad();
      for (std::size_t b = 0; b < B; ++b) {
        const double* grow = g + b * O;
        double* xg = x->grad.data() + b * I;
        for (std::size_t i = 0; i < I; ++i) {
          const double* wrow = w->value.data() + i * O;
          double acc = 0.0;
          for (std::size_t o = 0; o < O; ++o) acc += grow[o] * wrow[o];
          xg[i] += acc;
        }
      }
    }
    if (w->needs_grad) {
      w->ensure_grad();
      for (std::size_t b = 0; b < B; ++b) {
        const double* grow = g + b * O;
        const double* xrow = x->value.data() + b * I;
        for (std::size_t i = 0; i < I; ++i) {
          const double xi = xrow[i];
          double* wg = w->grad.data() + i * O;
          for (std::size_t o = 0; o < O; ++o) wg[o] += xi * grow[o];
        }
      }
    }
    if (bias != nullptr && bias->needs_grad) {
      bias->ensure_grad();
      for (std::size_t b = 0; b < B; ++b) {
        const double* grow = g + b * O;
        for (std::size_t o = 0; o < O; ++o) bias->grad[o] += grow[o];
      }
    }
  });
}

// -- activations ---------------------------------------------------------------

Value sigmoid(Tape& t, Value x) {
  check_finite_input(x->value, "sigmoid");
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
  }
  return t.make(std::move(out), {x}, [x](Tape::Node& n) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double s = n.value[i];
      x->grad[i] += n.grad[i] * s * (1.0 - s);
    }
  });
}

Value tanh_op(Tape& t, Value x) {
  check_finite_input(x->value, "tanh");
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x->value[i]);
  return t.make(std::move(out), {x}, [x](Tape::Node& n) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double h = n.value[i];
      x->grad[i] += n.grad[i] * (1.0 - h * h);
    }
  });
}

Value leaky_relu(Tape& t, Value x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ConfigError("leaky_relu slope must be in (0,1), got " + std::to_string(slope));
  }
  check_finite_input(x->value, "leaky_relu");
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x->value[i];
    out[i] = v >= 0.0 ? v : slope * v;
  }
  return t.make(std::move(out), {x}, [x, slope](Tape::Node& n) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      x->grad[i] += n.grad[i] * (x->value[i] >= 0.0 ? 1.0 : slope);
    }
  });
}

Value apply_activation(Tape& t, Value x, ActKind kind, double slope) {
  switch (kind) {
    case ActKind::Sigmoid:
      return sigmoid(t, x);
    case ActKind::Tanh:
      return tanh_op(t, x);
    case ActKind::LeakyRelu:
      return leaky_relu(t, x, slope);
  }
  throw ConfigError("unknown activation kind");
}

// -- conv1d --------------------------------------------------------------------

Value conv1d_same(Tape& t, Value input, Value kernel, Value bias) {
  const Tensor& xv = input->value;
  const Tensor& kv = kernel->value;
  const bool batched = xv.rank() == 3;
  if (!(batched || xv.rank() == 2)) {
    throw DimensionError("conv1d_same: input must be (C,W) or (B,C,W), got " +
                         shape_str(xv.shape()));
  }
  const std::size_t B = batched ? xv.dim(0) : 1;
  const std::size_t C = batched ? xv.dim(1) : xv.dim(0);
  const std::size_t W = batched ? xv.dim(2) : xv.dim(1);
  if (kv.rank() != 3 || kv.dim(2) != 3) {
    throw DimensionError("conv1d_same: kernel must be (O,C,3), got " + shape_str(kv.shape()));
  }
  const std::size_t O = kv.dim(0);
  if (kv.dim(1) != C) {
    throw DimensionError("conv1d_same: input channels " + shape_str(xv.shape()) +
                         " do not match kernel " + shape_str(kv.shape()));
  }
  if (bias->value.size() != O) {
    throw DimensionError("conv1d_same: bias " + shape_str(bias->value.shape()) +
                         " does not match kernel " + shape_str(kv.shape()));
  }

  Shape out_shape = batched ? Shape{B, O, W} : Shape{O, W};
  Tensor out(out_shape);
  const double* X = xv.data();
  double* Y = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    const double* xb = X + b * C * W;
    double* yb = Y + b * O * W;
    for (std::size_t o = 0; o < O; ++o) {
      double* yrow = yb + o * W;
      for (std::size_t w = 0; w < W; ++w) yrow[w] = bias->value[o];
      for (std::size_t c = 0; c < C; ++c) {
        const double* xrow = xb + c * W;
        const double* krow = kv.data() + (o * C + c) * 3;
        for (std::size_t w = 0; w < W; ++w) {
          double acc = krow[1] * xrow[w];
          if (w > 0) acc += krow[0] * xrow[w - 1];
          if (w + 1 < W) acc += krow[2] * xrow[w + 1];
          yrow[w] += acc;
        }
      }
    }
  }

  return t.make(std::move(out), {input, kernel, bias},
                [input, kernel, bias, B, C, W, O](Tape::Node& n) {
    const double* G = n.grad.data();
    for (std::size_t b = 0; b < B; ++b) {
      const double* gb = G + b * O * W;
      const double* xb = input->value.data() + b * C * W;
      if (input->needs_grad) {
        input->ensure_grad();
        double* xg = input->grad.data() + b * C * W;
        for (std::size_t o = 0; o < O; ++o) {
          const double* grow = gb + o * W;
          for (std::size_t c = 0; c < C; ++c) {
            const double* krow = kernel->value.data() + (o * C + c) * 3;
            double* xgrow = xg + c * W;
            for (std::size_t w = 0; w < W; ++w) {
              const double g = grow[w];
              xgrow[w] += g * krow[1];
              if (w > 0) xgrow[w - 1] += g * krow[0];
              if (w + 1 < W) xgrow[w + 1] += g * krow[2];
            }
          }
        }
      }
      if (kernel->needs_grad) {
        kernel->ensure_grad();
        for (std::size_t o = 0; o < O; ++o) {
          const double* grow = gb + o * W;
          for (std::size_t c = 0; c < C; ++c) {
            const double* xrow = xb + c * W;
            double* kg = kernel->grad.data() + (o * C + c) * 3;
            for (std::size_t w = 0; w < W; ++w) {
              const double g = grow[w];
              kg[1] += g * xrow[w];
              if (w > 0) kg[0] += g * xrow[w - 1];
              if (w + 1 < W) kg[2] += g * xrow[w + 1];
            }
          }
        }
      }
      if (bias->needs_grad) {
        bias->ensure_grad();
        for (std::size_t o = 0; o < O; ++o) {
          const double* grow = gb + o * W;
          for (std::size_t w = 0; w < W; ++w) bias->grad[o] += grow[w];
        }
      }
    }
  });
}

// -- elementwise ---------------------------------------------------------------

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Value add(Tape& t, Value a, Value b) {
  require_same_shape(a->value, b->value, "add");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return t.make(std::move(out), {a, b}, [a, b](Tape::Node& n) {
    if (a->needs_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i];
    }
  });
}

Value sub(Tape& t, Value a, Value b) {
  require_same_shape(a->value, b->value, "sub");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return t.make(std::move(out), {a, b}, [a, b](Tape::Node& n) {
    if (a->needs_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) b->grad[i] -= n.grad[i];
    }
  });
}

Value mul(Tape& t, Value a, Value b) {
  require_same_shape(a->value, b->value, "mul");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return t.make(std::move(out), {a, b}, [a, b](Tape::Node& n) {
    if (a->needs_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * b->value[i];
    }
    if (b->needs_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i] * a->value[i];
    }
  });
}

Value scale(Tape& t, Value x, double c) {
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * c;
  return t.make(std::move(out), {x}, [x, c](Tape::Node& n) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) x->grad[i] += n.grad[i] * c;
  });
}

Value sum(Tape& t, Value x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) acc += x->value[i];
  return t.make(Tensor::scalar(acc), {x}, [x](Tape::Node& n) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    const double g = n.grad[0];
    for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
  });
}

Value l1_loss(Tape& t, Value pred, const Tensor& target) {
  require_same_shape(pred->value, target, "l1_loss");
  const std::size_t n = pred->value.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::fabs(pred->value[i] - target[i]);
  const double loss = n > 0 ? acc / static_cast<double>(n) : 0.0;
  Tensor tgt = target;
  return t.make(Tensor::scalar(loss), {pred}, [pred, tgt = std::move(tgt), n](Tape::Node& nd) {
    if (!pred->needs_grad || n == 0) return;
    pred->ensure_grad();
    const double g = nd.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = pred->value[i] - tgt[i];
      if (d > 0.0) {
        pred->grad[i] += g;
      } else if (d < 0.0) {
        pred->grad[i] -= g;
      }
    }
  });
}

Value reshape(Tape& t, Value x, Shape s) {
  Tensor out = x->value.reshaped(std::move(s));
  return t.make(std::move(out), {x}, [x](Tape::Node& n) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) x->grad[i] += n.grad[i];
  });
}

Value concat_cols(Tape& t, const std::vector<Value>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t B = parts[0]->value.dim(0);
  std::size_t total = 0;
  for (Value p : parts) {
    if (p->value.rank() != 2 || p->value.dim(0) != B) {
      throw DimensionError("concat_cols: incompatible block " + shape_str(p->value.shape()));
    }
    total += p->value.dim(1);
  }
  Tensor out({B, total});
  std::size_t off = 0;
  for (Value p : parts) {
    const std::size_t c = p->value.dim(1);
    for (std::size_t b = 0; b < B; ++b) {
      std::memcpy(out.data() + b * total + off, p->value.data() + b * c, c * sizeof(double));
    }
    off += c;
  }
  std::vector<Value> parents(parts.begin(), parts.end());
  return t.make(std::move(out), parents, [parts, B, total](Tape::Node& n) {
    std::size_t off = 0;
    for (Value p : parts) {
      const std::size_t c = p->value.dim(1);
      if (p->needs_grad) {
        p->ensure_grad();
        for (std::size_t b = 0; b < B; ++b) {
          const double* g = n.grad.data() + b * total + off;
          double* pg = p->grad.data() + b * c;
          for (std::size_t i = 0; i < c; ++i) pg[i] += g[i];
        }
      }
      off += c;
    }
  });
}

Value time_step(Tape& t, Value x, std::size_t step) {
  const Tensor& xv = x->value;
  if (xv.rank() != 3 || step >= xv.dim(2)) {
    throw DimensionError("time_step: step " + std::to_string(step) + " out of " +
                         shape_str(xv.shape()));
  }
  const std::size_t B = xv.dim(0), C = xv.dim(1), W = xv.dim(2);
  Tensor out({B, C});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) out.at2(b, c) = xv.at3(b, c, step);
  }
  return t.make(std::move(out), {x}, [x, step, B, C, W](Tape::Node& n) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < C; ++c) {
        x->grad[(b * C + c) * W + step] += n.grad[b * C + c];
      }
    }
  });
}

Value slice_cols(Tape& t, Value x, std::size_t c0, std::size_t c1) {
  const Tensor& xv = x->value;
  if (xv.rank() != 2 || c0 >= c1 || c1 > xv.dim(1)) {
    throw DimensionError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") out of " + shape_str(xv.shape()));
  }
  const std::size_t B = xv.dim(0), C = xv.dim(1), n = c1 - c0;
  Tensor out({B, n});
  for (std::size_t b = 0; b < B; ++b) {
    std::memcpy(out.data() + b * n, xv.data() + b * C + c0, n * sizeof(double));
  }
  return t.make(std::move(out), {x}, [x, c0, B, C, n](Tape::Node& nd) {
    if (!x->needs_grad) return;
    x->ensure_grad();
    for (std::size_t b = 0; b < B; ++b) {
      const double* g = nd.grad.data() + b * n;
      double* xg = x->grad.data() + b * C + c0;
      for (std::size_t i = 0; i < n; ++i) xg[i] += g[i];
    }
  });
}

// -- LSTM ----------------------------------------------------------------------

Value lstm_forward(Tape& t, const std::vector<Value>& steps,
                   const std::vector<LstmLayer>& layers, std::size_t hidden) {
  if (steps.empty()) throw DimensionError("lstm_forward: no time steps");
  if (layers.empty()) throw DimensionError("lstm_forward: no layers");
  const std::size_t H = hidden;

  std::vector<Value> inputs = steps;
  Value top = nullptr;
  for (const LstmLayer& layer : layers) {
    if (layer.w_ih->value.dim(1) != 4 * H || layer.w_hh->value.dim(0) != H ||
        layer.w_hh->value.dim(1) != 4 * H || layer.bias->value.size() != 4 * H) {
      throw DimensionError("lstm_forward: layer parameter shapes inconsistent with hidden=" +
                           std::to_string(H));
    }
    Value h = nullptr;  // previous hidden, null means zero state
    Value c = nullptr;
    std::vector<Value> outputs;
    outputs.reserve(inputs.size());
    for (Value x : inputs) {
      Value z = linear_forward(t, x, layer.w_ih, layer.bias);
      if (h != nullptr) {
        z = add(t, z, linear_forward(t, h, layer.w_hh, nullptr));
      }
      Value gi = sigmoid(t, slice_cols(t, z, 0, H));
      Value gf = sigmoid(t, slice_cols(t, z, H, 2 * H));
      Value gg = tanh_op(t, slice_cols(t, z, 2 * H, 3 * H));
      Value go = sigmoid(t, slice_cols(t, z, 3 * H, 4 * H));
      Value c_new = mul(t, gi, gg);
      if (c != nullptr) {
        c_new = add(t, mul(t, gf, c), c_new);
      }
      c = c_new;
      h = mul(t, go, tanh_op(t, c));
      outputs.push_back(h);
    }
    inputs = std::move(outputs);
    top = h;
  }
  return top;
}

Value lstm_forward(Tape& t, Value input, const std::vector<LstmLayer>& layers,
                   std::size_t hidden) {
  const Tensor& xv = input->value;
  if (xv.rank() != 2) {
    throw DimensionError("lstm_forward: expected (steps, features), got " +
                         shape_str(xv.shape()));
  }
  const std::size_t W = xv.dim(0), F = xv.dim(1);
  Value flat = reshape(t, input, {1, W * F});
  std::vector<Value> steps;
  steps.reserve(W);
  for (std::size_t w = 0; w < W; ++w) {
    steps.push_back(slice_cols(t, flat, w * F, (w + 1) * F));  // row w as a (1,F) step
  }
  Value out = lstm_forward(t, steps, layers, hidden);
  return reshape(t, out, {hidden});
}

double l1_value(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("l1_value: shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  if (a.size() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

}  // namespace dmh
