#include "scoregrad/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "scoregrad/errors.hpp"

namespace scoregrad {

Parameter::Parameter(std::string name, Tensor value)
    : name_(std::move(name)), value_(std::move(value)), grad_(value_.shape()) {}

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw Error("var: use of an unbound variable");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const Parameter& param) {
  nodes_.push_back(Node{param.value(), {}, {}, &param, recording()});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(const Var& v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw Error("tape: variable belongs to a different tape");
  }
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    check_owned(in);
    needs = needs || nodes_[in.id_].requires_grad;
  }
  needs = needs && recording();
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{},
                        nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty() && !node.value.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(const Var& root) {
  check_owned(root);
  if (!recording()) throw Error("backward: tape was built in inference mode");
  if (consumed_) throw Error("backward: tape already consumed");
  if (nodes_[root.id_].value.size() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " +
                     to_string(nodes_[root.id_].value.shape()));
  }
  consumed_ = true;
  if (!nodes_[root.id_].requires_grad) return;
  grad_buffer(root.id_).fill(1.0);
  for (std::size_t id = root.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.backward) node.backward(*this, node.grad);
    if (node.param != nullptr) {
      auto dst = node.param->grad().data();
      auto src = node.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  for (Node& node : nodes_) node.backward = {};
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

namespace ops {

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

Tape& common_tape(const char* op, const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands on different tapes");
  return a.tape();
}

void accumulate(Tape& tape, const Var& v, auto&& fn) {
  if (tape.requires_grad(v.id())) fn(tape.grad_buffer(v.id()).data());
}

template <typename Forward, typename Derivative>
Var unary(const Var& a, Forward forward, Derivative derivative) {
  Tensor out(a.shape());
  auto x = a.value().data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  const std::size_t self = a.tape().size();
  return a.tape().record(std::move(out), {a}, [a, self, derivative](Tape& t, const Tensor& g) {
    accumulate(t, a, [&](std::span<double> dx) {
      auto x = t.value(a.id()).data();
      auto y = t.value(self).data();
      auto gy = g.data();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += gy[i] * derivative(x[i], y[i]);
    });
  });
}

std::size_t product(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= s[i];
  return p;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = common_tape("matmul", a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || (sb.size() != 1 && sb.size() != 2) || sa[1] != sb[0]) {
    shape_fail("matmul", sa, sb);
  }
  const std::size_t m = sa[0], k = sa[1], n = sb.size() == 2 ? sb[1] : 1;
  Tensor out(sb.size() == 2 ? Shape{m, n} : Shape{m});
  {
    auto A = a.value().data();
    auto B = b.value().data();
    auto C = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = C.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = B.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
  return tape.record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
    auto G = g.data();
    auto A = t.value(a.id()).data();
    auto B = t.value(b.id()).data();
    accumulate(t, a, [&](std::span<double> dA) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          dA[i * k + p] += acc;
        }
      }
    });
    accumulate(t, b, [&](std::span<double> dB) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * G[i * n + j];
        }
      }
    });
  });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = common_tape("add", a, b);
  if (a.shape() != b.shape()) shape_fail("add", a.shape(), b.shape());
  Tensor out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    auto gy = g.data();
    for (const Var& v : {a, b}) {
      accumulate(t, v, [&](std::span<double> d) {
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i];
      });
    }
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = common_tape("sub", a, b);
  if (a.shape() != b.shape()) shape_fail("sub", a.shape(), b.shape());
  Tensor out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    auto gy = g.data();
    accumulate(t, a, [&](std::span<double> d) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i];
    });
    accumulate(t, b, [&](std::span<double> d) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= gy[i];
    });
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = common_tape("mul", a, b);
  if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
  Tensor out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    auto gy = g.data();
    auto x = t.value(a.id()).data(), y = t.value(b.id()).data();
    accumulate(t, a, [&](std::span<double> d) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i] * y[i];
    });
    accumulate(t, b, [&](std::span<double> d) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i] * x[i];
    });
  });
}

Var scale(const Var& a, double factor) {
  Tensor out(a.shape());
  auto x = a.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = factor * x[i];
  return a.tape().record(std::move(out), {a}, [a, factor](Tape& t, const Tensor& g) {
    auto gy = g.data();
    accumulate(t, a, [&](std::span<double> d) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * gy[i];
    });
  });
}

Var add_scalar(const Var& a, double offset) {
  Tensor out(a.shape());
  auto x = a.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + offset;
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    auto gy = g.data();
    accumulate(t, a, [&](std::span<double> d) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i];
    });
  });
}

Var add_bias(const Var& a, const Var& bias) {
  Tape& tape = common_tape("add_bias", a, bias);
  const Shape& sa = a.shape();
  const Shape& sb = bias.shape();
  if (sa.size() != 2 || sb.size() != 1 || sa[1] != sb[0]) shape_fail("add_bias", sa, sb);
  const std::size_t rows = sa[0], n = sa[1];
  Tensor out(sa);
  auto x = a.value().data(), b = bias.value().data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) o[r * n + j] = x[r * n + j] + b[j];
  }
  return tape.record(std::move(out), {a, bias}, [a, bias, rows, n](Tape& t, const Tensor& g) {
    auto gy = g.data();
    accumulate(t, a, [&](std::span<double> d) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i];
    });
    accumulate(t, bias, [&](std::span<double> d) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) d[j] += gy[r * n + j];
      }
    });
  });
}

Var conv1d(const Var& input, const Var& kernel, const std::optional<Var>& bias,
           std::size_t dilation) {
  Tape& tape = common_tape("conv1d_dilated", input, kernel);
  const Shape& si = input.shape();
  const Shape& sk = kernel.shape();
  const bool batched = si.size() == 3;
  if ((si.size() != 2 && si.size() != 3) || sk.size() != 3 || sk[2] % 2 == 0 ||
      sk[1] != si[si.size() - 2]) {
    shape_fail("conv1d_dilated", si, sk);
  }
  if (dilation < 1) throw ShapeError("conv1d_dilated: dilation must be >= 1");
  const std::size_t batch = batched ? si[0] : 1;
  const std::size_t c_in = sk[1], c_out = sk[0], width = sk[2], len = si.back();
  if (bias) {
    common_tape("conv1d_dilated", input, *bias);
    if (bias->shape() != Shape{c_out}) shape_fail("conv1d_dilated bias", bias->shape(), {c_out});
  }
  const auto half = static_cast<std::ptrdiff_t>(width / 2);
  const auto L = static_cast<std::ptrdiff_t>(len);
  auto shift_of = [half, dilation](std::size_t k) {
    return (static_cast<std::ptrdiff_t>(k) - half) * static_cast<std::ptrdiff_t>(dilation);
  };

  Tensor out(batched ? Shape{batch, c_out, len} : Shape{c_out, len});
  {
    auto X = input.value().data();
    auto W = kernel.value().data();
    auto O = out.data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < c_out; ++o) {
        double* orow = O.data() + (b * c_out + o) * len;
        if (bias) std::fill(orow, orow + len, bias->value()[o]);
        for (std::size_t c = 0; c < c_in; ++c) {
          const double* xrow = X.data() + (b * c_in + c) * len;
          for (std::size_t k = 0; k < width; ++k) {
            const double w = W[(o * c_in + c) * width + k];
            const std::ptrdiff_t s = shift_of(k);
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -s);
            const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(L, L - s);
            for (std::ptrdiff_t l = lo; l < hi; ++l) orow[l] += w * xrow[l + s];
          }
        }
      }
    }
  }

  std::vector<Var> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  return tape.record(
      std::move(out), inputs,
      [input, kernel, bias, batch, c_in, c_out, width, len, L, shift_of](Tape& t,
                                                                      const Tensor& g) {
        auto G = g.data();
        auto X = t.value(input.id()).data();
        auto W = t.value(kernel.id()).data();
        accumulate(t, input, [&](std::span<double> dX) {
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < c_out; ++o) {
              const double* grow = G.data() + (b * c_out + o) * len;
              for (std::size_t c = 0; c < c_in; ++c) {
                double* dxrow = dX.data() + (b * c_in + c) * len;
                for (std::size_t k = 0; k < width; ++k) {
                  const double w = W[(o * c_in + c) * width + k];
                  const std::ptrdiff_t s = shift_of(k);
                  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -s);
                  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(L, L - s);
                  for (std::ptrdiff_t l = lo; l < hi; ++l) dxrow[l + s] += w * grow[l];
                }
              }
            }
          }
        });
        accumulate(t, kernel, [&](std::span<double> dW) {
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < c_out; ++o) {
              const double* grow = G.data() + (b * c_out + o) * len;
              for (std::size_t c = 0; c < c_in; ++c) {
                const double* xrow = X.data() + (b * c_in + c) * len;
                for (std::size_t k = 0; k < width; ++k) {
                  const std::ptrdiff_t s = shift_of(k);
                  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -s);
                  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(L, L - s);
                  double acc = 0.0;
                  for (std::ptrdiff_t l = lo; l < hi; ++l) acc += grow[l] * xrow[l + s];
                  dW[(o * c_in + c) * width + k] += acc;
                }
              }
            }
          }
        });
        if (bias) {
          accumulate(t, *bias, [&](std::span<double> dB) {
            for (std::size_t b = 0; b < batch; ++b) {
              for (std::size_t o = 0; o < c_out; ++o) {
                const double* grow = G.data() + (b * c_out + o) * len;
                double acc = 0.0;
                for (std::size_t l = 0; l < len; ++l) acc += grow[l];
                dB[o] += acc;
              }
            }
          });
        }
      });
}

Var expand_last(const Var& a, std::size_t len) {
  if (a.shape().size() != 2) shape_fail("expand_last", a.shape(), {0, 0});
  const std::size_t rows = a.shape()[0] * a.shape()[1];
  Tensor out(Shape{a.shape()[0], a.shape()[1], len});
  auto x = a.value().data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) std::fill_n(o.data() + r * len, len, x[r]);
  return a.tape().record(std::move(out), {a}, [a, rows, len](Tape& t, const Tensor& g) {
    auto gy = g.data();
    accumulate(t, a, [&](std::span<double> d) {
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t l = 0; l < len; ++l) acc += gy[r * len + l];
        d[r] += acc;
      }
    });
  });
}

Var reshape(const Var& a, Shape shape) {
  if (element_count(shape) != a.value().size()) shape_fail("reshape", a.shape(), shape);
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    auto gy = g.data();
    accumulate(t, a, [&](std::span<double> d) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy[i];
    });
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
  Tape& tape = parts[0].tape();
  std::size_t total = 0;
  for (const Var& p : parts) {
    common_tape("concat", parts[0], p);
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) shape_fail("concat", first, s);
    total += s[axis];
  }
  const std::size_t outer = product(first, 0, axis);
  const std::size_t inner = product(first, axis + 1, first.size());
  Shape out_shape = first;
  out_shape[axis] = total;
  Tensor out(out_shape);
  auto o = out.data();
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.shape()[axis] * inner;
    auto x = p.value().data();
    for (std::size_t r = 0; r < outer; ++r) {
      std::copy_n(x.data() + r * chunk, chunk, o.data() + r * total * inner + offset);
    }
    offset += chunk;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), parts,
                     [inputs, offsets, outer, inner, total, axis](Tape& t, const Tensor& g) {
                       auto gy = g.data();
                       for (std::size_t k = 0; k < inputs.size(); ++k) {
                         const std::size_t chunk = inputs[k].shape()[axis] * inner;
                         accumulate(t, inputs[k], [&](std::span<double> d) {
                           for (std::size_t r = 0; r < outer; ++r) {
                             const double* src = gy.data() + r * total * inner + offsets[k];
                             double* dst = d.data() + r * chunk;
                             for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                           }
                         });
                       }
                     });
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " invalid for shape " + to_string(s));
  }
  const std::size_t outer = product(s, 0, axis);
  const std::size_t inner = product(s, axis + 1, s.size());
  const std::size_t full = s[axis] * inner;
  const std::size_t chunk = (end - begin) * inner;
  const std::size_t offset = begin * inner;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  Tensor out(out_shape);
  auto x = a.value().data();
  auto o = out.data();
  for (std::size_t r = 0; r < outer; ++r) {
    std::copy_n(x.data() + r * full + offset, chunk, o.data() + r * chunk);
  }
  return a.tape().record(std::move(out), {a},
                         [a, outer, full, chunk, offset](Tape& t, const Tensor& g) {
                           auto gy = g.data();
                           accumulate(t, a, [&](std::span<double> d) {
                             for (std::size_t r = 0; r < outer; ++r) {
                               double* dst = d.data() + r * full + offset;
                               const double* src = gy.data() + r * chunk;
                               for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                             }
                           });
                         });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return scoregrad::sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return scoregrad::softplus(x); },
      [](double x, double) { return scoregrad::sigmoid(x); });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return a.tape().record(Tensor::scalar(total), {a}, [a](Tape& t, const Tensor& g) {
    const double gy = g[0];
    accumulate(t, a, [&](std::span<double> d) {
      for (double& v : d) v += gy;
    });
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean: empty tensor");
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return a.tape().record(Tensor::scalar(total / n), {a}, [a, n](Tape& t, const Tensor& g) {
    const double gy = g[0] / n;
    accumulate(t, a, [&](std::span<double> d) {
      for (double& v : d) v += gy;
    });
  });
}

Var square_norm(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v * v;
  return a.tape().record(Tensor::scalar(total), {a}, [a](Tape& t, const Tensor& g) {
    const double gy = 2.0 * g[0];
    auto x = t.value(a.id()).data();
    accumulate(t, a, [&](std::span<double> d) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gy * x[i];
    });
  });
}

}  // namespace ops
}  // namespace scoregrad
