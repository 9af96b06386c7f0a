#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scoregrad/tensor.hpp"

namespace scoregrad {

/// Trainable tensor with its accumulated gradient. The gradient is an
/// accumulator written by Tape::backward, so it is mutable through const
/// references; forward passes only read the value.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  const std::string& name() const noexcept { return name_; }
  const Tensor& value() const noexcept { return value_; }
  Tensor& value() noexcept { return value_; }
  Tensor& grad() const noexcept { return grad_; }
  const Shape& shape() const noexcept { return value_.shape(); }

  void zero_grad() const noexcept { grad_.fill(0.0); }

 private:
  std::string name_;
  Tensor value_;
  mutable Tensor grad_;
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) noexcept : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class GradMode { kRecord, kInference };

/// Define-by-run record of executed operations. Nodes are appended in
/// execution order, so the node list is already topologically sorted.
/// A recording tape supports exactly one backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(GradMode mode = GradMode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(const Parameter& param);

  /// Accumulates d(root)/d(param) into every reachable Parameter's grad.
  void backward(const Var& root);

  bool recording() const noexcept { return mode_ == GradMode::kRecord; }
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  void reset();

  // Op implementation interface.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of node `id`, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    const Parameter* param = nullptr;
    bool requires_grad = false;
  };

  void check_owned(const Var& v) const;

  std::vector<Node> nodes_;
  GradMode mode_;
  bool consumed_ = false;
};

/// Differentiable operations. Broadcasting only happens through the
/// explicitly named ops (`add_bias`, `expand_last`, `scale`).
namespace ops {

/// (m,k)x(k,n) -> (m,n); (m,k)x(k) -> (m).
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
/// (rows, n) + (n): bias added to every row.
Var add_bias(const Var& a, const Var& bias);
/// Dilated 1-D convolution with symmetric zero padding that preserves length.
/// input (batch, c_in, len) or (c_in, len); kernel (c_out, c_in, k) with odd k.
Var conv1d(const Var& input, const Var& kernel, const std::optional<Var>& bias,
           std::size_t dilation = 1);
/// (batch, c) -> (batch, c, len) by repeating along a new trailing axis.
Var expand_last(const Var& a, std::size_t len);
Var reshape(const Var& a, Shape shape);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var softplus(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var square_norm(const Var& a);

}  // namespace ops

/// Numerically stable scalar helpers shared with inference code.
double sigmoid(double x) noexcept;
double softplus(double x) noexcept;

}  // namespace scoregrad
