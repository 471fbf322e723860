#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "autogel/errors.hpp"

namespace autogel {

using Shape = std::vector<std::size_t>;

/// Backward-rule identifier recorded with each tape entry.
enum class OpKind {
  Leaf,
  MatMul,
  Transpose,
  Add,
  Subtract,
  Multiply,
  Scale,
  AddConstant,
  MulConstant,
  AddRowBias,
  CircularCorrelation,
  Concat,
  ConcatRows,
  Maximum,
  Abs,
  Sum,
  Mean,
  SumAxis,
  MeanAxis,
  MaxAxis,
  GatherRows,
  SegmentSum,
  SegmentMean,
  SegmentMax,
  Softmax,
  Log,
  Exp,
  Sigmoid,
  Tanh,
  Relu,
  Prelu,
  Dropout,
  BinaryCrossEntropy,
  CrossEntropy,
  Element,
  Reshape,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::Subtract: return "subtract";
    case OpKind::Multiply: return "multiply";
    case OpKind::Scale: return "scale";
    case OpKind::AddConstant: return "add_constant";
    case OpKind::MulConstant: return "mul_constant";
    case OpKind::AddRowBias: return "add_row_bias";
    case OpKind::CircularCorrelation: return "circular_correlation";
    case OpKind::Concat: return "concat";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::Maximum: return "maximum";
    case OpKind::Abs: return "abs";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::SumAxis: return "sum_axis";
    case OpKind::MeanAxis: return "mean_axis";
    case OpKind::MaxAxis: return "max_axis";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::SegmentSum: return "segment_sum";
    case OpKind::SegmentMean: return "segment_mean";
    case OpKind::SegmentMax: return "segment_max";
    case OpKind::Softmax: return "softmax";
    case OpKind::Log: return "log";
    case OpKind::Exp: return "exp";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Relu: return "relu";
    case OpKind::Prelu: return "prelu";
    case OpKind::Dropout: return "dropout";
    case OpKind::BinaryCrossEntropy: return "binary_cross_entropy";
    case OpKind::CrossEntropy: return "cross_entropy";
    case OpKind::Element: return "element";
    case OpKind::Reshape: return "reshape";
  }
  return "?";
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  OpKind kind = OpKind::Leaf;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  std::ptrdiff_t tape_index = -1;
  std::uint64_t tape_generation = 0;
  const void* tape_owner = nullptr;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Ordered record of operations for reverse-mode differentiation.
/// Rebuilt on every forward pass; cleared between optimizer steps.
class Tape {
 public:
  void record(const std::shared_ptr<detail::Node>& n) {
    n->tape_index = static_cast<std::ptrdiff_t>(nodes_.size());
    n->tape_generation = generation_;
    n->tape_owner = this;
    nodes_.push_back(n);
  }

  void clear() {
    nodes_.clear();
    ++generation_;
  }

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }
  const std::vector<std::shared_ptr<detail::Node>>& nodes() const { return nodes_; }

  bool holds(const detail::Node& n) const {
    return n.tape_owner == this && n.tape_generation == generation_ && n.tape_index >= 0 &&
           static_cast<std::size_t>(n.tape_index) < nodes_.size() &&
           nodes_[static_cast<std::size_t>(n.tape_index)].get() == &n;
  }

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  std::uint64_t generation_ = 1;
};

namespace detail {

inline Tape*& active_tape_ptr() {
  thread_local Tape default_tape;
  thread_local Tape* active = &default_tape;
  return active;
}

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool& finite_checks() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

inline Tape& active_tape() { return *detail::active_tape_ptr(); }

/// Makes `tape` the recording target for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(detail::active_tape_ptr()) {
    detail::active_tape_ptr() = &tape;
  }
  ~TapeScope() { detail::active_tape_ptr() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Disables recording; results never require gradients.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline void set_finite_checks(bool enabled) { detail::finite_checks() = enabled; }
inline bool finite_checks_enabled() { return detail::finite_checks(); }

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_str(shape));
    }
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("shape " + shape_str(shape) + " does not match " +
                           std::to_string(data.size()) + " values");
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    const auto n = v.size();
    return from({n}, std::move(v), requires_grad);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                       bool requires_grad = false) {
    return from({rows, cols}, std::move(v), requires_grad);
  }

  static Tensor identity(std::size_t n, bool requires_grad = false) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return matrix(n, n, std::move(v), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t rows() const { return node_->shape[0]; }
  /// Trailing width; a rank-1 tensor is treated as a single row of width n.
  std::size_t cols() const { return rank() == 1 ? node_->shape[0] : numel() / node_->shape[0]; }
  std::size_t row_count() const { return rank() == 1 ? 1 : node_->shape[0]; }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  double item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Accumulated gradient; zeros if nothing has been accumulated yet.
  std::vector<double> grad() const {
    return node_->grad.empty() ? std::vector<double>(numel(), 0.0) : node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  OpKind kind() const { return node_->kind; }

  /// Value copy that is not connected to any tape.
  Tensor detach() const { return from(shape(), node_->data, false); }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& handle() const { return node_; }

  bool same_node(const Tensor& o) const { return node_ == o.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(OpKind, Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(detail::Node&)>);
};

/// Creates an op output, recording it on the active tape when any input
/// requires a gradient and grad mode is on.
inline Tensor make_result(OpKind kind, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                          std::function<void(detail::Node&)> backward) {
  if (detail::finite_checks()) {
    for (double v : data) {
      if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op_name(kind));
    }
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->kind = kind;
  bool needs = false;
  if (detail::grad_mode()) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (const auto& t : inputs) n->inputs.push_back(t.handle());
    n->backward = std::move(backward);
    active_tape().record(n);
  }
  return Tensor(std::move(n));
}

/// Result of a backward pass: the tensors that received a gradient.
class Gradients {
 public:
  void add(const std::shared_ptr<detail::Node>& n) { nodes_.push_back(n); }

  bool contains(const Tensor& t) const {
    for (const auto& n : nodes_) {
      if (n.get() == t.node()) return true;
    }
    return false;
  }

  /// Gradient of `t`, or zeros if the loss does not depend on it.
  std::vector<double> of(const Tensor& t) const {
    for (const auto& n : nodes_) {
      if (n.get() == t.node()) return n->grad;
    }
    return std::vector<double>(t.numel(), 0.0);
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

/// Reverse-mode sweep from a scalar loss. Gradients are accumulated into
/// every reachable tensor that requires one, in exact reverse tape order.
inline Gradients backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss");
  }
  Gradients out;
  auto* root = loss.node();
  if (!root->requires_grad) {
    logging::warn("backward() on a loss that does not depend on any parameter; no gradients produced");
    return out;
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  if (root->kind == OpKind::Leaf) {
    out.add(loss.handle());
    return out;
  }
  Tape& tape = active_tape();
  if (!tape.holds(*root)) {
    throw ContractError("backward() loss is not on the active tape");
  }
  const auto& nodes = tape.nodes();
  std::vector<const detail::Node*> seen_leaves;
  for (auto i = root->tape_index; i >= 0; --i) {
    auto& n = nodes[static_cast<std::size_t>(i)];
    if (n->grad.empty()) continue;
    n->backward(*n);
    out.add(n);
    for (const auto& in : n->inputs) {
      if (in->kind == OpKind::Leaf && in->requires_grad && !in->grad.empty()) {
        bool dup = false;
        for (auto* s : seen_leaves) dup = dup || s == in.get();
        if (!dup) {
          seen_leaves.push_back(in.get());
          out.add(in);
        }
      }
    }
  }
  return out;
}

}  // namespace autogel
