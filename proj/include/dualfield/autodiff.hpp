// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// Every value lives on a Tape. Operations append a node holding the forward
// value and enough context to run its backward rule; Tape::backward walks the
// nodes once in reverse order. Parameters are long-lived buffers outside the
// tape: binding one onto a tape creates a leaf whose gradient is added into
// Parameter::grad when backward runs.
namespace dualfield::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(Shape s);

enum class OpKind : std::uint8_t {
  leaf,
  constant,
  add,
  sub,
  mul,
  div,
  matmul,
  relu,
  sigmoid,
  softplus,
  exp,
  log,
  sqrt,
  sum,
  mean,
  row_sum,
  abs,
  max_const,
  maximum,
  clamp,
  scale,
  add_const,
  concat,
  slice,
  broadcast,
  gather_rows,
  stop_gradient,
  custom,
};

std::string_view op_name(OpKind kind);

// Learning-rate group of a parameter.
enum class Group : std::uint8_t { mlp, grid, pose };

std::string_view group_name(Group g);
Group parse_group(std::string_view name);

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an operation produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  NumericError(OpKind kind, int node_id, std::string detail);
  OpKind kind() const { return kind_; }
  int node_id() const { return node_id_; }

 private:
  OpKind kind_;
  int node_id_;
};

class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Shape shape, Group group);

  const std::string& name() const { return name_; }
  Shape shape() const { return shape_; }
  Group group() const { return group_; }
  std::size_t size() const { return value.size(); }
  void zero_grad();

  std::vector<double> value;
  std::vector<double> grad;

 private:
  std::string name_;
  Shape shape_;
  Group group_ = Group::mlp;
};

class Tape;

// Handle to a node on a tape.
class Tensor {
 public:
  Tensor() = default;

  Shape shape() const;
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }
  std::span<const double> values() const;
  double item() const;
  double at(std::size_t r, std::size_t c) const;
  bool requires_grad() const;
  int node_id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Passed to a custom backward rule. input_grads[k] is empty when input k does
// not require a gradient.
struct BackwardContext {
  std::span<const double> output;
  std::span<const double> output_grad;
  std::vector<std::span<const double>> inputs;
  std::vector<std::span<double>> input_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<double> values);
  Tensor constant(double v) { return constant({1, 1}, {v}); }
  // A leaf whose gradient is readable through grad() after backward.
  Tensor variable(Shape shape, std::vector<double> values);
  // A leaf bound to a parameter; backward adds into p.grad. With
  // trainable=false the parameter enters as a constant.
  Tensor parameter(Parameter& p, bool trainable = true);

  // Appends a node whose value was computed by the caller. backward receives
  // the output gradient and fills the inputs' gradients. It may also write
  // directly into Parameter buffers it captured.
  Tensor custom(std::string_view name, std::vector<Tensor> inputs, Shape shape,
                std::vector<double> values, BackwardFn backward,
                bool force_requires_grad = false);

  void backward(Tensor loss);
  // Gradient of the most recent backward() w.r.t. a node; zeros if the node
  // was not reached.
  std::vector<double> grad(Tensor t) const;

  void clear();
  std::size_t size() const { return nodes_.size(); }

  // Internal, used by the op functions below.
  Tensor record(OpKind kind, std::vector<int> inputs, Shape shape,
                std::vector<double> values, std::vector<double> attrs = {});
  const std::vector<double>& value_of(int id) const { return nodes_[id].value; }
  Shape shape_of(int id) const { return nodes_[id].shape; }
  bool requires_grad_of(int id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    OpKind kind = OpKind::constant;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<int> inputs;
    std::vector<double> attrs;
    std::string custom_name;
    BackwardFn custom_backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  void check_finite(const Node& n, int id) const;
  void run_backward(int id);
  std::vector<double>& ensure_grad(int id);

  std::vector<Node> nodes_;
};

// Elementwise binary ops accept equal shapes, a [1,C] row broadcast over the
// rows of the left operand, or a [1,1] scalar on either side.
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor div(Tensor a, Tensor b);
Tensor matmul(Tensor a, Tensor b);

Tensor relu(Tensor x);
Tensor sigmoid(Tensor x);
Tensor softplus(Tensor x);
Tensor exp(Tensor x);
Tensor log(Tensor x);
Tensor sqrt(Tensor x);
Tensor abs(Tensor x);
Tensor max_const(Tensor x, double c);
// Elementwise max of two same-shape tensors. Ties pass no gradient.
Tensor maximum(Tensor a, Tensor b);
Tensor clamp(Tensor x, double lo, double hi);
Tensor scale(Tensor x, double c);
Tensor add_const(Tensor x, double c);

Tensor sum(Tensor x);
Tensor mean(Tensor x);
// [N,C] -> [N,1]
Tensor row_sum(Tensor x);

// Column-wise concatenation of tensors with equal row counts.
Tensor concat(std::span<const Tensor> parts);
Tensor concat(Tensor a, Tensor b);
// Columns [begin, end).
Tensor slice(Tensor x, std::size_t begin, std::size_t end);
// [1,C] -> [rows,C]
Tensor broadcast(Tensor x, std::size_t rows);
Tensor gather_rows(Tensor x, std::span<const std::uint32_t> index);
Tensor stop_gradient(Tensor x);

// Zeroes every parameter gradient and resets the tape.
void clear_gradients(std::span<Parameter* const> params, Tape& tape);

}  // namespace dualfield::ad
