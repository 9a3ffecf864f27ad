// SPDX-License-Identifier: Apache-2.0
#include "dualfield/autodiff.hpp"

#include <malloc.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace dualfield::ad {

namespace {

// Tape buffers are large and short-lived; keep them on the heap instead of
// round-tripping through mmap, which page-faults on every op.
const bool heap_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  return true;
}();

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

enum BroadcastMode : int { same = 0, row_rhs = 1, scalar_rhs = 2, scalar_lhs = 3 };

struct BinaryPlan {
  BroadcastMode mode;
  Shape out;
};

BinaryPlan plan_binary(OpKind kind, Shape a, Shape b) {
  if (a == b) return {same, a};
  if (b.rows == 1 && b.cols == 1) return {scalar_rhs, a};
  if (a.rows == 1 && a.cols == 1) return {scalar_lhs, b};
  if (b.rows == 1 && b.cols == a.cols) return {row_rhs, a};
  throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " + to_string(a) + " vs " +
                   to_string(b));
}

// Index into the right (or left, for scalar_lhs) operand for output element i.
inline std::size_t rhs_index(BroadcastMode m, std::size_t i, std::size_t cols) {
  switch (m) {
    case same: return i;
    case row_rhs: return i % cols;
    case scalar_rhs: return 0;
    case scalar_lhs: return i;
  }
  return i;
}
inline std::size_t lhs_index(BroadcastMode m, std::size_t i) { return m == scalar_lhs ? 0 : i; }

Tape& tape_of(Tensor t) {
  if (!t.valid()) throw std::invalid_argument("tensor is not attached to a tape");
  return *t.tape();
}

Tape& common_tape(Tensor a, Tensor b) {
  Tape& ta = tape_of(a);
  if (&ta != &tape_of(b)) throw std::invalid_argument("tensors belong to different tapes");
  return ta;
}

template <typename F>
Tensor binary(OpKind kind, Tensor a, Tensor b, F f) {
  Tape& tape = common_tape(a, b);
  const BinaryPlan plan = plan_binary(kind, a.shape(), b.shape());
  const auto& va = tape.value_of(a.node_id());
  const auto& vb = tape.value_of(b.node_id());
  std::vector<double> out(plan.out.size());
  const std::size_t n = out.size(), cols = plan.out.cols;
  switch (plan.mode) {
    case same:
      for (std::size_t i = 0; i < n; ++i) out[i] = f(va[i], vb[i]);
      break;
    case scalar_rhs: {
      const double y = vb[0];
      for (std::size_t i = 0; i < n; ++i) out[i] = f(va[i], y);
      break;
    }
    case scalar_lhs: {
      const double x = va[0];
      for (std::size_t i = 0; i < n; ++i) out[i] = f(x, vb[i]);
      break;
    }
    case row_rhs:
      for (std::size_t r = 0; r < n / cols; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = f(va[r * cols + c], vb[c]);
      break;
  }
  return tape.record(kind, {a.node_id(), b.node_id()}, plan.out, std::move(out),
                     {static_cast<double>(plan.mode)});
}

template <typename F>
Tensor unary(OpKind kind, Tensor x, F f, std::vector<double> attrs = {}) {
  Tape& tape = tape_of(x);
  const auto& vx = tape.value_of(x.node_id());
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(vx[i]);
  return tape.record(kind, {x.node_id()}, x.shape(), std::move(out), std::move(attrs));
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

std::string to_string(Shape s) {
  std::ostringstream os;
  os << "[" << s.rows << "," << s.cols << "]";
  return os.str();
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::matmul: return "matmul";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softplus: return "softplus";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sqrt: return "sqrt";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::row_sum: return "row_sum";
    case OpKind::abs: return "abs";
    case OpKind::max_const: return "max_const";
    case OpKind::maximum: return "maximum";
    case OpKind::clamp: return "clamp";
    case OpKind::scale: return "scale";
    case OpKind::add_const: return "add_const";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::broadcast: return "broadcast";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::stop_gradient: return "stop_gradient";
    case OpKind::custom: return "custom";
  }
  return "unknown";
}

std::string_view group_name(Group g) {
  switch (g) {
    case Group::mlp: return "mlp";
    case Group::grid: return "grid";
    case Group::pose: return "pose";
  }
  return "mlp";
}

Group parse_group(std::string_view name) {
  if (name == "mlp") return Group::mlp;
  if (name == "grid") return Group::grid;
  if (name == "pose") return Group::pose;
  throw std::invalid_argument("unknown parameter group '" + std::string(name) + "'");
}

NumericError::NumericError(OpKind kind, int node_id, std::string detail)
    : std::runtime_error("non-finite value from op '" + std::string(op_name(kind)) +
                         "' at node " + std::to_string(node_id) +
                         (detail.empty() ? "" : " (" + detail + ")")),
      kind_(kind),
      node_id_(node_id) {}

Parameter::Parameter(std::string name, Shape shape, Group group)
    : value(shape.size(), 0.0), grad(shape.size(), 0.0), name_(std::move(name)), shape_(shape),
      group_(group) {}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

Shape Tensor::shape() const { return tape_->shape_of(id_); }

std::span<const double> Tensor::values() const { return tape_->value_of(id_); }

double Tensor::item() const {
  const auto v = values();
  if (v.size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape()));
  return v[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

bool Tensor::requires_grad() const { return tape_->requires_grad_of(id_); }

Tensor Tape::record(OpKind kind, std::vector<int> inputs, Shape shape, std::vector<double> values,
                    std::vector<double> attrs) {
  if (values.size() != shape.size())
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     to_string(shape));
  Node n;
  n.kind = kind;
  n.shape = shape;
  n.value = std::move(values);
  n.attrs = std::move(attrs);
  if (kind != OpKind::stop_gradient)
    for (int in : inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  n.inputs = std::move(inputs);
  const int id = static_cast<int>(nodes_.size());
  check_finite(n, id);
  nodes_.push_back(std::move(n));
  return Tensor(this, id);
}

void Tape::check_finite(const Node& n, int id) const {
  // x * 0 is NaN exactly when x is not finite; the sum vectorizes.
  double probe = 0.0;
  for (double v : n.value) probe += v * 0.0;
  if (probe == 0.0) return;
  for (std::size_t i = 0; i < n.value.size(); ++i) {
    if (!std::isfinite(n.value[i])) {
      std::string detail = "element " + std::to_string(i);
      if (!n.custom_name.empty()) detail = n.custom_name + ", " + detail;
      throw NumericError(n.kind, id, detail);
    }
  }
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  return record(OpKind::constant, {}, shape, std::move(values));
}

Tensor Tape::variable(Shape shape, std::vector<double> values) {
  Tensor t = record(OpKind::leaf, {}, shape, std::move(values));
  nodes_[t.node_id()].requires_grad = true;
  return t;
}

Tensor Tape::parameter(Parameter& p, bool trainable) {
  if (p.value.size() != p.shape().size())
    throw ShapeError("parameter '" + p.name() + "' is uninitialized");
  Tensor t = record(trainable ? OpKind::leaf : OpKind::constant, {}, p.shape(), p.value);
  if (trainable) {
    nodes_[t.node_id()].param = &p;
    nodes_[t.node_id()].requires_grad = true;
  }
  return t;
}

Tensor Tape::custom(std::string_view name, std::vector<Tensor> inputs, Shape shape,
                    std::vector<double> values, BackwardFn backward, bool force_requires_grad) {
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    if (t.tape() != this) throw std::invalid_argument("custom op input from another tape");
    ids.push_back(t.node_id());
  }
  if (values.size() != shape.size())
    throw ShapeError(std::string(name) + ": value count does not match shape " + to_string(shape));
  Node n;
  n.kind = OpKind::custom;
  n.shape = shape;
  n.value = std::move(values);
  n.custom_name = std::string(name);
  n.custom_backward = std::move(backward);
  n.requires_grad = force_requires_grad;
  for (int in : ids) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  n.inputs = std::move(ids);
  const int id = static_cast<int>(nodes_.size());
  check_finite(n, id);
  nodes_.push_back(std::move(n));
  return Tensor(this, id);
}

std::vector<double>& Tape::ensure_grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Tensor loss) {
  if (nodes_.empty()) throw std::logic_error("backward on an empty tape");
  if (loss.tape() != this) throw std::invalid_argument("loss belongs to another tape");
  if (loss.shape() != Shape{1, 1})
    throw ShapeError("backward requires a scalar loss, got " + to_string(loss.shape()));
  for (Node& n : nodes_) n.grad.clear();
  if (!nodes_[loss.node_id()].requires_grad) return;
  ensure_grad(loss.node_id())[0] = 1.0;
  for (int id = loss.node_id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.requires_grad) continue;
    run_backward(id);
  }
}

std::vector<double> Tape::grad(Tensor t) const {
  const Node& n = nodes_[t.node_id()];
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

void Tape::clear() { nodes_.clear(); }

void Tape::run_backward(int id) {
  // Copy what we need; ensure_grad on inputs never touches this node.
  const OpKind kind = nodes_[id].kind;
  const std::vector<double>& g = nodes_[id].grad;
  const std::vector<double>& y = nodes_[id].value;
  const std::vector<int>& in = nodes_[id].inputs;

  auto wants = [&](std::size_t k) { return nodes_[in[k]].requires_grad; };
  auto input_value = [&](std::size_t k) -> const std::vector<double>& {
    return nodes_[in[k]].value;
  };

  switch (kind) {
    case OpKind::leaf: {
      Parameter* p = nodes_[id].param;
      if (p) {
        for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
      }
      return;
    }
    case OpKind::constant:
    case OpKind::stop_gradient:
      return;
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul:
    case OpKind::div: {
      const auto mode = static_cast<BroadcastMode>(static_cast<int>(nodes_[id].attrs[0]));
      const std::size_t cols = nodes_[id].shape.cols;
      const auto& va = input_value(0);
      const auto& vb = input_value(1);
      const bool wa = wants(0), wb = wants(1);
      std::vector<double>* ga = wa ? &ensure_grad(in[0]) : nullptr;
      std::vector<double>* gb = wb ? &ensure_grad(in[1]) : nullptr;
      // Same node feeding both sides (x*x): gradients accumulate through both
      // pointers, which alias the same buffer. That is the correct sum.
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t ia = lhs_index(mode, i);
        const std::size_t ib = rhs_index(mode, i, cols);
        double da = 0, db = 0;
        switch (kind) {
          case OpKind::add: da = g[i]; db = g[i]; break;
          case OpKind::sub: da = g[i]; db = -g[i]; break;
          case OpKind::mul: da = g[i] * vb[ib]; db = g[i] * va[ia]; break;
          default:
            da = g[i] / vb[ib];
            db = -g[i] * va[ia] / (vb[ib] * vb[ib]);
            break;
        }
        if (ga) (*ga)[ia] += da;
        if (gb) (*gb)[ib] += db;
      }
      return;
    }
    case OpKind::matmul: {
      const Shape sa = nodes_[in[0]].shape;
      const Shape sb = nodes_[in[1]].shape;
      ConstMap G(g.data(), sa.rows, sb.cols);
      if (wants(0)) {
        auto& ga = ensure_grad(in[0]);
        MutMap GA(ga.data(), sa.rows, sa.cols);
        ConstMap B(input_value(1).data(), sb.rows, sb.cols);
        GA.noalias() += G * B.transpose();
      }
      if (wants(1)) {
        auto& gb = ensure_grad(in[1]);
        MutMap GB(gb.data(), sb.rows, sb.cols);
        ConstMap A(input_value(0).data(), sa.rows, sa.cols);
        GB.noalias() += A.transpose() * G;
      }
      return;
    }
    case OpKind::relu:
    case OpKind::sigmoid:
    case OpKind::softplus:
    case OpKind::exp:
    case OpKind::log:
    case OpKind::sqrt:
    case OpKind::abs:
    case OpKind::max_const:
    case OpKind::clamp:
    case OpKind::scale:
    case OpKind::add_const: {
      if (!wants(0)) return;
      const auto& x = input_value(0);
      const auto& attrs = nodes_[id].attrs;
      auto& gx = ensure_grad(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = 0;
        switch (kind) {
          case OpKind::relu: d = x[i] > 0 ? 1.0 : 0.0; break;
          case OpKind::sigmoid: d = y[i] * (1.0 - y[i]); break;
          case OpKind::softplus: d = stable_sigmoid(x[i]); break;
          case OpKind::exp: d = y[i]; break;
          case OpKind::log: d = 1.0 / x[i]; break;
          case OpKind::sqrt: d = y[i] > 0 ? 0.5 / y[i] : 0.0; break;
          case OpKind::abs: d = x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0); break;
          case OpKind::max_const: d = x[i] > attrs[0] ? 1.0 : 0.0; break;
          case OpKind::clamp: d = (x[i] > attrs[0] && x[i] < attrs[1]) ? 1.0 : 0.0; break;
          case OpKind::scale: d = attrs[0]; break;
          default: d = 1.0; break;
        }
        gx[i] += g[i] * d;
      }
      return;
    }
    case OpKind::maximum: {
      const auto& a = input_value(0);
      const auto& b = input_value(1);
      std::vector<double>* ga = wants(0) ? &ensure_grad(in[0]) : nullptr;
      std::vector<double>* gb = wants(1) ? &ensure_grad(in[1]) : nullptr;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a[i] > b[i]) {
          if (ga) (*ga)[i] += g[i];
        } else if (b[i] > a[i]) {
          if (gb) (*gb)[i] += g[i];
        }
      }
      return;
    }
    case OpKind::sum:
    case OpKind::mean: {
      if (!wants(0)) return;
      auto& gx = ensure_grad(in[0]);
      const double d = kind == OpKind::sum ? g[0] : g[0] / static_cast<double>(gx.size());
      for (double& v : gx) v += d;
      return;
    }
    case OpKind::row_sum: {
      if (!wants(0)) return;
      auto& gx = ensure_grad(in[0]);
      const std::size_t cols = nodes_[in[0]].shape.cols;
      for (std::size_t r = 0; r < g.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[r];
      return;
    }
    case OpKind::concat: {
      const std::size_t rows = nodes_[id].shape.rows;
      const std::size_t out_cols = nodes_[id].shape.cols;
      std::size_t offset = 0;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const std::size_t cols = nodes_[in[k]].shape.cols;
        if (wants(k)) {
          auto& gk = ensure_grad(in[k]);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gk[r * cols + c] += g[r * out_cols + offset + c];
        }
        offset += cols;
      }
      return;
    }
    case OpKind::slice: {
      if (!wants(0)) return;
      const auto begin = static_cast<std::size_t>(nodes_[id].attrs[0]);
      const std::size_t rows = nodes_[id].shape.rows;
      const std::size_t cols = nodes_[id].shape.cols;
      const std::size_t in_cols = nodes_[in[0]].shape.cols;
      auto& gx = ensure_grad(in[0]);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gx[r * in_cols + begin + c] += g[r * cols + c];
      return;
    }
    case OpKind::broadcast: {
      if (!wants(0)) return;
      const std::size_t rows = nodes_[id].shape.rows;
      const std::size_t cols = nodes_[id].shape.cols;
      auto& gx = ensure_grad(in[0]);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gx[c] += g[r * cols + c];
      return;
    }
    case OpKind::gather_rows: {
      if (!wants(0)) return;
      const auto& attrs = nodes_[id].attrs;
      const std::size_t cols = nodes_[id].shape.cols;
      auto& gx = ensure_grad(in[0]);
      for (std::size_t r = 0; r < attrs.size(); ++r) {
        const auto src = static_cast<std::size_t>(attrs[r]);
        for (std::size_t c = 0; c < cols; ++c) gx[src * cols + c] += g[r * cols + c];
      }
      return;
    }
    case OpKind::custom: {
      BackwardContext ctx;
      ctx.output = y;
      ctx.output_grad = g;
      ctx.inputs.reserve(in.size());
      ctx.input_grads.reserve(in.size());
      for (std::size_t k = 0; k < in.size(); ++k) {
        ctx.inputs.emplace_back(nodes_[in[k]].value);
        if (wants(k))
          ctx.input_grads.emplace_back(ensure_grad(in[k]));
        else
          ctx.input_grads.emplace_back();
      }
      nodes_[id].custom_backward(ctx);
      return;
    }
  }
}

Tensor add(Tensor a, Tensor b) {
  return binary(OpKind::add, a, b, [](double x, double y) { return x + y; });
}
Tensor sub(Tensor a, Tensor b) {
  return binary(OpKind::sub, a, b, [](double x, double y) { return x - y; });
}
Tensor mul(Tensor a, Tensor b) {
  return binary(OpKind::mul, a, b, [](double x, double y) { return x * y; });
}
Tensor div(Tensor a, Tensor b) {
  return binary(OpKind::div, a, b, [](double x, double y) { return x / y; });
}

Tensor matmul(Tensor a, Tensor b) {
  Tape& tape = common_tape(a, b);
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.cols != sb.rows)
    throw ShapeError("matmul: shape mismatch " + to_string(sa) + " x " + to_string(sb));
  std::vector<double> out(sa.rows * sb.cols);
  MutMap C(out.data(), sa.rows, sb.cols);
  ConstMap A(tape.value_of(a.node_id()).data(), sa.rows, sa.cols);
  ConstMap B(tape.value_of(b.node_id()).data(), sb.rows, sb.cols);
  C.noalias() = A * B;
  return tape.record(OpKind::matmul, {a.node_id(), b.node_id()}, {sa.rows, sb.cols},
                     std::move(out));
}

Tensor relu(Tensor x) {
  return unary(OpKind::relu, x, [](double v) { return v > 0 ? v : 0.0; });
}
Tensor sigmoid(Tensor x) { return unary(OpKind::sigmoid, x, stable_sigmoid); }
Tensor softplus(Tensor x) { return unary(OpKind::softplus, x, stable_softplus); }
Tensor exp(Tensor x) {
  return unary(OpKind::exp, x, [](double v) { return std::exp(v); });
}
Tensor log(Tensor x) {
  return unary(OpKind::log, x, [](double v) { return std::log(v); });
}
Tensor sqrt(Tensor x) {
  return unary(OpKind::sqrt, x, [](double v) { return std::sqrt(v); });
}
Tensor abs(Tensor x) {
  return unary(OpKind::abs, x, [](double v) { return std::abs(v); });
}
Tensor max_const(Tensor x, double c) {
  return unary(OpKind::max_const, x, [c](double v) { return v > c ? v : c; }, {c});
}
Tensor maximum(Tensor a, Tensor b) {
  Tape& tape = common_tape(a, b);
  if (a.shape() != b.shape())
    throw ShapeError("maximum: shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  const auto& va = tape.value_of(a.node_id());
  const auto& vb = tape.value_of(b.node_id());
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(va[i], vb[i]);
  return tape.record(OpKind::maximum, {a.node_id(), b.node_id()}, a.shape(), std::move(out));
}
Tensor clamp(Tensor x, double lo, double hi) {
  return unary(OpKind::clamp, x, [lo, hi](double v) { return std::clamp(v, lo, hi); }, {lo, hi});
}
Tensor scale(Tensor x, double c) {
  return unary(OpKind::scale, x, [c](double v) { return v * c; }, {c});
}
Tensor add_const(Tensor x, double c) {
  return unary(OpKind::add_const, x, [c](double v) { return v + c; }, {c});
}

Tensor sum(Tensor x) {
  Tape& tape = tape_of(x);
  double s = 0;
  for (double v : tape.value_of(x.node_id())) s += v;
  return tape.record(OpKind::sum, {x.node_id()}, {1, 1}, {s});
}

Tensor mean(Tensor x) {
  Tape& tape = tape_of(x);
  const auto& v = tape.value_of(x.node_id());
  if (v.empty()) throw ShapeError("mean of an empty tensor");
  double s = 0;
  for (double e : v) s += e;
  return tape.record(OpKind::mean, {x.node_id()}, {1, 1}, {s / static_cast<double>(v.size())});
}

Tensor row_sum(Tensor x) {
  Tape& tape = tape_of(x);
  const Shape s = x.shape();
  const auto& v = tape.value_of(x.node_id());
  std::vector<double> out(s.rows, 0.0);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < s.cols; ++c) out[r] += v[r * s.cols + c];
  return tape.record(OpKind::row_sum, {x.node_id()}, {s.rows, 1}, std::move(out));
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Tape& tape = tape_of(parts[0]);
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<int> ids;
  for (const Tensor& p : parts) {
    if (p.tape() != &tape) throw std::invalid_argument("concat across tapes");
    if (p.rows() != rows)
      throw ShapeError("concat: row mismatch " + to_string(parts[0].shape()) + " vs " +
                       to_string(p.shape()));
    cols += p.cols();
    ids.push_back(p.node_id());
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const auto& v = tape.value_of(p.node_id());
    const std::size_t pc = p.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * pc), pc,
                  out.begin() + static_cast<std::ptrdiff_t>(r * cols + offset));
    offset += pc;
  }
  return tape.record(OpKind::concat, std::move(ids), {rows, cols}, std::move(out));
}

Tensor concat(Tensor a, Tensor b) {
  const Tensor parts[] = {a, b};
  return concat(parts);
}

Tensor slice(Tensor x, std::size_t begin, std::size_t end) {
  Tape& tape = tape_of(x);
  const Shape s = x.shape();
  if (begin >= end || end > s.cols)
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + to_string(s));
  const std::size_t cols = end - begin;
  const auto& v = tape.value_of(x.node_id());
  std::vector<double> out(s.rows * cols);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = v[r * s.cols + begin + c];
  return tape.record(OpKind::slice, {x.node_id()}, {s.rows, cols}, std::move(out),
                     {static_cast<double>(begin)});
}

Tensor broadcast(Tensor x, std::size_t rows) {
  Tape& tape = tape_of(x);
  const Shape s = x.shape();
  if (s.rows != 1) throw ShapeError("broadcast expects a single row, got " + to_string(s));
  const auto& v = tape.value_of(x.node_id());
  std::vector<double> out(rows * s.cols);
  for (std::size_t r = 0; r < rows; ++r) std::copy(v.begin(), v.end(), out.begin() + r * s.cols);
  return tape.record(OpKind::broadcast, {x.node_id()}, {rows, s.cols}, std::move(out));
}

Tensor gather_rows(Tensor x, std::span<const std::uint32_t> index) {
  Tape& tape = tape_of(x);
  const Shape s = x.shape();
  const auto& v = tape.value_of(x.node_id());
  std::vector<double> out(index.size() * s.cols);
  std::vector<double> attrs(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= s.rows)
      throw ShapeError("gather_rows: index " + std::to_string(index[r]) + " out of range for " +
                       to_string(s));
    attrs[r] = static_cast<double>(index[r]);
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(index[r] * s.cols), s.cols,
                out.begin() + static_cast<std::ptrdiff_t>(r * s.cols));
  }
  return tape.record(OpKind::gather_rows, {x.node_id()}, {index.size(), s.cols}, std::move(out),
                     std::move(attrs));
}

Tensor stop_gradient(Tensor x) {
  Tape& tape = tape_of(x);
  return tape.record(OpKind::stop_gradient, {x.node_id()}, x.shape(), tape.value_of(x.node_id()));
}

void clear_gradients(std::span<Parameter* const> params, Tape& tape) {
  for (Parameter* p : params) p->zero_grad();
  tape.clear();
}

}  // namespace dualfield::ad
