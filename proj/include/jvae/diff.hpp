#pragma once

// Minimal reverse-mode automatic differentiation over small dense arrays.
//
// Arrays are rank 1 or rank 2, row-major, 64-bit. A Tape records every
// primitive applied to Vars in topological order; backward() walks it in
// reverse and accumulates adjoints over fan-out.

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jvae::diff {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Array {
 public:
  Array() = default;
  explicit Array(std::vector<std::size_t> shape);
  Array(std::vector<std::size_t> shape, std::vector<double> data);

  static Array vector(std::initializer_list<double> values);
  static Array vector(std::vector<double> values);
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Array zeros_like(const Array& other) { return Array(other.shape_); }
  static Array scalar(double v) { return Array({1}, {v}); }

  [[nodiscard]] const std::vector<std::size_t>& shape() const { return shape_; }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }
  // Rank-1 arrays are viewed as a single row.
  [[nodiscard]] std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  [[nodiscard]] std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  [[nodiscard]] std::span<const double> data() const { return data_; }
  [[nodiscard]] std::span<double> data() { return data_; }
  [[nodiscard]] double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  [[nodiscard]] MatrixMap mat() { return {data_.data(), Eigen::Index(rows()), Eigen::Index(cols())}; }
  [[nodiscard]] ConstMatrixMap mat() const {
    return {data_.data(), Eigen::Index(rows()), Eigen::Index(cols())};
  }

  [[nodiscard]] bool all_finite() const;
  [[nodiscard]] std::string shape_string() const;

  bool operator==(const Array& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

enum class Op {
  leaf,
  add,
  sub,
  mul,
  matmul,
  tanh,
  sigmoid,
  exp,
  log,
  softmax,
  concat,
  slice,
  sum,
  mean,
  square,
  scale,
  clamp,
  reshape,
  linear,
  gru,
};

const char* op_name(Op op);

// Per-op attributes. Only the fields an op documents are read.
struct OpAttrs {
  std::size_t axis = 1;                   // concat/slice: 0 = rows, 1 = last axis
  std::size_t begin = 0, end = 0;         // slice range
  double factor = 1.0;                    // scale
  double lo = 0.0, hi = 0.0;              // clamp bounds
  std::vector<std::size_t> shape;         // reshape target
};

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  [[nodiscard]] const Array& value() const;
  [[nodiscard]] bool valid() const { return tape != nullptr; }
};

// Adjoints indexed by node id; nodes that do not influence the root hold
// an empty Array.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Array> grads) : grads_(std::move(grads)) {}

  // Gradient of the root with respect to v; zeros if v was unreachable.
  [[nodiscard]] Array of(const Var& v) const;
  [[nodiscard]] const Array* find(std::size_t id) const;

 private:
  std::vector<Array> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable leaf owning a copy of the value.
  Var variable(Array value);
  // Differentiable leaf that refers to storage owned by the caller; the
  // referenced array must outlive the tape and stay unchanged. A frozen
  // parameter (trainable = false) behaves like a constant in backward().
  Var parameter(const Array& value, bool trainable = true);
  // Non-differentiable leaf.
  Var constant(Array value);

  Var apply(Op op, std::span<const Var> inputs, const OpAttrs& attrs = {});

  [[nodiscard]] const Array& value(std::size_t id) const;
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] Op op(std::size_t id) const { return nodes_[id].op; }

  // Reverse sweep from a scalar root.
  [[nodiscard]] Gradients backward(const Var& root) const;

 private:
  struct Node {
    Op op = Op::leaf;
    Array value;
    const Array* external = nullptr;
    std::vector<std::size_t> inputs;
    std::vector<Array> saved;
    OpAttrs attrs;
    bool requires_grad = false;
  };

  Var push(Node node);
  void backprop_node(const Node& node, const Array& grad, std::vector<Array>& grads) const;

  std::vector<Node> nodes_;
};

// Free-function front end; every function records one primitive.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var matmul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var softmax(Var a);
Var concat(std::span<const Var> parts, std::size_t axis = 1);
Var concat(std::initializer_list<Var> parts, std::size_t axis = 1);
Var slice(Var a, std::size_t begin, std::size_t end, std::size_t axis = 1);
Var sum(Var a);
Var mean(Var a);
Var square(Var a);
Var scale(Var a, double factor);
Var clamp(Var a, double lo, double hi);
Var reshape(Var a, std::vector<std::size_t> shape);
// x·W + b with b broadcast over rows.
Var linear(Var x, Var w, Var b);

struct GruParams {
  Var w_input;   // [in, 3H], gate blocks ordered reset | update | candidate
  Var w_hidden;  // [H, 3H]
  Var bias;      // [3H]
};

// Gated recurrent update, batched over rows:
//   r = σ(x·Wr + h·Ur + br), u = σ(x·Wu + h·Uu + bu)
//   c = tanh(x·Wc + r ⊙ (h·Uc) + bc),  h' = (1 − u) ⊙ h + u ⊙ c
Var gru_cell(Var x, Var h, const GruParams& params);

}  // namespace jvae::diff
