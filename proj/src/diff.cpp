#include "jvae/diff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace jvae::diff {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
  throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

// How b is combined with a in an elementwise binary op.
enum class Broadcast { same, rows };

Broadcast binary_broadcast(Op op, const Array& a, const Array& b) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (a.rank() == 2 && b.rows() == 1 && b.cols() == a.cols()) return Broadcast::rows;
  shape_fail(op, "shapes " + a.shape_string() + " and " + b.shape_string() + " do not conform");
}

// Sum of g over rows, returned in b's shape.
Array reduce_rows(const Array& g, const Array& like) {
  Array out = Array::zeros_like(like);
  out.mat() = g.mat().colwise().sum();
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void accumulate(std::vector<Array>& grads, std::size_t id, const Array& g) {
  Array& slot = grads[id];
  if (slot.empty()) {
    slot = g;
  } else {
    slot.mat() += g.mat();
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Array

Array::Array(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 2) throw ShapeError("array rank must be 1 or 2");
  for (auto e : shape_) {
    if (e == 0) throw ShapeError("array extents must be positive, got " + shape_string());
  }
  data_.assign(product(shape_), 0.0);
}

Array::Array(std::vector<std::size_t> shape, std::vector<double> data) : Array(std::move(shape)) {
  if (data.size() != data_.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_string());
  }
  data_ = std::move(data);
}

Array Array::vector(std::initializer_list<double> values) {
  return vector(std::vector<double>(values));
}

Array Array::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array({n}, std::move(values));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Array({rows, cols}, std::move(data));
}

bool Array::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Array::shape_string() const { return diff::shape_string(shape_); }

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::matmul: return "matmul";
    case Op::tanh: return "tanh";
    case Op::sigmoid: return "sigmoid";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::softmax: return "softmax";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::square: return "square";
    case Op::scale: return "scale";
    case Op::clamp: return "clamp";
    case Op::reshape: return "reshape";
    case Op::linear: return "linear";
    case Op::gru: return "gru";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Var / Gradients

const Array& Var::value() const { return tape->value(id); }

Array Gradients::of(const Var& v) const {
  if (const Array* g = find(v.id)) return *g;
  return Array::zeros_like(v.value());
}

const Array* Gradients::find(std::size_t id) const {
  if (id >= grads_.size() || grads_[id].empty()) return nullptr;
  return &grads_[id];
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Array value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(const Array& value, bool trainable) {
  Node n;
  n.external = &value;
  n.requires_grad = trainable;
  return push(std::move(n));
}

Var Tape::constant(Array value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

const Array& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

Var Tape::apply(Op op, std::span<const Var> inputs, const OpAttrs& attrs) {
  Node node;
  node.op = op;
  node.attrs = attrs;
  for (const Var& v : inputs) {
    if (v.tape != this) shape_fail(op, "input recorded on a different tape");
    node.inputs.push_back(v.id);
    node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
  }
  auto in = [&](std::size_t k) -> const Array& { return value(node.inputs.at(k)); };
  auto arity = [&](std::size_t k) {
    if (inputs.size() != k) shape_fail(op, "expected " + std::to_string(k) + " inputs");
  };

  switch (op) {
    case Op::leaf:
      shape_fail(op, "leaves are created with variable/parameter/constant");
    case Op::add:
    case Op::sub:
    case Op::mul: {
      arity(2);
      const Array& a = in(0);
      const Array& b = in(1);
      const Broadcast bc = binary_broadcast(op, a, b);
      Array out = a;
      auto m = out.mat();
      if (bc == Broadcast::same) {
        if (op == Op::add) m += b.mat();
        else if (op == Op::sub) m -= b.mat();
        else m.array() *= b.mat().array();
      } else {
        const auto row = b.mat().row(0);
        if (op == Op::add) m.rowwise() += row;
        else if (op == Op::sub) m.rowwise() -= row;
        else m.array().rowwise() *= row.array();
      }
      node.value = std::move(out);
      break;
    }
    case Op::matmul: {
      arity(2);
      const Array& a = in(0);
      const Array& b = in(1);
      if (b.rank() != 2 || a.cols() != b.rows()) {
        shape_fail(op, "inner dimensions differ: " + a.shape_string() + " x " + b.shape_string());
      }
      Array out = a.rank() == 1 ? Array({b.cols()}) : Array({a.rows(), b.cols()});
      out.mat().noalias() = a.mat() * b.mat();
      node.value = std::move(out);
      break;
    }
    case Op::linear: {
      arity(3);
      const Array& x = in(0);
      const Array& w = in(1);
      const Array& b = in(2);
      if (w.rank() != 2 || x.cols() != w.rows() || b.size() != w.cols() || b.rows() != 1) {
        shape_fail(op, "x " + x.shape_string() + ", W " + w.shape_string() + ", b " +
                           b.shape_string() + " do not conform");
      }
      Array out = x.rank() == 1 ? Array({w.cols()}) : Array({x.rows(), w.cols()});
      out.mat().noalias() = x.mat() * w.mat();
      out.mat().rowwise() += b.mat().row(0);
      node.value = std::move(out);
      break;
    }
    case Op::tanh:
    case Op::sigmoid:
    case Op::exp:
    case Op::log:
    case Op::square:
    case Op::scale:
    case Op::clamp: {
      arity(1);
      Array out = in(0);
      for (double& v : out.data()) {
        switch (op) {
          case Op::tanh: v = std::tanh(v); break;
          case Op::sigmoid: v = sigmoid_scalar(v); break;
          case Op::exp: v = std::exp(v); break;
          case Op::log: v = std::log(v); break;
          case Op::square: v = v * v; break;
          case Op::scale: v = v * attrs.factor; break;
          default: v = std::clamp(v, attrs.lo, attrs.hi); break;
        }
      }
      node.value = std::move(out);
      break;
    }
    case Op::softmax: {
      arity(1);
      Array out = in(0);
      auto m = out.mat();
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
      }
      node.value = std::move(out);
      break;
    }
    case Op::concat: {
      if (inputs.empty()) shape_fail(op, "no inputs");
      if (attrs.axis == 1) {
        const std::size_t rows = in(0).rows();
        std::size_t cols = 0;
        bool any_matrix = false;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (in(k).rows() != rows) {
            shape_fail(op, "row counts differ: " + in(0).shape_string() + " vs " + in(k).shape_string());
          }
          cols += in(k).cols();
          any_matrix = any_matrix || in(k).rank() == 2;
        }
        Array out = any_matrix ? Array({rows, cols}) : Array({cols});
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          const Array& part = in(k);
          out.mat().middleCols(Eigen::Index(offset), Eigen::Index(part.cols())) = part.mat();
          offset += part.cols();
        }
        node.value = std::move(out);
      } else {
        const std::size_t cols = in(0).cols();
        std::size_t rows = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (in(k).cols() != cols) {
            shape_fail(op, "column counts differ: " + in(0).shape_string() + " vs " + in(k).shape_string());
          }
          rows += in(k).rows();
        }
        Array out({rows, cols});
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          const Array& part = in(k);
          out.mat().middleRows(Eigen::Index(offset), Eigen::Index(part.rows())) = part.mat();
          offset += part.rows();
        }
        node.value = std::move(out);
      }
      break;
    }
    case Op::slice: {
      arity(1);
      const Array& a = in(0);
      const std::size_t extent = attrs.axis == 1 ? a.cols() : a.rows();
      if (attrs.begin >= attrs.end || attrs.end > extent) {
        shape_fail(op, "range [" + std::to_string(attrs.begin) + "," + std::to_string(attrs.end) +
                           ") outside " + a.shape_string());
      }
      const auto len = Eigen::Index(attrs.end - attrs.begin);
      if (attrs.axis == 1) {
        Array out = a.rank() == 1 ? Array({attrs.end - attrs.begin})
                                  : Array({a.rows(), attrs.end - attrs.begin});
        out.mat() = a.mat().middleCols(Eigen::Index(attrs.begin), len);
        node.value = std::move(out);
      } else {
        Array out({attrs.end - attrs.begin, a.cols()});
        out.mat() = a.mat().middleRows(Eigen::Index(attrs.begin), len);
        node.value = std::move(out);
      }
      break;
    }
    case Op::sum:
    case Op::mean: {
      arity(1);
      const Array& a = in(0);
      double s = a.mat().sum();
      if (op == Op::mean) s /= double(a.size());
      node.value = Array::scalar(s);
      break;
    }
    case Op::reshape: {
      arity(1);
      if (product(attrs.shape) != in(0).size()) {
        shape_fail(op, "cannot reshape " + in(0).shape_string() + " to " + shape_string(attrs.shape));
      }
      node.value = Array(attrs.shape, std::vector<double>(in(0).data().begin(), in(0).data().end()));
      break;
    }
    case Op::gru: {
      arity(5);
      const Array& x = in(0);
      const Array& h = in(1);
      const Array& wx = in(2);
      const Array& wh = in(3);
      const Array& b = in(4);
      const std::size_t hidden = h.cols();
      if (wx.rank() != 2 || wh.rank() != 2 || wx.rows() != x.cols() || wx.cols() != 3 * hidden ||
          wh.rows() != hidden || wh.cols() != 3 * hidden || b.size() != 3 * hidden ||
          x.rows() != h.rows()) {
        shape_fail(op, "x " + x.shape_string() + ", h " + h.shape_string() + ", Wx " +
                           wx.shape_string() + ", Wh " + wh.shape_string() + ", b " +
                           b.shape_string() + " do not conform");
      }
      const auto n = Eigen::Index(h.rows());
      const auto H = Eigen::Index(hidden);
      Matrix gx = x.mat() * wx.mat();
      gx.rowwise() += b.mat().row(0);
      Matrix gh = h.mat() * wh.mat();
      Array r({h.rows(), hidden}), u({h.rows(), hidden}), c({h.rows(), hidden}), ghc({h.rows(), hidden});
      r.mat() = (gx.leftCols(H) + gh.leftCols(H)).unaryExpr(&sigmoid_scalar);
      u.mat() = (gx.middleCols(H, H) + gh.middleCols(H, H)).unaryExpr(&sigmoid_scalar);
      ghc.mat() = gh.rightCols(H);
      c.mat() = (gx.rightCols(H).array() + r.mat().array() * ghc.mat().array()).tanh().matrix();
      Array out = h.rank() == 1 ? Array({hidden}) : Array({std::size_t(n), hidden});
      out.mat() = ((1.0 - u.mat().array()) * h.mat().array() + u.mat().array() * c.mat().array()).matrix();
      node.saved = {std::move(r), std::move(u), std::move(c), std::move(ghc)};
      node.value = std::move(out);
      break;
    }
  }
  return push(std::move(node));
}

Gradients Tape::backward(const Var& root) const {
  if (root.tape != this) throw std::invalid_argument("backward: root recorded on a different tape");
  const Array& rv = value(root.id);
  if (rv.size() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " + rv.shape_string());
  }
  std::vector<Array> grads(nodes_.size());
  if (!nodes_[root.id].requires_grad) return Gradients(std::move(grads));
  grads[root.id] = Array::zeros_like(rv);
  grads[root.id][0] = 1.0;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (node.op == Op::leaf || grads[id].empty() || !node.requires_grad) continue;
    backprop_node(node, grads[id], grads);
  }
  return Gradients(std::move(grads));
}

void Tape::backprop_node(const Node& node, const Array& g, std::vector<Array>& grads) const {
  auto in = [&](std::size_t k) -> const Array& { return value(node.inputs[k]); };
  auto wants = [&](std::size_t k) { return nodes_[node.inputs[k]].requires_grad; };
  auto send = [&](std::size_t k, const Array& grad) {
    if (wants(k)) accumulate(grads, node.inputs[k], grad);
  };
  const Array& out = node.external ? *node.external : node.value;

  switch (node.op) {
    case Op::leaf:
      break;
    case Op::add:
    case Op::sub:
    case Op::mul: {
      const Array& a = in(0);
      const Array& b = in(1);
      const Broadcast bc = binary_broadcast(node.op, a, b);
      if (wants(0)) {
        Array ga = g;
        if (node.op == Op::mul) {
          if (bc == Broadcast::same) ga.mat().array() *= b.mat().array();
          else ga.mat().array().rowwise() *= b.mat().row(0).array();
        }
        send(0, ga);
      }
      if (wants(1)) {
        Array gb = g;
        if (node.op == Op::sub) gb.mat() *= -1.0;
        if (node.op == Op::mul) gb.mat().array() *= a.mat().array();
        send(1, bc == Broadcast::same ? gb : reduce_rows(gb, b));
      }
      break;
    }
    case Op::matmul: {
      const Array& a = in(0);
      const Array& b = in(1);
      if (wants(0)) {
        Array ga = Array::zeros_like(a);
        ga.mat().noalias() = g.mat() * b.mat().transpose();
        send(0, ga);
      }
      if (wants(1)) {
        Array gb = Array::zeros_like(b);
        gb.mat().noalias() = a.mat().transpose() * g.mat();
        send(1, gb);
      }
      break;
    }
    case Op::linear: {
      const Array& x = in(0);
      const Array& w = in(1);
      if (wants(0)) {
        Array gx = Array::zeros_like(x);
        gx.mat().noalias() = g.mat() * w.mat().transpose();
        send(0, gx);
      }
      if (wants(1)) {
        Array gw = Array::zeros_like(w);
        gw.mat().noalias() = x.mat().transpose() * g.mat();
        send(1, gw);
      }
      if (wants(2)) send(2, reduce_rows(g, in(2)));
      break;
    }
    case Op::tanh: {
      Array ga = g;
      ga.mat().array() *= 1.0 - out.mat().array().square();
      send(0, ga);
      break;
    }
    case Op::sigmoid: {
      Array ga = g;
      ga.mat().array() *= out.mat().array() * (1.0 - out.mat().array());
      send(0, ga);
      break;
    }
    case Op::exp: {
      Array ga = g;
      ga.mat().array() *= out.mat().array();
      send(0, ga);
      break;
    }
    case Op::log: {
      Array ga = g;
      ga.mat().array() /= in(0).mat().array();
      send(0, ga);
      break;
    }
    case Op::square: {
      Array ga = g;
      ga.mat().array() *= 2.0 * in(0).mat().array();
      send(0, ga);
      break;
    }
    case Op::scale: {
      Array ga = g;
      ga.mat() *= node.attrs.factor;
      send(0, ga);
      break;
    }
    case Op::clamp: {
      Array ga = g;
      const auto x = in(0).data();
      for (std::size_t k = 0; k < ga.size(); ++k) {
        if (x[k] < node.attrs.lo || x[k] > node.attrs.hi) ga[k] = 0.0;
      }
      send(0, ga);
      break;
    }
    case Op::softmax: {
      Array ga = g;
      auto gm = ga.mat();
      const auto s = out.mat();
      for (Eigen::Index r = 0; r < gm.rows(); ++r) {
        const double dot = gm.row(r).dot(s.row(r));
        gm.row(r) = (s.row(r).array() * (gm.row(r).array() - dot)).matrix();
      }
      send(0, ga);
      break;
    }
    case Op::concat: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Array& part = in(k);
        if (wants(k)) {
          Array gp = Array::zeros_like(part);
          if (node.attrs.axis == 1) {
            gp.mat() = g.mat().middleCols(Eigen::Index(offset), Eigen::Index(part.cols()));
          } else {
            gp.mat() = g.mat().middleRows(Eigen::Index(offset), Eigen::Index(part.rows()));
          }
          send(k, gp);
        }
        offset += node.attrs.axis == 1 ? part.cols() : part.rows();
      }
      break;
    }
    case Op::slice: {
      Array ga = Array::zeros_like(in(0));
      const auto len = Eigen::Index(node.attrs.end - node.attrs.begin);
      if (node.attrs.axis == 1) {
        ga.mat().middleCols(Eigen::Index(node.attrs.begin), len) = g.mat();
      } else {
        ga.mat().middleRows(Eigen::Index(node.attrs.begin), len) = g.mat();
      }
      send(0, ga);
      break;
    }
    case Op::sum:
    case Op::mean: {
      Array ga = Array::zeros_like(in(0));
      double v = g[0];
      if (node.op == Op::mean) v /= double(ga.size());
      ga.mat().setConstant(v);
      send(0, ga);
      break;
    }
    case Op::reshape: {
      const Array& a = in(0);
      send(0, Array(a.shape(), std::vector<double>(g.data().begin(), g.data().end())));
      break;
    }
    case Op::gru: {
      const Array& x = in(0);
      const Array& h = in(1);
      const Array& wx = in(2);
      const Array& wh = in(3);
      const auto& r = node.saved[0].mat();
      const auto& u = node.saved[1].mat();
      const auto& c = node.saved[2].mat();
      const auto& ghc = node.saved[3].mat();
      const auto H = Eigen::Index(h.cols());
      const auto n = Eigen::Index(h.rows());
      const auto dh_out = g.mat();

      Matrix dgx(n, 3 * H);
      Matrix dgh(n, 3 * H);
      const Eigen::ArrayXXd du = dh_out.array() * (c.array() - h.mat().array());
      const Eigen::ArrayXXd dac = dh_out.array() * u.array() * (1.0 - c.array().square());
      const Eigen::ArrayXXd dar = dac * ghc.array() * r.array() * (1.0 - r.array());
      const Eigen::ArrayXXd dau = du * u.array() * (1.0 - u.array());
      dgx.leftCols(H) = dar.matrix();
      dgx.middleCols(H, H) = dau.matrix();
      dgx.rightCols(H) = dac.matrix();
      dgh.leftCols(H) = dar.matrix();
      dgh.middleCols(H, H) = dau.matrix();
      dgh.rightCols(H) = (dac * r.array()).matrix();

      if (wants(0)) {
        Array gx = Array::zeros_like(x);
        gx.mat().noalias() = dgx * wx.mat().transpose();
        send(0, gx);
      }
      if (wants(1)) {
        Array gh = Array::zeros_like(h);
        gh.mat() = (dh_out.array() * (1.0 - u.array())).matrix();
        gh.mat().noalias() += dgh * wh.mat().transpose();
        send(1, gh);
      }
      if (wants(2)) {
        Array gwx = Array::zeros_like(wx);
        gwx.mat().noalias() = x.mat().transpose() * dgx;
        send(2, gwx);
      }
      if (wants(3)) {
        Array gwh = Array::zeros_like(wh);
        gwh.mat().noalias() = h.mat().transpose() * dgh;
        send(3, gwh);
      }
      if (wants(4)) {
        Array gb = Array::zeros_like(in(4));
        gb.mat() = dgx.colwise().sum();
        send(4, gb);
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Front end

namespace {

Tape& tape_of(const Var& v) {
  if (!v.tape) throw std::invalid_argument("operation on an unbound Var");
  return *v.tape;
}

Var unary(Op op, Var a, OpAttrs attrs = {}) {
  const Var in[] = {a};
  return tape_of(a).apply(op, in, attrs);
}

Var binary(Op op, Var a, Var b) {
  const Var in[] = {a, b};
  return tape_of(a).apply(op, in);
}

}  // namespace

Var add(Var a, Var b) { return binary(Op::add, a, b); }
Var sub(Var a, Var b) { return binary(Op::sub, a, b); }
Var mul(Var a, Var b) { return binary(Op::mul, a, b); }
Var matmul(Var a, Var b) { return binary(Op::matmul, a, b); }
Var tanh(Var a) { return unary(Op::tanh, a); }
Var sigmoid(Var a) { return unary(Op::sigmoid, a); }
Var exp(Var a) { return unary(Op::exp, a); }
Var log(Var a) { return unary(Op::log, a); }
Var softmax(Var a) { return unary(Op::softmax, a); }
Var sum(Var a) { return unary(Op::sum, a); }
Var mean(Var a) { return unary(Op::mean, a); }
Var square(Var a) { return unary(Op::square, a); }

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  OpAttrs attrs;
  attrs.axis = axis;
  return tape_of(parts[0]).apply(Op::concat, parts, attrs);
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice(Var a, std::size_t begin, std::size_t end, std::size_t axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  attrs.begin = begin;
  attrs.end = end;
  return unary(Op::slice, a, attrs);
}

Var scale(Var a, double factor) {
  OpAttrs attrs;
  attrs.factor = factor;
  return unary(Op::scale, a, attrs);
}

Var clamp(Var a, double lo, double hi) {
  OpAttrs attrs;
  attrs.lo = lo;
  attrs.hi = hi;
  return unary(Op::clamp, a, attrs);
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  OpAttrs attrs;
  attrs.shape = std::move(shape);
  return unary(Op::reshape, a, attrs);
}

Var linear(Var x, Var w, Var b) {
  const Var in[] = {x, w, b};
  return tape_of(x).apply(Op::linear, in);
}

Var gru_cell(Var x, Var h, const GruParams& params) {
  const Var in[] = {x, h, params.w_input, params.w_hidden, params.bias};
  return tape_of(x).apply(Op::gru, in);
}

}  // namespace jvae::diff
