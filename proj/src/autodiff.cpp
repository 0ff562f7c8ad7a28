#include "gradmdm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gradmdm {

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw GraphError(std::string(what) + ": non-finite value rejected");
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::variable: return "variable";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::hadamard: return "hadamard";
    case Op::matmul: return "matmul";
    case Op::scale: return "scale";
    case Op::sigmoid: return "sigmoid";
    case Op::tanh: return "tanh";
    case Op::relu: return "relu";
    case Op::pow_const: return "pow_const";
    case Op::clip_min_const: return "clip_min_const";
    case Op::clip_max_const: return "clip_max_const";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::sq_l2: return "sq_l2";
    case Op::max_abs: return "max_abs";
    case Op::reshape: return "reshape";
    case Op::concat: return "concat";
    case Op::straight_through: return "straight_through";
    case Op::softmax_xent: return "softmax_xent";
  }
  return "?";
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size()) throw GraphError("node id out of range");
  return nodes_[id.index];
}

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = node(id);
  if (n.grad.empty()) throw GraphError("grad() requested before backward()");
  return n.grad;
}

NodeId Graph::push(Op op, std::vector<NodeId> inputs, Tensor value, double param, std::size_t index_param) {
  require_finite(value, op_name(op));
  Node n{op, std::move(inputs), std::move(value), Tensor{}, param, index_param, op == Op::variable};
  for (NodeId in : n.inputs) n.requires_grad = n.requires_grad || nodes_[in.index].requires_grad;
  nodes_.push_back(std::move(n));
  return NodeId{nodes_.size() - 1};
}

NodeId Graph::variable(Tensor value) {
  if (value.empty()) throw ShapeError("variable needs a non-empty tensor");
  return push(Op::variable, {}, std::move(value));
}

NodeId Graph::constant(Tensor value) {
  if (value.empty()) throw ShapeError("constant needs a non-empty tensor");
  return push(Op::constant, {}, std::move(value));
}

Tensor Graph::elementwise(NodeId a, NodeId b, Op op) const {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.shape() != y.shape() && !x.is_scalar() && !y.is_scalar()) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_string(x.shape()) + " vs " +
                     shape_string(y.shape()));
  }
  const Tensor& big = (x.size() >= y.size()) ? x : y;
  Tensor out(big.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = x.is_scalar() ? x[0] : x[i];
    const double v = y.is_scalar() ? y[0] : y[i];
    switch (op) {
      case Op::add: out[i] = u + v; break;
      case Op::sub: out[i] = u - v; break;
      default: out[i] = u * v; break;
    }
  }
  return out;
}

NodeId Graph::add(NodeId a, NodeId b) { return push(Op::add, {a, b}, elementwise(a, b, Op::add)); }
NodeId Graph::sub(NodeId a, NodeId b) { return push(Op::sub, {a, b}, elementwise(a, b, Op::sub)); }
NodeId Graph::hadamard(NodeId a, NodeId b) {
  return push(Op::hadamard, {a, b}, elementwise(a, b, Op::hadamard));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.shape().size() != 2 || y.shape().size() != 2 || x.shape()[1] != y.shape()[0]) {
    throw ShapeError("matmul: cannot multiply " + shape_string(x.shape()) + " by " + shape_string(y.shape()));
  }
  const std::size_t m = x.shape()[0], k = x.shape()[1], n = y.shape()[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += xv * y[p * n + j];
    }
  return push(Op::matmul, {a, b}, std::move(out));
}

NodeId Graph::scale(NodeId a, double c) {
  return push(Op::scale, {a}, map(value(a), [c](double v) { return c * v; }), c);
}

NodeId Graph::sigmoid(NodeId a) { return push(Op::sigmoid, {a}, map(value(a), logistic)); }

NodeId Graph::tanh(NodeId a) {
  return push(Op::tanh, {a}, map(value(a), [](double v) { return std::tanh(v); }));
}

NodeId Graph::relu(NodeId a) {
  return push(Op::relu, {a}, map(value(a), [](double v) { return v > 0.0 ? v : 0.0; }));
}

NodeId Graph::pow_const(NodeId a, double exponent) {
  return push(Op::pow_const, {a}, map(value(a), [exponent](double v) { return std::pow(v, exponent); }),
              exponent);
}

NodeId Graph::clip_min_const(NodeId a, double c) {
  return push(Op::clip_min_const, {a}, map(value(a), [c](double v) { return std::min(v, c); }), c);
}

NodeId Graph::clip_max_const(NodeId a, double c) {
  return push(Op::clip_max_const, {a}, map(value(a), [c](double v) { return std::max(v, c); }), c);
}

NodeId Graph::sum(NodeId a) {
  double s = 0.0;
  for (double v : value(a).data()) s += v;
  return push(Op::sum, {a}, Tensor::scalar(s));
}

NodeId Graph::mean(NodeId a) {
  const Tensor& x = value(a);
  double s = 0.0;
  for (double v : x.data()) s += v;
  return push(Op::mean, {a}, Tensor::scalar(s / static_cast<double>(x.size())));
}

NodeId Graph::sq_l2(NodeId a) {
  double s = 0.0;
  for (double v : value(a).data()) s += v * v;
  return push(Op::sq_l2, {a}, Tensor::scalar(s));
}

NodeId Graph::max_abs(NodeId a) {
  const Tensor& x = value(a);
  std::size_t arg = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (std::abs(x[i]) > std::abs(x[arg])) arg = i;
  return push(Op::max_abs, {a}, Tensor::scalar(std::abs(x[arg])), 0.0, arg);
}

NodeId Graph::reshape(NodeId a, Shape shape) { return push(Op::reshape, {a}, value(a).reshaped(std::move(shape))); }

NodeId Graph::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = value(parts.front()).shape();
  Shape out_shape = first;
  out_shape[0] = 0;
  std::vector<double> data;
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    if (t.shape().size() != first.size() || !std::equal(t.shape().begin() + 1, t.shape().end(), first.begin() + 1)) {
      throw ShapeError("concat: trailing dims differ, " + shape_string(first) + " vs " + shape_string(t.shape()));
    }
    out_shape[0] += t.shape()[0];
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return push(Op::concat, parts, Tensor(std::move(out_shape), std::move(data)));
}

NodeId Graph::straight_through(NodeId a, double threshold) {
  return push(Op::straight_through, {a},
              map(value(a), [threshold](double v) { return v >= threshold ? 1.0 : 0.0; }), threshold);
}

NodeId Graph::softmax_xent(NodeId logits, std::size_t label) {
  const Tensor& z = value(logits);
  if (label >= z.size()) {
    throw ShapeError("softmax_xent: label " + std::to_string(label) + " out of range for " +
                     shape_string(z.shape()));
  }
  double zmax = z[0];
  for (double v : z.data()) zmax = std::max(zmax, v);
  double s = 0.0;
  for (double v : z.data()) s += std::exp(v - zmax);
  const double loss = zmax + std::log(s) - z[label];
  return push(Op::softmax_xent, {logits}, Tensor::scalar(loss), 0.0, label);
}

void Graph::backward(NodeId root) {
  const Node& r = node(root);
  if (r.value.size() != 1) throw GraphError("backward: root must be scalar, got " + shape_string(r.value.shape()));
  for (Node& n : nodes_) n.grad = Tensor::zeros_like(n.value);
  nodes_[root.index].grad[0] = 1.0;
  for (std::size_t i = root.index + 1; i-- > 0;) {
    if (nodes_[i].requires_grad) backprop_node(i);
  }
}

void Graph::backprop_node(std::size_t index) {
  Node& n = nodes_[index];
  const Tensor& g = n.grad;

  // Adds `contribution` into a parent; a single-element parent of a larger
  // child was broadcast, so its share is the sum.
  auto accumulate = [this](NodeId parent, auto&& elem, std::size_t count) {
    Node& p = nodes_[parent.index];
    if (!p.requires_grad) return;
    if (p.grad.size() == count) {
      for (std::size_t i = 0; i < count; ++i) p.grad[i] += elem(i);
    } else {
      double s = 0.0;
      for (std::size_t i = 0; i < count; ++i) s += elem(i);
      p.grad[0] += s;
    }
  };
  const std::size_t count = g.size();
  auto operand = [this](NodeId id, std::size_t i) {
    const Tensor& t = nodes_[id.index].value;
    return t.is_scalar() ? t[0] : t[i];
  };

  switch (n.op) {
    case Op::variable:
    case Op::constant:
      break;
    case Op::add:
      accumulate(n.inputs[0], [&](std::size_t i) { return g[i]; }, count);
      accumulate(n.inputs[1], [&](std::size_t i) { return g[i]; }, count);
      break;
    case Op::sub:
      accumulate(n.inputs[0], [&](std::size_t i) { return g[i]; }, count);
      accumulate(n.inputs[1], [&](std::size_t i) { return -g[i]; }, count);
      break;
    case Op::hadamard: {
      const NodeId a = n.inputs[0], b = n.inputs[1];
      accumulate(a, [&](std::size_t i) { return g[i] * operand(b, i); }, count);
      accumulate(b, [&](std::size_t i) { return g[i] * operand(a, i); }, count);
      break;
    }
    case Op::matmul: {
      Node& a = nodes_[n.inputs[0].index];
      Node& b = nodes_[n.inputs[1].index];
      const std::size_t m = a.value.shape()[0], k = a.value.shape()[1], cols = b.value.shape()[1];
      if (a.requires_grad) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += g[i * cols + j] * b.value[p * cols + j];
            a.grad[i * k + p] += s;
          }
      }
      if (b.requires_grad) {
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < cols; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += a.value[i * k + p] * g[i * cols + j];
            b.grad[p * cols + j] += s;
          }
      }
      break;
    }
    case Op::scale:
      accumulate(n.inputs[0], [&](std::size_t i) { return n.param * g[i]; }, count);
      break;
    case Op::sigmoid:
      accumulate(n.inputs[0], [&](std::size_t i) { return g[i] * n.value[i] * (1.0 - n.value[i]); }, count);
      break;
    case Op::tanh:
      accumulate(n.inputs[0], [&](std::size_t i) { return g[i] * (1.0 - n.value[i] * n.value[i]); }, count);
      break;
    case Op::relu: {
      const Tensor& x = nodes_[n.inputs[0].index].value;
      accumulate(n.inputs[0], [&](std::size_t i) { return x[i] > 0.0 ? g[i] : 0.0; }, count);
      break;
    }
    case Op::pow_const: {
      const Tensor& x = nodes_[n.inputs[0].index].value;
      const double e = n.param;
      accumulate(n.inputs[0], [&](std::size_t i) { return g[i] * e * std::pow(x[i], e - 1.0); }, count);
      break;
    }
    case Op::clip_min_const: {
      const Tensor& x = nodes_[n.inputs[0].index].value;
      accumulate(n.inputs[0], [&](std::size_t i) { return x[i] < n.param ? g[i] : 0.0; }, count);
      break;
    }
    case Op::clip_max_const: {
      const Tensor& x = nodes_[n.inputs[0].index].value;
      accumulate(n.inputs[0], [&](std::size_t i) { return x[i] > n.param ? g[i] : 0.0; }, count);
      break;
    }
    case Op::sum: {
      const std::size_t len = nodes_[n.inputs[0].index].value.size();
      accumulate(n.inputs[0], [&](std::size_t) { return g[0]; }, len);
      break;
    }
    case Op::mean: {
      const std::size_t len = nodes_[n.inputs[0].index].value.size();
      const double share = g[0] / static_cast<double>(len);
      accumulate(n.inputs[0], [&](std::size_t) { return share; }, len);
      break;
    }
    case Op::sq_l2: {
      const Tensor& x = nodes_[n.inputs[0].index].value;
      accumulate(n.inputs[0], [&](std::size_t i) { return 2.0 * x[i] * g[0]; }, x.size());
      break;
    }
    case Op::max_abs: {
      const Tensor& x = nodes_[n.inputs[0].index].value;
      const std::size_t arg = n.index_param;
      const double sign = x[arg] > 0.0 ? 1.0 : (x[arg] < 0.0 ? -1.0 : 0.0);
      accumulate(n.inputs[0], [&](std::size_t i) { return i == arg ? sign * g[0] : 0.0; }, x.size());
      break;
    }
    case Op::reshape:
    case Op::straight_through:
      accumulate(n.inputs[0], [&](std::size_t i) { return g[i]; }, count);
      break;
    case Op::concat: {
      std::size_t offset = 0;
      for (NodeId part : n.inputs) {
        const std::size_t len = nodes_[part.index].value.size();
        accumulate(part, [&](std::size_t i) { return g[offset + i]; }, len);
        offset += len;
      }
      break;
    }
    case Op::softmax_xent: {
      const Tensor& z = nodes_[n.inputs[0].index].value;
      double zmax = z[0];
      for (double v : z.data()) zmax = std::max(zmax, v);
      double s = 0.0;
      for (double v : z.data()) s += std::exp(v - zmax);
      accumulate(
          n.inputs[0],
          [&](std::size_t i) {
            const double p = std::exp(z[i] - zmax) / s;
            return g[0] * (p - (i == n.index_param ? 1.0 : 0.0));
          },
          z.size());
      break;
    }
  }
}

}  // namespace gradmdm
