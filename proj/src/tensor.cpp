#include "protocad/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace protocad {

namespace {

thread_local bool t_grad_enabled = true;
thread_local OpTrace* t_trace = nullptr;
thread_local std::string t_stage;

using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

struct Dims {
  std::size_t r;
  std::size_t c;
};

Dims dims_of(const Shape& s) {
  switch (s.size()) {
    case 0:
      return {1, 1};
    case 1:
      return {1, s[0]};
    case 2:
      return {s[0], s[1]};
    default:
      throw ShapeError("tensor of rank " + std::to_string(s.size()) +
                       " has no 2-D view: " + shape_str(s));
  }
}

Dims dims_of(const Tensor& t) { return dims_of(t.shape()); }

[[noreturn]] void shape_fail(std::string_view op, std::initializer_list<Tensor> ts,
                             std::string_view why = {}) {
  std::ostringstream os;
  os << op << ": incompatible shapes";
  for (const auto& t : ts) os << ' ' << shape_str(t.shape());
  if (!why.empty()) os << " (" << why << ')';
  throw ShapeError(os.str());
}

Tensor make_result(Shape shape, std::vector<Scalar> value, std::string op,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::move(op);
  if (t_trace) t_trace->record(node->op, inputs.size(), node->shape);
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

Tensor make_result_vec(Shape shape, std::vector<Scalar> value, std::string op,
                       std::span<const Tensor> inputs,
                       std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::move(op);
  if (t_trace) t_trace->record(node->op, inputs.size(), node->shape);
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

// Binary elementwise with the limited broadcasting rules.
struct Broadcast {
  Dims a, b, out;
};

Broadcast broadcast(std::string_view op, const Tensor& x, const Tensor& y) {
  const Dims a = dims_of(x), b = dims_of(y);
  auto join = [&](std::size_t p, std::size_t q) -> std::size_t {
    if (p == q) return p;
    if (p == 1) return q;
    if (q == 1) return p;
    shape_fail(op, {x, y});
  };
  return {a, b, {join(a.r, b.r), join(a.c, b.c)}};
}

inline std::size_t bidx(const Dims& d, std::size_t r, std::size_t c) {
  return (d.r == 1 ? 0 : r) * d.c + (d.c == 1 ? 0 : c);
}

template <class Fwd, class DA, class DB>
Tensor binary(std::string_view name, const Tensor& x, const Tensor& y, Fwd fwd, DA da,
              DB db) {
  const Broadcast bc = broadcast(name, x, y);
  std::vector<Scalar> out(bc.out.r * bc.out.c);
  const auto xa = x.data();
  const auto ya = y.data();
  const bool same = bc.a.r == bc.b.r && bc.a.c == bc.b.c;
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xa[i], ya[i]);
  } else {
    for (std::size_t r = 0; r < bc.out.r; ++r)
      for (std::size_t c = 0; c < bc.out.c; ++c)
        out[r * bc.out.c + c] = fwd(xa[bidx(bc.a, r, c)], ya[bidx(bc.b, r, c)]);
  }
  return make_result({bc.out.r, bc.out.c}, std::move(out), std::string(name), {x, y},
                     [bc, da, db](Node& self) {
                       Node& nx = *self.inputs[0];
                       Node& ny = *self.inputs[1];
                       const auto& g = self.grad;
                       for (std::size_t r = 0; r < bc.out.r; ++r) {
                         for (std::size_t c = 0; c < bc.out.c; ++c) {
                           const std::size_t i = r * bc.out.c + c;
                           const std::size_t ia = bidx(bc.a, r, c);
                           const std::size_t ib = bidx(bc.b, r, c);
                           const Scalar xv = nx.value[ia], yv = ny.value[ib];
                           if (nx.requires_grad) nx.ensure_grad()[ia] += g[i] * da(xv, yv);
                           if (ny.requires_grad) ny.ensure_grad()[ib] += g[i] * db(xv, yv);
                         }
                       }
                     });
}

// Unary elementwise where the derivative is a function of (input, output).
template <class Fwd, class Deriv>
Tensor unary(std::string name, const Tensor& t, Fwd fwd, Deriv deriv) {
  const Dims d = dims_of(t);
  const auto in = t.data();
  std::vector<Scalar> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result({d.r, d.c}, std::move(out), std::move(name), {t}, [deriv](Node& self) {
    Node& nx = *self.inputs[0];
    if (!nx.requires_grad) return;
    auto& gx = nx.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += self.grad[i] * deriv(nx.value[i], self.value[i]);
  });
}

int check_axis(std::string_view op, int axis, bool allow_all) {
  if (axis == 0 || axis == 1 || (allow_all && axis == -1)) return axis;
  throw ShapeError(std::string(op) + ": unsupported axis " + std::to_string(axis));
}

// A lane is one row (axis 1) or one column (axis 0) of a 2-D view.
struct Lanes {
  std::size_t count, length, stride, step;  // lane i starts at i*step
};

Lanes lanes_of(Dims d, int axis) {
  if (axis == 1) return {d.r, d.c, 1, d.c};
  return {d.c, d.r, d.c, 1};
}

}  // namespace

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<Scalar>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), Scalar(0));
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0, requires_grad);
}

Tensor Tensor::full(Shape shape, Scalar v, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value.assign(numel_of(shape), v);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<Scalar> values, bool requires_grad) {
  if (numel_of(shape) != values.size())
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " needs " +
                     std::to_string(numel_of(shape)) + " values, got " +
                     std::to_string(values.size()));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(Scalar v) { return full({1, 1}, v); }

std::size_t Tensor::rows() const { return dims_of(shape()).r; }
std::size_t Tensor::cols() const { return dims_of(shape()).c; }

Scalar Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), Scalar(0));
}

Tensor Tensor::detach() const { return Tensor::from(shape(), node_->value, false); }

void Tensor::backward() const {
  if (numel() != 1)
    throw ShapeError("backward: loss must be a single element, got shape " +
                     shape_str(shape()));
  if (!requires_grad()) return;

  // Post-order DFS restricted to nodes that carry gradients.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order)
    if (!n->is_leaf()) n->grad.assign(n->value.size(), Scalar(0));
  node_->ensure_grad()[0] += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf() && n->backward_fn) n->backward_fn(*n);
  }
}

OpTrace::OpTrace() : previous_(t_trace) { t_trace = this; }
OpTrace::~OpTrace() { t_trace = previous_; }
void OpTrace::record(std::string_view op, std::size_t arity, const Shape& shape) {
  events_.push_back({t_stage, std::string(op), arity, shape});
}

TraceStage::TraceStage(std::string name) : previous_(std::exchange(t_stage, std::move(name))) {}
TraceStage::~TraceStage() { t_stage = std::move(previous_); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Dims da = dims_of(a), db = dims_of(b);
  if (da.c != db.r) shape_fail("matmul", {a, b}, "inner extents differ");
  std::vector<Scalar> out(da.r * db.c);
  Map(out.data(), da.r, db.c).noalias() =
      MapC(a.data().data(), da.r, da.c) * MapC(b.data().data(), db.r, db.c);
  return make_result({da.r, db.c}, std::move(out), "matmul", {a, b}, [da, db](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    MapC g(self.grad.data(), da.r, db.c);
    if (na.requires_grad)
      Map(na.ensure_grad().data(), da.r, da.c).noalias() +=
          g * MapC(nb.value.data(), db.r, db.c).transpose();
    if (nb.requires_grad)
      Map(nb.ensure_grad().data(), db.r, db.c).noalias() +=
          MapC(na.value.data(), da.r, da.c).transpose() * g;
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](Scalar x, Scalar y) { return x + y; },
      [](Scalar, Scalar) { return Scalar(1); }, [](Scalar, Scalar) { return Scalar(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](Scalar x, Scalar y) { return x - y; },
      [](Scalar, Scalar) { return Scalar(1); }, [](Scalar, Scalar) { return Scalar(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](Scalar x, Scalar y) { return x * y; },
      [](Scalar, Scalar y) { return y; }, [](Scalar x, Scalar) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](Scalar x, Scalar y) { return x / y; },
      [](Scalar, Scalar y) { return Scalar(1) / y; },
      [](Scalar x, Scalar y) { return -x / (y * y); });
}

Tensor transpose(const Tensor& t) {
  const Dims d = dims_of(t);
  std::vector<Scalar> out(d.r * d.c);
  Map(out.data(), d.c, d.r) = MapC(t.data().data(), d.r, d.c).transpose();
  return make_result({d.c, d.r}, std::move(out), "transpose", {t}, [d](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    Map(x.ensure_grad().data(), d.r, d.c) += MapC(self.grad.data(), d.c, d.r).transpose();
  });
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  check_axis("concat", axis, false);
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::vector<Dims> ds;
  for (const auto& p : parts) ds.push_back(dims_of(p));
  Dims out = ds[0];
  for (std::size_t i = 1; i < ds.size(); ++i) {
    if (axis == 1) {
      if (ds[i].r != out.r)
        throw ShapeError("concat(axis=1): row extents differ: " + shape_str(parts[0].shape()) +
                         " vs " + shape_str(parts[i].shape()));
      out.c += ds[i].c;
    } else {
      if (ds[i].c != out.c)
        throw ShapeError("concat(axis=0): column extents differ: " +
                         shape_str(parts[0].shape()) + " vs " + shape_str(parts[i].shape()));
      out.r += ds[i].r;
    }
  }
  std::vector<Scalar> value(out.r * out.c);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    offsets.push_back(off);
    const auto src = parts[i].data();
    if (axis == 0) {
      std::copy(src.begin(), src.end(), value.begin() + off * out.c);
      off += ds[i].r;
    } else {
      for (std::size_t r = 0; r < out.r; ++r)
        std::copy_n(src.begin() + r * ds[i].c, ds[i].c, value.begin() + r * out.c + off);
      off += ds[i].c;
    }
  }
  return make_result_vec({out.r, out.c}, std::move(value), "concat", parts,
                         [ds, offsets, out, axis](Node& self) {
                           for (std::size_t i = 0; i < self.inputs.size(); ++i) {
                             Node& in = *self.inputs[i];
                             if (!in.requires_grad) continue;
                             auto& g = in.ensure_grad();
                             if (axis == 0) {
                               const auto* src = self.grad.data() + offsets[i] * out.c;
                               for (std::size_t k = 0; k < g.size(); ++k) g[k] += src[k];
                             } else {
                               for (std::size_t r = 0; r < out.r; ++r)
                                 for (std::size_t c = 0; c < ds[i].c; ++c)
                                   g[r * ds[i].c + c] += self.grad[r * out.c + offsets[i] + c];
                             }
                           }
                         });
}

Tensor slice(const Tensor& t, int axis, std::size_t begin, std::size_t end) {
  check_axis("slice", axis, false);
  const Dims d = dims_of(t);
  const std::size_t extent = axis == 0 ? d.r : d.c;
  if (begin >= end || end > extent)
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of " +
                     shape_str(t.shape()));
  const Dims out = axis == 0 ? Dims{end - begin, d.c} : Dims{d.r, end - begin};
  std::vector<Scalar> value(out.r * out.c);
  const auto src = t.data();
  for (std::size_t r = 0; r < out.r; ++r)
    for (std::size_t c = 0; c < out.c; ++c)
      value[r * out.c + c] =
          axis == 0 ? src[(r + begin) * d.c + c] : src[r * d.c + c + begin];
  return make_result({out.r, out.c}, std::move(value), "slice", {t},
                     [d, out, axis, begin](Node& self) {
                       Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.ensure_grad();
                       for (std::size_t r = 0; r < out.r; ++r)
                         for (std::size_t c = 0; c < out.c; ++c) {
                           const std::size_t src_i =
                               axis == 0 ? (r + begin) * d.c + c : r * d.c + c + begin;
                           g[src_i] += self.grad[r * out.c + c];
                         }
                     });
}

Tensor tanh(const Tensor& t) {
  return unary(
      "tanh", t, [](Scalar x) { return std::tanh(x); },
      [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

Tensor elu(const Tensor& t) {
  return unary(
      "elu", t, [](Scalar x) { return x > 0 ? x : std::expm1(x); },
      [](Scalar x, Scalar y) { return x > 0 ? Scalar(1) : y + Scalar(1); });
}

Tensor softplus(const Tensor& t) {
  return unary(
      "softplus", t,
      [](Scalar x) { return x > 30 ? x : std::log1p(std::exp(x)); },
      [](Scalar x, Scalar) { return Scalar(1) / (Scalar(1) + std::exp(-x)); });
}

Tensor exp(const Tensor& t) {
  return unary(
      "exp", t, [](Scalar x) { return std::exp(x); }, [](Scalar, Scalar y) { return y; });
}

Tensor log(const Tensor& t, Scalar eps) {
  return unary(
      "log", t, [eps](Scalar x) { return std::log(std::max(x, eps)); },
      [eps](Scalar x, Scalar) { return x > eps ? Scalar(1) / x : Scalar(0); });
}

Tensor square(const Tensor& t) {
  return unary(
      "square", t, [](Scalar x) { return x * x; },
      [](Scalar x, Scalar) { return Scalar(2) * x; });
}

Tensor clamp_min(const Tensor& t, Scalar floor) {
  return unary(
      "clamp_min", t, [floor](Scalar x) { return std::max(x, floor); },
      [floor](Scalar x, Scalar) { return x > floor ? Scalar(1) : Scalar(0); });
}

Tensor scale(const Tensor& t, Scalar factor) {
  return unary(
      "scale", t, [factor](Scalar x) { return x * factor; },
      [factor](Scalar, Scalar) { return factor; });
}

Tensor add_scalar(const Tensor& t, Scalar c) {
  return unary(
      "add_scalar", t, [c](Scalar x) { return x + c; },
      [](Scalar, Scalar) { return Scalar(1); });
}

Tensor sigmoid(const Tensor& t) { return add_scalar(scale(tanh(scale(t, 0.5)), 0.5), 0.5); }

Tensor stop_gradient(const Tensor& t) {
  const Dims d = dims_of(t);
  auto out = Tensor::from({d.r, d.c}, std::vector<Scalar>(t.data().begin(), t.data().end()));
  out.node()->op = "stop_gradient";
  return out;
}

Tensor sum(const Tensor& t, int axis) {
  check_axis("sum", axis, true);
  const Dims d = dims_of(t);
  const auto in = t.data();
  if (axis == -1) {
    Scalar s = 0;
    for (Scalar v : in) s += v;
    return make_result({1, 1}, {s}, "sum", {t}, [](Node& self) {
      Node& x = *self.inputs[0];
      if (!x.requires_grad) return;
      for (auto& g : x.ensure_grad()) g += self.grad[0];
    });
  }
  const Lanes ln = lanes_of(d, axis);
  std::vector<Scalar> out(ln.count, 0);
  for (std::size_t l = 0; l < ln.count; ++l)
    for (std::size_t k = 0; k < ln.length; ++k) out[l] += in[l * ln.step + k * ln.stride];
  Shape shape = axis == 0 ? Shape{1, d.c} : Shape{d.r, 1};
  return make_result(std::move(shape), std::move(out), "sum", {t}, [ln](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    auto& g = x.ensure_grad();
    for (std::size_t l = 0; l < ln.count; ++l)
      for (std::size_t k = 0; k < ln.length; ++k) g[l * ln.step + k * ln.stride] += self.grad[l];
  });
}

Tensor mean(const Tensor& t, int axis) {
  check_axis("mean", axis, true);
  const Dims d = dims_of(t);
  const std::size_t n = axis == -1 ? d.r * d.c : (axis == 0 ? d.r : d.c);
  auto out = scale(sum(t, axis), Scalar(1) / static_cast<Scalar>(n));
  out.node()->op = "mean";
  return out;
}

Tensor l2_normalize(const Tensor& t, int axis, Scalar eps) {
  check_axis("l2_normalize", axis, false);
  const Dims d = dims_of(t);
  const Lanes ln = lanes_of(d, axis);
  const auto in = t.data();
  std::vector<Scalar> out(in.size());
  std::vector<Scalar> norms(ln.count);
  for (std::size_t l = 0; l < ln.count; ++l) {
    Scalar ss = 0;
    for (std::size_t k = 0; k < ln.length; ++k) {
      const Scalar v = in[l * ln.step + k * ln.stride];
      ss += v * v;
    }
    norms[l] = std::max(std::sqrt(ss), eps);
    for (std::size_t k = 0; k < ln.length; ++k) {
      const std::size_t i = l * ln.step + k * ln.stride;
      out[i] = in[i] / norms[l];
    }
  }
  return make_result({d.r, d.c}, std::move(out), "l2_normalize", {t},
                     [ln, norms, eps](Node& self) {
                       Node& x = *self.inputs[0];
                       if (!x.requires_grad) return;
                       auto& g = x.ensure_grad();
                       for (std::size_t l = 0; l < ln.count; ++l) {
                         const Scalar n = norms[l];
                         const bool floored = !(n > eps);
                         Scalar dot = 0;
                         for (std::size_t k = 0; k < ln.length; ++k) {
                           const std::size_t i = l * ln.step + k * ln.stride;
                           dot += self.value[i] * self.grad[i];
                         }
                         for (std::size_t k = 0; k < ln.length; ++k) {
                           const std::size_t i = l * ln.step + k * ln.stride;
                           g[i] += floored ? self.grad[i] / n
                                           : (self.grad[i] - self.value[i] * dot) / n;
                         }
                       }
                     });
}

Tensor softmax(const Tensor& t, int axis, Scalar temperature) {
  check_axis("softmax", axis, false);
  if (!(temperature > 0)) throw std::invalid_argument("softmax: temperature must be > 0");
  const Dims d = dims_of(t);
  const Lanes ln = lanes_of(d, axis);
  const auto in = t.data();
  std::vector<Scalar> out(in.size());
  for (std::size_t l = 0; l < ln.count; ++l) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (std::size_t k = 0; k < ln.length; ++k)
      mx = std::max(mx, in[l * ln.step + k * ln.stride]);
    Scalar z = 0;
    for (std::size_t k = 0; k < ln.length; ++k) {
      const std::size_t i = l * ln.step + k * ln.stride;
      out[i] = std::exp((in[i] - mx) / temperature);
      z += out[i];
    }
    for (std::size_t k = 0; k < ln.length; ++k) out[l * ln.step + k * ln.stride] /= z;
  }
  return make_result({d.r, d.c}, std::move(out), "softmax", {t},
                     [ln, temperature](Node& self) {
                       Node& x = *self.inputs[0];
                       if (!x.requires_grad) return;
                       auto& g = x.ensure_grad();
                       for (std::size_t l = 0; l < ln.count; ++l) {
                         Scalar dot = 0;
                         for (std::size_t k = 0; k < ln.length; ++k) {
                           const std::size_t i = l * ln.step + k * ln.stride;
                           dot += self.value[i] * self.grad[i];
                         }
                         for (std::size_t k = 0; k < ln.length; ++k) {
                           const std::size_t i = l * ln.step + k * ln.stride;
                           g[i] += self.value[i] * (self.grad[i] - dot) / temperature;
                         }
                       }
                     });
}

const std::vector<std::string>& primitive_names() {
  static const std::vector<std::string> names = {
      "matmul",  "add",    "sub",  "mul",          "div",     "concat",
      "slice",   "tanh",   "elu",  "softplus",     "exp",     "log",
      "sum",     "mean",   "square", "l2_normalize", "softmax", "stop_gradient",
      "clamp_min", "transpose"};
  return names;
}

Tensor apply_primitive(std::string_view op, std::span<const Tensor> in,
                       const PrimitiveAttrs& attrs) {
  auto need = [&](std::size_t n) {
    if (in.size() != n)
      throw std::invalid_argument(std::string(op) + ": expects " + std::to_string(n) +
                                  " inputs, got " + std::to_string(in.size()));
  };
  if (op == "concat") return concat(in, attrs.axis);
  if (op == "matmul" || op == "add" || op == "sub" || op == "mul" || op == "div") {
    need(2);
    if (op == "matmul") return matmul(in[0], in[1]);
    if (op == "add") return add(in[0], in[1]);
    if (op == "sub") return sub(in[0], in[1]);
    if (op == "mul") return mul(in[0], in[1]);
    return div(in[0], in[1]);
  }
  need(1);
  const Tensor& x = in[0];
  if (op == "slice") return slice(x, attrs.axis, attrs.begin, attrs.end);
  if (op == "transpose") return transpose(x);
  if (op == "tanh") return tanh(x);
  if (op == "elu") return elu(x);
  if (op == "softplus") return softplus(x);
  if (op == "exp") return exp(x);
  if (op == "log") return log(x, attrs.eps);
  if (op == "sum") return sum(x, attrs.axis);
  if (op == "mean") return mean(x, attrs.axis);
  if (op == "square") return square(x);
  if (op == "l2_normalize") return l2_normalize(x, attrs.axis, attrs.eps);
  if (op == "softmax") return softmax(x, attrs.axis, attrs.temperature);
  if (op == "stop_gradient") return stop_gradient(x);
  if (op == "clamp_min") return clamp_min(x, attrs.value);
  throw std::invalid_argument("unknown primitive: " + std::string(op));
}

}  // namespace protocad
