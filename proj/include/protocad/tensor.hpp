#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace protocad {

#ifdef PROTOCAD_SINGLE_PRECISION
using Scalar = float;
#else
using Scalar = double;
#endif

/// Floor used by log and l2_normalize.
inline constexpr Scalar kEps = static_cast<Scalar>(1e-8);

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One vertex of the differentiation graph. Leaves have no inputs.
struct Node {
  Shape shape;
  std::vector<Scalar> value;
  std::vector<Scalar> grad;  // empty means "absent"
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return inputs.empty(); }
  std::vector<Scalar>& ensure_grad();
};

/// Reference-semantics handle to a graph node. Copies alias the same node,
/// the way parameters are shared between a ParamSet and the modules using them.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Scalar> values, bool requires_grad = false);
  static Tensor scalar(Scalar v);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  /// Rows/cols of the 2-D view: rank-1 tensors are one row, scalars 1x1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const Scalar> data() const { return node_->value; }
  std::span<Scalar> mutable_data() { return node_->value; }
  Scalar item() const;
  Scalar at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Scalar> grad() const { return node_->grad; }
  std::span<Scalar> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  const std::string& op() const { return node_->op; }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  /// Reverse-mode sweep from a single-element tensor. Leaf gradients
  /// accumulate across calls; interior gradients are recomputed.
  void backward() const;

  /// Value copy with no graph history.
  Tensor detach() const;

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Records every primitive created on the current thread while alive,
/// labelled with the innermost active TraceStage.
class OpTrace {
 public:
  struct Event {
    std::string stage;
    std::string op;
    std::size_t arity;
    Shape shape;
  };
  OpTrace();
  ~OpTrace();
  OpTrace(const OpTrace&) = delete;
  OpTrace& operator=(const OpTrace&) = delete;
  const std::vector<Event>& events() const { return events_; }
  void record(std::string_view op, std::size_t arity, const Shape& shape);

 private:
  OpTrace* previous_;
  std::vector<Event> events_;
};

class TraceStage {
 public:
  explicit TraceStage(std::string name);
  ~TraceStage();
  TraceStage(const TraceStage&) = delete;
  TraceStage& operator=(const TraceStage&) = delete;

 private:
  std::string previous_;
};

// Primitives. Binary elementwise ops broadcast [r,c] against [r,c], [1,c],
// [r,1] or [1,1]; nothing more general.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& t);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& t, int axis, std::size_t begin, std::size_t end);
Tensor tanh(const Tensor& t);
Tensor elu(const Tensor& t);
Tensor softplus(const Tensor& t);
Tensor exp(const Tensor& t);
/// Natural log of max(t, eps); gradient is zero where the floor is active.
Tensor log(const Tensor& t, Scalar eps = kEps);
/// axis 0 -> [1,c], axis 1 -> [r,1], axis -1 -> [1,1].
Tensor sum(const Tensor& t, int axis = -1);
Tensor mean(const Tensor& t, int axis = -1);
Tensor square(const Tensor& t);
Tensor l2_normalize(const Tensor& t, int axis = 1, Scalar eps = kEps);
Tensor softmax(const Tensor& t, int axis = 1, Scalar temperature = 1);
Tensor stop_gradient(const Tensor& t);
Tensor clamp_min(const Tensor& t, Scalar floor);

Tensor sigmoid(const Tensor& t);
Tensor scale(const Tensor& t, Scalar factor);
Tensor add_scalar(const Tensor& t, Scalar c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, Scalar s) { return scale(a, s); }
inline Tensor operator*(Scalar s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, Scalar s) { return add_scalar(a, s); }
inline Tensor operator+(Scalar s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1); }

/// Attributes for the string-dispatched entry point.
struct PrimitiveAttrs {
  int axis = 1;
  Scalar eps = kEps;
  Scalar temperature = 1;
  std::size_t begin = 0;
  std::size_t end = 0;
  Scalar value = 0;
};

/// Dispatches a primitive by name ("matmul", "softmax", ...).
Tensor apply_primitive(std::string_view op_id, std::span<const Tensor> inputs,
                       const PrimitiveAttrs& attrs = {});

/// Names accepted by apply_primitive.
const std::vector<std::string>& primitive_names();

}  // namespace protocad
