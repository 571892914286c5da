#include "hamf/tensor.hpp"

#include <atomic>
#include <sstream>

namespace hamf {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw ShapeError("shape", "negative dimension in " + shape_str(shape));
    n *= d;
  }
  return n;
}

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : std::invalid_argument(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b)) {}

ShapeError::ShapeError(const std::string& op, const std::string& detail)
    : std::invalid_argument(op + ": " + detail) {}

namespace {
#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif
}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks() { return g_finite_checks.load(); }

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::constant(Shape shape, Vec<Scalar> values) {
  if (shape_numel(shape) != values.size())
    throw ShapeError("constant", "shape " + shape_str(shape) + " does not hold " +
                                     std::to_string(values.size()) + " values");
  auto node = std::make_shared<Node<Scalar>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::constant(Shape shape, std::initializer_list<Scalar> values) {
  Vec<Scalar> v(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar x : values) v[i++] = x;
  return constant(std::move(shape), std::move(v));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(Shape shape) {
  const Index n = shape_numel(shape);
  return constant(std::move(shape), Vec<Scalar>::Zero(n));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::full(Shape shape, Scalar value) {
  const Index n = shape_numel(shape);
  return constant(std::move(shape), Vec<Scalar>::Constant(n, value));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::parameter(Shape shape, Vec<Scalar> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <typename Scalar>
Index Tensor<Scalar>::dim(Index axis) const {
  return node_->shape[static_cast<std::size_t>(detail::normalize_axis(axis, rank(), "dim"))];
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (numel() != 1) throw ShapeError("item", "tensor of shape " + shape_str(shape()) + " is not scalar");
  return node_->value[0];
}

template <typename Scalar>
Vec<Scalar> Tensor<Scalar>::grad() const {
  if (has_grad()) return node_->grad;
  return Vec<Scalar>::Zero(numel());
}

template <typename Scalar>
Tape<Scalar>::~Tape() {
  if (active_ == this) active_ = nullptr;
}

template <typename Scalar>
void Tape<Scalar>::record(std::shared_ptr<Node<Scalar>> node) {
  if (consumed_) throw std::logic_error("tape: record after backward without reset");
  nodes_.push_back(std::move(node));
}

template <typename Scalar>
void Tape<Scalar>::backward(const Tensor<Scalar>& loss) {
  if (consumed_) throw std::logic_error("tape: backward called twice without reset");
  if (nodes_.empty()) throw std::logic_error("tape: backward on an empty tape");
  if (loss.numel() != 1)
    throw ShapeError("backward", "loss must be scalar, got " + shape_str(loss.shape()));
  consumed_ = true;
  if (!loss.requires_grad()) return;
  loss.node()->grad_buffer()[0] += Scalar(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<Scalar>& n = **it;
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward();
  }
  for (auto& n : nodes_) n->backward = nullptr;
}

template <typename Scalar>
void Tape<Scalar>::reset() {
  nodes_.clear();
  consumed_ = false;
}

namespace detail {

Index normalize_axis(Index axis, Index rank, const char* op) {
  const Index a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    throw ShapeError(op, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return a;
}

template <typename Scalar>
Tensor<Scalar> emit(const char* op, Shape shape, Vec<Scalar> value,
                    const std::vector<NodePtr<Scalar>>& inputs,
                    std::function<void(const Vec<Scalar>&)> backward) {
  if (finite_checks() && !value.allFinite())
    throw NumericError(std::string(op) + ": produced a non-finite value");
  auto node = std::make_shared<Node<Scalar>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  Tape<Scalar>* tape = Tape<Scalar>::active();
  bool needs = false;
  for (const auto& in : inputs) needs = needs || (in && in->requires_grad);
  if (tape && needs) {
    node->requires_grad = true;
    Node<Scalar>* self = node.get();
    node->backward = [self, fn = std::move(backward)]() { fn(self->grad); };
    tape->record(node);
  }
  return Tensor<Scalar>(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> emit(const char* op, Shape shape, Vec<Scalar> value,
                    std::initializer_list<NodePtr<Scalar>> inputs,
                    std::function<void(const Vec<Scalar>&)> backward) {
  return emit<Scalar>(op, std::move(shape), std::move(value), std::vector<NodePtr<Scalar>>(inputs),
                      std::move(backward));
}

template Tensor<float> emit(const char*, Shape, Vec<float>, const std::vector<NodePtr<float>>&,
                            std::function<void(const Vec<float>&)>);
template Tensor<double> emit(const char*, Shape, Vec<double>, const std::vector<NodePtr<double>>&,
                             std::function<void(const Vec<double>&)>);
template Tensor<float> emit(const char*, Shape, Vec<float>, std::initializer_list<NodePtr<float>>,
                            std::function<void(const Vec<float>&)>);
template Tensor<double> emit(const char*, Shape, Vec<double>, std::initializer_list<NodePtr<double>>,
                             std::function<void(const Vec<double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace hamf
