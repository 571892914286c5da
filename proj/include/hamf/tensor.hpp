#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hamf {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

template <typename Scalar>
using Vec = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_str(const Shape& shape);
Index shape_numel(const Shape& shape);

/// Raised when operand shapes are incompatible. The message names the op and
/// both shapes.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& a, const Shape& b);
  ShapeError(const std::string& op, const std::string& detail);
};

/// Raised when an op produces a non-finite value while finite checks are on.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Finite-value checking on every op output. Defaults to on in debug builds.
void set_finite_checks(bool enabled);
bool finite_checks();

template <typename Scalar>
struct Node {
  Shape shape;
  Vec<Scalar> value;
  Vec<Scalar> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  const char* op = "leaf";
  std::function<void()> backward;

  Vec<Scalar>& grad_buffer() {
    if (grad.size() != value.size()) grad = Vec<Scalar>::Zero(value.size());
    return grad;
  }
};

/// Dense row-major tensor handle. Values are immutable once produced by an
/// op; parameters expose mutable storage for the optimizer.
template <typename Scalar>
class Tensor {
 public:
  using scalar_type = Scalar;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<Scalar>> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, Vec<Scalar> values);
  static Tensor constant(Shape shape, std::initializer_list<Scalar> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Scalar value);
  static Tensor parameter(Shape shape, Vec<Scalar> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  /// Negative axes count from the end.
  Index dim(Index axis) const;
  Index numel() const { return node_->value.size(); }

  const Vec<Scalar>& value() const { return node_->value; }
  Vec<Scalar>& mutable_value() { return node_->value; }
  const Scalar* data() const { return node_->value.data(); }
  Scalar item() const;

  bool requires_grad() const { return node_->requires_grad; }
  /// Accumulated gradient; zeros when nothing reached this tensor.
  Vec<Scalar> grad() const;
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void zero_grad() { node_->grad.resize(0); }

  const std::shared_ptr<Node<Scalar>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

/// Ordered record of differentiable ops. Ops register here while the tape is
/// active on the current thread (see TapeScope).
template <typename Scalar>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  void record(std::shared_ptr<Node<Scalar>> node);

  /// Runs the reverse sweep from a scalar loss. Each recorded node is visited
  /// at most once, in reverse creation order. Throws std::logic_error when
  /// called twice without reset() or on an empty tape.
  void backward(const Tensor<Scalar>& loss);

  /// Drops all records and saved activations.
  void reset();

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  static Tape* active() { return active_; }

 private:
  template <typename>
  friend class TapeScope;

  std::vector<std::shared_ptr<Node<Scalar>>> nodes_;
  bool consumed_ = false;
  static inline thread_local Tape* active_ = nullptr;
};

/// Makes a tape the recording target for the current thread.
template <typename Scalar>
class TapeScope {
 public:
  explicit TapeScope(Tape<Scalar>& tape) : previous_(Tape<Scalar>::active_) {
    Tape<Scalar>::active_ = &tape;
  }
  ~TapeScope() { Tape<Scalar>::active_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<Scalar>* previous_;
};

namespace detail {

template <typename Scalar>
using NodePtr = std::shared_ptr<Node<Scalar>>;

/// Builds an op output. When a tape is active and any input requires a
/// gradient, the node is recorded with `backward`, which receives the
/// output gradient and accumulates into the inputs.
template <typename Scalar>
Tensor<Scalar> emit(const char* op, Shape shape, Vec<Scalar> value,
                    std::initializer_list<NodePtr<Scalar>> inputs,
                    std::function<void(const Vec<Scalar>&)> backward);

template <typename Scalar>
Tensor<Scalar> emit(const char* op, Shape shape, Vec<Scalar> value,
                    const std::vector<NodePtr<Scalar>>& inputs,
                    std::function<void(const Vec<Scalar>&)> backward);

/// Gradient accumulator of an input node, allocated on first use.
template <typename Scalar>
inline Vec<Scalar>& grad_of(const NodePtr<Scalar>& node) {
  return node->grad_buffer();
}

Index normalize_axis(Index axis, Index rank, const char* op);

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace hamf
