#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hamf/ops.hpp"
#include "hamf/random.hpp"

namespace hamf {

inline constexpr double kInitStd = 0.02;

/// Ordered, named collection of trainable tensors.
template <typename Scalar>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> tensor;
  };

  Tensor<Scalar> add(const std::string& name, Shape shape, Vec<Scalar> values) {
    for (const auto& e : entries_)
      if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    entries_.push_back({name, Tensor<Scalar>::parameter(std::move(shape), std::move(values))});
    return entries_.back().tensor;
  }

  Tensor<Scalar> add_normal(const std::string& name, Shape shape, Rng& rng, double stddev = kInitStd) {
    Vec<Scalar> v(shape_numel(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(rng.normal(0.0, stddev));
    return add(name, std::move(shape), std::move(v));
  }

  Tensor<Scalar> add_constant(const std::string& name, Shape shape, Scalar value) {
    const Index n = shape_numel(shape);
    return add(name, std::move(shape), Vec<Scalar>::Constant(n, value));
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  Index count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  Index count_with_prefix(const std::string& prefix) const {
    Index n = 0;
    for (const auto& e : entries_)
      if (e.name.rfind(prefix, 0) == 0) n += e.tensor.numel();
    return n;
  }

  const Tensor<Scalar>* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e.tensor;
    return nullptr;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
};

template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<Scalar>& params, const std::string& name, Index in, Index out, Rng& rng, bool bias = true)
      : weight_(params.add_normal(name + ".weight", {in, out}, rng)) {
    if (bias) bias_ = params.add_constant(name + ".bias", {out}, Scalar(0));
  }

  Linear(Tensor<Scalar> weight, Tensor<Scalar> bias) : weight_(std::move(weight)), bias_(std::move(bias)) {}

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const {
    Tensor<Scalar> y = matmul(x, weight_);
    return bias_.defined() ? add(y, bias_) : y;
  }

  const Tensor<Scalar>& weight() const { return weight_; }
  const Tensor<Scalar>& bias() const { return bias_; }
  Index in_features() const { return weight_.dim(0); }
  Index out_features() const { return weight_.dim(1); }

 private:
  Tensor<Scalar> weight_;
  Tensor<Scalar> bias_;
};

template <typename Scalar>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet<Scalar>& params, const std::string& name, Index dim)
      : gamma_(params.add_constant(name + ".gamma", {dim}, Scalar(1))),
        beta_(params.add_constant(name + ".beta", {dim}, Scalar(0))) {}

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return layer_norm(x, gamma_, beta_); }

 private:
  Tensor<Scalar> gamma_;
  Tensor<Scalar> beta_;
};

/// Two linear layers with a SiLU in between.
template <typename Scalar>
class Mlp2 {
 public:
  Mlp2() = default;
  Mlp2(ParameterSet<Scalar>& params, const std::string& name, Index in, Index hidden, Index out, Rng& rng)
      : first_(params, name + ".0", in, hidden, rng), second_(params, name + ".1", hidden, out, rng) {}

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return second_(silu(first_(x))); }

  const Linear<Scalar>& first() const { return first_; }
  const Linear<Scalar>& second() const { return second_; }

 private:
  Linear<Scalar> first_;
  Linear<Scalar> second_;
};

/// Reverses the order of slices along `axis`.
template <typename Scalar>
Tensor<Scalar> reverse(const Tensor<Scalar>& a, Index axis) {
  const Index n = a.dim(axis);
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = n - 1 - i;
  return index_select(a, axis, idx);
}

}  // namespace hamf
