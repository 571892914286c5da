#include "hamf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hamf {

namespace {

using detail::emit;
using detail::grad_of;
using detail::normalize_axis;

template <typename Scalar>
using ArrMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Scalar>
using ConstArrMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Scalar>
using MatMap = Eigen::Map<RowMat<Scalar>>;
template <typename Scalar>
using ConstMatMap = Eigen::Map<const RowMat<Scalar>>;

// Returns how many times `b` repeats to cover `a`, or throws.
template <typename Scalar>
Index broadcast_reps(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size()) throw ShapeError(op, sa, sb);
  for (std::size_t i = 0; i < sb.size(); ++i) {
    if (sb[sb.size() - 1 - i] != sa[sa.size() - 1 - i]) throw ShapeError(op, sa, sb);
  }
  return b.numel() == 0 ? 0 : a.numel() / b.numel();
}

struct AxisSplit {
  Index outer = 1;
  Index n = 1;
  Index inner = 1;
};

AxisSplit split_at(const Shape& shape, Index axis) {
  AxisSplit s;
  for (Index i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.n = shape[static_cast<std::size_t>(axis)];
  for (Index i = axis + 1; i < static_cast<Index>(shape.size()); ++i) s.inner *= shape[static_cast<std::size_t>(i)];
  return s;
}

template <typename Scalar, typename Fwd, typename Deriv>
Tensor<Scalar> unary(const char* op, const Tensor<Scalar>& a, Fwd fwd, Deriv deriv) {
  Vec<Scalar> out = a.value().unaryExpr(fwd);
  auto an = a.node();
  return emit<Scalar>(op, a.shape(), std::move(out), {an},
                      [an, deriv](const Vec<Scalar>& g) {
                        if (!an->requires_grad) return;
                        auto& ga = grad_of<Scalar>(an);
                        const auto& x = an->value;
                        for (Index i = 0; i < x.size(); ++i) ga[i] += g[i] * deriv(x[i]);
                      });
}

template <typename Scalar>
Scalar sigmoid_scalar(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Index reps = broadcast_reps("add", a, b);
  const Index bn = b.numel();
  Vec<Scalar> out = a.value();
  ArrMap<Scalar>(out.data(), reps, bn).rowwise() += b.value().transpose();
  auto an = a.node();
  auto bnode = b.node();
  return emit<Scalar>("add", a.shape(), std::move(out), {an, bnode},
                      [an, bnode, reps, bn](const Vec<Scalar>& g) {
                        if (an->requires_grad) grad_of<Scalar>(an) += g;
                        if (bnode->requires_grad)
                          grad_of<Scalar>(bnode) +=
                              ConstArrMap<Scalar>(g.data(), reps, bn).colwise().sum().transpose();
                      });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Index reps = broadcast_reps("sub", a, b);
  const Index bn = b.numel();
  Vec<Scalar> out = a.value();
  ArrMap<Scalar>(out.data(), reps, bn).rowwise() -= b.value().transpose();
  auto an = a.node();
  auto bnode = b.node();
  return emit<Scalar>("sub", a.shape(), std::move(out), {an, bnode},
                      [an, bnode, reps, bn](const Vec<Scalar>& g) {
                        if (an->requires_grad) grad_of<Scalar>(an) += g;
                        if (bnode->requires_grad)
                          grad_of<Scalar>(bnode) -=
                              ConstArrMap<Scalar>(g.data(), reps, bn).colwise().sum().transpose();
                      });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Index reps = broadcast_reps("mul", a, b);
  const Index bn = b.numel();
  Vec<Scalar> out = a.value();
  ArrMap<Scalar>(out.data(), reps, bn).rowwise() *= b.value().transpose();
  auto an = a.node();
  auto bnode = b.node();
  return emit<Scalar>("mul", a.shape(), std::move(out), {an, bnode},
                      [an, bnode, reps, bn](const Vec<Scalar>& g) {
                        ConstArrMap<Scalar> gm(g.data(), reps, bn);
                        if (an->requires_grad) {
                          ArrMap<Scalar> ga(grad_of<Scalar>(an).data(), reps, bn);
                          ga += gm.rowwise() * bnode->value.transpose();
                        }
                        if (bnode->requires_grad) {
                          ConstArrMap<Scalar> am(an->value.data(), reps, bn);
                          grad_of<Scalar>(bnode) += (gm * am).colwise().sum().transpose();
                        }
                      });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  auto an = a.node();
  return emit<Scalar>("scale", a.shape(), a.value() * factor, {an},
                      [an, factor](const Vec<Scalar>& g) {
                        if (an->requires_grad) grad_of<Scalar>(an) += g * factor;
                      });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar offset) {
  auto an = a.node();
  return emit<Scalar>("add_scalar", a.shape(), a.value() + offset, {an}, [an](const Vec<Scalar>& g) {
    if (an->requires_grad) grad_of<Scalar>(an) += g;
  });
}

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& w) {
  if (w.rank() != 2 || a.rank() < 1 || a.dim(-1) != w.dim(0)) throw ShapeError("matmul", a.shape(), w.shape());
  const Index k = w.dim(0);
  const Index m = w.dim(1);
  const Index rows = k == 0 ? 0 : a.numel() / k;
  Shape shape = a.shape();
  shape.back() = m;
  Vec<Scalar> out(rows * m);
  MatMap<Scalar>(out.data(), rows, m).noalias() =
      ConstMatMap<Scalar>(a.data(), rows, k) * ConstMatMap<Scalar>(w.data(), k, m);
  auto an = a.node();
  auto wn = w.node();
  return emit<Scalar>("matmul", std::move(shape), std::move(out), {an, wn},
                      [an, wn, rows, k, m](const Vec<Scalar>& g) {
                        ConstMatMap<Scalar> gm(g.data(), rows, m);
                        if (an->requires_grad)
                          MatMap<Scalar>(grad_of<Scalar>(an).data(), rows, k).noalias() +=
                              gm * ConstMatMap<Scalar>(wn->value.data(), k, m).transpose();
                        if (wn->requires_grad)
                          MatMap<Scalar>(grad_of<Scalar>(wn).data(), k, m).noalias() +=
                              ConstMatMap<Scalar>(an->value.data(), rows, k).transpose() * gm;
                      });
}

template <typename Scalar>
Tensor<Scalar> bmm(const Tensor<Scalar>& a, const Tensor<Scalar>& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) throw ShapeError("bmm", a.shape(), b.shape());
  const Index batch = a.dim(0);
  const Index n = a.dim(1);
  const Index k = a.dim(2);
  const Index bk = transpose_b ? b.dim(2) : b.dim(1);
  const Index m = transpose_b ? b.dim(1) : b.dim(2);
  if (bk != k) throw ShapeError("bmm", a.shape(), b.shape());
  Vec<Scalar> out(batch * n * m);
  for (Index i = 0; i < batch; ++i) {
    ConstMatMap<Scalar> am(a.data() + i * n * k, n, k);
    MatMap<Scalar> om(out.data() + i * n * m, n, m);
    if (transpose_b)
      om.noalias() = am * ConstMatMap<Scalar>(b.data() + i * m * k, m, k).transpose();
    else
      om.noalias() = am * ConstMatMap<Scalar>(b.data() + i * k * m, k, m);
  }
  auto an = a.node();
  auto bnode = b.node();
  return emit<Scalar>(
      "bmm", Shape{batch, n, m}, std::move(out), {an, bnode},
      [an, bnode, batch, n, k, m, transpose_b](const Vec<Scalar>& g) {
        for (Index i = 0; i < batch; ++i) {
          ConstMatMap<Scalar> gm(g.data() + i * n * m, n, m);
          ConstMatMap<Scalar> am(an->value.data() + i * n * k, n, k);
          if (transpose_b) {
            ConstMatMap<Scalar> bm(bnode->value.data() + i * m * k, m, k);
            if (an->requires_grad) MatMap<Scalar>(grad_of<Scalar>(an).data() + i * n * k, n, k).noalias() += gm * bm;
            if (bnode->requires_grad)
              MatMap<Scalar>(grad_of<Scalar>(bnode).data() + i * m * k, m, k).noalias() += gm.transpose() * am;
          } else {
            ConstMatMap<Scalar> bm(bnode->value.data() + i * k * m, k, m);
            if (an->requires_grad)
              MatMap<Scalar>(grad_of<Scalar>(an).data() + i * n * k, n, k).noalias() += gm * bm.transpose();
            if (bnode->requires_grad)
              MatMap<Scalar>(grad_of<Scalar>(bnode).data() + i * k * m, k, m).noalias() += am.transpose() * gm;
          }
        }
      });
}

template <typename Scalar>
Tensor<Scalar> concat(std::span<const Tensor<Scalar>> parts, Index axis) {
  if (parts.empty()) throw ShapeError("concat", "no inputs");
  const Index rank = parts[0].rank();
  const Index ax = normalize_axis(axis, rank, "concat");
  Shape shape = parts[0].shape();
  shape[static_cast<std::size_t>(ax)] = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat", parts[0].shape(), p.shape());
    for (Index d = 0; d < rank; ++d)
      if (d != ax && p.shape()[static_cast<std::size_t>(d)] != parts[0].shape()[static_cast<std::size_t>(d)])
        throw ShapeError("concat", parts[0].shape(), p.shape());
    shape[static_cast<std::size_t>(ax)] += p.dim(ax);
  }
  const AxisSplit s = split_at(shape, ax);
  std::vector<Index> widths;
  std::vector<detail::NodePtr<Scalar>> nodes;
  for (const auto& p : parts) {
    widths.push_back(p.dim(ax) * s.inner);
    nodes.push_back(p.node());
  }
  const Index row = s.n * s.inner;
  Vec<Scalar> out(s.outer * row);
  Index offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Index w = widths[i];
    for (Index o = 0; o < s.outer; ++o)
      std::copy_n(parts[i].data() + o * w, w, out.data() + o * row + offset);
    offset += w;
  }
  return emit<Scalar>("concat", std::move(shape), std::move(out), nodes,
                      [nodes, widths, outer = s.outer, row](const Vec<Scalar>& g) {
                        Index off = 0;
                        for (std::size_t i = 0; i < nodes.size(); ++i) {
                          const Index w = widths[i];
                          if (nodes[i]->requires_grad) {
                            auto& gi = grad_of<Scalar>(nodes[i]);
                            for (Index o = 0; o < outer; ++o)
                              gi.segment(o * w, w) += g.segment(o * row + off, w);
                          }
                          off += w;
                        }
                      });
}

template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& a, Index axis, Index start, Index length) {
  const Index ax = normalize_axis(axis, a.rank(), "slice");
  const AxisSplit s = split_at(a.shape(), ax);
  if (start < 0 || length < 0 || start + length > s.n)
    throw ShapeError("slice", "range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                  ") outside axis of size " + std::to_string(s.n) + " in " + shape_str(a.shape()));
  Shape shape = a.shape();
  shape[static_cast<std::size_t>(ax)] = length;
  const Index row = s.n * s.inner;
  const Index w = length * s.inner;
  const Index off = start * s.inner;
  Vec<Scalar> out(s.outer * w);
  for (Index o = 0; o < s.outer; ++o) out.segment(o * w, w) = a.value().segment(o * row + off, w);
  auto an = a.node();
  return emit<Scalar>("slice", std::move(shape), std::move(out), {an},
                      [an, outer = s.outer, row, w, off](const Vec<Scalar>& g) {
                        if (!an->requires_grad) return;
                        auto& ga = grad_of<Scalar>(an);
                        for (Index o = 0; o < outer; ++o) ga.segment(o * row + off, w) += g.segment(o * w, w);
                      });
}

template <typename Scalar>
std::vector<Tensor<Scalar>> split(const Tensor<Scalar>& a, Index axis, const std::vector<Index>& sizes) {
  const Index ax = normalize_axis(axis, a.rank(), "split");
  const Index total = std::accumulate(sizes.begin(), sizes.end(), Index{0});
  if (total != a.dim(ax))
    throw ShapeError("split", "sizes sum to " + std::to_string(total) + " but axis has " +
                                  std::to_string(a.dim(ax)) + " in " + shape_str(a.shape()));
  std::vector<Tensor<Scalar>> out;
  Index start = 0;
  for (Index n : sizes) {
    out.push_back(slice(a, ax, start, n));
    start += n;
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a, Index axis0, Index axis1) {
  const Index rank = a.rank();
  const Index x0 = normalize_axis(axis0, rank, "transpose");
  const Index x1 = normalize_axis(axis1, rank, "transpose");
  Shape shape = a.shape();
  std::swap(shape[static_cast<std::size_t>(x0)], shape[static_cast<std::size_t>(x1)]);
  // in_strides permuted into output order
  std::vector<Index> in_strides(static_cast<std::size_t>(rank));
  Index stride = 1;
  for (Index d = rank - 1; d >= 0; --d) {
    in_strides[static_cast<std::size_t>(d)] = stride;
    stride *= a.shape()[static_cast<std::size_t>(d)];
  }
  std::swap(in_strides[static_cast<std::size_t>(x0)], in_strides[static_cast<std::size_t>(x1)]);
  const Index n = a.numel();
  std::vector<Index> src(static_cast<std::size_t>(n));
  std::vector<Index> counter(static_cast<std::size_t>(rank), 0);
  Index offset = 0;
  for (Index i = 0; i < n; ++i) {
    src[static_cast<std::size_t>(i)] = offset;
    for (Index d = rank - 1; d >= 0; --d) {
      auto du = static_cast<std::size_t>(d);
      ++counter[du];
      offset += in_strides[du];
      if (counter[du] < shape[du]) break;
      offset -= counter[du] * in_strides[du];
      counter[du] = 0;
    }
  }
  Vec<Scalar> out(n);
  for (Index i = 0; i < n; ++i) out[i] = a.value()[src[static_cast<std::size_t>(i)]];
  auto an = a.node();
  return emit<Scalar>("transpose", std::move(shape), std::move(out), {an},
                      [an, src = std::move(src)](const Vec<Scalar>& g) {
                        if (!an->requires_grad) return;
                        auto& ga = grad_of<Scalar>(an);
                        for (std::size_t i = 0; i < src.size(); ++i) ga[src[i]] += g[static_cast<Index>(i)];
                      });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) throw ShapeError("reshape", a.shape(), shape);
  auto an = a.node();
  return emit<Scalar>("reshape", std::move(shape), a.value(), {an}, [an](const Vec<Scalar>& g) {
    if (an->requires_grad) grad_of<Scalar>(an) += g;
  });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a, Index axis) {
  const Index ax = normalize_axis(axis, a.rank(), "sum");
  const AxisSplit s = split_at(a.shape(), ax);
  Shape shape = a.shape();
  shape.erase(shape.begin() + ax);
  Vec<Scalar> out = Vec<Scalar>::Zero(s.outer * s.inner);
  for (Index o = 0; o < s.outer; ++o)
    for (Index j = 0; j < s.n; ++j)
      out.segment(o * s.inner, s.inner) += a.value().segment((o * s.n + j) * s.inner, s.inner);
  auto an = a.node();
  return emit<Scalar>("sum", std::move(shape), std::move(out), {an}, [an, s](const Vec<Scalar>& g) {
    if (!an->requires_grad) return;
    auto& ga = grad_of<Scalar>(an);
    for (Index o = 0; o < s.outer; ++o)
      for (Index j = 0; j < s.n; ++j) ga.segment((o * s.n + j) * s.inner, s.inner) += g.segment(o * s.inner, s.inner);
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a, Index axis) {
  const Index n = a.dim(axis);
  if (n == 0) throw ShapeError("mean", "empty axis in " + shape_str(a.shape()));
  return scale(sum(a, axis), Scalar(1) / static_cast<Scalar>(n));
}

template <typename Scalar>
Tensor<Scalar> max(const Tensor<Scalar>& a, Index axis) {
  const Index ax = normalize_axis(axis, a.rank(), "max");
  const AxisSplit s = split_at(a.shape(), ax);
  if (s.n == 0) throw ShapeError("max", "empty axis in " + shape_str(a.shape()));
  Shape shape = a.shape();
  shape.erase(shape.begin() + ax);
  Vec<Scalar> out(s.outer * s.inner);
  std::vector<Index> arg(static_cast<std::size_t>(s.outer * s.inner));
  for (Index o = 0; o < s.outer; ++o)
    for (Index i = 0; i < s.inner; ++i) {
      Index best = o * s.n * s.inner + i;
      for (Index j = 1; j < s.n; ++j) {
        const Index idx = (o * s.n + j) * s.inner + i;
        if (a.value()[idx] > a.value()[best]) best = idx;
      }
      out[o * s.inner + i] = a.value()[best];
      arg[static_cast<std::size_t>(o * s.inner + i)] = best;
    }
  auto an = a.node();
  return emit<Scalar>("max", std::move(shape), std::move(out), {an},
                      [an, arg = std::move(arg)](const Vec<Scalar>& g) {
                        if (!an->requires_grad) return;
                        auto& ga = grad_of<Scalar>(an);
                        for (std::size_t i = 0; i < arg.size(); ++i) ga[arg[i]] += g[static_cast<Index>(i)];
                      });
}

template <typename Scalar>
Tensor<Scalar> sum_all(const Tensor<Scalar>& a) {
  Vec<Scalar> out(1);
  out[0] = a.value().sum();
  auto an = a.node();
  return emit<Scalar>("sum_all", Shape{}, std::move(out), {an}, [an](const Vec<Scalar>& g) {
    if (an->requires_grad) grad_of<Scalar>(an) += g[0];
  });
}

template <typename Scalar>
Tensor<Scalar> mean_all(const Tensor<Scalar>& a) {
  if (a.numel() == 0) throw ShapeError("mean_all", "empty tensor");
  return scale(sum_all(a), Scalar(1) / static_cast<Scalar>(a.numel()));
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& a) {
  Vec<Scalar> out = a.value().exp();
  auto an = a.node();
  return emit<Scalar>("exp", a.shape(), std::move(out), {an}, [an](const Vec<Scalar>& g) {
    if (an->requires_grad) grad_of<Scalar>(an) += g * an->value.exp();
  });
}

template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& a) {
  return unary<Scalar>(
      "log", a, [](Scalar x) { return std::log(x); }, [](Scalar x) { return Scalar(1) / x; });
}

template <typename Scalar>
Tensor<Scalar> softplus(const Tensor<Scalar>& a) {
  return unary<Scalar>(
      "softplus", a, [](Scalar x) { return x > Scalar(20) ? x : std::log1p(std::exp(x)); },
      [](Scalar x) { return sigmoid_scalar(x); });
}

template <typename Scalar>
Tensor<Scalar> silu(const Tensor<Scalar>& a) {
  return unary<Scalar>(
      "silu", a, [](Scalar x) { return x * sigmoid_scalar(x); },
      [](Scalar x) {
        const Scalar s = sigmoid_scalar(x);
        return s + x * s * (Scalar(1) - s);
      });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  return unary<Scalar>(
      "relu", a, [](Scalar x) { return x > 0 ? x : Scalar(0); }, [](Scalar x) { return x > 0 ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& a) {
  return unary<Scalar>(
      "square", a, [](Scalar x) { return x * x; }, [](Scalar x) { return Scalar(2) * x; });
}

template <typename Scalar>
Tensor<Scalar> smooth_l1(const Tensor<Scalar>& a, Scalar beta) {
  return unary<Scalar>(
      "smooth_l1", a,
      [beta](Scalar x) {
        const Scalar ax = std::abs(x);
        return ax < beta ? Scalar(0.5) * x * x / beta : ax - Scalar(0.5) * beta;
      },
      [beta](Scalar x) {
        if (std::abs(x) < beta) return x / beta;
        return x > 0 ? Scalar(1) : Scalar(-1);
      });
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& a, const Mask* key_mask) {
  const Index n = a.dim(-1);
  if (key_mask && static_cast<Index>(key_mask->size()) != n)
    throw ShapeError("softmax", "mask of length " + std::to_string(key_mask->size()) + " for " + shape_str(a.shape()));
  const Index rows = n == 0 ? 0 : a.numel() / n;
  Vec<Scalar> out = a.value();
  ArrMap<Scalar> m(out.data(), rows, n);
  if (key_mask)
    for (Index j = 0; j < n; ++j)
      if (!(*key_mask)[static_cast<std::size_t>(j)]) m.col(j).setConstant(static_cast<Scalar>(kMaskFill));
  for (Index r = 0; r < rows; ++r) {
    auto row = m.row(r);
    row -= row.maxCoeff();
    row = row.exp();
    row /= row.sum();
  }
  auto an = a.node();
  Tensor<Scalar> result = emit<Scalar>("softmax", a.shape(), std::move(out), {an}, nullptr);
  if (result.requires_grad()) {
    Node<Scalar>* self = result.node().get();
    result.node()->backward = [an, self, rows, n]() {
      ConstArrMap<Scalar> y(self->value.data(), rows, n);
      ConstArrMap<Scalar> g(self->grad.data(), rows, n);
      ArrMap<Scalar> ga(grad_of<Scalar>(an).data(), rows, n);
      Eigen::Array<Scalar, Eigen::Dynamic, 1> dots = (g * y).rowwise().sum();
      ga += y * (g.colwise() - dots);
    };
  }
  return result;
}

template <typename Scalar>
Tensor<Scalar> log_softmax(const Tensor<Scalar>& a) {
  const Index n = a.dim(-1);
  const Index rows = n == 0 ? 0 : a.numel() / n;
  Vec<Scalar> out = a.value();
  ArrMap<Scalar> m(out.data(), rows, n);
  for (Index r = 0; r < rows; ++r) {
    auto row = m.row(r);
    const Scalar mx = row.maxCoeff();
    const Scalar lse = mx + std::log((row - mx).exp().sum());
    row -= lse;
  }
  auto an = a.node();
  Tensor<Scalar> result = emit<Scalar>("log_softmax", a.shape(), std::move(out), {an}, nullptr);
  if (result.requires_grad()) {
    Node<Scalar>* self = result.node().get();
    result.node()->backward = [an, self, rows, n]() {
      ConstArrMap<Scalar> y(self->value.data(), rows, n);
      ConstArrMap<Scalar> g(self->grad.data(), rows, n);
      ArrMap<Scalar> ga(grad_of<Scalar>(an).data(), rows, n);
      Eigen::Array<Scalar, Eigen::Dynamic, 1> gs = g.rowwise().sum();
      ga += g - y.exp().colwise() * gs;
    };
  }
  return result;
}

template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& a, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                          Scalar eps) {
  const Index n = a.dim(-1);
  if (gamma.numel() != n || beta.numel() != n) throw ShapeError("layer_norm", a.shape(), gamma.shape());
  const Index rows = n == 0 ? 0 : a.numel() / n;
  Vec<Scalar> xhat(a.numel());
  Vec<Scalar> rstd(rows);
  ConstArrMap<Scalar> x(a.data(), rows, n);
  ArrMap<Scalar> xh(xhat.data(), rows, n);
  for (Index r = 0; r < rows; ++r) {
    const Scalar mu = x.row(r).mean();
    const Scalar var = (x.row(r) - mu).square().mean();
    rstd[r] = Scalar(1) / std::sqrt(var + eps);
    xh.row(r) = (x.row(r) - mu) * rstd[r];
  }
  Vec<Scalar> out(a.numel());
  ArrMap<Scalar>(out.data(), rows, n) = (xh.rowwise() * gamma.value().transpose()).rowwise() + beta.value().transpose();
  auto an = a.node();
  auto gn = gamma.node();
  auto bnode = beta.node();
  return emit<Scalar>("layer_norm", a.shape(), std::move(out), {an, gn, bnode},
                      [an, gn, bnode, xhat = std::move(xhat), rstd = std::move(rstd), rows, n](const Vec<Scalar>& g) {
                        ConstArrMap<Scalar> gm(g.data(), rows, n);
                        ConstArrMap<Scalar> xh(xhat.data(), rows, n);
                        if (gn->requires_grad) grad_of<Scalar>(gn) += (gm * xh).colwise().sum().transpose();
                        if (bnode->requires_grad) grad_of<Scalar>(bnode) += gm.colwise().sum().transpose();
                        if (an->requires_grad) {
                          ArrMap<Scalar> ga(grad_of<Scalar>(an).data(), rows, n);
                          Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> gx =
                              gm.rowwise() * gn->value.transpose();
                          for (Index r = 0; r < rows; ++r) {
                            const Scalar m1 = gx.row(r).mean();
                            const Scalar m2 = (gx.row(r) * xh.row(r)).mean();
                            ga.row(r) += rstd[r] * (gx.row(r) - m1 - xh.row(r) * m2);
                          }
                        }
                      });
}

template <typename Scalar>
Tensor<Scalar> index_select(const Tensor<Scalar>& a, Index axis, const std::vector<Index>& indices) {
  const Index ax = normalize_axis(axis, a.rank(), "index_select");
  const AxisSplit s = split_at(a.shape(), ax);
  for (Index i : indices)
    if (i < 0 || i >= s.n)
      throw ShapeError("index_select", "index " + std::to_string(i) + " out of range for " + shape_str(a.shape()));
  Shape shape = a.shape();
  const Index k = static_cast<Index>(indices.size());
  shape[static_cast<std::size_t>(ax)] = k;
  Vec<Scalar> out(s.outer * k * s.inner);
  for (Index o = 0; o < s.outer; ++o)
    for (Index j = 0; j < k; ++j)
      out.segment((o * k + j) * s.inner, s.inner) =
          a.value().segment((o * s.n + indices[static_cast<std::size_t>(j)]) * s.inner, s.inner);
  auto an = a.node();
  return emit<Scalar>("index_select", std::move(shape), std::move(out), {an},
                      [an, s, indices, k](const Vec<Scalar>& g) {
                        if (!an->requires_grad) return;
                        auto& ga = grad_of<Scalar>(an);
                        for (Index o = 0; o < s.outer; ++o)
                          for (Index j = 0; j < k; ++j)
                            ga.segment((o * s.n + indices[static_cast<std::size_t>(j)]) * s.inner, s.inner) +=
                                g.segment((o * k + j) * s.inner, s.inner);
                      });
}

template <typename Scalar>
Tensor<Scalar> masked_fill(const Tensor<Scalar>& a, const Mask& mask, Scalar fill) {
  const Index n = a.numel();
  const Index m = static_cast<Index>(mask.size());
  Index group = 0;
  if (m == n) {
    group = 1;
  } else if (a.rank() >= 1 && a.dim(-1) > 0 && m * a.dim(-1) == n) {
    group = a.dim(-1);
  } else {
    throw ShapeError("masked_fill", "mask of length " + std::to_string(m) + " for " + shape_str(a.shape()));
  }
  Vec<Scalar> out = a.value();
  for (Index i = 0; i < n; ++i)
    if (!mask[static_cast<std::size_t>(i / group)]) out[i] = fill;
  auto an = a.node();
  return emit<Scalar>("masked_fill", a.shape(), std::move(out), {an}, [an, mask, group](const Vec<Scalar>& g) {
    if (!an->requires_grad) return;
    auto& ga = grad_of<Scalar>(an);
    for (Index i = 0; i < g.size(); ++i)
      if (mask[static_cast<std::size_t>(i / group)]) ga[i] += g[i];
  });
}

template <typename Scalar>
Tensor<Scalar> linear_recurrence(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape() || a.rank() < 2) throw ShapeError("linear_recurrence", a.shape(), b.shape());
  const Index steps = a.dim(-2);
  const Index width = a.dim(-1);
  const Index outer = steps * width == 0 ? 0 : a.numel() / (steps * width);
  Vec<Scalar> h(a.numel());
  for (Index o = 0; o < outer; ++o) {
    const Index base = o * steps * width;
    h.segment(base, width) = b.value().segment(base, width);
    for (Index t = 1; t < steps; ++t) {
      const Index cur = base + t * width;
      h.segment(cur, width) =
          a.value().segment(cur, width) * h.segment(cur - width, width) + b.value().segment(cur, width);
    }
  }
  auto an = a.node();
  auto bnode = b.node();
  Tensor<Scalar> result = emit<Scalar>("linear_recurrence", a.shape(), std::move(h), {an, bnode}, nullptr);
  if (result.requires_grad()) {
    Node<Scalar>* self = result.node().get();
    result.node()->backward = [an, bnode, self, outer, steps, width]() {
      const Vec<Scalar>& g = self->grad;
      const Vec<Scalar>& hv = self->value;
      Vec<Scalar> carry(width);
      for (Index o = 0; o < outer; ++o) {
        const Index base = o * steps * width;
        carry.setZero();
        for (Index t = steps - 1; t >= 0; --t) {
          const Index cur = base + t * width;
          Vec<Scalar> gh = g.segment(cur, width) + carry;
          if (bnode->requires_grad) grad_of<Scalar>(bnode).segment(cur, width) += gh;
          if (an->requires_grad && t > 0) grad_of<Scalar>(an).segment(cur, width) += gh * hv.segment(cur - width, width);
          carry = gh * an->value.segment(cur, width);
        }
      }
    };
  }
  return result;
}

#define HAMF_INSTANTIATE_OPS(S)                                                                      \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                        \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                        \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                        \
  template Tensor<S> scale(const Tensor<S>&, S);                                                     \
  template Tensor<S> add_scalar(const Tensor<S>&, S);                                                \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                                     \
  template Tensor<S> bmm(const Tensor<S>&, const Tensor<S>&, bool);                                  \
  template Tensor<S> concat(std::span<const Tensor<S>>, Index);                                      \
  template Tensor<S> slice(const Tensor<S>&, Index, Index, Index);                                   \
  template std::vector<Tensor<S>> split(const Tensor<S>&, Index, const std::vector<Index>&);         \
  template Tensor<S> transpose(const Tensor<S>&, Index, Index);                                      \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                               \
  template Tensor<S> sum(const Tensor<S>&, Index);                                                   \
  template Tensor<S> mean(const Tensor<S>&, Index);                                                  \
  template Tensor<S> max(const Tensor<S>&, Index);                                                   \
  template Tensor<S> sum_all(const Tensor<S>&);                                                      \
  template Tensor<S> mean_all(const Tensor<S>&);                                                     \
  template Tensor<S> exp(const Tensor<S>&);                                                          \
  template Tensor<S> log(const Tensor<S>&);                                                          \
  template Tensor<S> softplus(const Tensor<S>&);                                                     \
  template Tensor<S> silu(const Tensor<S>&);                                                         \
  template Tensor<S> relu(const Tensor<S>&);                                                         \
  template Tensor<S> square(const Tensor<S>&);                                                       \
  template Tensor<S> smooth_l1(const Tensor<S>&, S);                                                 \
  template Tensor<S> softmax(const Tensor<S>&, const Mask*);                                         \
  template Tensor<S> log_softmax(const Tensor<S>&);                                                  \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, S);            \
  template Tensor<S> index_select(const Tensor<S>&, Index, const std::vector<Index>&);               \
  template Tensor<S> masked_fill(const Tensor<S>&, const Mask&, S);                                  \
  template Tensor<S> linear_recurrence(const Tensor<S>&, const Tensor<S>&);

HAMF_INSTANTIATE_OPS(float)
HAMF_INSTANTIATE_OPS(double)

}  // namespace hamf
