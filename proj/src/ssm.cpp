#include "hamf/ssm.hpp"

#include <cmath>

namespace hamf {

namespace {

template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ConstGridMap = Eigen::Map<const Grid<Scalar>>;
template <typename Scalar>
using GridMap = Eigen::Map<Grid<Scalar>>;
template <typename Scalar>
using ConstColMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
template <typename Scalar>
using ConstRowMap = Eigen::Map<const Eigen::Array<Scalar, 1, Eigen::Dynamic>>;

void check_scan_sizes(const ScanDims& d, std::size_t u, std::size_t delta, std::size_t b, std::size_t c,
                      std::size_t a, std::size_t y) {
  const auto btd = static_cast<std::size_t>(d.batch * d.steps * d.channels);
  const auto btn = static_cast<std::size_t>(d.batch * d.steps * d.state);
  const auto dn = static_cast<std::size_t>(d.channels * d.state);
  if (u != btd || delta != btd || y != btd || b != btn || c != btn || a != dn)
    throw ShapeError("selective_scan", "buffer sizes do not match dimensions");
  if (d.steps < 1) throw ShapeError("selective_scan", "needs at least one step");
}

}  // namespace

template <typename Scalar>
void selective_scan_sequential(const ScanDims& dims, std::span<const Scalar> u, std::span<const Scalar> delta,
                               std::span<const Scalar> b, std::span<const Scalar> c, std::span<const Scalar> a,
                               std::span<Scalar> y, std::span<Scalar> states) {
  check_scan_sizes(dims, u.size(), delta.size(), b.size(), c.size(), a.size(), y.size());
  const Index T = dims.steps, D = dims.channels, N = dims.state;
  ConstGridMap<Scalar> A(a.data(), D, N);
  Grid<Scalar> h(D, N);
  for (Index bi = 0; bi < dims.batch; ++bi) {
    h.setZero();
    for (Index t = 0; t < T; ++t) {
      const Index row = bi * T + t;
      ConstColMap<Scalar> dt(delta.data() + row * D, D);
      ConstColMap<Scalar> ut(u.data() + row * D, D);
      ConstRowMap<Scalar> bt(b.data() + row * N, N);
      ConstRowMap<Scalar> ct(c.data() + row * N, N);
      h = (A.colwise() * dt).exp() * h + (bt.replicate(D, 1).colwise() * (dt * ut));
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(y.data() + row * D, D) = (h.rowwise() * ct).rowwise().sum();
      if (!states.empty()) GridMap<Scalar>(states.data() + row * D * N, D, N) = h;
    }
    if (!h.allFinite()) throw NumericError("selective_scan: non-finite state");
  }
}

template <typename Scalar>
void selective_scan_chunked(const ScanDims& dims, std::span<const Scalar> u, std::span<const Scalar> delta,
                            std::span<const Scalar> b, std::span<const Scalar> c, std::span<const Scalar> a,
                            std::span<Scalar> y, Index chunk, std::span<Scalar> states) {
  check_scan_sizes(dims, u.size(), delta.size(), b.size(), c.size(), a.size(), y.size());
  if (chunk < 1) throw std::invalid_argument("selective_scan_chunked: chunk must be positive");
  const Index T = dims.steps, D = dims.channels, N = dims.state;
  ConstGridMap<Scalar> A(a.data(), D, N);
  Grid<Scalar> carry(D, N), local(D, N), decay(D, N), step_decay(D, N), full(D, N);
  for (Index bi = 0; bi < dims.batch; ++bi) {
    carry.setZero();
    for (Index start = 0; start < T; start += chunk) {
      const Index stop = std::min(T, start + chunk);
      local.setZero();
      decay.setOnes();
      for (Index t = start; t < stop; ++t) {
        const Index row = bi * T + t;
        ConstColMap<Scalar> dt(delta.data() + row * D, D);
        ConstColMap<Scalar> ut(u.data() + row * D, D);
        ConstRowMap<Scalar> bt(b.data() + row * N, N);
        ConstRowMap<Scalar> ct(c.data() + row * N, N);
        step_decay = (A.colwise() * dt).exp();
        local = step_decay * local + (bt.replicate(D, 1).colwise() * (dt * ut));
        decay *= step_decay;
        full = local + decay * carry;
        Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(y.data() + row * D, D) =
            (full.rowwise() * ct).rowwise().sum();
        if (!states.empty()) GridMap<Scalar>(states.data() + row * D * N, D, N) = full;
      }
      carry = local + decay * carry;
    }
    if (!carry.allFinite()) throw NumericError("selective_scan: non-finite state");
  }
}

template <typename Scalar>
Tensor<Scalar> selective_scan(const Tensor<Scalar>& u, const Tensor<Scalar>& delta, const Tensor<Scalar>& b,
                              const Tensor<Scalar>& c, const Tensor<Scalar>& a, ScanAlgorithm algorithm) {
  if (u.rank() != 3 || delta.shape() != u.shape()) throw ShapeError("selective_scan", u.shape(), delta.shape());
  if (b.rank() != 3 || c.shape() != b.shape() || b.dim(0) != u.dim(0) || b.dim(1) != u.dim(1))
    throw ShapeError("selective_scan", u.shape(), b.shape());
  if (a.rank() != 2 || a.dim(0) != u.dim(2) || a.dim(1) != b.dim(2))
    throw ShapeError("selective_scan", u.shape(), a.shape());
  const ScanDims dims{u.dim(0), u.dim(1), u.dim(2), b.dim(2)};
  const Index D = dims.channels, N = dims.state, T = dims.steps;
  Vec<Scalar> y(u.numel());
  auto states = std::make_shared<Vec<Scalar>>(dims.batch * T * D * N);
  auto sp = [](const Tensor<Scalar>& t) { return std::span<const Scalar>(t.data(), static_cast<std::size_t>(t.numel())); };
  std::span<Scalar> ys(y.data(), static_cast<std::size_t>(y.size()));
  std::span<Scalar> hs(states->data(), static_cast<std::size_t>(states->size()));
  if (algorithm == ScanAlgorithm::sequential)
    selective_scan_sequential<Scalar>(dims, sp(u), sp(delta), sp(b), sp(c), sp(a), ys, hs);
  else
    selective_scan_chunked<Scalar>(dims, sp(u), sp(delta), sp(b), sp(c), sp(a), ys, 16, hs);

  auto un = u.node(), dn = delta.node(), bn = b.node(), cn = c.node(), an = a.node();
  return detail::emit<Scalar>(
      "selective_scan", u.shape(), std::move(y), {un, dn, bn, cn, an},
      [un, dn, bn, cn, an, states, dims](const Vec<Scalar>& g) {
        const Index T = dims.steps, D = dims.channels, N = dims.state;
        Vec<Scalar> gu = Vec<Scalar>::Zero(un->value.size());
        Vec<Scalar> gdelta = Vec<Scalar>::Zero(dn->value.size());
        Vec<Scalar> gb = Vec<Scalar>::Zero(bn->value.size());
        Vec<Scalar> gc = Vec<Scalar>::Zero(cn->value.size());
        Grid<Scalar> ga = Grid<Scalar>::Zero(D, N);
        ConstGridMap<Scalar> A(an->value.data(), D, N);
        using RowVecM = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
        using ColVecM = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
        Grid<Scalar> carry(D, N), gh(D, N), step_decay(D, N), term(D, N);
        ColVecM ghb(D);
        for (Index bi = 0; bi < dims.batch; ++bi) {
          carry.setZero();
          for (Index t = T - 1; t >= 0; --t) {
            const Index row = bi * T + t;
            ConstColMap<Scalar> dt(dn->value.data() + row * D, D);
            ConstColMap<Scalar> ut(un->value.data() + row * D, D);
            Eigen::Map<const RowVecM> bt(bn->value.data() + row * N, N);
            Eigen::Map<const RowVecM> ct(cn->value.data() + row * N, N);
            Eigen::Map<const ColVecM> gy(g.data() + row * D, D);
            ConstGridMap<Scalar> h(states->data() + row * D * N, D, N);
            step_decay = (A.colwise() * dt).exp();
            gh = carry;
            gh.matrix().noalias() += gy * ct;
            gc.segment(row * N, N).matrix().noalias() += (gy.transpose() * h.matrix()).transpose();
            ghb.noalias() = gh.matrix() * bt.transpose();
            const ColVecM dtu = (dt * ut).matrix();
            gb.segment(row * N, N).matrix().noalias() += (dtu.transpose() * gh.matrix()).transpose();
            if (t > 0) {
              ConstGridMap<Scalar> hprev(states->data() + (row - 1) * D * N, D, N);
              term = gh * hprev * step_decay;
              gdelta.segment(row * D, D) += (term * A).rowwise().sum();
              ga += term.colwise() * dt;
            }
            gdelta.segment(row * D, D) += ghb.array() * ut;
            gu.segment(row * D, D) += dt * ghb.array();
            carry = gh * step_decay;
          }
        }
        if (un->requires_grad) detail::grad_of<Scalar>(un) += gu;
        if (dn->requires_grad) detail::grad_of<Scalar>(dn) += gdelta;
        if (bn->requires_grad) detail::grad_of<Scalar>(bn) += gb;
        if (cn->requires_grad) detail::grad_of<Scalar>(cn) += gc;
        if (an->requires_grad)
          detail::grad_of<Scalar>(an) += Eigen::Map<const Vec<Scalar>>(ga.data(), D * N);
      });
}

template <typename Scalar>
Tensor<Scalar> causal_conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  if (x.rank() != 3 || weight.rank() != 2 || weight.dim(0) != x.dim(2) || bias.numel() != x.dim(2))
    throw ShapeError("causal_conv1d", x.shape(), weight.shape());
  const Index B = x.dim(0), T = x.dim(1), D = x.dim(2), W = weight.dim(1);
  const Grid<Scalar> taps = ConstGridMap<Scalar>(weight.data(), D, W).transpose();  // [W, D]
  Vec<Scalar> out(x.numel());
  GridMap<Scalar> om(out.data(), B * T, D);
  ConstGridMap<Scalar> xm(x.data(), B * T, D);
  om.rowwise() = bias.value().transpose();
  for (Index b = 0; b < B; ++b)
    for (Index t = 0; t < T; ++t)
      for (Index k = 0; k < W; ++k) {
        const Index src = t - (W - 1) + k;
        if (src < 0) continue;
        om.row(b * T + t) += taps.row(k) * xm.row(b * T + src);
      }
  auto xn = x.node(), wn = weight.node(), bn = bias.node();
  return detail::emit<Scalar>(
      "causal_conv1d", x.shape(), std::move(out), {xn, wn, bn}, [xn, wn, bn, B, T, D, W](const Vec<Scalar>& g) {
        ConstGridMap<Scalar> gm(g.data(), B * T, D);
        ConstGridMap<Scalar> xm(xn->value.data(), B * T, D);
        const Grid<Scalar> taps = ConstGridMap<Scalar>(wn->value.data(), D, W).transpose();
        Grid<Scalar> gtaps = Grid<Scalar>::Zero(W, D);
        Grid<Scalar> gx = Grid<Scalar>::Zero(B * T, D);
        for (Index b = 0; b < B; ++b)
          for (Index t = 0; t < T; ++t)
            for (Index k = 0; k < W; ++k) {
              const Index src = t - (W - 1) + k;
              if (src < 0) continue;
              gx.row(b * T + src) += taps.row(k) * gm.row(b * T + t);
              gtaps.row(k) += gm.row(b * T + t) * xm.row(b * T + src);
            }
        if (xn->requires_grad) detail::grad_of<Scalar>(xn) += Eigen::Map<const Vec<Scalar>>(gx.data(), B * T * D);
        if (wn->requires_grad) {
          const Grid<Scalar> gw = gtaps.transpose();
          detail::grad_of<Scalar>(wn) += Eigen::Map<const Vec<Scalar>>(gw.data(), D * W);
        }
        if (bn->requires_grad) detail::grad_of<Scalar>(bn) += gm.colwise().sum().transpose();
      });
}

template <typename Scalar>
ScanBranch<Scalar>::ScanBranch(ParameterSet<Scalar>& params, const std::string& name, const SsmConfig& config,
                               Rng& rng)
    : d_state(config.d_state), dt_rank(config.resolved_dt_rank()) {
  const Index D = config.d_inner();
  const Index N = config.d_state;
  const Index W = config.conv_width;
  const Index R = dt_rank;
  {
    Vec<Scalar> w(D * W);
    const double bound = 1.0 / std::sqrt(static_cast<double>(W));
    for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    conv_weight = params.add(name + ".conv.weight", {D, W}, std::move(w));
    conv_bias = params.add_constant(name + ".conv.bias", {D}, Scalar(0));
  }
  x_proj = Linear<Scalar>(params, name + ".x_proj", D, R + 2 * N, rng, false);
  {
    Vec<Scalar> w(R * D);
    const double bound = 1.0 / std::sqrt(static_cast<double>(R));
    for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    Vec<Scalar> bias(D);
    for (Index i = 0; i < D; ++i) {
      // inverse softplus of a log-uniform step in [1e-3, 1e-1]
      const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
      bias[i] = static_cast<Scalar>(dt + std::log(-std::expm1(-dt)));
    }
    dt_proj = Linear<Scalar>(params.add(name + ".dt_proj.weight", {R, D}, std::move(w)),
                             params.add(name + ".dt_proj.bias", {D}, std::move(bias)));
  }
  {
    Vec<Scalar> alog(D * N);
    for (Index d = 0; d < D; ++d)
      for (Index n = 0; n < N; ++n) alog[d * N + n] = static_cast<Scalar>(std::log(static_cast<double>(n + 1)));
    a_log = params.add(name + ".a_log", {D, N}, std::move(alog));
  }
  d_skip = params.add_constant(name + ".d_skip", {D}, Scalar(1));
  out_proj = Linear<Scalar>(params, name + ".out_proj", D, config.d_model, rng, false);
}

template <typename Scalar>
Tensor<Scalar> ScanBranch<Scalar>::scan(const Tensor<Scalar>& stream, const Mask* step_valid,
                                        ScanAlgorithm algorithm) const {
  Tensor<Scalar> x = step_valid ? masked_fill(stream, *step_valid, Scalar(0)) : stream;
  x = silu(causal_conv1d(x, conv_weight, conv_bias));
  auto parts = split(x_proj(x), -1, {dt_rank, d_state, d_state});
  Tensor<Scalar> delta = softplus(dt_proj(parts[0]));
  if (step_valid) delta = masked_fill(delta, *step_valid, Scalar(0));
  const Tensor<Scalar> a = scale(exp(a_log), Scalar(-1));
  return add(selective_scan(x, delta, parts[1], parts[2], a, algorithm), mul(x, d_skip));
}

template <typename Scalar>
MambaBlock<Scalar>::MambaBlock(ParameterSet<Scalar>& params, const std::string& name, const SsmConfig& config,
                               Rng& rng)
    : config_(config),
      norm_(params, name + ".norm", config.d_model),
      in_proj_(params, name + ".in_proj", config.d_model, 2 * config.d_inner(), rng, false),
      branch_(params, name, config, rng) {}

template <typename Scalar>
Tensor<Scalar> MambaBlock<Scalar>::operator()(const Tensor<Scalar>& x, const Mask* step_valid,
                                              ScanAlgorithm algorithm) const {
  const Index D = config_.d_inner();
  auto streams = split(in_proj_(norm_(x)), -1, {D, D});
  Tensor<Scalar> y = branch_.scan(streams[0], step_valid, algorithm);
  Tensor<Scalar> out = add(x, branch_.out_proj(mul(y, silu(streams[1]))));
  return step_valid ? masked_fill(out, *step_valid, Scalar(0)) : out;
}

template <typename Scalar>
BiMambaBlock<Scalar>::BiMambaBlock(ParameterSet<Scalar>& params, const std::string& name, const SsmConfig& config,
                                   Rng& rng)
    : config_(config),
      norm_(params, name + ".norm", config.d_model),
      in_proj_(params, name + ".in_proj", config.d_model, 2 * config.d_inner(), rng, false),
      forward_(params, name + ".fwd", config, rng),
      backward_(params, name + ".bwd", config, rng) {}

template <typename Scalar>
Tensor<Scalar> BiMambaBlock<Scalar>::operator()(const Tensor<Scalar>& x, ScanAlgorithm algorithm) const {
  const Index D = config_.d_inner();
  auto streams = split(in_proj_(norm_(x)), -1, {D, D});
  const Tensor<Scalar> gate = silu(streams[1]);
  Tensor<Scalar> yf = forward_.scan(streams[0], nullptr, algorithm);
  Tensor<Scalar> yb = reverse(backward_.scan(reverse(streams[0], 1), nullptr, algorithm), 1);
  return add(x, add(forward_.out_proj(mul(yf, gate)), backward_.out_proj(mul(yb, gate))));
}

#define HAMF_INSTANTIATE_SSM(S)                                                                                   \
  template void selective_scan_sequential<S>(const ScanDims&, std::span<const S>, std::span<const S>,            \
                                             std::span<const S>, std::span<const S>, std::span<const S>,         \
                                             std::span<S>, std::span<S>);                                        \
  template void selective_scan_chunked<S>(const ScanDims&, std::span<const S>, std::span<const S>,               \
                                          std::span<const S>, std::span<const S>, std::span<const S>,            \
                                          std::span<S>, Index, std::span<S>);                                    \
  template Tensor<S> selective_scan(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,      \
                                    const Tensor<S>&, ScanAlgorithm);                                            \
  template Tensor<S> causal_conv1d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);                        \
  template struct ScanBranch<S>;                                                                                 \
  template class MambaBlock<S>;                                                                                  \
  template class BiMambaBlock<S>;

HAMF_INSTANTIATE_SSM(float)
HAMF_INSTANTIATE_SSM(double)

}  // namespace hamf
