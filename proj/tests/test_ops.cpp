#include "test_util.hpp"

#include <functional>
#include <numeric>

using namespace hamf;
using namespace hamf::testing;

namespace {

using Fn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct Case {
  const char* name;
  std::vector<Tensor<double>> inputs;
  Fn f;
};

Shape suffix(const Shape& s, Index keep) { return Shape(s.end() - keep, s.end()); }

Index axis_of(Rng& rng, const Shape& s) { return static_cast<Index>(rng.below(s.size())); }

// One case per op, built around a random shape.
std::vector<Case> cases_for(Rng& rng, const Shape& s) {
  std::vector<Case> out;
  const Index keep = 1 + static_cast<Index>(rng.below(s.size()));
  out.push_back({"add", {random_param(rng, s), random_param(rng, suffix(s, keep))},
                 [](auto& in) { return probe(add(in[0], in[1])); }});
  out.push_back({"sub", {random_param(rng, s), random_param(rng, suffix(s, keep))},
                 [](auto& in) { return probe(sub(in[0], in[1])); }});
  out.push_back({"mul", {random_param(rng, s), random_param(rng, suffix(s, keep))},
                 [](auto& in) { return probe(mul(in[0], in[1])); }});
  out.push_back({"scale", {random_param(rng, s)}, [](auto& in) { return probe(scale(in[0], -1.7)); }});
  out.push_back({"add_scalar", {random_param(rng, s)}, [](auto& in) { return probe(add_scalar(in[0], 0.3)); }});
  out.push_back({"exp", {random_param(rng, s)}, [](auto& in) { return probe(exp(in[0])); }});
  out.push_back({"log", {random_param(rng, s, 0.5, 2.0)}, [](auto& in) { return probe(log(in[0])); }});
  out.push_back({"softplus", {random_param(rng, s, -3, 3)}, [](auto& in) { return probe(softplus(in[0])); }});
  out.push_back({"silu", {random_param(rng, s, -3, 3)}, [](auto& in) { return probe(silu(in[0])); }});
  out.push_back({"relu", {random_param(rng, s)}, [](auto& in) { return probe(relu(in[0])); }});
  out.push_back({"square", {random_param(rng, s)}, [](auto& in) { return probe(square(in[0])); }});
  out.push_back({"smooth_l1", {random_param(rng, s, -3, 3)}, [](auto& in) { return probe(smooth_l1(in[0], 1.0)); }});
  out.push_back({"softmax", {random_param(rng, s, -2, 2)}, [](auto& in) { return probe(softmax(in[0])); }});
  out.push_back({"log_softmax", {random_param(rng, s, -2, 2)}, [](auto& in) { return probe(log_softmax(in[0])); }});
  {
    Mask m(static_cast<std::size_t>(s.back()), 1);
    for (auto& v : m) v = rng.below(3) != 0;
    m[0] = 1;
    out.push_back({"masked softmax", {random_param(rng, s, -2, 2)},
                   [m](auto& in) { return probe(softmax(in[0], &m)); }});
  }
  out.push_back({"layer_norm",
                 {random_param(rng, s, -2, 2), random_param(rng, {s.back()}), random_param(rng, {s.back()})},
                 [](auto& in) { return probe(layer_norm(in[0], in[1], in[2])); }});
  const Index ax = axis_of(rng, s);
  out.push_back({"sum", {random_param(rng, s)}, [ax](auto& in) { return probe(sum(in[0], ax)); }});
  out.push_back({"mean", {random_param(rng, s)}, [ax](auto& in) { return probe(mean(in[0], ax)); }});
  out.push_back({"max", {random_param(rng, s)}, [ax](auto& in) { return probe(max(in[0], ax)); }});
  out.push_back({"sum_all", {random_param(rng, s)}, [](auto& in) { return scale(sum_all(in[0]), 1.3); }});
  out.push_back({"mean_all", {random_param(rng, s)}, [](auto& in) { return mean_all(square(in[0])); }});
  const Index ax2 = axis_of(rng, s);
  out.push_back({"transpose", {random_param(rng, s)}, [ax, ax2](auto& in) { return probe(transpose(in[0], ax, ax2)); }});
  out.push_back({"reshape", {random_param(rng, s)},
                 [](auto& in) { return probe(reshape(in[0], Shape{in[0].numel()})); }});
  {
    const Index n = s[static_cast<std::size_t>(ax)];
    const Index start = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    const Index len = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - start)));
    out.push_back({"slice", {random_param(rng, s)},
                   [ax, start, len](auto& in) { return probe(slice(in[0], ax, start, len)); }});
    std::vector<Index> sizes = {start, n - start};
    out.push_back({"split", {random_param(rng, s)}, [ax, sizes](auto& in) {
                     auto parts = split(in[0], ax, sizes);
                     return add(probe(parts[0], 1), probe(parts[1], 2));
                   }});
    std::vector<Index> idx;
    for (Index i = 0; i < n + 2; ++i) idx.push_back(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
    out.push_back({"index_select", {random_param(rng, s)},
                   [ax, idx](auto& in) { return probe(index_select(in[0], ax, idx)); }});
    Shape other = s;
    other[static_cast<std::size_t>(ax)] = 1 + static_cast<Index>(rng.below(3));
    out.push_back({"concat", {random_param(rng, s), random_param(rng, other)},
                   [ax](auto& in) { return probe(concat({in[0], in[1]}, ax)); }});
  }
  {
    Mask m(static_cast<std::size_t>(shape_numel(s)));
    for (auto& v : m) v = rng.below(2);
    out.push_back({"masked_fill", {random_param(rng, s)}, [m](auto& in) { return probe(masked_fill(in[0], m, -4.0)); }});
  }
  {
    const Index m = 1 + static_cast<Index>(rng.below(4));
    out.push_back({"matmul", {random_param(rng, s), random_param(rng, {s.back(), m})},
                   [](auto& in) { return probe(matmul(in[0], in[1])); }});
  }
  if (s.size() >= 2)
    out.push_back({"linear_recurrence", {random_param(rng, s, -0.9, 0.9), random_param(rng, s)},
                   [](auto& in) { return probe(linear_recurrence(in[0], in[1])); }});
  if (s.size() == 3) {
    const Index m = 1 + static_cast<Index>(rng.below(4));
    out.push_back({"bmm", {random_param(rng, s), random_param(rng, {s[0], s[2], m})},
                   [](auto& in) { return probe(bmm(in[0], in[1])); }});
    out.push_back({"bmm transposed", {random_param(rng, s), random_param(rng, {s[0], m, s[2]})},
                   [](auto& in) { return probe(bmm(in[0], in[1], true)); }});
  }
  return out;
}

}  // namespace

TEST_CASE("every op's gradient matches central differences over random shapes") {
  Rng rng(2024);
  int shapes = 0;
  for (; shapes < 120; ++shapes) {
    const Shape s = random_shape(rng, 1, 4);
    for (auto& c : cases_for(rng, s)) {
      const double err = gradient_error(c.inputs, c.f);
      INFO(std::string(c.name) << " on " << shape_str(s));
      CHECK(err < 1e-6);
    }
  }
  CHECK(shapes >= 100);
}

TEST_CASE("matmul and bmm agree with explicit loops") {
  Rng rng(5);
  const auto a = random_param(rng, {2, 3, 4});
  const auto w = random_param(rng, {4, 5});
  const auto b = random_param(rng, {2, 4, 5});
  const auto mw = matmul(a, w);
  const auto bm = bmm(a, b);
  const auto bt = bmm(a, transpose(b, 1, 2), true);
  for (Index n = 0; n < 2; ++n)
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 5; ++j) {
        double s1 = 0, s2 = 0;
        for (Index k = 0; k < 4; ++k) {
          s1 += a.value()[(n * 3 + i) * 4 + k] * w.value()[k * 5 + j];
          s2 += a.value()[(n * 3 + i) * 4 + k] * b.value()[(n * 4 + k) * 5 + j];
        }
        CHECK(mw.value()[(n * 3 + i) * 5 + j] == doctest::Approx(s1).epsilon(1e-12));
        CHECK(bm.value()[(n * 3 + i) * 5 + j] == doctest::Approx(s2).epsilon(1e-12));
        CHECK(bt.value()[(n * 3 + i) * 5 + j] == doctest::Approx(s2).epsilon(1e-12));
      }
}

TEST_CASE("softmax rows are distributions and masked keys get zero weight") {
  Rng rng(8);
  const auto x = random_param(rng, {3, 4, 6}, -5, 5);
  Mask m = {1, 0, 1, 1, 0, 1};
  const auto p = softmax(x, &m);
  for (Index r = 0; r < 12; ++r) {
    double total = 0;
    for (Index k = 0; k < 6; ++k) {
      total += p.value()[r * 6 + k];
      if (!m[static_cast<std::size_t>(k)]) CHECK(p.value()[r * 6 + k] == 0.0);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto big = Tensor<double>::constant({1, 2}, {1000.0, 999.0});
  const auto q = softmax(big);
  CHECK(q.value()[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  CHECK(log_softmax(big).value()[1] == doctest::Approx(-std::log1p(std::exp(1.0))));
}

TEST_CASE("layer_norm output has zero mean and unit variance per row") {
  Rng rng(9);
  const auto x = random_param(rng, {5, 7}, -3, 3);
  const auto y = layer_norm(x, Tensor<double>::full({7}, 1.0), Tensor<double>::zeros({7}), 0.0);
  for (Index r = 0; r < 5; ++r) {
    const Vec<double> row = y.value().segment(r * 7, 7);
    CHECK(row.mean() == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
    CHECK((row * row).mean() == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("concat inverts split and slice picks the same elements") {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const Shape s = random_shape(rng, 1, 4, 6);
    const auto x = random_param(rng, s);
    const Index ax = static_cast<Index>(rng.below(s.size()));
    const Index n = s[static_cast<std::size_t>(ax)];
    const Index cut = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n + 1)));
    const auto parts = split(x, ax, {cut, n - cut});
    const auto back = concat({parts[0], parts[1]}, ax);
    CHECK(back.shape() == s);
    CHECK((back.value() == x.value()).all());
    if (cut > 0) CHECK((slice(x, ax, 0, cut).value() == parts[0].value()).all());
  }
}

TEST_CASE("linear_recurrence matches the explicit recurrence") {
  Rng rng(11);
  const auto a = random_param(rng, {2, 6, 3}, -1, 1);
  const auto b = random_param(rng, {2, 6, 3});
  const auto h = linear_recurrence(a, b);
  for (Index o = 0; o < 2; ++o)
    for (Index c = 0; c < 3; ++c) {
      double state = 0;
      for (Index t = 0; t < 6; ++t) {
        const Index i = (o * 6 + t) * 3 + c;
        state = (t == 0 ? 0.0 : a.value()[i] * state) + b.value()[i];
        CHECK(h.value()[i] == doctest::Approx(state).epsilon(1e-12));
      }
    }
}

TEST_CASE("max routes its gradient to the first maximum") {
  const auto x = Tensor<double>::parameter({1, 4}, (Vec<double>(4) << 1.0, 3.0, 3.0, 2.0).finished());
  Tape<double> tape;
  TapeScope<double> scope(tape);
  tape.backward(sum_all(max(x, 1)));
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("shape errors and tape misuse are reported") {
  const auto a = Tensor<double>::zeros({2, 3});
  CHECK_THROWS_AS(add(a, Tensor<double>::zeros({2})), ShapeError);
  CHECK_THROWS_AS(matmul(a, Tensor<double>::zeros({2, 2})), ShapeError);
  CHECK_THROWS_AS(reshape(a, {4}), ShapeError);
  CHECK_THROWS_AS(slice(a, 1, 2, 2), ShapeError);
  CHECK_THROWS_AS(split(a, 1, {1, 1}), ShapeError);
  CHECK_THROWS_AS(sum(a, 2), ShapeError);
  CHECK_THROWS_AS(index_select(a, 0, {2}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>::constant({2}, {1.0}), ShapeError);

  const auto p = Tensor<double>::parameter({2}, Vec<double>::Ones(2));
  Tape<double> tape;
  TapeScope<double> scope(tape);
  CHECK_THROWS_AS(tape.backward(p), std::logic_error);
  const auto y = square(p);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
  const auto loss = sum_all(y);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
  CHECK_THROWS_AS(square(p), std::logic_error);
  tape.reset();
  CHECK_NOTHROW(square(p));
}

TEST_CASE("gradients accumulate across tapes until cleared") {
  const auto p = Tensor<double>::parameter({1}, Vec<double>::Constant(1, 2.0));
  for (int i = 0; i < 2; ++i) {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(sum_all(square(p)));
  }
  CHECK(p.grad()[0] == doctest::Approx(8.0));
  auto q = p;
  q.zero_grad();
  CHECK_FALSE(p.has_grad());
}
