#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sep/numcore/grad_check.hpp"
#include "sep/numcore/ops.hpp"
#include "sep/numcore/rng.hpp"
#include "sep/numcore/tensor.hpp"

namespace {

template <typename S>
sep::Tensor<S> rand_t(sep::Rng& rng, sep::Shape shape, double lo = -1.0,
                      double hi = 1.0) {
  std::vector<S> v(static_cast<std::size_t>(sep::shape_size(shape)));
  for (auto& x : v) x = static_cast<S>(rng.uniform(lo, hi));
  return sep::Tensor<S>::from_data(std::move(shape), std::move(v));
}

using T = sep::Tensor<double>;

}  // namespace

TEST_CASE("tensor construction and shape errors") {
  auto t = T::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rank() == 2);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(1) == 3);
  CHECK(t(1, 2) == 6.0);
  CHECK_THROWS_AS(T::from_data({2, 2}, {1, 2, 3}), sep::ShapeError);
  CHECK_THROWS_AS(t.item(), sep::ShapeError);
  CHECK_THROWS_AS(sep::add(t, T::zeros({3, 2})), sep::ShapeError);
  CHECK_THROWS_AS(sep::matmul(t, t), sep::ShapeError);
}

TEST_CASE("relu on [-1, 0, 2]") {
  auto y = sep::relu(T::from_data({3}, {-1, 0, 2}));
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == 0.0);
  CHECK(y.values()[2] == 2.0);
}

TEST_CASE("reverse_time flips the frame axis only") {
  auto x = T::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  auto y = sep::reverse_time(x);
  CHECK(y(0, 0) == 5.0);
  CHECK(y(0, 1) == 6.0);
  CHECK(y(2, 0) == 1.0);
  auto rt = sep::reverse_time(y);
  for (sep::Index i = 0; i < x.size(); ++i)
    CHECK(rt.values()[static_cast<std::size_t>(i)] ==
          x.values()[static_cast<std::size_t>(i)]);
}

TEST_CASE("matmul matches scalar triple-loop oracle") {
  sep::Rng rng(7);
  auto a = rand_t<double>(rng, {2, 3});
  auto b = rand_t<double>(rng, {3, 2});
  auto c = sep::matmul(a, b);
  for (sep::Index i = 0; i < 2; ++i)
    for (sep::Index j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (sep::Index k = 0; k < 3; ++k) acc += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("backward of sum gives ones") {
  auto x = T::from_data({3}, {5, -2, 7});
  x.set_requires_grad(true);
  sep::sum(x).backward();
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("backward of sum(x*x) gives 2x and accumulates on repeat") {
  auto x = T::from_data({2}, {1, 2});
  x.set_requires_grad(true);
  auto y = sep::sum(sep::mul(x, x));
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(8.0));
  x.zero_grad();
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward on non-scalar throws") {
  auto x = T::from_data({2}, {1, 2});
  x.set_requires_grad(true);
  auto y = sep::mul(x, x);
  CHECK_THROWS_AS(y.backward(), sep::ShapeError);
}

TEST_CASE("NoGradGuard suppresses tape recording") {
  auto x = T::from_data({2}, {1, 2});
  x.set_requires_grad(true);
  sep::NoGradGuard guard;
  auto y = sep::sum(sep::mul(x, x));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("slice then concat of complementary slices is the identity") {
  sep::Rng rng(11);
  auto x = rand_t<double>(rng, {4, 6});
  for (int axis : {0, 1}) {
    const sep::Index n = x.dim(axis);
    auto lo = sep::slice(x, axis, 0, n / 2);
    auto hi = sep::slice(x, axis, n / 2, n - n / 2);
    auto back = sep::concat<double>({lo, hi}, axis);
    REQUIRE(back.shape() == x.shape());
    for (sep::Index i = 0; i < x.size(); ++i)
      CHECK(back.values()[static_cast<std::size_t>(i)] ==
            x.values()[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("transpose round-trip") {
  sep::Rng rng(3);
  auto x = rand_t<double>(rng, {3, 5});
  auto tt = sep::transpose(sep::transpose(x));
  for (sep::Index i = 0; i < x.size(); ++i)
    CHECK(tt.values()[static_cast<std::size_t>(i)] ==
          x.values()[static_cast<std::size_t>(i)]);
}

TEST_CASE("non-finite results are errors, not silent values") {
  auto a = T::from_data({2}, {1, 1});
  auto b = T::from_data({2}, {1, 0});
  CHECK_THROWS_AS(sep::div(a, b), sep::NumericError);
  CHECK_THROWS_AS(sep::log10_(T::from_data({1}, {-1})), sep::NumericError);
  CHECK_THROWS_AS(sep::sqrt_(T::from_data({1}, {-1})), sep::NumericError);
}

TEST_CASE("grad_check: f = sum(sigmoid(x)) on random (4,)") {
  sep::Rng rng(21);
  auto x = rand_t<double>(rng, {4});
  auto res = sep::grad_check<double>(
      [&] { return sep::sum(sep::sigmoid(x)); }, {x});
  CHECK(res.ok(1e-4));
}

TEST_CASE("grad_check: constant function passes") {
  sep::Rng rng(5);
  auto x = rand_t<double>(rng, {3});
  auto res = sep::grad_check<double>([] { return T::scalar(2.5); }, {x});
  CHECK(res.ok(1e-4));
  CHECK(res.max_rel_err == 0.0);
}

TEST_CASE("grad_check per op") {
  sep::Rng rng(1234);

  SUBCASE("add/sub/mul chain") {
    auto a = rand_t<double>(rng, {3, 4});
    auto b = rand_t<double>(rng, {3, 4});
    auto res = sep::grad_check<double>(
        [&] { return sep::sum(sep::mul(sep::add(a, b), sep::sub(a, b))); },
        {a, b});
    CHECK(res.ok(1e-4));
  }
  SUBCASE("div") {
    auto a = rand_t<double>(rng, {2, 3});
    auto b = rand_t<double>(rng, {2, 3}, 0.5, 1.5);
    auto res = sep::grad_check<double>(
        [&] { return sep::sum(sep::div(a, b)); }, {a, b});
    CHECK(res.ok(1e-4));
  }
  SUBCASE("rowwise broadcast") {
    auto x = rand_t<double>(rng, {4, 3});
    auto bias = rand_t<double>(rng, {3});
    auto gain = rand_t<double>(rng, {3}, 0.5, 1.5);
    auto res = sep::grad_check<double>(
        [&] {
          return sep::sum(sep::mul_rowwise(sep::add_rowwise(x, bias), gain));
        },
        {x, bias, gain});
    CHECK(res.ok(1e-4));
  }
  SUBCASE("scale and add_const") {
    auto x = rand_t<double>(rng, {5});
    auto res = sep::grad_check<double>(
        [&] { return sep::sum(sep::scale(sep::add_const(x, 0.7), -1.3)); },
        {x});
    CHECK(res.ok(1e-4));
  }
  SUBCASE("relu away from the kink") {
    std::vector<double> v(12);
    for (auto& e : v) {
      const double mag = rng.uniform(0.1, 1.0);
      e = rng.uniform() < 0.5 ? -mag : mag;
    }
    auto x = T::from_data({12}, v);
    auto res =
        sep::grad_check<double>([&] { return sep::sum(sep::relu(x)); }, {x});
    CHECK(res.ok(1e-4));
  }
  SUBCASE("tanh") {
    auto x = rand_t<double>(rng, {6});
    auto res =
        sep::grad_check<double>([&] { return sep::sum(sep::tanh_(x)); }, {x});
    CHECK(res.ok(1e-4));
  }
  SUBCASE("log10 and sqrt on positive input") {
    auto x = rand_t<double>(rng, {6}, 0.2, 2.0);
    auto res = sep::grad_check<double>(
        [&] { return sep::sum(sep::add(sep::log10_(x), sep::sqrt_(x))); },
        {x});
    CHECK(res.ok(1e-4));
  }
  SUBCASE("mean and variance") {
    auto x = rand_t<double>(rng, {3, 4});
    auto res = sep::grad_check<double>(
        [&] { return sep::add(sep::mean(x), sep::variance(x)); }, {x});
    CHECK(res.ok(1e-4));
  }
  SUBCASE("matmul") {
    auto a = rand_t<double>(rng, {2, 3});
    auto b = rand_t<double>(rng, {3, 2});
    auto res = sep::grad_check<double>(
        [&] { return sep::sum(sep::matmul(a, b)); }, {a, b});
    CHECK(res.ok(1e-4));
  }
  SUBCASE("transpose, reshape, reverse") {
    auto x = rand_t<double>(rng, {3, 4});
    auto res = sep::grad_check<double>(
        [&] {
          auto y = sep::reshape(sep::transpose(x), {2, 6});
          return sep::sum(sep::mul(sep::reverse(y, 1), y));
        },
        {x});
    CHECK(res.ok(1e-4));
  }
  SUBCASE("slice and concat") {
    auto x = rand_t<double>(rng, {4, 4});
    auto res = sep::grad_check<double>(
        [&] {
          auto a = sep::slice(x, 1, 0, 2);
          auto b = sep::slice(x, 1, 2, 2);
          auto joined = sep::concat<double>({b, a}, 1);
          return sep::sum(sep::mul(joined, joined));
        },
        {x});
    CHECK(res.ok(1e-4));
  }
  SUBCASE("nondeterministic fn is rejected") {
    auto x = rand_t<double>(rng, {2});
    int calls = 0;
    CHECK_THROWS_AS(
        sep::grad_check<double>(
            [&] {
              ++calls;
              return T::scalar(static_cast<double>(calls));
            },
            {x}),
        sep::NumericError);
  }
}

TEST_CASE("seeded rng reproduces identical streams") {
  sep::Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) {
    const double ua = a.uniform();
    CHECK(ua == b.uniform());
    CHECK(ua >= 0.0);
    CHECK(ua < 1.0);
  }
  sep::Rng c(99), d(99);
  for (int i = 0; i < 50; ++i) CHECK(c.normal() == d.normal());
  for (int i = 0; i < 50; ++i) {
    const auto v = c.uniform_int(-3, 3);
    CHECK(v >= -3);
    CHECK(v <= 3);
  }
}

TEST_CASE("rng split decouples streams") {
  sep::Rng root(5);
  sep::Rng child = root.split();
  bool any_diff = false;
  for (int i = 0; i < 16; ++i)
    any_diff = any_diff || (root.uniform() != child.uniform());
  CHECK(any_diff);
}

TEST_CASE("normal draws have roughly unit variance") {
  sep::Rng rng(2024);
  double s = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  const double m = s / n;
  const double var = s2 / n - m * m;
  CHECK(std::abs(m) < 0.05);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}
