#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "fgted/numerics/errors.hpp"
#include "fgted/numerics/rng.hpp"
#include "fgted/numerics/tape.hpp"
#include "support/gradcheck.hpp"

using namespace fgted;
using namespace fgted::numerics;
using fgted::testing::LeafSpec;
using fgted::testing::max_gradient_error;

namespace {

std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.5, double hi = 1.5) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * uniform_unit(rng);
  return v;
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
}

// Scalar readout with fixed random weights so that gradients are not uniform.
Tensor weighted_sum(Tape& tape, const Tensor& x, std::uint64_t salt) {
  Rng rng = make_stream(99, {salt});
  return tape.sum(tape.mul(x, Tensor::from_values(x.shape(), random_values(rng, x.size()))));
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("tensor construction validates shape and values") {
  CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::from_values({0, 2}, {}), DimensionError);
  CHECK_THROWS_AS(Tensor::from_values({1}, {std::nan("")}), NumericError);
  Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6.0);
  CHECK_FALSE(t.tracked());
}

TEST_CASE("matmul with identity and add with zero") {
  Tape tape;
  Rng rng = make_stream(1, {});
  Tensor a = Tensor::from_values({3, 3}, random_values(rng, 9));
  Tensor eye = Tensor::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(bitwise_equal(tape.matmul(eye, a).values(), a.values()));
  CHECK(bitwise_equal(tape.add(a, Tensor::zeros({3, 3})).values(), a.values()));
  CHECK_THROWS_AS(tape.matmul(a, Tensor::zeros({2, 3})), DimensionError);
  CHECK_THROWS_AS(tape.add(a, Tensor::zeros({2, 2})), DimensionError);
}

TEST_CASE("primitive dispatch by name") {
  CHECK(primitive_from_name("embedding-gather") == Primitive::kGatherRows);
  CHECK(primitive_name(Primitive::kDropout) == "dropout-mask-apply");
  CHECK_THROWS_AS(primitive_from_name("conv2d"), UsageError);
  Tape tape;
  Tensor a = Tensor::from_values({2}, {1, 2});
  Tensor b = Tensor::from_values({2}, {3, 5});
  std::vector<Tensor> in{a, b};
  Tensor out = tape.apply(primitive_from_name("mul"), in);
  CHECK(out.values()[0] == 3.0);
  CHECK(out.values()[1] == 10.0);
}

TEST_CASE("gradient of sum(x*x) at [1,2,3]") {
  auto f = [](Tape& t, std::span<const Tensor> in) { return t.sum(t.mul(in[0], in[0])); };
  Tensor x = Tensor::parameter({3}, {1, 2, 3});
  Tape tape;
  tape.backward(f(tape, std::span(&x, 1)));
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(x.grad()[2] == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(max_gradient_error(f, {{{3}, {1, 2, 3}}}) <= 1e-6);
}

TEST_CASE("row_softmax values and jacobian") {
  Tape tape;
  Tensor p = tape.row_softmax(Tensor::from_values({2, 2}, {0, 0, std::log(3.0), 0}));
  CHECK(p.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.at(1, 0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(p.at(1, 1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(tape.row_softmax(Tensor::from_values({2, 1}, {1, 2})), DimensionError);
  for (std::size_t c = 0; c < 2; ++c) {
    auto f = [c](Tape& t, std::span<const Tensor> in) {
      return t.sum(t.slice_rows(t.transpose(t.row_softmax(in[0])), c, c + 1));
    };
    CHECK(max_gradient_error(f, {{{1, 2}, {0.3, -1.2}}}) <= 1e-6);
  }
  Rng rng = make_stream(2, {});
  Tensor big = tape.row_softmax(Tensor::from_values({8, 7}, random_values(rng, 56, -30, 30)));
  for (std::size_t r = 0; r < 8; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += big.at(r, c);
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("kl_div_rows values, zero convention and gradient") {
  Tape tape;
  Tensor r = Tensor::from_values({1, 3}, {0.2, 0.5, 0.3});
  CHECK(tape.kl_div_rows(r, r).item() == doctest::Approx(0.0));
  Tensor kl = tape.kl_div_rows(Tensor::from_values({1, 2}, {1, 0}),
                               Tensor::from_values({1, 2}, {0.5, 0.5}));
  CHECK(kl.item() == doctest::Approx(std::numbers::ln2).epsilon(1e-14));
  CHECK_THROWS_AS(tape.kl_div_rows(Tensor::from_values({1, 2}, {0.5, 0.5}),
                                   Tensor::from_values({1, 2}, {1, 0})),
                  NumericError);
  auto f = [](Tape& t, std::span<const Tensor> in) {
    return t.sum(t.kl_div_rows(in[0], Tensor::from_values({1, 2}, {0.4, 0.6})));
  };
  CHECK(max_gradient_error(f, {{{1, 2}, {0.7, 0.3}}}) <= 1e-6);
}

TEST_CASE("detach is a value-preserving gradient barrier") {
  Tensor x = Tensor::parameter({2}, {2, 5});
  Tensor d = detach(x);
  CHECK(bitwise_equal(d.values(), x.values()));
  CHECK_FALSE(d.tracked());
  CHECK(bitwise_equal(detach(d).values(), x.values()));

  Tape tape;
  tape.backward(tape.sum(tape.mul(detach(x), x)));
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 5.0);

  Tensor q = Tensor::parameter({1, 2}, {0.7, 0.3});
  Tensor z = Tensor::parameter({1, 2}, {0.1, 0.2});
  Tape t2;
  Tensor p = t2.row_softmax(z);
  t2.backward(t2.add(t2.sum(t2.kl_div_rows(detach(q), p)), t2.scale(t2.sum(q), 0.0)));
  CHECK(q.grad()[0] == 0.0);
  CHECK(q.grad()[1] == 0.0);
  CHECK(z.has_grad());
}

TEST_CASE("backward errors and accumulation") {
  Tensor x = Tensor::parameter({3}, {1, 2, 3});
  Tape tape;
  Tensor s = tape.sum(x);
  tape.backward(s);
  for (double g : x.grad()) CHECK(g == 1.0);
  CHECK_THROWS_AS(tape.backward(s), StateError);
  tape.reset();
  CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), UsageError);

  // A leaf used in two branches gets the sum of the single-branch gradients.
  auto branch_a = [](Tape& t, const Tensor& v) { return t.sum(t.mul(v, v)); };
  auto branch_b = [](Tape& t, const Tensor& v) { return t.sum(t.exp(v)); };
  Tensor y = Tensor::parameter({3}, {0.1, -0.4, 0.9});
  Tape both;
  both.backward(both.add(branch_a(both, y), branch_b(both, y)));
  std::vector<double> combined(y.grad().begin(), y.grad().end());
  y.zero_grad();
  Tape ta;
  ta.backward(branch_a(ta, y));
  std::vector<double> ga(y.grad().begin(), y.grad().end());
  y.zero_grad();
  Tape tb;
  tb.backward(branch_b(tb, y));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(combined[i] == doctest::Approx(ga[i] + y.grad()[i]).epsilon(1e-15));
  }
}

TEST_CASE("inference tape records nothing") {
  Tensor x = Tensor::parameter({2}, {1, 2});
  Tape tape = Tape::inference();
  Tensor y = tape.mul(x, x);
  CHECK_FALSE(y.tracked());
  CHECK(tape.size() == 0);
  CHECK_THROWS_AS(tape.backward(tape.sum(y)), UsageError);
}

TEST_CASE("log and exp reject non-finite results") {
  Tape tape;
  CHECK_THROWS_AS(tape.log(Tensor::from_values({2}, {1.0, 0.0})), NumericError);
  CHECK_THROWS_AS(tape.exp(Tensor::from_values({1}, {1000.0})), NumericError);
}

TEST_CASE("clamp_probs bounds rows away from 0 and 1") {
  Tape tape;
  Tensor p = tape.clamp_probs(Tensor::from_values({1, 2}, {1.0, 0.0}));
  CHECK(p.at(0, 1) > 0.0);
  CHECK(p.at(0, 0) < 1.0);
  CHECK(p.at(0, 0) + p.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("grad_reverse flips and scales the gradient") {
  Tensor x = Tensor::parameter({2}, {0.5, -1.0});
  Tape tape;
  Tensor y = tape.grad_reverse(x, 0.3);
  CHECK(bitwise_equal(y.values(), x.values()));
  tape.backward(tape.sum(tape.mul(y, y)));
  CHECK(x.grad()[0] == doctest::Approx(-0.3 * 1.0));
  CHECK(x.grad()[1] == doctest::Approx(-0.3 * -2.0));
}

TEST_CASE("attention respects key ranges") {
  Rng rng = make_stream(3, {});
  Tensor q = Tensor::from_values({4, 4}, random_values(rng, 16));
  Tensor k = Tensor::from_values({4, 4}, random_values(rng, 16));
  Tensor v = Tensor::from_values({4, 4}, random_values(rng, 16));
  std::vector<KeyRange> ranges{{0, 2}, {0, 2}, {2, 4}, {2, 4}};
  Tape tape = Tape::inference();
  Tensor full = tape.attention(q, k, v, 2, ranges);
  // Changing the values of keys 2-3 must leave rows 0-1 untouched.
  auto vv = std::vector<double>(v.values().begin(), v.values().end());
  for (std::size_t i = 8; i < 16; ++i) vv[i] += 1.0;
  Tensor moved = tape.attention(q, k, Tensor::from_values({4, 4}, vv), 2, ranges);
  for (std::size_t i = 0; i < 8; ++i) CHECK(full.values()[i] == moved.values()[i]);
  CHECK(full.values()[8] != moved.values()[8]);
  CHECK_THROWS_AS(tape.attention(q, k, v, 3, ranges), DimensionError);
}

// Every differentiable primitive on random small shapes.
TEST_CASE("randomized finite-difference sweep over primitives") {
  Rng rng = make_stream(4, {});
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + uniform_index(rng, 8);
    const std::size_t c = 2 + uniform_index(rng, 7);
    const std::size_t inner = 1 + uniform_index(rng, 8);
    const auto salt = static_cast<std::uint64_t>(trial);
    auto leaf = [&](Shape s, double lo = -1.5, double hi = 1.5) {
      return LeafSpec{s, random_values(rng, numerics::shape_size(s), lo, hi)};
    };
    auto check = [&](const testing::LossFn& f, std::vector<LeafSpec> leaves) {
      worst = std::max(worst, max_gradient_error(f, leaves));
    };

    check([&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, t.add(in[0], in[1]), salt); },
          {leaf({r, c}), leaf({c})});
    check([&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, t.sub(in[0], in[1]), salt); },
          {leaf({r, c}), leaf({r, c})});
    check([&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, t.mul(in[0], in[1]), salt); },
          {leaf({r, c}), leaf({r, c})});
    check([&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, t.scale(in[0], -0.7), salt); },
          {leaf({r, c})});
    check([&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, t.matmul(in[0], in[1]), salt); },
          {leaf({r, inner}), leaf({inner, c})});
    check([&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, t.transpose(in[0]), salt); },
          {leaf({r, c})});
    check([&](Tape& t, std::span<const Tensor> in) {
            return weighted_sum(t, t.concat_rows(in), salt);
          },
          {leaf({r, c}), leaf({inner, c})});
    check([&](Tape& t, std::span<const Tensor> in) {
            return weighted_sum(t, t.slice_rows(in[0], r / 2, r), salt);
          },
          {leaf({r, c})});
    {
      std::vector<std::size_t> ids;
      for (std::size_t i = 0; i < r + 2; ++i) ids.push_back(uniform_index(rng, inner));
      check([&, ids](Tape& t, std::span<const Tensor> in) {
              return weighted_sum(t, t.gather_rows(in[0], ids), salt);
            },
            {leaf({inner, c})});
    }
    check([&](Tape& t, std::span<const Tensor> in) {
            return weighted_sum(t, t.layer_norm(in[0], in[1], in[2]), salt);
          },
          {leaf({r, c}), leaf({c}), leaf({c})});
    check([&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, t.gelu(in[0]), salt); },
          {leaf({r, c})});
    check([&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, t.tanh(in[0]), salt); },
          {leaf({r, c})});
    {
      std::vector<double> mask(r * c);
      for (double& m : mask) m = uniform_unit(rng) < 0.3 ? 0.0 : 1.0;
      check([&, mask](Tape& t, std::span<const Tensor> in) {
              return weighted_sum(t, t.dropout(in[0], Tensor::from_values({r, c}, mask), 0.3), salt);
            },
            {leaf({r, c})});
    }
    check([&](Tape& t, std::span<const Tensor> in) { return t.mean(t.mul(in[0], in[0])); },
          {leaf({r, c})});
    check([&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, t.log(in[0]), salt); },
          {leaf({r, c}, 0.2, 3.0)});
    check([&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, t.exp(in[0]), salt); },
          {leaf({r, c})});
    check([&](Tape& t, std::span<const Tensor> in) {
            return weighted_sum(t, t.row_softmax(in[0]), salt);
          },
          {leaf({r, c})});
    check([&](Tape& t, std::span<const Tensor> in) {
            return weighted_sum(t, t.kl_div_rows(t.row_softmax(in[0]), t.row_softmax(in[1])), salt);
          },
          {leaf({r, c}), leaf({r, c})});
    check([&](Tape& t, std::span<const Tensor> in) {
            return weighted_sum(t, t.clamp_probs(t.row_softmax(in[0])), salt);
          },
          {leaf({r, c})});
    check([&](Tape& t, std::span<const Tensor> in) {
            return weighted_sum(t, t.l2_normalize_rows(in[0]), salt);
          },
          {leaf({r, c})});
    {
      const std::size_t heads = 1 + uniform_index(rng, 2);
      const std::size_t d = 2 * heads;
      std::vector<KeyRange> ranges(r);
      for (auto& kr : ranges) {
        kr.begin = uniform_index(rng, r);
        kr.end = kr.begin + 1 + uniform_index(rng, r - kr.begin);
      }
      check([&, ranges, heads](Tape& t, std::span<const Tensor> in) {
              return weighted_sum(t, t.attention(in[0], in[1], in[2], heads, ranges), salt);
            },
            {leaf({r, d}), leaf({r, d}), leaf({r, d})});
    }
  }
  CHECK(worst <= 1e-4);
  MESSAGE("worst relative error: " << worst);
}

}  // TEST_SUITE
