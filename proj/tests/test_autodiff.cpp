#include <doctest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "txsp/gradcheck.hpp"
#include "txsp/ops.hpp"
#include "txsp/params.hpp"

using namespace txsp;
using namespace txsp::ad;

namespace {

// Scalar projection <op(...), R> with a fixed random R, so every output
// coordinate contributes a distinct weight to the gradient.
Var<double> project(const Var<double>& y, std::uint64_t seed = 99) {
  return sum(mul(y, constant(th::randn<double>(y.shape(), seed))));
}

void expect_pass(const ScalarFn& f, NamedParams params, double tol = 1e-4) {
  const auto r = grad_check(f, std::move(params), {1e-3, tol, 64, 1});
  for (const auto& p : r.params) {
    CAPTURE(p.name);
    CHECK(p.max_rel_error <= tol);
    CHECK(p.coords_checked > 0);
  }
  CHECK(r.pass);
}

Tensord nz(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::away_from_zero(s, rng);
}

}  // namespace

TEST_CASE("relu backward seeded with ones is the indicator of x > 0") {
  Tape<double> tape;
  const Tensord xv = th::from<double>({1, 1, 1, 4}, {-1.0, 0.5, 2.0, -0.1});
  auto x = tape.leaf(xv);
  auto y = relu(x);
  tape.backward(y);
  CHECK(x.grad() == th::from<double>({1, 1, 1, 4}, {0, 1, 1, 0}));
}

TEST_CASE("relu(conv(x, w)) records exactly two op nodes") {
  Tape<float> tape;
  auto x = tape.leaf(th::randn<float>({1, 1, 4, 4}, 1));
  auto w = tape.leaf(th::randn<float>({1, 1, 3, 3}, 2));
  auto y = relu(conv2d(x, w, std::nullopt, ConvSpec{}));
  CHECK(tape.op_count() == 2);
  CHECK(tape.size() == 4);
}

TEST_CASE("node indices are topological") {
  Tape<double> tape;
  auto a = tape.leaf(th::randn<double>({1, 1, 2, 2}, 3));
  auto b = square(a);
  auto c = add(a, b);
  CHECK(a.node()->index < b.node()->index);
  CHECK(b.node()->index < c.node()->index);
}

TEST_CASE("identity graph passes the seed through") {
  Tape<double> tape;
  auto x = tape.leaf(th::randn<double>({1, 2, 2, 2}, 4));
  auto y = reshape(x, Shape{1, 2, 2, 2});
  const Tensord seed = th::randn<double>({1, 2, 2, 2}, 5);
  tape.backward(y, seed);
  CHECK(x.grad() == seed);
}

TEST_CASE("fan-in accumulates: y = a + a gives grad 2") {
  Tape<double> tape;
  auto a = tape.leaf(th::randn<double>({1, 1, 3, 3}, 6));
  tape.backward(sum(add(a, a)));
  th::check_all(a.grad(), 2.0);
}

TEST_CASE("backward is linear: two graph copies give twice the gradient") {
  const Tensord xv = th::randn<double>({1, 2, 5, 5}, 7), wv = th::randn<double>({3, 2, 3, 3}, 8);
  Tensord g1, g2;
  {
    Tape<double> tape;
    auto w = tape.leaf(wv);
    tape.backward(project(relu(conv2d(constant(xv), w, std::nullopt, ConvSpec{}))));
    g1 = w.grad();
  }
  {
    Tape<double> tape;
    auto w = tape.leaf(wv);
    auto one = project(relu(conv2d(constant(xv), w, std::nullopt, ConvSpec{})));
    auto two = project(relu(conv2d(constant(xv), w, std::nullopt, ConvSpec{})));
    tape.backward(add(one, two));
    g2 = w.grad();
  }
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2 * g1[i]).epsilon(1e-12));
}

TEST_CASE("stale tape and seed mismatch") {
  Tape<double> tape;
  auto x = tape.leaf(th::randn<double>({1, 1, 2, 2}, 9));
  auto y = sum(square(x));
  CHECK_THROWS_AS(tape.backward(y, Tensord(Shape{1, 1, 2, 2})), ShapeError);
  tape.backward(y);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(square(x), StaleTapeError);
  CHECK_THROWS_AS(tape.leaf(Tensord(Shape{1, 1, 1, 1})), StaleTapeError);
  CHECK_THROWS_AS(tape.backward(y), StaleTapeError);
}

TEST_CASE("ops on constants stay off the tape") {
  Tape<double> tape;
  auto c = constant(th::randn<double>({1, 1, 2, 2}, 10));
  auto y = square(c);
  CHECK_FALSE(y.requires_grad());
  CHECK(tape.size() == 0);
}

TEST_CASE("sum(conv2d(x, w)) weight gradient matches finite differences") {
  expect_pass(
      [](const std::vector<Var<double>>& p) {
        return sum(conv2d(p[0], p[1], std::nullopt, ConvSpec{}));
      },
      {{"x", th::randn<double>({1, 2, 6, 6}, 11)}, {"w", th::randn<double>({3, 2, 3, 3}, 12)}});
}

TEST_CASE("grad_check: sum of squares at 1e-6") {
  const auto r = grad_check([](const std::vector<Var<double>>& p) { return sum(square(p[0])); },
                            {{"p", th::randn<double>({1, 2, 3, 3}, 13)}}, {1e-3, 1e-6, 64, 0});
  CHECK(r.pass);
  CHECK(r.max_rel_error() < 1e-6);
  CHECK(r.step == 1e-3);
}

TEST_CASE("grad_check: sampled coordinates on large tensors") {
  const auto r = grad_check([](const std::vector<Var<double>>& p) { return sum(square(p[0])); },
                            {{"p", th::randn<double>({1, 4, 10, 10}, 14)}}, {1e-3, 1e-6, 64, 0});
  CHECK(r.params[0].coords_checked == 64);
}

TEST_CASE("grad_check: non-finite function value is a numeric error") {
  auto f = [](const std::vector<Var<double>>& p) { return scale(sum(p[0]), 1e308 * 10); };
  CHECK_THROWS_AS(grad_check(f, {{"p", Tensord(Shape{1, 1, 1, 1}, 1.0)}}), NumericError);
}

TEST_CASE("grad_check: a wrong backward rule fails (negative control)") {
  // Square whose backward forgets the factor 2.
  auto bad_square = [](const Var<double>& x) {
    Tensord v = x.value();
    for (auto& e : v.data()) e *= e;
    return detail::record<double>("bad_square", std::move(v), {x}, [](detail::Node<double>& n) {
      Tensord g = n.grad;
      const Tensord& xv = n.inputs[0]->value;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= xv[i];
      detail::accumulate(*n.inputs[0], std::move(g));
    });
  };
  const auto r = grad_check([&](const std::vector<Var<double>>& p) { return sum(bad_square(p[0])); },
                            {{"p", nz({1, 1, 3, 3}, 15)}});
  CHECK_FALSE(r.pass);
  CHECK(r.max_rel_error() > 0.1);
}

TEST_CASE("every tensor op passes grad_check (f64, step 1e-3, tol 1e-4)") {
  using P = const std::vector<Var<double>>&;
  const Shape s{2, 3, 5, 4};

  SUBCASE("add / sub / mul / scale / add_scalar / square") {
    expect_pass([](P p) { return project(add(p[0], p[1])); }, {{"a", nz(s, 20)}, {"b", nz(s, 21)}});
    expect_pass([](P p) { return project(sub(p[0], p[1])); }, {{"a", nz(s, 22)}, {"b", nz(s, 23)}});
    expect_pass([](P p) { return project(mul(p[0], p[1])); }, {{"a", nz(s, 24)}, {"b", nz(s, 25)}});
    expect_pass([](P p) { return project(scale(p[0], -1.7)); }, {{"a", nz(s, 26)}});
    expect_pass([](P p) { return project(add_scalar(p[0], 0.3)); }, {{"a", nz(s, 27)}});
    expect_pass([](P p) { return project(square(p[0])); }, {{"a", nz(s, 28)}});
  }
  SUBCASE("reductions") {
    expect_pass([](P p) { return sum(p[0]); }, {{"a", nz(s, 30)}});
    expect_pass([](P p) { return mean(square(p[0])); }, {{"a", nz(s, 31)}});
    expect_pass([](P p) { return abs_sum(p[0]); }, {{"a", nz(s, 32)}});
  }
  SUBCASE("activations") {
    expect_pass([](P p) { return project(relu(p[0])); }, {{"a", nz(s, 40)}});
    expect_pass([](P p) { return project(leaky_relu(p[0], 0.2)); }, {{"a", nz(s, 41)}});
  }
  SUBCASE("conv2d in every padding mode, both strides, with bias") {
    const std::vector<PaddingMode> pads = {PaddingMode::none(), PaddingMode::zero(1),
                                           PaddingMode::partial(1), PaddingMode::zero(2),
                                           PaddingMode::partial(0, 1, 1, 0)};
    std::uint64_t seed = 50;
    for (const auto& pad : pads)
      for (int stride : {1, 2}) {
        const ConvSpec spec{stride, pad};
        CAPTURE(stride);
        expect_pass([spec](P p) { return project(conv2d(p[0], p[1], p[2], spec)); },
                    {{"x", th::randn<double>({2, 2, 7, 6}, seed++)},
                     {"w", th::randn<double>({3, 2, 3, 3}, seed++)},
                     {"b", th::randn<double>({1, 3, 1, 1}, seed++)}});
      }
  }
  SUBCASE("transposed_conv2d with bias") {
    expect_pass([](P p) { return project(transposed_conv2d(p[0], p[1], p[2])); },
                {{"x", th::randn<double>({2, 3, 4, 5}, 60)},
                 {"w", th::randn<double>({3, 2, 3, 2}, 61)},
                 {"b", th::randn<double>({1, 2, 1, 1}, 62)}});
  }
  SUBCASE("batched_transposed_conv") {
    expect_pass([](P p) { return project(batched_transposed_conv(p[0], p[1])); },
                {{"s", th::randn<double>({2, 1, 5, 5}, 63)}, {"f", th::randn<double>({2, 3, 4, 4}, 64)}});
  }
  SUBCASE("bilinear resampling and pooling") {
    expect_pass([](P p) { return project(upsample2x(p[0])); }, {{"a", th::randn<double>(s, 70)}});
    expect_pass([](P p) { return project(bilinear_upsample(p[0], 3, 7)); },
                {{"a", th::randn<double>(s, 71)}});
    expect_pass([](P p) { return project(avg_pool_global(p[0])); }, {{"a", th::randn<double>(s, 72)}});
  }
  SUBCASE("add_channel_bias with shared and per-item bias") {
    expect_pass([](P p) { return project(add_channel_bias(p[0], p[1])); },
                {{"x", th::randn<double>(s, 80)}, {"b", th::randn<double>({1, 3, 1, 1}, 81)}});
    expect_pass([](P p) { return project(add_channel_bias(p[0], p[1])); },
                {{"x", th::randn<double>(s, 82)}, {"b", th::randn<double>({2, 3, 1, 1}, 83)}});
  }
  SUBCASE("batch_norm in train and eval mode") {
    for (bool train : {true, false}) {
      CAPTURE(train);
      expect_pass(
          [train](P p) {
            Tensord rm = th::randn<double>({1, 3, 1, 1}, 90), rv(Shape{1, 3, 1, 1}, 1.3);
            return project(batch_norm(p[0], p[1], p[2], rm, rv, {train, 0.1, 1e-5}));
          },
          {{"x", th::randn<double>(s, 91)},
           {"gamma", th::randn<double>({1, 3, 1, 1}, 92)},
           {"beta", th::randn<double>({1, 3, 1, 1}, 93)}});
    }
  }
  SUBCASE("crop, concatenation and reshape") {
    expect_pass([](P p) { return project(crop(p[0], 1, 2, 3, 2)); }, {{"a", th::randn<double>(s, 100)}});
    expect_pass([](P p) { return project(concat_channels(p[0], p[1])); },
                {{"a", th::randn<double>(s, 101)}, {"b", th::randn<double>({2, 1, 5, 4}, 102)}});
    expect_pass([](P p) { return project(concat_batch<double>({p[0], p[1], p[0]})); },
                {{"a", th::randn<double>(s, 103)}, {"b", th::randn<double>({1, 3, 5, 4}, 104)}});
    expect_pass([](P p) { return project(reshape(p[0], Shape{1, 6, 4, 5})); },
                {{"a", th::randn<double>(s, 105)}});
  }
  SUBCASE("gram") {
    expect_pass([](P p) { return project(gram(p[0])); }, {{"a", th::randn<double>(s, 110)}});
  }
}

TEST_CASE("binder: leaves in train mode, constants without a tape") {
  ParamSet<double> ps;
  ps.add("w", th::randn<double>({1, 1, 2, 2}, 120));
  ps.add("rm", Tensord(Shape{1, 1, 1, 1}), false);
  {
    Tape<double> tape;
    Binder<double> b(ps, &tape, true);
    auto w = b("w");
    CHECK(w.requires_grad());
    CHECK_FALSE(b("rm").requires_grad());
    tape.backward(sum(square(w)));
    const auto g = b.gradients();
    REQUIRE(g.count("w") == 1);
    CHECK(max_rel_diff(g.at("w"), [&] {
            Tensord t = ps.at("w");
            for (auto& e : t.data()) e *= 2;
            return t;
          }()) < 1e-15);
  }
  Binder<double> b(ps, nullptr, false);
  CHECK_FALSE(b("w").requires_grad());
}
