#include <doctest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "txsp/gradcheck.hpp"
#include "txsp/selfsim.hpp"

using namespace txsp;

namespace {

// Entry of the score map holding shift (p, q).
template <typename T>
T at_shift(const Tensor<T>& s, int n, int p, int q) {
  return s(n, 0, p + (s.h() - 1) / 2, q + (s.w() - 1) / 2);
}

}  // namespace

TEST_CASE("hand case [[1,2],[3,4]] is asymmetric: s(0,1) = -0.1, s(0,-1) = -0.2") {
  const Tensord f = th::from<double>({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensord naive = reference::selfsim_naive(f);
  const Tensord fast = selfsim_fast(f).scores;
  REQUIRE(fast.shape() == Shape{1, 1, 3, 3});
  for (const Tensord* s : {&naive, &fast}) {
    CHECK(at_shift(*s, 0, 0, 1) == doctest::Approx(-0.1).epsilon(1e-9));
    CHECK(at_shift(*s, 0, 0, -1) == doctest::Approx(-0.2).epsilon(1e-9));
    CHECK(at_shift(*s, 0, 0, 0) == 0.0);
  }
  const Tensorf ff = f.cast<float>();
  CHECK(at_shift(selfsim_fast(ff).scores, 0, 0, 1) == doctest::Approx(-0.1f).epsilon(1e-6));
}

TEST_CASE("constant features score 0 at every shift") {
  for (double v : {1.0, -2.5, 7.0}) {
    const Tensord f(Shape{2, 3, 4, 6}, v);
    th::check_all(selfsim_fast(f).scores, 0.0, 1e-12);
    th::check_all(reference::selfsim_naive(f), 0.0);
  }
  th::check_all(selfsim_fast(Tensorf(Shape{1, 1, 2, 2}, 1.0f)).scores, 0.0);
}

TEST_CASE("all-zero features score 0") {
  th::check_all(selfsim_fast(Tensord(Shape{1, 2, 4, 4})).scores, 0.0);
}

TEST_CASE("fast equals naive over randomized shapes") {
  std::mt19937_64 rng(31);
  const int ext[] = {2, 4, 8, 16};
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int trial = 0; trial < 200; ++trial) {
    const Shape s{pick(1, 2), pick(1, 8), ext[pick(0, 3)], ext[pick(0, 3)]};
    CAPTURE(s.str());
    const Tensord fd = Tensord::randn(s, rng);
    const Tensord naive = reference::selfsim_naive(fd);
    CHECK(max_rel_diff(selfsim_fast(fd).scores, naive) < 1e-10);
    const Tensorf ff = fd.cast<float>();
    CHECK(max_rel_diff(selfsim_fast(ff).scores, reference::selfsim_naive(ff)) < 1e-5);
  }
}

TEST_CASE("scores are <= 0 with exact 0 at the centre") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensorf f = Tensorf::randn({2, 3, 8, 6}, rng);
    const auto m = selfsim_fast(f);
    CHECK(m.source_h == 8);
    CHECK(m.source_w == 6);
    for (float v : m.scores.data()) REQUIRE(v <= 0.0f);
    for (int n = 0; n < 2; ++n) CHECK(at_shift(m.scores, n, 0, 0) == 0.0f);
  }
}

TEST_CASE("scores are generally not symmetric about the centre") {
  const Tensord f = th::randn<double>({1, 2, 8, 8}, 33);
  const Tensord s = selfsim_fast(f).scores;
  double asym = 0;
  for (int p = -4; p <= 4; ++p)
    for (int q = -4; q <= 4; ++q) asym = std::max(asym, std::abs(at_shift(s, 0, p, q) - at_shift(s, 0, -p, -q)));
  CHECK(asym > 1e-3);
}

TEST_CASE("scale invariance: selfsim(a F) = selfsim(F)") {
  const Tensorf f = th::randn<float>({2, 4, 8, 8}, 34);
  const Tensorf base = selfsim_fast(f).scores;
  for (float a : {0.5f, 3.0f, -2.0f}) {
    Tensorf g = f;
    for (auto& v : g.data()) v *= a;
    CHECK(max_rel_diff(selfsim_fast(g).scores, base) < 1e-5);
  }
}

TEST_CASE("periodic features score 0 at multiples of the period") {
  const int h0 = 2, w0 = 4;
  const Tensord tile = th::randn<double>({1, 3, h0, w0}, 35);
  Tensord f(Shape{1, 3, 8, 8});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) f(0, c, i, j) = tile(0, c, i % h0, j % w0);
  const Tensord s = selfsim_fast(f).scores;
  for (int p = -4; p <= 4; p += h0)
    for (int q = -4; q <= 4; q += w0) CHECK(std::abs(at_shift(s, 0, p, q)) < 1e-9);
  // A shift that is not a period multiple does see a difference.
  CHECK(at_shift(s, 0, 1, 0) < -1e-3);
}

TEST_CASE("odd extents are rejected") {
  CHECK_THROWS_AS(selfsim_fast(Tensorf(Shape{1, 1, 3, 4}, 1.0f)), ShapeError);
  CHECK_THROWS_AS(selfsim_fast(Tensorf(Shape{1, 1, 4, 5}, 1.0f)), ShapeError);
  CHECK_THROWS_AS(reference::selfsim_naive(Tensorf(Shape{1, 1, 3, 4}, 1.0f)), ShapeError);
}

TEST_CASE("differentiable selfsim matches the fast values and passes grad_check") {
  const Tensord f = th::randn<double>({2, 3, 4, 6}, 36);
  CHECK(max_rel_diff(selfsim(ad::constant(f)).value(), selfsim_fast(f).scores) < 1e-12);
  const Tensord r = th::randn<double>({2, 1, 5, 7}, 37);
  const auto rep = ad::grad_check(
      [&](const std::vector<ad::Var<double>>& p) {
        return ad::sum(ad::mul(selfsim(p[0]), ad::constant(r)));
      },
      {{"F", f}}, {1e-3, 1e-4, 64, 0});
  CHECK(rep.max_rel_error() <= 1e-4);
}

TEST_CASE("multiscale: arity, constant maps and per-scale naive agreement") {
  const std::vector<Tensorf> constant = {Tensorf(Shape{1, 4, 16, 16}, 2.0f), Tensorf(Shape{1, 8, 8, 8}, 2.0f),
                                         Tensorf(Shape{1, 16, 4, 4}, 2.0f)};
  const auto zero = selfsim_multiscale(constant);
  REQUIRE(zero.size() == 3);
  for (const auto& m : zero) th::check_all(m.scores, 0.0, 1e-6);
  const std::vector<Tensord> feats = {th::randn<double>({2, 4, 16, 16}, 38), th::randn<double>({2, 8, 8, 8}, 39),
                                      th::randn<double>({2, 16, 4, 4}, 40)};
  const auto maps = selfsim_multiscale(feats);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(maps[i].scores.shape() == Shape{2, 1, feats[i].h() + 1, feats[i].w() + 1});
    CHECK(max_rel_diff(maps[i].scores, reference::selfsim_naive(feats[i])) < 1e-10);
  }
}

TEST_CASE("sim transform") {
  SUBCASE("zero parameters give a zero map") {
    const Tensorf s = selfsim_fast(th::randn<float>({1, 2, 4, 4}, 41)).scores;
    th::check_all(selfsim_transform(s, SimTransformParams<float>{}), 0.0);
  }
  SUBCASE("single-tap first conv and summing second conv give a closed-form map") {
    const Tensord s = selfsim_fast(th::randn<double>({1, 2, 6, 4}, 42)).scores;
    SimTransformParams<double> p;
    p.conv1_w(0, 0, 1, 1) = -1.0;  // channel 0 carries -s >= 0 through the ReLU
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) p.conv2_w(0, 0, i, j) = 1.0;
    p.conv2_b[0] = 0.25;
    const Tensord out = selfsim_transform(s, p);
    REQUIRE(out.shape() == s.shape());
    const int H = s.h(), W = s.w();
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        // Inner partial-padded single tap: -s scaled by 9 / in-bounds count.
        auto inner = [&](int a, int b) {
          int cnt = 0;
          for (int da = -1; da <= 1; ++da)
            for (int db = -1; db <= 1; ++db) cnt += (a + da >= 0 && a + da < H && b + db >= 0 && b + db < W);
          return -s(0, 0, a, b) * 9.0 / cnt;
        };
        double acc = 0;
        int cnt = 0;
        for (int da = -1; da <= 1; ++da)
          for (int db = -1; db <= 1; ++db) {
            const int a = i + da, b = j + db;
            if (a < 0 || a >= H || b < 0 || b >= W) continue;
            acc += inner(a, b);
            ++cnt;
          }
        CHECK(out(0, 0, i, j) == doctest::Approx(acc * 9.0 / cnt + 0.25).epsilon(1e-12));
      }
  }
  SUBCASE("differentiable: grad_check over the map and all parameters") {
    auto make = [](std::uint64_t seed) {
      std::mt19937_64 g(seed);
      ad::NamedParams p{{"map", Tensord::randn({2, 1, 5, 5}, g)},
                        {"conv1_w", Tensord::randn({8, 1, 3, 3}, g)},
                        {"conv1_b", Tensord::randn({1, 8, 1, 1}, g)},
                        {"conv2_w", Tensord::randn({1, 8, 3, 3}, g)},
                        {"conv2_b", Tensord::randn({1, 1, 1, 1}, g)}};
      return p;
    };
    auto f = [](const std::vector<ad::Var<double>>& p) {
      const Tensord r = th::randn<double>({2, 1, 5, 5}, 43);
      return ad::sum(ad::mul(selfsim_transform(p[0], p[1], p[2], p[3], p[4]), ad::constant(r)));
    };
    const auto seed = th::kink_stable_seed(44, make, f, {1e-3, 1e-4, 64, 0});
    const auto rep = ad::grad_check(f, make(seed), {1e-3, 1e-4, 64, 0});
    CHECK(rep.pass);
  }
  SUBCASE("shape errors") {
    SimTransformParams<float> p;
    p.conv1_w = Tensorf(Shape{8, 2, 3, 3});
    CHECK_THROWS_AS(selfsim_transform(Tensorf(Shape{1, 1, 5, 5}), p), ShapeError);
  }
}
