#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "masec/error.hpp"
#include "masec/moduli.hpp"

using namespace masec;
using namespace masec::moduli;

namespace {

// Profile with modulus (-ln r)^{-3} near 0: 0 for x < 0, (-ln x)^{-3} on
// [0, e^{-4}), 1/64 beyond.
double log_profile(double x) {
  if (x < 0.0) return 0.0;
  if (x < std::exp(-4.0)) return x == 0.0 ? 0.0 : std::pow(-std::log(x), -3.0);
  return 1.0 / 64.0;
}

// Composite Simpson on [a, b].
template <typename F>
double simpson(F&& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("constant samples give the zero modulus") {
  std::vector<double> x, v;
  for (int i = 0; i < 20; ++i) {
    x.push_back(0.37 * i);
    v.push_back(3.0);
  }
  const auto w = modulus_from_samples(x, v, 8);
  for (double value : w.values()) CHECK(value == 0.0);
  CHECK(chalf_seminorm(w).value == 0.0);
}

TEST_CASE("linear samples reproduce omega(r) = r at bin knots") {
  std::vector<double> x, v, radii;
  for (int i = 0; i <= 100; ++i) {
    x.push_back(i / 100.0);
    v.push_back(i / 100.0);
  }
  for (int k = 1; k <= 100; ++k) radii.push_back(k / 100.0);
  const auto w = modulus_from_samples(x, v, radii);
  // brute force oracle
  for (std::size_t k = 0; k < radii.size(); ++k) {
    double best = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t j = 0; j < x.size(); ++j) {
        if (std::abs(x[i] - x[j]) <= radii[k] + 1e-12) best = std::max(best, std::abs(v[i] - v[j]));
      }
    }
    CHECK(w.values()[k] == doctest::Approx(best).epsilon(1e-12));
    CHECK(w.values()[k] == doctest::Approx(radii[k]).epsilon(1e-12));
  }
}

TEST_CASE("sampled log profile follows (-ln r)^{-3}") {
  std::vector<double> x, v;
  for (int i = 0; i < 200; ++i) x.push_back(-1.0 + i / 200.0);
  const int m = 1500;
  for (int i = 0; i < m; ++i) x.push_back(1e-12 * std::pow(0.999 / 1e-12, i / double(m - 1)));
  for (double xi : x) v.push_back(log_profile(xi));
  std::vector<double> radii;
  for (double r = 1e-10; r < 0.9; r *= 3.0) radii.push_back(r);
  const auto w = modulus_from_samples(x, v, radii);
  for (std::size_t i = 0; i < radii.size(); ++i) {
    const double r = radii[i];
    const double expected = r < std::exp(-4.0) ? std::pow(-std::log(r), -3.0) : 1.0 / 64.0;
    CHECK(w.values()[i] == doctest::Approx(expected).epsilon(0.05));
  }
}

TEST_CASE("modulus_from_samples rejects bad input") {
  std::vector<double> one{0.0}, vone{1.0};
  CHECK_THROWS_AS(modulus_from_samples(one, vone, 4), InvalidInput);
  std::vector<double> two{0.0, 1.0}, nan{0.0, std::nan("")};
  CHECK_THROWS_AS(modulus_from_samples(two, nan, 4), InvalidInput);
  CHECK_THROWS_AS(modulus_from_samples(two, two, 0), InvalidInput);
}

TEST_CASE("monotone envelope dominates raw bin sups") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec2> pts;
    std::vector<double> vals;
    for (int i = 0; i < 60; ++i) {
      pts.emplace_back(u(rng), u(rng));
      vals.push_back(u(rng));
    }
    const auto w = modulus_from_samples(pts, vals, 16);
    const auto raw = pairwise_bin_sup(pts, vals, w.knots());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CHECK(w.values()[i] >= raw[i]);
      if (i > 0) CHECK(w.values()[i] >= w.values()[i - 1]);
    }
    CHECK(w(10.0) == w.saturated_value());
  }
}

TEST_CASE("Modulus rejects invalid knots") {
  CHECK_THROWS_AS(Modulus({0.1, 0.05}, {0.0, 0.0}, 1.0), InvalidInput);
  CHECK_THROWS_AS(Modulus({0.1, 0.2}, {0.2, 0.1}, 1.0), InvalidInput);
  CHECK_THROWS_AS(Modulus({0.1, 0.2}, {0.1, 0.2}, 0.15), InvalidInput);
  CHECK_THROWS_AS(Modulus({}, {}, 1.0), InvalidInput);
}

TEST_CASE("holder semi-norm matches (2/alpha)^2 c") {
  for (double alpha : {0.25, 0.5, 1.0}) {
    for (double c : {1.0, 0.3}) {
      const auto w = modulus_model(Holder{alpha, c});
      const auto r = chalf_seminorm(w);
      const double expected = c * std::pow(2.0 / alpha, 2.0);
      CHECK(r.value == doctest::Approx(expected).epsilon(1e-6));
      CHECK(r.tail_model.kind == TailKind::power);
    }
  }
}

TEST_CASE("log-power semi-norm is 9/4") {
  // Oracle: with t = -ln r, the integral is int_4^inf t^{-3/2} dt + 4 * (1/8).
  // Substituting t = 4/u^2 makes the first piece int_0^1 1 du numerically.
  const double first = simpson([](double u) {
    if (u == 0.0) return 1.0;
    const double t = 4.0 / (u * u);
    return std::pow(t, -1.5) * 8.0 / (u * u * u);
  }, 0.0, 1.0, 200);
  const double oracle = std::pow(first + 0.5, 2.0);
  CHECK(oracle == doctest::Approx(2.25).epsilon(1e-10));

  const auto w = modulus_model(LogPower{3.0});
  const auto r = chalf_seminorm(w);
  CHECK(r.value == doctest::Approx(oracle).epsilon(1e-4));
  CHECK(r.tail_model.kind == TailKind::log_power);
  CHECK(r.quadrature_error_estimate >= 0.0);
}

TEST_CASE("modulus_model fixtures evaluate exactly at knots") {
  const auto zero = modulus_model(Zero{});
  for (double v : zero.values()) CHECK(v == 0.0);
  const auto half = modulus_model(Holder{0.5, 1.0}, {1e-6, 1.0, 101});
  for (std::size_t i = 0; i < half.knots().size(); ++i) {
    CHECK(half.values()[i] == doctest::Approx(std::sqrt(half.knots()[i])).epsilon(1e-14));
  }
  const auto lp = modulus_model(LogPower{3.0});
  for (double r : {1e-200, 1e-50, 1e-5, 0.01}) {
    CHECK(lp(r) == doctest::Approx(std::pow(-std::log(r), -3.0)).epsilon(1e-3));
  }
  CHECK(lp(0.5) == doctest::Approx(1.0 / 64.0));
  CHECK_THROWS_AS(modulus_model(Holder{1.5, 1.0}), InvalidInput);
  CHECK_THROWS_AS(modulus_model(Holder{0.0, 1.0}), InvalidInput);
  CHECK_THROWS_AS(modulus_model(LogPower{2.0}), InvalidInput);
  CHECK_THROWS_AS(modulus_model(Constant{-1.0}), InvalidInput);
}

TEST_CASE("constant floor diverges with partial value") {
  const auto w = modulus_model(Constant{1.0 / 64.0});
  try {
    chalf_seminorm(w);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.partial_value() > 1e6);
    CHECK(e.code() == ErrorCode::divergence);
  }
}

TEST_CASE("dini integral closed forms") {
  const auto lin = modulus_model(Holder{1.0, 1.0}, {1e-12, 4.0, 2049});
  CHECK(dini_integral(lin, 0.0, 1.0, 1) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(dini_integral(lin, 0.1, 1.0, 2) == doctest::Approx(2.302585).epsilon(1e-6));
  CHECK(dini_integral(lin, 0.1, 1.0, 2) == doctest::Approx(std::log(10.0)).epsilon(1e-8));
  // saturation beyond r_max = 4
  CHECK(dini_integral(lin, 4.0, 8.0, 1) == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-10));
  const auto zero = modulus_model(Zero{});
  CHECK(dini_integral(zero, 0.0, 1.0, 1) == 0.0);
  CHECK(dini_integral(zero, 0.0, 1.0, 2) == 0.0);
  CHECK_THROWS_AS(dini_integral(lin, 0.5, 0.5, 1), InvalidInput);
  CHECK_THROWS_AS(dini_integral(lin, 0.0, 1.0, 3), InvalidInput);
  const auto floor = modulus_model(Constant{0.1});
  CHECK_THROWS_AS(dini_integral(floor, 0.0, 1.0, 2), DivergenceError);
  CHECK_THROWS_AS(dini_integral(floor, 0.0, 1.0, 1), DivergenceError);
}

TEST_CASE("dini integral is additive") {
  const auto lp = modulus_model(LogPower{3.0});
  const auto h = modulus_model(Holder{0.5, 2.0});
  for (int power : {1, 2}) {
    for (const auto* w : {&lp, &h}) {
      const double a = power == 1 ? 0.0 : 1e-4;
      const double ab = dini_integral(*w, a, 0.013, power);
      const double bc = dini_integral(*w, 0.013, 3.0, power);
      const double ac = dini_integral(*w, a, 3.0, power);
      CHECK(ab + bc == doctest::Approx(ac).epsilon(1e-10));
    }
  }
}

TEST_CASE("semi-norm is homogeneous") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  const auto lp = modulus_model(LogPower{3.0});
  const auto h = modulus_model(Holder{0.3, 1.0});
  for (int i = 0; i < 5; ++i) {
    const double c = u(rng);
    for (const auto* w : {&lp, &h}) {
      const double base = chalf_seminorm(*w).value;
      CHECK(chalf_seminorm(w->scaled(c)).value == doctest::Approx(c * base).epsilon(1e-10));
    }
  }
}

TEST_CASE("refinement change is within the reported error") {
  const auto coarse = modulus_model(LogPower{3.0}, {0.0, 1.0, 513});
  const auto fine = modulus_model(LogPower{3.0}, {0.0, 1.0, 1025});
  const auto rc = chalf_seminorm(coarse);
  const auto rf = chalf_seminorm(fine);
  CHECK(std::abs(rc.value - rf.value) <= rc.quadrature_error_estimate);

  std::vector<double> k1, v1, k2, v2;
  for (int i = 0; i < 200; ++i) {
    const double r = std::pow(10.0, -6.0 + 6.0 * i / 199.0);
    k1.push_back(r);
    v1.push_back(std::sqrt(r));
  }
  for (int i = 0; i < 399; ++i) {
    const double r = std::pow(10.0, -6.0 + 6.0 * i / 398.0);
    k2.push_back(r);
    v2.push_back(std::sqrt(r));
  }
  const auto a = chalf_seminorm(Modulus(k1, v1, 1.0));
  const auto b = chalf_seminorm(Modulus(k2, v2, 1.0));
  CHECK(std::abs(a.value - b.value) <= a.quadrature_error_estimate);
}

TEST_CASE("small-r fit picks the matching model") {
  const auto h = modulus_model(Holder{0.5, 1.0});
  CHECK(h.tail().kind == TailKind::power);
  CHECK(h.tail().exponent == doctest::Approx(0.5).epsilon(1e-9));
  const auto lp = modulus_model(LogPower{3.0});
  CHECK(lp.tail().kind == TailKind::log_power);
  CHECK(lp.tail().exponent == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(modulus_model(Constant{0.2}).tail().kind == TailKind::constant);
}

TEST_CASE("csv round trip") {
  const auto w = modulus_model(Holder{0.5, 1.0}, {1e-4, 2.0, 33});
  std::stringstream ss;
  write_csv(ss, w);
  CHECK(ss.str().rfind("# r,omega,r_max=2", 0) == 0);
  const auto back = read_csv(ss);
  CHECK(back.knots() == w.knots());
  CHECK(back.values() == w.values());
  CHECK(back.r_max() == w.r_max());
  CHECK(back.interp() == w.interp());
  std::stringstream bad("0.1,abc\n");
  CHECK_THROWS_AS(read_csv(bad), IoError);
}
