#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "masec/cascade.hpp"
#include "masec/error.hpp"
#include "masec/masolver.hpp"

using namespace masec;
using namespace masec::cascade;

namespace {

CascadeParams quarter(double c_hat = 0.5) {
  CascadeParams p;
  p.mu = 0.25;
  p.c_hat = c_hat;
  return p;
}

// Parameters with a log-power oscillation floor of 1/64.
CascadeParams log_power_params() {
  CascadeParams p;
  p.mu = 1.0 / 16.0;
  p.c_hat = 0.5;
  p.delta0 = 1.0 / 64.0;
  return p;
}

ScalarField2D sampled(const ScalarFn& fn, int cells = 256) {
  const geom::ConvexBody box({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}});
  return ScalarField2D::sample(box, grid_for(box, cells), fn);
}

}  // namespace

TEST_CASE("one sigma step") {
  CHECK(step_sigma(0.0, 0.0, quarter()) == 0.0);
  const auto p = quarter(1.0);
  CHECK(step_sigma(0.1, 0.01, p) == doctest::Approx(0.25).epsilon(1e-14));
  try {
    step_sigma(0.3, 0.04, p, 7);
    FAIL("expected a hypothesis error");
  } catch (const CascadeHypothesisError& e) {
    CHECK(e.index() == 7);
    CHECK(e.which().find("3 c_hat") != std::string::npos);
  }
  CascadeParams tight = quarter(0.5);
  tight.c_hat1 = 0.4;
  CHECK_THROWS_AS(step_sigma(0.0, 0.0, tight), CascadeHypothesisError);
}

TEST_CASE("admissible steps never exceed one third") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    CascadeParams p;
    p.c_hat = 0.2 + 2.0 * u(rng);
    p.mu = 0.999 * u(rng) * std::min(1.0, 1.0 / (9.0 * p.c_hat * p.c_hat));
    const double room = std::sqrt(p.mu) / (3.0 * p.c_hat);
    const double sigma = u(rng) * room / p.mu;
    const double delta = std::pow(std::max(0.0, room - sigma * p.mu) * u(rng), 2);
    CHECK(step_sigma(sigma, delta, p) <= 1.0 / 3.0 + 1e-15);
  }
}

TEST_CASE("closed form matches the iterated recursion") {
  auto p = quarter();
  p.sigma0 = 0.2;
  const std::vector<double> none(6, 0.0);
  CHECK(sigma_closed_form(4, p, none) == doctest::Approx(std::pow(0.25, 4) * 0.2).epsilon(1e-14));
  const std::vector<double> one{0.003};
  CHECK(sigma_closed_form(1, p, one) == doctest::Approx(step_sigma(0.2, 0.003, p)).epsilon(1e-14));
  CHECK_THROWS_AS(sigma_closed_form(3, p, one), InvalidInput);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int draw = 0; draw < 100; ++draw) {
    CascadeParams q;
    q.c_hat = 0.3 + u(rng);
    q.mu = (0.05 + 0.9 * u(rng)) / (9.0 * q.c_hat * q.c_hat);
    q.sigma0 = q.sigma_cap() * u(rng);
    const double room = std::sqrt(q.mu) / (3.0 * q.c_hat);
    std::vector<double> deltas;
    double sigma = q.sigma0, sum = 0.0, dsum = 0.0;
    for (int k = 1; k <= 8; ++k) {
      const double slack = std::max(0.0, room - sigma * q.mu);
      deltas.push_back(std::pow(slack * u(rng), 2));
      sum += sigma;
      sigma = step_sigma(sigma, deltas.back(), q);
      dsum += std::sqrt(deltas.back());
      CHECK(sigma_closed_form(k, q, deltas) == doctest::Approx(sigma).epsilon(1e-12));
      CHECK(sum + sigma <= sigma_sum_bound(q, dsum));
    }
  }
}

TEST_CASE("oscillation admissibility terms") {
  CascadeParams p;
  p.mu = 0.25;
  p.c_hat = 1.0;
  const auto r = delta_admissibility(0.005, p);
  CHECK(r.term2 == doctest::Approx(1.0 / 144.0).epsilon(1e-12));
  CHECK(r.term3 == doctest::Approx(std::pow(0.25 * std::log(2.0), 2)).epsilon(1e-12));
  CHECK(r.term3 == doctest::Approx(0.03003).epsilon(1e-3));
  CHECK(r.binding == 2);
  CHECK(r.admissible);
  CHECK_FALSE(delta_admissibility(0.01, p).admissible);
  CHECK(delta_admissibility(0.0, p).admissible);

  // The second term vanishes where mu^{1/2} (1 - 1/n)/(1 + 1/n) = 1/(3 c_hat).
  p.mu = 1.0 - 1e-12;
  CHECK(delta_admissibility(0.0, p).term2 < 1e-12);
  p.mu = 1.0 / 9.0;
  CHECK(delta_admissibility(0.0, p).term2 > 0.0);
}

TEST_CASE("admissible oscillation keeps the fixed-point factor below one half") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    CascadeParams p;
    p.c_hat = 0.2 + u(rng);
    p.c_hat2 = 0.2 + 3.0 * u(rng);
    p.mu = (0.01 + 0.98 * u(rng)) / (9.0 * p.c_hat * p.c_hat);
    const auto rep = delta_admissibility(0.0, p);
    const double delta0 = rep.bound * u(rng);
    REQUIRE(delta_admissibility(delta0, p).admissible);
    CHECK(fixed_point_constants(p).c_mu * std::sqrt(delta0) <= 0.5);
  }
}

TEST_CASE("K constant") {
  CascadeParams p;
  p.mu = 0.25;
  p.c_hat = 1.0;
  const auto k0 = k_constant(0.0, p);
  CHECK(k0.C1 == doctest::Approx(std::exp(2.0)).epsilon(1e-14));
  CHECK(k0.value == k0.C1);
  CHECK(k0.C2 == doctest::Approx(4.0 / std::log(2.0)).epsilon(1e-14));
  CHECK(k0.C2 == doctest::Approx(5.7708).epsilon(1e-4));
  const auto k4 = k_constant(4.0, p);
  CHECK(std::log(k4.value) == doctest::Approx(2.0 + 8.0 / std::log(2.0)).epsilon(1e-14));
  CHECK(std::log(k4.value) == doctest::Approx(13.54).epsilon(1e-3));
  double previous = 0.0;
  for (double s : {0.0, 0.1, 1.0, 2.25, 10.0}) {
    const double k = k_constant(s, p).value;
    CHECK(k > previous);
    CHECK(k >= k0.C1);
    previous = k;
  }
  p.c_hat = 2.0;
  CHECK_THROWS_AS(k_constant(1.0, p), InvalidInput);
}

TEST_CASE("parameter validation") {
  CHECK_NOTHROW(CascadeParams{}.validate());
  CascadeParams p;
  p.mu = 0.25;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  p = {};
  p.sigma0 = 0.5;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  p = {};
  p.c3 = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
  const auto round = params_from_json(to_json(log_power_params()));
  CHECK(round.mu == log_power_params().mu);
  CHECK(round.delta0 == log_power_params().delta0);
}

TEST_CASE("constant rhs gives a geometric sigma sequence") {
  auto p = quarter();
  p.sigma0 = 0.3;
  const auto trace = run_scalar_cascade(p, moduli::modulus_model(moduli::Zero{}), {30, std::nullopt});
  REQUIRE(trace.status == Status::ok);
  REQUIRE(trace.states.size() == 31);
  const double q = p.contraction();
  for (const auto& s : trace.states) {
    CHECK(s.delta == 0.0);
    CHECK(s.sigma == doctest::Approx(std::pow(q, s.k) * 0.3).epsilon(1e-12));
  }
  const double last = trace.states.back().ck_tilde;
  const double before = trace.states[trace.states.size() - 2].ck_tilde;
  CHECK(std::abs(last - before) < 1e-9);
}

TEST_CASE("lipschitz modulus runs fifty steps") {
  auto p = quarter();
  p.sigma0 = 0.01;
  p.delta0 = 0.005;
  REQUIRE(delta_admissibility(*p.delta0, p).admissible);
  const auto trace = run_scalar_cascade(p, moduli::modulus_model(moduli::Holder{1.0, 1.0}));
  REQUIRE(trace.status == Status::ok);
  REQUIRE(trace.states.size() == 51);
  // Once the covering radius drops below delta0, delta_k follows the radius.
  for (std::size_t i = 1; i < trace.states.size(); ++i) {
    const auto& s = trace.states[i];
    CHECK(s.delta == doctest::Approx(std::min(0.005, s.ck_tilde * std::pow(0.5, s.k))).epsilon(1e-12));
    CHECK(s.sigma <= 1.0 / 3.0);
    CHECK(s.sigma_sum <= s.sigma_sum_bound);
    CHECK(std::log(s.ck_tilde) <= s.ln_ck_bound);
  }
  CHECK(trace.states[50].delta < 1e-14);
  CHECK(trace.states[50].sigma < 1e-6);
  CHECK(trace.states[50].ck_tilde == doctest::Approx(trace.states[49].ck_tilde).epsilon(1e-6));
}

TEST_CASE("log-power modulus stays under the uniform bound") {
  const auto p = log_power_params();
  REQUIRE(delta_admissibility(*p.delta0, p).admissible);
  const auto omega = moduli::modulus_model(moduli::LogPower{3.0});
  const auto semi = moduli::chalf_seminorm(omega);
  const auto trace = run_scalar_cascade(p, omega);
  REQUIRE(trace.status == Status::ok);
  REQUIRE(trace.states.size() == 51);
  const double bound = uniform_log_bound(semi.value, p);
  const auto fp = fixed_point_constants(p);
  const double saturated = std::sqrt(omega.saturated_value());
  double sup = 0.0, partial = 0.0;
  for (const auto& s : trace.states) {
    sup = std::max(sup, s.ck_tilde);
    CHECK(std::isfinite(s.ck_tilde));
    CHECK(std::log(s.ck_tilde) <= bound);
    CHECK(std::log(s.ck_tilde) <= s.ln_ck_bound);
    CHECK(s.sigma_sum <= s.sigma_sum_bound);
    const double ln_ck = s.ln_ck_bound;
    CHECK(std::log(s.ck_tilde) <= fp.c_mu_prime + fp.c_mu * (std::sqrt(semi.value) + std::sqrt(*p.delta0) * ln_ck));
    // Sum over 1 <= j < k of delta_j^{1/2} against the integral of omega^{1/2}/s up to C_k.
    if (s.k >= 2) {
      const double integral = semi.integral + saturated * std::max(0.0, ln_ck);
      CHECK(partial <= integral / std::log(1.0 / std::sqrt(p.mu)));
    }
    if (s.k >= 1) partial += std::sqrt(s.delta);
  }
  CHECK(sup < k_constant(semi, p).value);
}

TEST_CASE("constant floor breaks the cascade at a finite step") {
  const auto p = log_power_params();
  const auto floor = moduli::modulus_model(moduli::Constant{1.0 / 64.0});
  CHECK_THROWS_AS(moduli::chalf_seminorm(floor), DivergenceError);
  const double k = k_constant(moduli::chalf_seminorm(moduli::modulus_model(moduli::LogPower{3.0})), p).value;
  const auto trace = run_scalar_cascade(p, floor, {50, k});
  CHECK(trace.status == Status::hypothesis_failed);
  CHECK(trace.failure_index > 0);
  CHECK(trace.failure_index < 50);
  const auto log_trace = run_scalar_cascade(p, moduli::modulus_model(moduli::LogPower{3.0}), {50, k});
  CHECK(log_trace.status == Status::ok);
}

TEST_CASE("oscillation beyond the lemma hypothesis stops the run") {
  auto p = quarter();
  p.delta0 = 0.2;
  const auto trace = run_scalar_cascade(p, moduli::modulus_model(moduli::Constant{0.2}));
  CHECK(trace.status == Status::hypothesis_failed);
  CHECK(trace.failure_index == 0);
  CHECK(trace.states.size() == 1);
}

TEST_CASE("geometric cascade on the paraboloid") {
  const auto v = sampled([](const Vec2& x) { return x.squaredNorm() / 2.0; });
  auto p = quarter();
  const auto one = [](const Vec2&) { return 1.0; };
  GeometricOptions opt;
  opt.base = Vec2::Zero();
  opt.budget = run_scalar_cascade(p, moduli::modulus_model(moduli::Zero{}));
  const auto trace = run_geometric_cascade(v, one, p, opt);
  CHECK(trace.status == Status::resolution_exhausted);
  REQUIRE(trace.states.size() >= 3);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  for (const auto& s : trace.states) {
    CHECK(s.sigma <= 3.0 * s.grid_tolerance);
    CHECK(s.sandwich_ok);
    CHECK(s.delta == 0.0);
    CHECK(std::abs(s.A.det() - 1.0) < 1e-9);
    CHECK((s.A.linear - Mat2::Identity()).norm() < 0.05);
    for (int i = 0; i < 20; ++i) {
      const double t = angle(rng);
      const Vec2 x(std::cos(t), std::sin(t));
      const double ax = (s.A.linear * x).squaredNorm();
      CHECK(ax >= s.lower_product * (1.0 - 1e-9) - 3.0 * s.grid_tolerance);
      CHECK(ax <= s.upper_product * (1.0 + 1e-9) + 3.0 * s.grid_tolerance);
    }
  }
}

TEST_CASE("geometric cascade on the anisotropic quadratic") {
  const auto v = sampled([](const Vec2& x) { return (3.0 * x.x() * x.x() + x.y() * x.y()) / 2.0; });
  const auto one = [](const Vec2&) { return 3.0; };
  GeometricOptions opt;
  opt.base = Vec2::Zero();
  const auto trace = run_geometric_cascade(v, one, quarter(), opt);
  REQUIRE(trace.states.size() >= 2);
  const auto& first = trace.states.front();
  CHECK(first.ecc_A == doctest::Approx(std::sqrt(3.0)).epsilon(1e-2));
  CHECK(std::abs(first.A.linear(0, 1)) < 1e-3);
  CHECK(first.A.linear(0, 0) / first.A.linear(1, 1) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-2));
  for (const auto& s : trace.states) {
    CHECK(std::abs(s.A.det() - 1.0) < 1e-9);
    CHECK(s.sigma <= 3.0 * s.grid_tolerance);
  }
}

TEST_CASE("geometric oscillation is dominated by the modulus at the scalar radius") {
  const geom::ConvexBody disc = geom::regular_polygon(Vec2::Zero(), 1.0, 256);
  const ScalarFn f = [](const Vec2& x) { return 1.0 + 0.05 * std::sin(4 * x.x()) * std::sin(4 * x.y()); };
  SolveOptions so;
  so.cells = 128;
  const auto v = solve({disc, f, {}, 0.05}, so).field;
  std::vector<Vec2> pts;
  std::vector<double> vals;
  const auto& g = v.grid();
  for (int j = 0; j < g.ny; j += 2) {
    for (int i = 0; i < g.nx; i += 2) {
      if (!v.valid(i, j)) continue;
      pts.push_back(g.point(i, j));
      vals.push_back(f(pts.back()));
    }
  }
  const auto omega = moduli::modulus_from_samples(pts, vals, std::size_t{48});
  auto p = quarter(0.25);
  const auto scalar = run_scalar_cascade(p, omega, {10, std::nullopt});
  REQUIRE(scalar.status == Status::ok);
  GeometricOptions opt;
  opt.budget = scalar;
  const auto trace = run_geometric_cascade(v, f, p, opt);
  REQUIRE(trace.states.size() >= 3);
  CHECK(discrete_minimum(v).norm() < 1e-3);
  for (const auto& s : trace.states) {
    const auto& b = scalar.states[s.k];
    // Sampling the modulus on every other node misses at most a Lipschitz step of 2h.
    const double sampling = 0.05 * 4.0 * std::sqrt(2.0) * 2.0 * g.h;
    CHECK(s.delta <= omega(b.ck_tilde * std::pow(p.mu, 0.5 * s.k)) + sampling);
    CHECK(s.sandwich_ok);
  }
}

TEST_CASE("open sections stop the geometric cascade") {
  const auto v = sampled([](const Vec2& x) { return x.squaredNorm() / 2.0; }, 64);
  CascadeParams p;
  p.mu = 0.9 / 9.0;
  p.c_hat = 1.0;
  GeometricOptions opt;
  opt.base = Vec2::Zero();
  opt.k_max = 3;
  const auto s = run_geometric_cascade(v, [](const Vec2&) { return 1.0; }, p, opt);
  CHECK(s.status == Status::resolution_exhausted);
  auto wide = p;
  wide.mu = 0.1;
  const auto far = sampled([](const Vec2& x) { return x.squaredNorm() / 200.0; }, 64);
  const auto t = run_geometric_cascade(far, [](const Vec2&) { return 0.01; }, wide, opt);
  CHECK(t.status == Status::open_section);
  CHECK(t.failure_index == 1);
}

TEST_CASE("calibration picks the largest consistent c_hat") {
  const std::vector<double> deltas{0.0, 0.0, 0.0};
  const std::vector<double> ladder{0.25, 2.0, 1.0, 0.5};
  const auto c = calibrate(CascadeParams{}, deltas, ladder);
  CHECK(c.params.c_hat == 1.0);
  REQUIRE(c.ladder.size() == 4);
  CHECK_FALSE(c.ladder[0].second);
  CHECK(c.ladder[1].second);
  const std::vector<double> rough{0.5};
  CHECK_THROWS_AS(calibrate(CascadeParams{}, rough, ladder), CascadeHypothesisError);
}

TEST_CASE("trace export") {
  const auto trace = run_scalar_cascade(quarter(), moduli::modulus_model(moduli::Zero{}), {4, std::nullopt});
  std::stringstream ss;
  write_trace_csv(ss, trace);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "k,sigma,delta,lnCk,det_Ak,ecc_Ak,status");
  int rows = 0;
  while (std::getline(ss, line)) ++rows;
  CHECK(rows == 5);
  const auto j = to_json(trace);
  CHECK(j.at("status") == "ok");
  CHECK(j.at("states").size() == 5);
}
