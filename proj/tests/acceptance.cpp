// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "masec/error.hpp"
#include "masec/runner.hpp"

using namespace masec;
using namespace masec::cascade;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const geom::ConvexBody box(double r) { return geom::ConvexBody({{-r, -r}, {r, -r}, {r, r}, {-r, r}}); }
geom::ConvexBody unit_disc(int sides = 256) { return geom::regular_polygon(Vec2::Zero(), 1.0, sides); }
ScalarFn constant(double c) {
  return [c](const Vec2&) { return c; };
}
ScalarFn sin_rhs(double a) {
  return [a](const Vec2& x) { return 1.0 + a * std::sin(4.0 * x.x()) * std::sin(4.0 * x.y()); };
}

Outcome ac1() {
  double worst = 0.0;
  for (double alpha : {0.25, 0.5, 1.0}) {
    const double got = moduli::chalf_seminorm(moduli::modulus_model(moduli::Holder{alpha, 1.0})).value;
    worst = std::max(worst, std::abs(got / std::pow(2.0 / alpha, 2.0) - 1.0));
  }
  const double lp = moduli::chalf_seminorm(moduli::modulus_model(moduli::LogPower{3.0})).value;
  const double lp_err = std::abs(lp / 2.25 - 1.0);
  return {worst <= 1e-5 && lp_err <= 1e-4, fmt("holder rel err %.2e (tol 1e-5), log-power %.6f rel err %.2e (tol 1e-4)", worst, lp, lp_err)};
}

Outcome ac2() {
  const auto w = moduli::modulus_model(moduli::LogPower{3.0});
  const double alpha = 0.05;
  const double r0 = w.knots().front();
  const double small = w(r0) / std::pow(r0, alpha);
  const double edge = w(std::exp(-4.0)) / std::exp(-4.0 * alpha);
  bool converges = false;
  double value = 0.0;
  try {
    value = moduli::chalf_seminorm(w).value;
    converges = std::isfinite(value);
  } catch (const DivergenceError&) {
  }
  const double growth = small / edge;
  return {growth > 100.0 && converges,
          fmt("omega/r^0.05 at r=%.0e is %.2e x its value at e^-4 (need > 100); semi-norm %.4f", r0, growth, value)};
}

Outcome ac3() {
  const geom::ConvexBody square({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  const ScalarFn exact = [](const Vec2& x) { return std::exp(x.x()) + std::exp(x.y()); };
  const Problem p{square, [](const Vec2& x) { return std::exp(x.x() + x.y()); }, exact, std::nullopt};
  std::vector<double> errs;
  for (int cells : {32, 64, 128}) {
    SolveOptions o;
    o.cells = cells;
    errs.push_back(max_abs_error(solve(p, o).field, exact));
  }
  const double o1 = std::log2(errs[0] / errs[1]), o2 = std::log2(errs[1] / errs[2]);
  SolveOptions o;
  o.cells = 256;
  const double disc_err = max_abs_error(solve({unit_disc(1024), constant(1.0), {}, std::nullopt}, o).field,
                                        [](const Vec2& x) { return (x.squaredNorm() - 1.0) / 2.0; });
  return {std::min(o1, o2) >= 1.8 && disc_err <= 5e-4,
          fmt("orders %.3f, %.3f (need >= 1.8); disc error %.2e at h=1/128 (need <= 5e-4)", o1, o2, disc_err)};
}

Outcome ac4() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const double a = 0.15 * u(rng), b = 0.15 * u(rng), w = 1.0 + 3.0 * u(rng), s = 2.0 * std::numbers::pi * u(rng);
    const ScalarFn f1 = [a, w, s](const Vec2& x) { return 1.0 + a * std::sin(w * x.x() + s) * std::cos(w * x.y()); };
    const ScalarFn f2 = [b, f1](const Vec2& x) { return f1(x) + b * (1.0 + std::sin(x.x() - x.y())) / 2.0; };
    SolveOptions o;
    o.cells = 48;
    const auto v1 = solve({unit_disc(), f1, {}, std::nullopt}, o);
    const auto v2 = solve({unit_disc(), f2, {}, std::nullopt}, o);
    const auto r = comparison_check(v1.field, v2.field, f1, f2, 10.0);
    if (!r.pass) ++violations;
    worst = std::max(worst, r.max_violation / (v1.field.h() * v1.field.h()));
  }
  return {violations == 0, fmt("%d of 20 pairs violate beyond 10 h^2; worst violation %.2f h^2", violations, worst)};
}

Outcome ac5() {
  const double pi = std::numbers::pi;
  const auto sample = [](const ScalarFn& fn) { return ScalarField2D::sample(box(2.0), grid_for(box(2.0), 400), fn); };
  const auto para = sample([](const Vec2& x) { return x.squaredNorm() / 2.0; });
  const auto aniso = sample([](const Vec2& x) { return (3.0 * x.x() * x.x() + x.y() * x.y()) / 2.0; });
  const double h = para.h();
  double haus = 0.0, lo = 1e300, hi = 0.0;
  for (double height : {0.5, 0.2, 0.1, 0.05, 0.02}) {
    const auto s = sections::extract_section(para, Vec2::Zero(), height);
    haus = std::max(haus, geom::hausdorff_distance(s.body, geom::regular_polygon(Vec2::Zero(), std::sqrt(2.0 * height), 512)));
    const double ratio = sections::volume_check(s).ratio;
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
    const auto e = sections::extract_section(aniso, Vec2::Zero(), height);
    Mat2 shape;
    shape << 3.0 / (2.0 * height), 0.0, 0.0, 1.0 / (2.0 * height);
    const auto pts = geom::Ellipsoid(Vec2::Zero(), shape).boundary(512);
    haus = std::max(haus, geom::hausdorff_distance(e.body, geom::ConvexBody(pts)));
  }
  const double ecc = sections::eccentricity_check(sections::extract_section(aniso, Vec2::Zero(), 0.3)).ratio;
  const double ecc_err = std::abs(ecc / std::sqrt(3.0) - 1.0);
  const double band = hi / lo - 1.0;
  return {haus <= 2.0 * h && band <= 0.01 && ecc_err <= 0.01,
          fmt("Hausdorff %.2f h (need <= 2h); area/h in [%.4f, %.4f] vs 2pi=%.4f, spread %.2f%%; eccentricity %.4f (err %.2f%%)",
              haus / h, lo, hi, 2.0 * pi, 100.0 * band, ecc, 100.0 * ecc_err)};
}

Outcome ac6() {
  const auto sq = geom::john_ellipsoid(geom::ConvexBody({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}));
  const Vec2 ax = sq.axes();
  const double err = std::max(std::abs(ax(0) - std::sqrt(2.0)), std::abs(ax(1) - std::sqrt(2.0)));
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  int ok = 0;
  for (int i = 0; i < 50; ++i) {
    std::vector<Vec2> pts;
    for (int j = 0; j < 24; ++j) pts.emplace_back(g(rng), (0.2 + 0.8 * std::abs(g(rng))) * g(rng));
    const auto body = geom::ConvexBody::hull(pts);
    const auto rep = geom::check_sandwich(body, geom::john_ellipsoid(body), 1e-6);
    ok += rep.outer_ok && rep.inner_ok;
  }
  return {err <= 1e-3 && ok == 50, fmt("square axes error %.2e (tol 1e-3); sandwich holds on %d/50 hulls", err, ok)};
}

Outcome ac7() {
  const auto sample = [](const ScalarFn& fn) { return ScalarField2D::sample(box(2.0), grid_for(box(2.0), 400), fn); };
  const auto para = sample([](const Vec2& x) { return x.squaredNorm() / 2.0; });
  const double c = sections::separation_check(para, Vec2::Zero(), 0.5, 0.25).constant;
  const double err = std::abs(c - 8.0 / 9.0);
  const std::vector<Mat2> shapes = [] {
    std::vector<Mat2> m(5);
    m[0] << 3, 0, 0, 1;
    m[1] << 1, 0, 0, 4;
    m[2] << 2, 0.8, 0.8, 1;
    m[3] << 1.5, -0.6, -0.6, 0.8;
    m[4] << 5, 1, 1, 0.6;
    return m;
  }();
  double lowest = 1e300;
  for (const auto& m : shapes) {
    const auto v = sample([m](const Vec2& x) { return 0.5 * x.dot(m * x); });
    for (double lambda : {0.5, 0.75, 0.9}) {
      lowest = std::min(lowest, sections::separation_check(v, Vec2::Zero(), 0.3, lambda).constant);
    }
  }
  return {err <= 1e-2 && lowest > 0.1,
          fmt("radial constant %.4f vs 8/9 (err %.2e, tol 1e-2); lowest anisotropic constant %.3f (need > 0.1)", c, err, lowest)};
}

Outcome ac8() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  int sum_violations = 0;
  for (int draw = 0; draw < 100; ++draw) {
    CascadeParams q;
    q.c_hat = 0.3 + u(rng);
    q.mu = (0.05 + 0.9 * u(rng)) / (9.0 * q.c_hat * q.c_hat);
    q.mu = std::min(q.mu, 0.99 * q.c_hat1 * q.c_hat1);
    q.sigma0 = q.sigma_cap() * u(rng);
    const double room = std::sqrt(q.mu) / (3.0 * q.c_hat);
    std::vector<double> deltas;
    double sigma = q.sigma0, sum = 0.0, dsum = 0.0;
    for (int k = 1; k <= 10; ++k) {
      deltas.push_back(std::pow(std::max(0.0, room - sigma * q.mu) * u(rng), 2));
      sum += sigma;
      sigma = step_sigma(sigma, deltas.back(), q, k - 1);
      dsum += std::sqrt(deltas.back());
      const double closed = sigma_closed_form(k, q, deltas);
      if (sigma > 0.0) worst = std::max(worst, std::abs(closed - sigma) / sigma);
      if (sum + sigma > sigma_sum_bound(q, dsum)) ++sum_violations;
    }
  }
  return {worst <= 1e-12 && sum_violations == 0,
          fmt("max relative gap %.2e (tol 1e-12) over 100 draws x 10 steps; partial-sum violations %d", worst, sum_violations)};
}

Outcome ac9() {
  CascadeParams p;
  p.mu = 1.0 / 16.0;
  p.c_hat = 0.5;
  p.delta0 = 1.0 / 64.0;
  const auto lp = moduli::modulus_model(moduli::LogPower{3.0});
  const auto semi = moduli::chalf_seminorm(lp);
  const double K = k_constant(semi, p).value;
  const auto trace = run_scalar_cascade(p, lp, {50, K});
  const double bound = uniform_log_bound(semi.value, p);
  double sup = 0.0;
  bool under = true;
  for (const auto& s : trace.states) {
    sup = std::max(sup, s.ck_tilde);
    under = under && std::isfinite(s.ck_tilde) && std::log(s.ck_tilde) <= bound;
  }
  const auto floor = run_scalar_cascade(p, moduli::modulus_model(moduli::Constant{1.0 / 64.0}), {50, K});
  const bool contrast = floor.status == Status::hypothesis_failed && floor.failure_index > 0 && floor.failure_index <= 50;
  return {trace.status == Status::ok && trace.states.size() == 51 && under && contrast,
          fmt("log-power: %zu states, %s, sup C~ = %.3f, ln sup = %.3f <= %.3f; constant floor: %s at k = %d",
              trace.states.size() - 1, to_string(trace.status), sup, std::log(sup), bound, to_string(floor.status),
              floor.failure_index)};
}

Outcome ac10() {
  SolveOptions o;
  o.cells = 256;
  const Problem prob{unit_disc(1024), constant(1.0), {}, std::nullopt};
  const auto v = solve(prob, o).field;
  CascadeParams base;
  GeometricOptions go;
  go.k_max = 10;
  const auto probe = run_geometric_cascade(v, prob.rhs, base, go);
  std::vector<double> deltas;
  for (const auto& s : probe.states) deltas.push_back(s.delta);
  const std::vector<double> ladder{1.0, 0.5, 0.25, 0.125, 0.0625};
  const auto cal = calibrate(base, deltas, ladder);
  const double K = k_constant(0.0, cal.params).value;
  go.budget = run_scalar_cascade(cal.params, moduli::modulus_model(moduli::Zero{}));
  const auto trace = run_geometric_cascade(v, prob.rhs, cal.params, go);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  bool sigma_ok = !trace.states.empty(), det_ok = true, k_ok = true;
  double worst_sigma = 0.0, worst_det = 0.0, worst_ax = 0.0;
  for (const auto& s : trace.states) {
    worst_sigma = std::max(worst_sigma, s.sigma / s.grid_tolerance);
    sigma_ok = sigma_ok && s.sigma <= 3.0 * s.grid_tolerance;
    worst_det = std::max(worst_det, std::abs(s.A.det() - 1.0));
    det_ok = det_ok && std::abs(s.A.det() - 1.0) <= 1e-9;
    for (int i = 0; i < 100; ++i) {
      const double t = angle(rng);
      const double ax = (s.A.linear * Vec2(std::cos(t), std::sin(t))).squaredNorm();
      worst_ax = std::max(worst_ax, ax);
      k_ok = k_ok && ax <= K;
    }
  }
  return {sigma_ok && det_ok && k_ok,
          fmt("%zu steps until %s; max sigma/tol %.2f (need <= 3); max |det-1| %.1e; max |Ax|^2 %.4f <= K = %.3f (c_hat %.3g)",
              trace.states.size(), to_string(trace.status), worst_sigma, worst_det, worst_ax, K, cal.params.c_hat)};
}

Outcome ac11() {
  std::vector<double> c0;
  double worst_margin = 1e300;
  std::string per;
  for (double a : {0.01, 0.02, 0.05}) {
    verify::ReportOptions o;
    o.solve.cells = 256;
    const auto r = verify::run_pipeline({unit_disc(), sin_rhs(a), {}, std::nullopt}, CascadeParams{}, o).report;
    c0.push_back(r.C0_calibrated);
    worst_margin = std::min(worst_margin, r.margin);
    per += fmt(" a=%.2f:C0=%.3e,K=%.1f", a, r.C0_calibrated, r.K.value);
  }
  const double spread = *std::max_element(c0.begin(), c0.end()) / *std::min_element(c0.begin(), c0.end());
  return {worst_margin >= 0.0 && spread < 2.0,
          fmt("min margin %.2e (need >= 0); C0 spread %.2fx (need < 2x);", worst_margin, spread) + per};
}

Outcome ac12() {
  SolveOptions o;
  o.cells = 256;
  const auto f = sin_rhs(0.05);
  const auto v = solve({unit_disc(), f, {}, std::nullopt}, o).field;
  CascadeParams p;
  p.mu = 0.25;
  p.c_hat = 0.5;
  verify::ApproximantOptions ao;
  ao.k_max = 12;
  const auto t = verify::build_approximants(v, f, p, ao);
  if (t.entries.size() < 2) return {false, fmt("only %zu approximants before %s", t.entries.size(), to_string(t.status))};
  int inversions = 0;
  for (std::size_t i = 1; i < t.entries.size(); ++i) inversions += t.entries[i].hess_at_0_diff > t.entries[i - 1].hess_at_0_diff;
  const double first = t.entries.front().hess_at_0_diff, last = t.entries.back().hess_at_0_diff;
  return {inversions <= 1 && last < 0.1 * first,
          fmt("%zu sections until %s; |D2w_k(0)-D2v(0)| from %.2e to %.2e (ratio %.3f, need < 0.1); inversions %d",
              t.entries.size(), to_string(t.status), first, last, last / first, inversions)};
}

Outcome ac13() {
  namespace fs = std::filesystem;
  const auto j = nlohmann::json::parse(R"json({
    "problem": {"domain": {"kind": "disc", "radius": 1.0, "sides": 256},
                "rhs": {"kind": "expr", "expression": "1 + 0.05 * sin(4*x) * sin(4*y)"}},
    "solver": {"cells": 128, "fallback": true},
    "cascade": {"params": {"mu": 0.0625}, "calibrate": true},
    "sections": {"count": 4},
    "verify": {"approximant_cells": 48},
    "seed": 13
  })json");
  const auto cfg = config::from_json(j);
  const auto root = fs::temp_directory_path() / "masec_acceptance_determinism";
  fs::remove_all(root);
  std::ostringstream log;
  const auto a = runner::run(cfg, runner::Command::all, {root / "a", 1, std::nullopt, false}, log);
  const auto b = runner::run(cfg, runner::Command::all, {root / "b", 2, std::nullopt, false}, log);
  if (a.exit_code != 0 || b.exit_code != 0) return {false, fmt("runs exited %d and %d: %s", a.exit_code, b.exit_code, a.message.c_str())};
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  int csv = 0, differ = 0;
  for (const auto& name : a.outputs) {
    if (fs::path(name).extension() != ".csv") continue;
    ++csv;
    differ += slurp(root / "a" / name) != slurp(root / "b" / name);
  }
  return {csv > 0 && differ == 0 && a.outputs == b.outputs, fmt("%d CSV files compared across two runs (jobs 1 and 2); %d differ", csv, differ)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"AC1 semi-norm oracle", ac1},          {"AC2 non-Holder fixture", ac2},
      {"AC3 solver convergence", ac3},        {"AC4 comparison principle", ac4},
      {"AC5 section geometry", ac5},          {"AC6 John ellipse", ac6},
      {"AC7 separation lemma", ac7},          {"AC8 recursion exactness", ac8},
      {"AC9 cascade uniform bound", ac9},     {"AC10 geometric cascade fidelity", ac10},
      {"AC11 bound pipeline", ac11},          {"AC12 approximant convergence", ac12},
      {"AC13 determinism", ac13},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("acceptance: %zu criteria evaluated, %d failed\n", criteria.size(), failures);
  return failures;
}
