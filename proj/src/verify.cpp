#include "masec/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "masec/error.hpp"

namespace masec::verify {

namespace {

double max_component(const Mat2& m) { return m.cwiseAbs().maxCoeff(); }

bool full_block(const ScalarField2D& v, int i, int j) {
  for (int dj = -1; dj <= 1; ++dj) {
    for (int di = -1; di <= 1; ++di) {
      if (!v.valid(i + di, j + dj)) return false;
    }
  }
  return true;
}

double oscillation(const ScalarField2D& v, const sections::Section& s, const ScalarFn& f) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  const auto visit = [&](const Vec2& x) {
    const double value = f(x);
    lo = std::min(lo, value);
    hi = std::max(hi, value);
  };
  for (const auto& [i, j] : s.nodes) visit(v.grid().point(i, j));
  for (const auto& q : s.contour) visit(q);
  return hi - lo;
}

std::optional<Mat2> try_hessian(const ScalarField2D& w, const Vec2& x) {
  try {
    return hessian(w, x).matrix;
  } catch (const OutOfStencil&) {
    return std::nullopt;
  }
}

}  // namespace

BoundTerms theorem_bound_terms(double d, const moduli::Modulus& omega, double K, double C0) {
  if (!(d > 0.0 && d < 1.0)) throw InvalidInput("theorem bound needs 0 < d < 1");
  if (!(K > 0.0) || !std::isfinite(K)) throw InvalidInput("theorem bound needs a finite positive K");
  BoundTerms t;
  t.linear = std::sqrt(K) * d;
  t.dini = moduli::dini_integral(omega, 0.0, K * d, 1);
  t.weighted = K * std::sqrt(K) * d * moduli::dini_integral(omega, K * d, K, 2);
  t.value = C0 * K * (t.linear + t.dini + t.weighted);
  return t;
}

double theorem_bound(double d, const moduli::Modulus& omega, double K, double C0) {
  return theorem_bound_terms(d, omega, K, C0).value;
}

double theorem_bound(double d, const moduli::Modulus& omega, const cascade::KConstant& K, double C0) {
  return theorem_bound(d, omega, K.value, C0);
}

std::vector<double> geometric_radii(double lo, double hi, int count) {
  if (!(lo > 0.0 && lo < hi) || count < 2) throw InvalidInput("radii need 0 < lo < hi and at least two values");
  std::vector<double> r(count);
  for (int i = 0; i < count; ++i) r[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1));
  r.back() = hi;
  return r;
}

moduli::Modulus empirical_hessian_modulus(const ScalarField2D& v, const geom::ConvexBody& inner,
                                          std::span<const double> radii, int jobs) {
  if (radii.empty()) throw InvalidInput("empirical modulus needs radii");
  for (std::size_t i = 1; i < radii.size(); ++i) {
    if (!(radii[i] > radii[i - 1])) throw InvalidInput("radii must be strictly increasing");
  }
  const Grid& g = v.grid();
  for (const auto& p : inner.vertices()) {
    if (v.domain().signed_distance(p) > -2.0 * g.h) throw InvalidInput("inner region needs a two-cell margin inside the domain");
  }

  std::vector<int> index(g.size(), -1);
  std::vector<Mat2> hess;
  std::vector<std::pair<int, int>> nodes;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (!inner.contains(g.point(i, j)) || !full_block(v, i, j)) continue;
      index[g.index(i, j)] = static_cast<int>(hess.size());
      hess.push_back(nodal_hessian(v, i, j));
      nodes.emplace_back(i, j);
    }
  }
  const double reach = radii.back() / g.h;
  const int span = static_cast<int>(std::floor(reach + 1e-9));
  struct Offset {
    int di, dj;
    std::size_t bin;
  };
  std::vector<Offset> offsets;
  for (int dj = 0; dj <= span; ++dj) {
    for (int di = -span; di <= span; ++di) {
      if (dj == 0 && di <= 0) continue;
      const double dist = g.h * std::hypot(di, dj);
      const auto it = std::lower_bound(radii.begin(), radii.end(), dist * (1.0 - 1e-12));
      if (it == radii.end()) continue;
      offsets.push_back({di, dj, static_cast<std::size_t>(it - radii.begin())});
    }
  }

  const std::size_t bins = radii.size();
  const int workers = std::max(1, std::min(jobs, static_cast<int>(nodes.size()) / 64 + 1));
  std::vector<std::vector<double>> partial(workers, std::vector<double>(bins, 0.0));
  std::vector<std::vector<std::size_t>> counts(workers, std::vector<std::size_t>(bins, 0));
  const auto work = [&](int w) {
    for (std::size_t n = w; n < nodes.size(); n += workers) {
      const auto [i, j] = nodes[n];
      for (const auto& o : offsets) {
        const int ni = i + o.di, nj = j + o.dj;
        if (!g.in_range(ni, nj)) continue;
        const int m = index[g.index(ni, nj)];
        if (m < 0) continue;
        const double diff = max_component(hess[n] - hess[m]);
        partial[w][o.bin] = std::max(partial[w][o.bin], diff);
        ++counts[w][o.bin];
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  std::vector<double> values(bins, 0.0);
  std::size_t first = 0;
  for (int w = 0; w < workers; ++w) {
    first += counts[w][0];
    for (std::size_t b = 0; b < bins; ++b) values[b] = std::max(values[b], partial[w][b]);
  }
  if (first == 0) throw ResolutionExhausted("no node pairs within the smallest radius");
  for (std::size_t b = 1; b < bins; ++b) values[b] = std::max(values[b], values[b - 1]);
  return moduli::Modulus(std::vector<double>(radii.begin(), radii.end()), std::move(values), radii.back());
}

ApproximantTrace build_approximants(const ScalarField2D& v, const ScalarFn& f, const cascade::CascadeParams& p,
                                    const ApproximantOptions& options) {
  p.validate();
  const Vec2 x0 = options.base ? *options.base : cascade::discrete_minimum(v);
  const double f0 = f(x0);
  if (!(f0 > 0.0)) throw InvalidInput("rhs must be positive at the base point");
  const double scale = std::sqrt(f0);
  const Mat2 hv = hessian(v, x0).matrix;
  const double v0 = v.value_at(x0);

  ApproximantTrace trace;
  std::vector<ScalarField2D> ws;
  std::vector<geom::ConvexBody> bodies;
  for (int k = 1; k <= options.k_max; ++k) {
    const double height = std::pow(p.mu, k) * scale;
    std::optional<sections::Section> s;
    try {
      s = sections::extract_section(v, x0, height, Vec2::Zero());
    } catch (const OpenSection& e) {
      if (trace.entries.empty()) continue;
      trace.status = cascade::Status::open_section;
      trace.message = e.what();
      break;
    } catch (const ResolutionExhausted& e) {
      trace.status = cascade::Status::resolution_exhausted;
      trace.message = e.what();
      break;
    }
    if (cascade::minimal_width(s->body) < 8.0 * v.h()) {
      trace.status = cascade::Status::resolution_exhausted;
      trace.message = "section narrower than the resolution limit";
      break;
    }
    const Problem local{s->body, [f0](const Vec2&) { return f0; }, [&v](const Vec2& x) { return v.value_at(x); },
                        std::nullopt};
    SolveOptions so;
    so.cells = options.cells;
    so.fallback = true;
    std::optional<SolveResult> sol;
    try {
      sol = solve(local, so);
    } catch (const Error& e) {
      trace.status = cascade::Status::resolution_exhausted;
      trace.message = std::string("approximant solve failed: ") + e.what();
      break;
    }
    const ScalarField2D& w = sol->field;

    ApproximantEntry e;
    e.k = k;
    e.height = height;
    e.spacing = w.h();
    e.delta = oscillation(v, *s, f) / f0;
    const Grid& wg = w.grid();
    for (int j = 0; j < wg.ny; ++j) {
      for (int i = 0; i < wg.nx; ++i) {
        if (!w.valid(i, j)) continue;
        const Vec2 x = wg.point(i, j);
        const double vx = v.value_at(x);
        const double diff = std::abs(w(i, j) - vx);
        e.sup_diff = std::max(e.sup_diff, diff);
        const double depth = std::abs(vx - v0 - height);
        if (e.delta > 0.0 && depth > 1e-3 * height) e.bracket = std::max(e.bracket, diff / (e.delta * depth));
      }
    }
    e.hess_at_0 = hessian(w, x0).matrix;
    e.hess_at_0_diff = (e.hess_at_0 - hv).norm();
    trace.entries.push_back(e);
    ws.push_back(std::move(sol->field));
    bodies.push_back(s->body);
  }

  for (std::size_t n = 0; n + 1 < ws.size(); ++n) {
    auto& e = trace.entries[n];
    const auto a0 = try_hessian(ws[n], x0), b0 = try_hessian(ws[n + 1], x0);
    if (a0 && b0) e.step_at_0 = (*a0 - *b0).norm();
    if (n + 2 >= ws.size()) continue;
    const ScalarField2D& next = ws[n + 1];
    const Grid& g = next.grid();
    const double s = g.h;
    double d2 = 0.0, d3 = 0.0;
    for (int j = 0; j < g.ny; ++j) {
      for (int i = 0; i < g.nx; ++i) {
        const Vec2 x = g.point(i, j);
        if (!bodies[n + 2].contains(x)) continue;
        const auto a = try_hessian(ws[n], x), b = try_hessian(next, x);
        if (!a || !b) continue;
        d2 = std::max(d2, max_component(*a - *b));
        for (const Vec2& dir : {Vec2(1.0, 0.0), Vec2(0.0, 1.0)}) {
          const auto ap = try_hessian(ws[n], x + s * dir), am = try_hessian(ws[n], x - s * dir);
          const auto bp = try_hessian(next, x + s * dir), bm = try_hessian(next, x - s * dir);
          if (!ap || !am || !bp || !bm) continue;
          d3 = std::max(d3, max_component(((*ap - *bp) - (*am - *bm)) / (2.0 * s)));
        }
      }
    }
    e.d2_diff = d2;
    e.d3_diff = d3;
    e.d3_scaled = d3 * std::pow(p.mu, 0.5 * (e.k - 1));
  }
  return trace;
}

Decomposition decomposition(const ScalarField2D& v, const ScalarField2D& w, const Vec2& x0, const Vec2& z) {
  const Mat2 v0 = hessian(v, x0).matrix, vz = hessian(v, z).matrix;
  const Mat2 w0 = hessian(w, x0).matrix, wz = hessian(w, z).matrix;
  return {(vz - v0).norm(), (w0 - v0).norm(), (vz - wz).norm(), (wz - w0).norm()};
}

moduli::Modulus sampled_rhs_modulus(const ScalarField2D& v, const ScalarFn& f, std::size_t bins) {
  const Grid& g = v.grid();
  std::size_t count = 0;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) count += v.valid(i, j) ? 1 : 0;
  }
  const int stride = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count) / 4000.0))));
  std::vector<Vec2> pts;
  std::vector<double> vals;
  for (int j = 0; j < g.ny; j += stride) {
    for (int i = 0; i < g.nx; i += stride) {
      if (!v.valid(i, j)) continue;
      pts.push_back(g.point(i, j));
      vals.push_back(f(pts.back()));
    }
  }
  for (const auto& q : v.domain().vertices()) {
    pts.push_back(q);
    vals.push_back(f(q));
  }
  return moduli::modulus_from_samples(pts, vals, bins);
}

PipelineResult run_pipeline(const Problem& problem, const cascade::CascadeParams& p, const ReportOptions& options) {
  p.validate();
  return run_pipeline(problem, solve(problem, options.solve), p, options);
}

PipelineResult run_pipeline(const Problem& problem, SolveResult solution, const cascade::CascadeParams& p,
                            const ReportOptions& options) {
  p.validate();
  if (!(options.d_max < 1.0)) throw InvalidInput("d-grid must stay below 1");
  const ScalarField2D& v = solution.field;
  const Vec2 x0 = cascade::discrete_minimum(v);
  const double f0 = problem.rhs(x0);
  auto omega = sampled_rhs_modulus(v, problem.rhs, options.omega_bins).scaled(1.0 / f0);
  const auto semi = moduli::chalf_seminorm(omega);

  BoundReport r;
  r.K = cascade::k_constant(semi, p);
  r.seminorm = semi.value;
  r.h = v.h();
  r.base = x0;
  auto scalar = cascade::run_scalar_cascade(p, omega, {options.k_max, r.K.value});
  cascade::GeometricOptions go;
  go.k_max = options.k_max;
  go.base = x0;
  go.budget = scalar;
  go.keep_sections = false;
  auto geometric = cascade::run_geometric_cascade(v, problem.rhs, p, go);
  r.scalar_status = scalar.status;
  r.geometric_status = geometric.status;
  r.geometric_steps = static_cast<int>(geometric.states.size());

  const auto inner = problem.domain.dilated(x0, options.inner_dilation);
  r.d = geometric_radii(options.d_min_cells * v.h(), options.d_max, options.d_count);
  const auto measured = empirical_hessian_modulus(v, inner, r.d, options.jobs);
  r.measured = measured.values();
  std::vector<double> unit(r.d.size());
  r.C0_calibrated = 0.0;
  for (std::size_t j = 0; j < r.d.size(); ++j) {
    unit[j] = theorem_bound(r.d[j], omega, r.K, 1.0);
    r.C0_calibrated = std::max(r.C0_calibrated, r.measured[j] / unit[j]);
  }
  r.C0 = options.C0 ? *options.C0 : r.C0_calibrated;
  r.margin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < r.d.size(); ++j) {
    r.bound.push_back(r.C0 * unit[j]);
    const double m = r.bound[j] > 0.0 ? (r.bound[j] - r.measured[j]) / r.bound[j] : 0.0;
    r.margin = std::min(r.margin, m);
  }
  return {std::move(r), std::move(solution), std::move(omega), std::move(scalar), std::move(geometric)};
}

BoundReport assemble_report(const Problem& problem, const cascade::CascadeParams& p, const ReportOptions& options) {
  return run_pipeline(problem, p, options).report;
}

nlohmann::json to_json(const BoundReport& r) {
  return {{"d", r.d},
          {"bound", r.bound},
          {"measured", r.measured},
          {"K", {{"value", r.K.value}, {"C1", r.K.C1}, {"C2", r.K.C2}, {"seminorm", r.K.seminorm}}},
          {"C0", r.C0},
          {"C0_calibrated", r.C0_calibrated},
          {"margin", r.margin},
          {"seminorm", r.seminorm},
          {"h", r.h},
          {"base", {r.base.x(), r.base.y()}},
          {"scalar_status", cascade::to_string(r.scalar_status)},
          {"geometric_status", cascade::to_string(r.geometric_status)},
          {"geometric_steps", r.geometric_steps}};
}

nlohmann::json to_json(const ApproximantTrace& t) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : t.entries) {
    nlohmann::json j{{"k", e.k},           {"height", e.height},   {"spacing", e.spacing},
                     {"delta", e.delta},   {"sup_diff", e.sup_diff}, {"bracket", e.bracket},
                     {"hess_at_0_diff", e.hess_at_0_diff}};
    if (e.d2_diff) j["d2_diff"] = *e.d2_diff;
    if (e.d3_diff) j["d3_diff"] = *e.d3_diff;
    if (e.d3_scaled) j["d3_scaled"] = *e.d3_scaled;
    if (e.step_at_0) j["step_at_0"] = *e.step_at_0;
    entries.push_back(std::move(j));
  }
  return {{"status", cascade::to_string(t.status)}, {"message", t.message}, {"entries", std::move(entries)}};
}

void write_bound_csv(std::ostream& out, const BoundReport& r) {
  std::ostringstream s;
  s.precision(12);
  s << "d,bound,measured\n";
  for (std::size_t j = 0; j < r.d.size(); ++j) s << r.d[j] << ',' << r.bound[j] << ',' << r.measured[j] << '\n';
  out << s.str();
}

void write_approximant_csv(std::ostream& out, const ApproximantTrace& t) {
  std::ostringstream s;
  s.precision(12);
  s << "k,sup_diff,hess_at_0_diff,d2_diff,d3_diff,bracket\n";
  for (const auto& e : t.entries) {
    s << e.k << ',' << e.sup_diff << ',' << e.hess_at_0_diff << ',';
    if (e.d2_diff) s << *e.d2_diff;
    s << ',';
    if (e.d3_diff) s << *e.d3_diff;
    s << ',' << e.bracket << '\n';
  }
  out << s.str();
}

}  // namespace masec::verify
