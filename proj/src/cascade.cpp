#include "masec/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "masec/error.hpp"
#include "masec/masolver.hpp"

namespace masec::cascade {

namespace {

const double kSqrt2 = std::sqrt(2.0);

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) throw InvalidInput(std::string("cascade parameter ") + name + " must be positive");
}

double eccentricity_of(const Mat2& a) {
  Eigen::JacobiSVD<Mat2> svd(a);
  const auto s = svd.singularValues();
  return s(1) > 0.0 ? s(0) / s(1) : std::numeric_limits<double>::infinity();
}

}  // namespace

double CascadeParams::contraction() const { return c_hat * std::sqrt(mu); }

double CascadeParams::sigma_cap() const {
  const double inv = 1.0 / static_cast<double>(n);
  return (1.0 - inv) / (1.0 + inv);
}

void CascadeParams::validate() const {
  if (!(mu > 0.0 && mu < 1.0)) throw InvalidInput("cascade parameter mu must lie in (0, 1)");
  require_positive(c_hat, "c_hat");
  require_positive(c_hat0, "c_hat0");
  require_positive(c_hat1, "c_hat1");
  require_positive(c_hat2, "c_hat2");
  require_positive(c_hat3, "c_hat3");
  require_positive(c4, "c4");
  require_positive(c5, "c5");
  require_positive(c6, "c6");
  require_positive(C0, "C0");
  if (!(c3 > 0.0 && c3 < 1.0)) throw InvalidInput("cascade parameter c3 must lie in (0, 1)");
  if (n < 1) throw InvalidInput("cascade parameter n must be at least 1");
  if (!(mu < c_hat1 * c_hat1)) throw InvalidInput("cascade parameter mu must be below c_hat1^2");
  if (!(mu < 1.0 / (9.0 * c_hat * c_hat))) throw InvalidInput("cascade parameter mu must be below 1/(3 c_hat)^2");
  if (!(sigma0 >= 0.0 && sigma0 <= sigma_cap() * (1.0 + 1e-12)))
    throw InvalidInput("cascade parameter sigma0 must lie in [0, (1 - 1/n)/(1 + 1/n)]");
  if (delta0 && !(*delta0 >= 0.0 && std::isfinite(*delta0))) throw InvalidInput("cascade parameter delta0 must be non-negative");
}

nlohmann::json to_json(const CascadeParams& p) {
  nlohmann::json j{{"mu", p.mu},         {"c_hat", p.c_hat}, {"c_hat0", p.c_hat0}, {"c_hat1", p.c_hat1},
                   {"c_hat2", p.c_hat2}, {"c_hat3", p.c_hat3}, {"c3", p.c3},       {"c4", p.c4},
                   {"c5", p.c5},         {"c6", p.c6},       {"C0", p.C0},         {"n", p.n},
                   {"sigma0", p.sigma0}};
  if (p.delta0) j["delta0"] = *p.delta0;
  return j;
}

CascadeParams params_from_json(const nlohmann::json& j) {
  CascadeParams p;
  const auto get = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  get("mu", p.mu);
  get("c_hat", p.c_hat);
  get("c_hat0", p.c_hat0);
  get("c_hat1", p.c_hat1);
  get("c_hat2", p.c_hat2);
  get("c_hat3", p.c_hat3);
  get("c3", p.c3);
  get("c4", p.c4);
  get("c5", p.c5);
  get("c6", p.c6);
  get("C0", p.C0);
  get("sigma0", p.sigma0);
  if (j.contains("n")) p.n = j.at("n").get<int>();
  if (j.contains("delta0") && !j.at("delta0").is_null()) p.delta0 = j.at("delta0").get<double>();
  return p;
}

double step_sigma(double sigma, double delta, const CascadeParams& p, int index) {
  if (!(sigma >= 0.0) || !(delta >= 0.0)) throw InvalidInput("sigma and delta must be non-negative");
  const double root_mu = std::sqrt(p.mu);
  const double inner = sigma * p.mu + std::sqrt(delta);
  if (3.0 * p.c_hat * inner > root_mu * (1.0 + 1e-14)) throw CascadeHypothesisError("3 c_hat (sigma mu + delta^1/2) <= mu^1/2", index);
  if (root_mu > p.c_hat1) throw CascadeHypothesisError("mu^1/2 <= c_hat1", index);
  return p.c_hat * inner / root_mu;
}

double sigma_closed_form(int k, const CascadeParams& p, std::span<const double> deltas) {
  if (k < 0) throw InvalidInput("step index must be non-negative");
  if (deltas.size() < static_cast<std::size_t>(k)) throw InvalidInput("sigma_closed_form needs at least k oscillations");
  const double q = p.contraction();
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += std::pow(q, k - i) * std::sqrt(deltas[i]);
  return std::pow(q, k) * p.sigma0 + sum / p.mu;
}

double sigma_sum_bound(const CascadeParams& p, double delta_sqrt_sum) {
  const double q = p.contraction();
  return p.sigma0 / (1.0 - q) + p.c_hat / (std::sqrt(p.mu) * (1.0 - q)) * delta_sqrt_sum;
}

AdmissibilityReport delta_admissibility(double delta0, const CascadeParams& p) {
  AdmissibilityReport r;
  const double root_mu = std::sqrt(p.mu);
  const double inner = std::max(0.0, 1.0 / (3.0 * p.c_hat) - p.sigma_cap() * root_mu);
  r.term2 = p.mu * inner * inner;
  const double q = p.contraction();
  const double t3 = root_mu * (1.0 - q) * std::log(1.0 / root_mu) / p.c_hat2;
  r.term3 = q < 1.0 ? t3 * t3 : 0.0;
  r.bound = r.term1;
  if (r.term2 < r.bound) {
    r.bound = r.term2;
    r.binding = 2;
  }
  if (r.term3 < r.bound) {
    r.bound = r.term3;
    r.binding = 3;
  }
  r.admissible = delta0 >= 0.0 && delta0 < r.bound;
  return r;
}

KConstant k_constant(double seminorm, const CascadeParams& p) {
  const double q = p.contraction();
  if (!(q < 1.0)) throw InvalidInput("K requires c_hat mu^{1/2} < 1");
  if (!(seminorm >= 0.0) || !std::isfinite(seminorm)) throw InvalidInput("K requires a finite non-negative semi-norm");
  KConstant k;
  k.seminorm = seminorm;
  k.C1 = p.c_hat0 * std::exp(p.c_hat3 / (1.0 - q));
  k.C2 = p.c_hat2 / (std::sqrt(p.mu) * (1.0 - q) * std::log(1.0 / std::sqrt(p.mu)));
  k.value = k.C1 * std::exp(k.C2 * std::sqrt(seminorm));
  return k;
}

KConstant k_constant(const moduli::SemiNormResult& seminorm, const CascadeParams& p) {
  return k_constant(seminorm.value, p);
}

FixedPointConstants fixed_point_constants(const CascadeParams& p) {
  const double q = p.contraction();
  if (!(q < 1.0)) throw InvalidInput("fixed-point constants require c_hat mu^{1/2} < 1");
  FixedPointConstants c;
  c.c_mu = (p.c_hat2 / 2.0) / (std::sqrt(p.mu) * (1.0 - q) * std::log(1.0 / std::sqrt(p.mu)));
  c.c_mu_prime = p.C0 + (p.c_hat3 / 2.0) / (1.0 - q);
  return c;
}

double uniform_log_bound(double seminorm, const CascadeParams& p) {
  const auto c = fixed_point_constants(p);
  return 2.0 * (c.c_mu_prime + c.c_mu * std::sqrt(seminorm));
}

const char* to_string(Status s) {
  switch (s) {
    case Status::ok: return "ok";
    case Status::hypothesis_failed: return "hypothesis_failed";
    case Status::open_section: return "open_section";
    case Status::resolution_exhausted: return "resolution_exhausted";
  }
  return "?";
}

CascadeTrace run_scalar_cascade(const CascadeParams& p, const moduli::Modulus& omega,
                                const ScalarOptions& options) {
  return run_scalar_cascade(p, [&omega](int, double r) { return omega(r); }, options);
}

CascadeTrace run_scalar_cascade(const CascadeParams& p, const DeltaModel& delta,
                                const ScalarOptions& options) {
  p.validate();
  if (options.k_max < 0) throw InvalidInput("k_max must be non-negative");
  CascadeTrace trace;
  const auto fail = [&](int k, const std::string& what) {
    trace.status = Status::hypothesis_failed;
    trace.failure_index = k;
    trace.failure = what;
  };
  double sigma = p.sigma0;
  double lower = 1.0, upper = 1.0, sum = 0.0, dsum = 0.0;
  double delta0 = p.delta0.value_or(-1.0);
  for (int k = 0; k <= options.k_max; ++k) {
    CascadeState s;
    s.k = k;
    s.sigma = sigma;
    s.lower_product = lower;
    s.upper_product = upper;
    s.ck_tilde = (1.0 + sigma) * kSqrt2 / std::sqrt(lower);
    const double radius = s.ck_tilde * std::pow(p.mu, 0.5 * k);
    const double modelled = delta(k, radius);
    if (k == 0 && delta0 < 0.0) delta0 = modelled;
    s.delta = k == 0 ? delta0 : std::min(delta0, modelled);
    s.ln_ck_bound = p.C0 + p.c6 * sum;
    sum += sigma;
    s.sigma_sum = sum;
    s.delta_sqrt_sum = dsum;
    s.sigma_sum_bound = sigma_sum_bound(p, dsum);
    s.ecc_A = std::sqrt(upper / lower);
    trace.states.push_back(s);

    if (1.0 - p.c4 * sigma < p.c3) {
      fail(k, "1 - c4 sigma >= c3");
      break;
    }
    if (options.k_bound && s.ck_tilde > *options.k_bound) {
      fail(k, "C~_k <= K");
      break;
    }
    if (k == options.k_max) break;
    try {
      const double next = step_sigma(sigma, s.delta, p, k);
      lower *= 1.0 - p.c4 * sigma;
      upper *= 1.0 + p.c5 * sigma;
      dsum += std::sqrt(s.delta);
      sigma = next;
    } catch (const CascadeHypothesisError& e) {
      fail(k, e.which());
      break;
    }
  }
  return trace;
}

Vec2 discrete_minimum(const ScalarField2D& v) {
  const Grid& g = v.grid();
  int bi = -1, bj = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int j = 1; j + 1 < g.ny; ++j) {
    for (int i = 1; i + 1 < g.nx; ++i) {
      if (v.kind(i, j) != NodeKind::interior) continue;
      bool block = true;
      for (int dj = -1; dj <= 1 && block; ++dj) {
        for (int di = -1; di <= 1 && block; ++di) block = v.valid(i + di, j + dj);
      }
      if (block && v(i, j) < best) {
        best = v(i, j);
        bi = i;
        bj = j;
      }
    }
  }
  if (bi < 0) throw ResolutionExhausted("no interior node with a full stencil");
  const Vec2 grad((v(bi + 1, bj) - v(bi - 1, bj)) / (2.0 * g.h), (v(bi, bj + 1) - v(bi, bj - 1)) / (2.0 * g.h));
  const Mat2 hess = nodal_hessian(v, bi, bj);
  Vec2 x = g.point(bi, bj);
  if (hess.determinant() > 0.0 && hess.trace() > 0.0) {
    const Vec2 step = -hess.inverse() * grad;
    if (step.cwiseAbs().maxCoeff() <= g.h) x += step;
  }
  return x;
}

double minimal_width(const geom::ConvexBody& body) {
  const auto& vs = body.vertices();
  double width = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < vs.size(); ++e) {
    const Vec2 a = vs[e], b = vs[(e + 1) % vs.size()];
    const Vec2 d = b - a;
    const double len = d.norm();
    if (len == 0.0) continue;
    const Vec2 normal(-d.y() / len, d.x() / len);
    double far = 0.0;
    for (const auto& p : vs) far = std::max(far, std::abs(normal.dot(p - a)));
    width = std::min(width, far);
  }
  return width;
}

CascadeTrace run_geometric_cascade(const ScalarField2D& v, const ScalarFn& f, const CascadeParams& p,
                                   const GeometricOptions& options) {
  p.validate();
  if (options.k_max < 1) throw InvalidInput("geometric cascade needs k_max >= 1");
  const Vec2 x0 = options.base ? *options.base : discrete_minimum(v);
  const double f0 = f(x0);
  if (!(f0 > 0.0)) throw InvalidInput("rhs must be positive at the base point");
  const double scale = std::sqrt(f0);
  const double gh = v.h();

  CascadeTrace trace;
  Mat2 a = Mat2::Identity();
  double sum = 0.0, dsum = 0.0, lower = 1.0, upper = 1.0;
  for (int k = 1; k <= options.k_max; ++k) {
    const double height = std::pow(p.mu, k) * scale;
    std::optional<sections::Section> section;
    try {
      section = sections::extract_section(v, x0, height, Vec2::Zero());
    } catch (const OpenSection& e) {
      trace.status = Status::open_section;
      trace.failure_index = k;
      trace.failure = e.what();
      break;
    } catch (const ResolutionExhausted& e) {
      trace.status = Status::resolution_exhausted;
      trace.failure_index = k;
      trace.failure = e.what();
      break;
    }
    if (minimal_width(section->body) < options.min_cells * gh) {
      trace.status = Status::resolution_exhausted;
      trace.failure_index = k;
      trace.failure = "section narrower than the resolution limit";
      break;
    }

    const geom::AffineMap previous{a, x0};
    const auto john = geom::john_ellipsoid(section->body.transformed(previous));
    a = geom::normalizing_map(john, geom::NormalizeMode::det_one).linear * a;
    const double shrink = std::pow(p.mu, -0.5 * k);
    const geom::AffineMap normalize{shrink * a, x0};
    const auto normalized = section->body.transformed(normalize);

    CascadeState s;
    s.k = k;
    s.A = geom::AffineMap{a, x0};
    s.r_out = 0.0;
    for (const auto& q : normalized.vertices()) s.r_out = std::max(s.r_out, q.norm());
    s.r_in = -normalized.signed_distance(Vec2::Zero());
    s.sigma = std::max(1.0 - s.r_in / kSqrt2, s.r_out / kSqrt2 - 1.0);

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    const auto visit = [&](const Vec2& x) {
      const double value = f(x);
      lo = std::min(lo, value);
      hi = std::max(hi, value);
    };
    for (const auto& [i, j] : section->nodes) visit(v.grid().point(i, j));
    for (const auto& q : section->contour) visit(q);
    s.delta = (hi - lo) / f0;

    double reach = 0.0;
    for (const auto& q : section->body.vertices()) reach = std::max(reach, (q - x0).norm());
    s.ck_tilde = reach * shrink;
    s.ln_ck_bound = p.C0 + p.c6 * sum;
    s.lower_product = lower;
    s.upper_product = upper;
    sum += s.sigma;
    s.sigma_sum = sum;
    s.delta_sqrt_sum = dsum;
    s.sigma_sum_bound = sigma_sum_bound(p, dsum);
    dsum += std::sqrt(s.delta);
    s.ecc_A = eccentricity_of(a);
    s.grid_tolerance = gh * geom::operator_norm(a) * shrink / kSqrt2;
    if (options.budget) {
      const auto& states = options.budget->states;
      const auto it = std::find_if(states.begin(), states.end(), [k](const CascadeState& b) { return b.k == k; });
      if (it != states.end()) {
        s.sigma_budget = it->sigma;
        s.sandwich_ok = s.sigma <= s.sigma_budget + s.grid_tolerance;
        lower *= 1.0 - p.c4 * it->sigma;
        upper *= 1.0 + p.c5 * it->sigma;
      }
    }
    if (options.keep_sections) s.section = std::move(section);
    trace.states.push_back(std::move(s));
  }
  return trace;
}

Calibration calibrate(const CascadeParams& base, std::span<const double> measured_deltas,
                      std::span<const double> candidates, int steps) {
  std::vector<double> ladder(candidates.begin(), candidates.end());
  std::sort(ladder.begin(), ladder.end(), std::greater<>());
  const std::vector<double> deltas(measured_deltas.begin(), measured_deltas.end());
  const DeltaModel model = [&deltas](int k, double) {
    if (deltas.empty()) return 0.0;
    return deltas[std::min<std::size_t>(static_cast<std::size_t>(k), deltas.size() - 1)];
  };
  Calibration out{base, {}};
  bool found = false;
  for (double c : ladder) {
    CascadeParams p = base;
    p.c_hat = c;
    if (!p.delta0 && !deltas.empty()) p.delta0 = deltas.front();
    bool pass = false;
    try {
      p.validate();
      pass = run_scalar_cascade(p, model, {steps, std::nullopt}).status == Status::ok;
    } catch (const Error&) {
      pass = false;
    }
    out.ladder.emplace_back(c, pass);
    if (pass && !found) {
      out.params = p;
      found = true;
    }
  }
  if (!found) throw CascadeHypothesisError("calibration ladder exhausted", 0);
  return out;
}

void write_trace_csv(std::ostream& out, const CascadeTrace& trace) {
  std::ostringstream body;
  body.precision(12);
  body << "k,sigma,delta,lnCk,det_Ak,ecc_Ak,status\n";
  for (std::size_t i = 0; i < trace.states.size(); ++i) {
    const auto& s = trace.states[i];
    const bool last = i + 1 == trace.states.size();
    body << s.k << ',' << s.sigma << ',' << s.delta << ',' << s.ln_ck_bound << ',' << s.A.det() << ','
         << s.ecc_A << ',' << (last ? to_string(trace.status) : "ok") << '\n';
  }
  out << body.str();
}

nlohmann::json to_json(const CascadeTrace& trace) {
  nlohmann::json states = nlohmann::json::array();
  for (const auto& s : trace.states) {
    nlohmann::json j{{"k", s.k},
                     {"sigma", s.sigma},
                     {"delta", s.delta},
                     {"ln_ck_bound", s.ln_ck_bound},
                     {"ck_tilde", s.ck_tilde},
                     {"sigma_sum", s.sigma_sum},
                     {"sigma_sum_bound", s.sigma_sum_bound},
                     {"det_A", s.A.det()},
                     {"ecc_A", s.ecc_A},
                     {"A", geom::to_json(s.A)}};
    if (s.section) {
      j["r_in"] = s.r_in;
      j["r_out"] = s.r_out;
      j["grid_tolerance"] = s.grid_tolerance;
      j["sigma_budget"] = s.sigma_budget;
      j["sandwich_ok"] = s.sandwich_ok;
      j["section"] = sections::to_json(*s.section);
    }
    states.push_back(std::move(j));
  }
  return {{"status", to_string(trace.status)},
          {"failure_index", trace.failure_index},
          {"failure", trace.failure},
          {"states", std::move(states)}};
}

}  // namespace masec::cascade
