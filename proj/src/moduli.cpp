#include "masec/moduli.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <array>
#include <istream>
#include <optional>
#include <limits>
#include <ostream>
#include <sstream>

#include "masec/error.hpp"
#include "quadrature.hpp"

namespace masec::moduli {

namespace {

constexpr std::size_t kTailFitKnots = 5;
constexpr double kPanelWidth = 0.25;  // in ln r

double interpolate(Interp interp, double r0, double r1, double w0, double w1, double r) {
  switch (interp) {
    case Interp::linear:
      return w0 + (w1 - w0) * (r - r0) / (r1 - r0);
    case Interp::log_r:
      return w0 + (w1 - w0) * std::log(r / r0) / std::log(r1 / r0);
    case Interp::power:
      if (w0 > 0.0 && w1 > 0.0) {
        const double beta = std::log(w1 / w0) / std::log(r1 / r0);
        return w0 * std::exp(beta * std::log(r / r0));
      }
      return w0 + (w1 - w0) * (r - r0) / (r1 - r0);
  }
  return w0;
}

// Least squares y = a + b x; returns {a, b, rms residual}.
std::array<double, 3> fit_line(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  const double b = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
  const double a = (sy - b * sx) / n;
  double ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (a + b * x[i]);
    ss += e * e;
  }
  return {a, b, std::sqrt(ss / n)};
}

// Sum closed-form shells [2^k, 2^{k+1}] in t = -ln r starting at t0 until the
// partial sum passes the cap; only called for non-integrable tails.
template <typename Shell>
[[noreturn]] void throw_divergent(Shell&& shell, double t0, double head, double cap,
                                  const char* what) {
  double a = std::max(t0, 1e-300);
  double b = std::max(1.0, std::exp2(std::floor(std::log2(a)) + 1.0));
  double sum = 0.0;
  double previous = 0.0;
  for (int k = 0; k < 2100 && std::isfinite(b); ++k) {
    const double s = shell(a, b);
    sum += s;
    if (!std::isfinite(sum) || (head + sum > cap && s >= previous * (1.0 - 1e-12))) break;
    previous = s;
    a = b;
    b *= 2.0;
  }
  throw DivergenceError(what, head + sum);
}

// int_0^upper omega_T^{1/2}(r) / r dr.
double half_tail(const TailModel& tail, double upper, double head, double cap) {
  if (tail.kind == TailKind::zero || upper <= 0.0) return 0.0;
  const double t0 = -std::log(upper);
  const double sc = std::sqrt(tail.c);
  if (tail.half_integrable()) {
    if (tail.kind == TailKind::power) {
      return sc * std::exp(-0.5 * tail.exponent * t0) * 2.0 / tail.exponent;
    }
    return sc * std::pow(t0, 1.0 - 0.5 * tail.exponent) / (0.5 * tail.exponent - 1.0);
  }
  auto shell = [&](double a, double b) {
    if (tail.kind == TailKind::log_power) {
      const double q = 1.0 - 0.5 * tail.exponent;
      if (std::abs(q) < 1e-14) return sc * std::log(b / a);
      return sc * (std::pow(b, q) - std::pow(a, q)) / q;
    }
    const double alpha = tail.kind == TailKind::constant ? 0.0 : tail.exponent;
    if (std::abs(alpha) < 1e-14) return sc * (b - a);
    return sc * (std::exp(-0.5 * alpha * a) - std::exp(-0.5 * alpha * b)) / (0.5 * alpha);
  };
  throw_divergent(shell, t0, head, cap, "C^{1/2} semi-norm integral diverges at r -> 0");
}

// int_0^upper omega_T(r) / r^power dr.
double dini_tail_from_zero(const TailModel& tail, double upper, int power, double cap) {
  if (tail.kind == TailKind::zero) return 0.0;
  const double t0 = -std::log(upper);
  const double c = tail.c;
  const double alpha = tail.kind == TailKind::constant ? 0.0 : tail.exponent;
  if (power == 1) {
    if (tail.kind == TailKind::log_power && tail.exponent > 1.0) {
      return c * std::pow(t0, 1.0 - tail.exponent) / (tail.exponent - 1.0);
    }
    if (tail.kind != TailKind::log_power && alpha > 0.0) {
      return c * std::exp(-alpha * t0) / alpha;
    }
  } else if (tail.kind != TailKind::log_power && alpha > 1.0) {
    return c * std::exp((1.0 - alpha) * t0) / (alpha - 1.0);
  }
  auto shell = [&](double a, double b) {
    return detail::gauss8_composite(
        [&](double t) { return tail(std::exp(-t)) * std::exp((power - 1) * t); }, a, b,
        std::max(kPanelWidth, (b - a) / 64.0));
  };
  throw_divergent(shell, t0, 0.0, cap, "Dini integral diverges at r -> 0");
}

// int over [lo, hi] of g(r) dr / r^power in the variable u = ln r.
template <typename G>
double log_quadrature(G&& g, double lo, double hi, int power) {
  if (hi <= lo) return 0.0;
  return detail::gauss8_composite(
      [&](double u) {
        const double r = std::exp(u);
        return g(r) * std::exp((1 - power) * u);
      },
      std::log(lo), std::log(hi), kPanelWidth);
}

}  // namespace

const char* to_string(Interp interp) {
  switch (interp) {
    case Interp::linear: return "linear";
    case Interp::log_r: return "log_r";
    case Interp::power: return "power";
  }
  return "linear";
}

Interp interp_from_string(const std::string& name) {
  if (name == "linear") return Interp::linear;
  if (name == "log_r") return Interp::log_r;
  if (name == "power") return Interp::power;
  throw InvalidInput("unknown interpolation '" + name + "'");
}

const char* to_string(TailKind kind) {
  switch (kind) {
    case TailKind::zero: return "zero";
    case TailKind::power: return "power";
    case TailKind::log_power: return "log_power";
    case TailKind::constant: return "constant";
  }
  return "zero";
}

double TailModel::operator()(double r) const {
  switch (kind) {
    case TailKind::zero: return 0.0;
    case TailKind::constant: return c;
    case TailKind::power: return c * std::pow(r, exponent);
    case TailKind::log_power: return r < 1.0 ? c * std::pow(-std::log(r), -exponent) : c;
  }
  return 0.0;
}

bool TailModel::half_integrable() const {
  switch (kind) {
    case TailKind::zero: return true;
    case TailKind::constant: return c == 0.0;
    case TailKind::power: return exponent > 0.0;
    case TailKind::log_power: return exponent > 2.0;
  }
  return false;
}

TailModel fit_small_r(std::span<const double> knots, std::span<const double> values,
                      double zero_limit) {
  TailModel model;
  if (zero_limit > 0.0) {
    model.kind = TailKind::constant;
    model.c = zero_limit;
    return model;
  }
  if (values.empty() || values.front() <= 0.0) return model;

  const std::size_t m = std::min(kTailFitKnots, knots.size());
  std::vector<double> lr(m), lw(m), llr;
  for (std::size_t i = 0; i < m; ++i) {
    lr[i] = std::log(knots[i]);
    lw[i] = std::log(values[i]);
  }
  if (m < 2) {
    model.kind = TailKind::constant;
    model.c = values.front();
    return model;
  }
  const auto [pa, pb, pres] = fit_line(lr, lw);

  const bool log_ok = knots[m - 1] < 1.0;
  if (log_ok) {
    for (std::size_t i = 0; i < m; ++i) llr.push_back(std::log(-lr[i]));
    const auto [la, lb, lres] = fit_line(llr, lw);
    if (lres < pres) {
      model.kind = TailKind::log_power;
      model.c = std::exp(la);
      model.exponent = -lb;
      model.residual = lres;
      model.rejected_residual = pres;
      return model;
    }
    model.rejected_residual = lres;
  } else {
    model.rejected_residual = std::numeric_limits<double>::infinity();
  }
  model.kind = TailKind::power;
  model.c = std::exp(pa);
  model.exponent = pb;
  model.residual = pres;
  return model;
}

Modulus::Modulus(std::vector<double> knots, std::vector<double> values, double r_max,
                 Interp interp, double zero_limit)
    : knots_(std::move(knots)),
      values_(std::move(values)),
      r_max_(r_max),
      interp_(interp),
      zero_limit_(zero_limit) {
  if (knots_.empty() || knots_.size() != values_.size()) {
    throw InvalidInput("modulus needs matching, non-empty knots and values");
  }
  if (!(r_max_ > 0.0) || !std::isfinite(r_max_)) throw InvalidInput("modulus r_max must be positive");
  if (!(zero_limit_ >= 0.0)) throw InvalidInput("modulus omega(0+) must be >= 0");
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!(knots_[i] > 0.0) || !std::isfinite(knots_[i])) throw InvalidInput("modulus knots must be positive");
    if (!(values_[i] >= 0.0) || !std::isfinite(values_[i])) throw InvalidInput("modulus values must be finite and >= 0");
    if (i > 0 && !(knots_[i] > knots_[i - 1])) throw InvalidInput("modulus knots must be strictly increasing");
    if (i > 0 && values_[i] < values_[i - 1]) throw InvalidInput("modulus values must be non-decreasing");
  }
  if (knots_.back() > r_max_ * (1.0 + 1e-12)) throw InvalidInput("modulus knots exceed r_max");
  if (values_.front() < zero_limit_) throw InvalidInput("modulus omega(0+) exceeds first knot value");
  tail_ = fit_small_r(knots_, values_, zero_limit_);
}

double Modulus::operator()(double r) const {
  if (!(r > 0.0)) return zero_limit_;
  if (r < knots_.front()) return std::min(tail_(r), values_.front());
  if (r >= knots_.back()) return values_.back();
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), r);
  const std::size_t i = static_cast<std::size_t>(it - knots_.begin()) - 1;
  return interpolate(interp_, knots_[i], knots_[i + 1], values_[i], values_[i + 1], r);
}

Modulus Modulus::scaled(double factor) const {
  if (!(factor >= 0.0)) throw InvalidInput("modulus scale factor must be >= 0");
  std::vector<double> v(values_);
  for (double& x : v) x *= factor;
  TailModel tail = tail_;
  tail.c *= factor;
  if (factor == 0.0) tail.kind = TailKind::zero;
  return Modulus(knots_, std::move(v), r_max_, interp_, zero_limit_ * factor).with_tail(tail);
}

Modulus Modulus::coarsened() const {
  std::vector<double> k, v;
  for (std::size_t i = 0; i < knots_.size(); i += 2) {
    k.push_back(knots_[i]);
    v.push_back(values_[i]);
  }
  if (k.back() != knots_.back()) {
    k.push_back(knots_.back());
    v.push_back(values_.back());
  }
  return Modulus(std::move(k), std::move(v), r_max_, interp_, zero_limit_).with_tail(tail_);
}

Modulus Modulus::with_tail(const TailModel& tail) const {
  Modulus copy(*this);
  copy.tail_ = tail;
  return copy;
}

namespace {

// int_{knots.front()}^{1} omega^{1/2}(r)/r dr.
double half_knot_part(const Modulus& omega) {
  const auto& k = omega.knots();
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < k.size(); ++i) {
    const double lo = k[i];
    const double hi = std::min(k[i + 1], 1.0);
    if (hi <= lo) break;
    sum += detail::gauss8_composite(
        [&](double u) { return std::sqrt(omega(std::exp(u))); }, std::log(lo), std::log(hi),
        kPanelWidth);
  }
  if (k.back() < 1.0) sum += std::sqrt(omega.saturated_value()) * -std::log(k.back());
  return sum;
}

}  // namespace

SemiNormResult chalf_seminorm(const Modulus& omega, const IntegralOptions& options) {
  SemiNormResult result;
  result.tail_model = omega.tail();

  const double r0 = std::min(omega.knots().front(), 1.0);
  const double head = omega.knots().front() < 1.0 ? half_knot_part(omega) : 0.0;
  const double tail = half_tail(omega.tail(), r0, head, options.divergence_cap);
  result.integrand_tail_estimate = tail;
  result.integral = head + tail;
  result.value = result.integral * result.integral;

  double err_integral = 0.0;
  if (omega.knots().size() >= 3 && omega.knots().front() < 1.0) {
    const double coarse = half_knot_part(omega.coarsened());
    err_integral = std::abs(coarse - head);
  }
  const double floor = 1e-12 * result.value + std::numeric_limits<double>::min();
  result.quadrature_error_estimate =
      std::max(2.0 * result.integral * err_integral + err_integral * err_integral, floor);
  return result;
}

double dini_integral(const Modulus& omega, double a, double b, int power,
                     const IntegralOptions& options) {
  if (power != 1 && power != 2) throw InvalidInput("dini_integral power must be 1 or 2");
  if (!(a >= 0.0) || !(a < b) || !std::isfinite(b)) {
    throw InvalidInput("dini_integral needs 0 <= a < b");
  }
  if (a == 0.0 && power == 2 && omega.zero_limit() > 0.0) {
    throw DivergenceError("int_0 omega/r^2 diverges when omega(0+) > 0",
                          std::numeric_limits<double>::infinity());
  }
  const auto& k = omega.knots();
  const double r0 = k.front();
  const double rl = k.back();
  double sum = 0.0;

  // (a, r0): small-r model.
  if (a < r0) {
    const double hi = std::min(b, r0);
    if (a == 0.0) {
      sum += dini_tail_from_zero(omega.tail(), hi, power, options.divergence_cap);
    } else {
      sum += log_quadrature([&](double r) { return omega(r); }, a, hi, power);
    }
  }
  // knot segments
  for (std::size_t i = 0; i + 1 < k.size(); ++i) {
    const double lo = std::max(a, k[i]);
    const double hi = std::min(b, k[i + 1]);
    if (hi > lo) sum += log_quadrature([&](double r) { return omega(r); }, lo, hi, power);
  }
  // saturated range
  const double lo = std::max(a, rl);
  if (b > lo) {
    const double w = omega.saturated_value();
    sum += power == 1 ? w * std::log(b / lo) : w * (1.0 / lo - 1.0 / b);
  }
  return sum;
}

std::vector<double> pairwise_bin_sup(std::span<const Vec2> points,
                                     std::span<const double> values,
                                     std::span<const double> radii) {
  if (points.size() != values.size()) throw InvalidInput("points and values differ in length");
  if (points.size() < 2) throw InvalidInput("modulus estimation needs at least 2 points");
  if (radii.empty()) throw InvalidInput("modulus estimation needs at least 1 bin");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0) || (i > 0 && !(radii[i] > radii[i - 1]))) {
      throw InvalidInput("bin radii must be positive and strictly increasing");
    }
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(values[i]) || !points[i].allFinite()) {
      throw InvalidInput("modulus samples must be finite");
    }
  }
  std::vector<double> raw(radii.size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      // Closed balls with a relative slack, so grid-aligned radii catch their pairs.
      const double d = (points[i] - points[j]).norm() * (1.0 - 1e-12);
      const auto it = std::lower_bound(radii.begin(), radii.end(), d);
      if (it == radii.end()) continue;
      double& slot = raw[static_cast<std::size_t>(it - radii.begin())];
      slot = std::max(slot, std::abs(values[i] - values[j]));
    }
  }
  return raw;
}

Modulus modulus_from_samples(std::span<const Vec2> points, std::span<const double> values,
                             std::span<const double> radii) {
  std::vector<double> env = pairwise_bin_sup(points, values, radii);
  for (std::size_t i = 1; i < env.size(); ++i) env[i] = std::max(env[i], env[i - 1]);
  double diameter = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      diameter = std::max(diameter, (points[i] - points[j]).norm());
    }
  }
  const double r_max = std::max(diameter, radii.back());
  return Modulus({radii.begin(), radii.end()}, std::move(env), r_max, Interp::linear);
}

Modulus modulus_from_samples(std::span<const Vec2> points, std::span<const double> values,
                             std::size_t bin_count) {
  if (bin_count < 1) throw InvalidInput("bin_count must be >= 1");
  if (points.size() < 2) throw InvalidInput("modulus estimation needs at least 2 points");
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double d = (points[i] - points[j]).norm();
      if (d > 0.0) dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
    }
  }
  if (!(dmax > 0.0)) throw InvalidInput("modulus samples are all at one location");
  std::vector<double> radii(bin_count);
  if (bin_count == 1 || dmin >= dmax) {
    radii.assign(1, dmax);
  } else {
    for (std::size_t i = 0; i < bin_count; ++i) {
      radii[i] = dmin * std::pow(dmax / dmin, static_cast<double>(i) / (bin_count - 1));
    }
    radii.back() = dmax;
  }
  return modulus_from_samples(points, values, radii);
}

namespace {
std::vector<Vec2> embed(std::span<const double> xs) {
  std::vector<Vec2> pts;
  pts.reserve(xs.size());
  for (double x : xs) pts.emplace_back(x, 0.0);
  return pts;
}
}  // namespace

Modulus modulus_from_samples(std::span<const double> points, std::span<const double> values,
                             std::span<const double> radii) {
  const auto pts = embed(points);
  return modulus_from_samples(std::span<const Vec2>(pts), values, radii);
}

Modulus modulus_from_samples(std::span<const double> points, std::span<const double> values,
                             std::size_t bin_count) {
  const auto pts = embed(points);
  return modulus_from_samples(std::span<const Vec2>(pts), values, bin_count);
}

Modulus modulus_model(const ModelKind& kind, const ModelGrid& grid) {
  const double r_max = grid.r_max;
  if (!(r_max > 0.0)) throw InvalidInput("model r_max must be positive");

  auto geometric = [](double lo, double hi, std::size_t n) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
    }
    r.back() = hi;
    return r;
  };

  if (const auto* h = std::get_if<Holder>(&kind)) {
    if (!(h->alpha > 0.0 && h->alpha <= 1.0)) throw InvalidInput("holder alpha must lie in (0, 1]");
    if (!(h->c >= 0.0)) throw InvalidInput("holder constant must be >= 0");
    const double r_min = grid.r_min > 0.0 ? grid.r_min : 1e-12;
    const std::size_t n = grid.count > 1 ? grid.count : 2049;
    if (!(r_min < r_max)) throw InvalidInput("model r_min must be below r_max");
    auto r = geometric(r_min, r_max, n);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = h->c * std::pow(r[i], h->alpha);
    return Modulus(std::move(r), std::move(w), r_max, Interp::power);
  }
  if (const auto* lp = std::get_if<LogPower>(&kind)) {
    if (!(lp->p > 2.0)) throw InvalidInput("log_power exponent must exceed 2");
    const double r_min = grid.r_min > 0.0 ? grid.r_min : 1e-300;
    const std::size_t n = grid.count > 2 ? grid.count : 4097;
    const double r_break = std::exp(-4.0);
    if (!(r_min < r_break) || !(r_break < r_max)) {
      throw InvalidInput("log_power grid must straddle e^{-4}");
    }
    // Knots geometric in s = -ln r on (r_min, e^{-4}], then r_max.
    const auto s = geometric(4.0, -std::log(r_min), n - 1);
    std::vector<double> r, w;
    for (auto it = s.rbegin(); it != s.rend(); ++it) {
      r.push_back(std::exp(-*it));
      w.push_back(std::pow(*it, -lp->p));
    }
    r.back() = r_break;
    r.push_back(r_max);
    w.push_back(std::pow(4.0, -lp->p));
    return Modulus(std::move(r), std::move(w), r_max, Interp::log_r);
  }
  if (const auto* c = std::get_if<Constant>(&kind)) {
    if (!(c->c >= 0.0)) throw InvalidInput("constant modulus must be >= 0");
    const double r_min = grid.r_min > 0.0 ? grid.r_min : 1e-12;
    const std::size_t n = grid.count > 1 ? grid.count : 65;
    return Modulus(geometric(r_min, r_max, n), std::vector<double>(n, c->c), r_max,
                   Interp::linear, c->c);
  }
  const double r_min = grid.r_min > 0.0 ? grid.r_min : 1e-12;
  const std::size_t n = grid.count > 1 ? grid.count : 65;
  return Modulus(geometric(r_min, r_max, n), std::vector<double>(n, 0.0), r_max);
}

void write_csv(std::ostream& out, const Modulus& omega) {
  const auto old_precision = out.precision(17);
  out << "# r,omega,r_max=" << omega.r_max() << '\n';
  out << "# interp=" << to_string(omega.interp()) << ",omega0=" << omega.zero_limit() << '\n';
  for (std::size_t i = 0; i < omega.knots().size(); ++i) {
    out << omega.knots()[i] << ',' << omega.values()[i] << '\n';
  }
  out.precision(old_precision);
}

Modulus read_csv(std::istream& in) {
  std::vector<double> r, w;
  double r_max = 0.0;
  double omega0 = 0.0;
  Interp interp = Interp::linear;
  std::string line;
  auto field = [](const std::string& text, const std::string& key) -> std::optional<std::string> {
    const auto pos = text.find(key + "=");
    if (pos == std::string::npos) return std::nullopt;
    const auto start = pos + key.size() + 1;
    const auto end = text.find_first_of(", \t\r", start);
    return text.substr(start, end == std::string::npos ? std::string::npos : end - start);
  };
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (line[0] == '#') {
      if (auto v = field(line, "r_max")) r_max = std::stod(*v);
      if (auto v = field(line, "interp")) interp = interp_from_string(*v);
      if (auto v = field(line, "omega0")) omega0 = std::stod(*v);
      continue;
    }
    std::istringstream row(line);
    std::string a, b;
    if (!std::getline(row, a, ',') || !std::getline(row, b)) {
      throw IoError("malformed modulus row: " + line);
    }
    try {
      r.push_back(std::stod(a));
      w.push_back(std::stod(b));
    } catch (const std::exception&) {
      throw IoError("malformed modulus row: " + line);
    }
  }
  if (r.empty()) throw IoError("modulus CSV has no rows");
  if (r_max <= 0.0) r_max = r.back();
  return Modulus(std::move(r), std::move(w), r_max, interp, omega0);
}

}  // namespace masec::moduli
