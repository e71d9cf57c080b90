#pragma once

// Moduli of continuity: representation, estimation from samples, and the
// singular integrals that measure them (the C^{1/2} semi-norm and the two
// Dini-type integrals of the second-derivative estimate).

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "masec/types.hpp"

namespace masec::moduli {

/// How values between two knots are reconstructed.
enum class Interp {
  linear,  ///< linear in r
  log_r,   ///< linear in ln r
  power,   ///< linear in (ln r, ln omega), exact for c r^alpha
};

const char* to_string(Interp interp);
Interp interp_from_string(const std::string& name);

/// Model used for omega below the smallest knot.
enum class TailKind { zero, power, log_power, constant };

const char* to_string(TailKind kind);

/// Small-r extrapolation: zero, c r^exponent, c (-ln r)^{-exponent}, or c.
struct TailModel {
  TailKind kind = TailKind::zero;
  double c = 0.0;
  double exponent = 0.0;
  /// RMS log-space residual of the chosen fit and of the rejected alternative.
  double residual = 0.0;
  double rejected_residual = 0.0;

  double operator()(double r) const;
  /// True when the model makes int_0 omega^{1/2}/r dr finite.
  bool half_integrable() const;
};

/// Monotone, saturating modulus of continuity sampled on knots.
///
/// Below the smallest knot the value comes from a small-r model fitted on the
/// five smallest knots; above the last knot (and beyond r_max) it is constant.
class Modulus {
public:
  Modulus(std::vector<double> knots, std::vector<double> values, double r_max,
          Interp interp = Interp::linear, double zero_limit = 0.0);

  double operator()(double r) const;

  const std::vector<double>& knots() const noexcept { return knots_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double r_max() const noexcept { return r_max_; }
  Interp interp() const noexcept { return interp_; }
  /// Recorded limit omega(0+).
  double zero_limit() const noexcept { return zero_limit_; }
  double saturated_value() const noexcept { return values_.back(); }
  const TailModel& tail() const noexcept { return tail_; }

  Modulus scaled(double factor) const;
  /// Keeps knots 0, 2, 4, ... and the last one; used for refinement estimates.
  Modulus coarsened() const;
  /// Same knots and interpolation, but with an explicit small-r model.
  Modulus with_tail(const TailModel& tail) const;

private:
  std::vector<double> knots_;
  std::vector<double> values_;
  double r_max_;
  Interp interp_;
  double zero_limit_;
  TailModel tail_;
};

/// Least-squares fit of both small-r models on the smallest five knots;
/// the smaller log-space residual wins.
TailModel fit_small_r(std::span<const double> knots, std::span<const double> values,
                      double zero_limit);

struct SemiNormResult {
  /// (int_0^1 omega^{1/2}/r dr)^2
  double value = 0.0;
  /// The un-squared integral.
  double integral = 0.0;
  /// Contribution of (0, smallest knot) to `integral`.
  double integrand_tail_estimate = 0.0;
  /// Estimated absolute error of `value`.
  double quadrature_error_estimate = 0.0;
  TailModel tail_model;
};

struct IntegralOptions {
  /// Partial sums beyond this value over non-decaying shells mean divergence.
  double divergence_cap = 1e6;
};

SemiNormResult chalf_seminorm(const Modulus& omega, const IntegralOptions& options = {});

/// int_a^b omega(r) / r^power dr, power in {1, 2}.
double dini_integral(const Modulus& omega, double a, double b, int power,
                     const IntegralOptions& options = {});

/// Per-bin sup of |f(x) - f(y)| over pairs with r_{i-1} < |x - y| <= r_i,
/// before the monotone envelope is applied.
std::vector<double> pairwise_bin_sup(std::span<const Vec2> points,
                                     std::span<const double> values,
                                     std::span<const double> radii);

Modulus modulus_from_samples(std::span<const Vec2> points, std::span<const double> values,
                             std::span<const double> radii);
/// Bins geometric between the smallest pairwise distance and the diameter.
Modulus modulus_from_samples(std::span<const Vec2> points, std::span<const double> values,
                             std::size_t bin_count);
Modulus modulus_from_samples(std::span<const double> points, std::span<const double> values,
                             std::span<const double> radii);
Modulus modulus_from_samples(std::span<const double> points, std::span<const double> values,
                             std::size_t bin_count);

struct Holder {
  double alpha = 1.0;
  double c = 1.0;
};
/// (-ln r)^{-p} for r < e^{-4}, 4^{-p} beyond.
struct LogPower {
  double p = 3.0;
};
struct Constant {
  double c = 0.0;
};
struct Zero {};

using ModelKind = std::variant<Holder, LogPower, Constant, Zero>;

struct ModelGrid {
  /// Smallest knot; 0 picks a per-kind default (1e-12, or 1e-300 for log_power).
  double r_min = 0.0;
  double r_max = 1.0;
  /// Number of knots; 0 picks a per-kind default.
  std::size_t count = 0;
};

Modulus modulus_model(const ModelKind& kind, const ModelGrid& grid = {});

/// Two-column CSV with a `# r,omega,r_max=<value>` header line.
void write_csv(std::ostream& out, const Modulus& omega);
Modulus read_csv(std::istream& in);

}  // namespace masec::moduli
