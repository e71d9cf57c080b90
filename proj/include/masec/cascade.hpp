#pragma once

// Shrinking-section cascade: a scalar recursion on eccentricity gaps and
// oscillations, and a geometric engine measuring normalized sections of a
// solved problem.

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "masec/moduli.hpp"
#include "masec/sections.hpp"

namespace masec::cascade {

struct CascadeParams {
  double mu = 1.0 / 16.0;
  double c_hat = 1.0;
  double c_hat0 = 1.0;
  double c_hat1 = 1.0;
  double c_hat2 = 1.0;
  double c_hat3 = 1.0;
  double c3 = 0.1;
  double c4 = 1.0;
  double c5 = 1.0;
  double c6 = 1.0;
  /// Additive constant of the running log bound.
  double C0 = 1.0;
  int n = 2;
  double sigma0 = 1.0 / 3.0;
  /// Oscillation of f over the whole domain; when unset the modulus at the
  /// first covering radius is used.
  std::optional<double> delta0;

  /// c_hat mu^{1/2}
  double contraction() const;
  /// (1 - 1/n) / (1 + 1/n)
  double sigma_cap() const;
  /// Throws InvalidInput naming the first offending field.
  void validate() const;
};

nlohmann::json to_json(const CascadeParams& p);
CascadeParams params_from_json(const nlohmann::json& j);

/// c_hat mu^{-1/2} (sigma mu + delta^{1/2}); throws CascadeHypothesisError when
/// 3 c_hat (sigma mu + delta^{1/2}) <= mu^{1/2} <= c_hat1 fails.
double step_sigma(double sigma, double delta, const CascadeParams& p, int index = 0);

/// Unrolled recursion; deltas[i] for i < k are used.
double sigma_closed_form(int k, const CascadeParams& p, std::span<const double> deltas);

/// Right side of the partial-sum estimate for sum_{i<=k} sigma_i.
double sigma_sum_bound(const CascadeParams& p, double delta_sqrt_sum);

struct AdmissibilityReport {
  double term1 = 1.0;
  double term2 = 0.0;
  double term3 = 0.0;
  double bound = 0.0;
  /// 1, 2 or 3
  int binding = 1;
  bool admissible = false;
};
AdmissibilityReport delta_admissibility(double delta0, const CascadeParams& p);

struct KConstant {
  double value = 0.0;
  double C1 = 0.0;
  double C2 = 0.0;
  double seminorm = 0.0;
};
/// C1 exp(C2 seminorm^{1/2}); throws InvalidInput unless c_hat mu^{1/2} < 1.
KConstant k_constant(double seminorm, const CascadeParams& p);
KConstant k_constant(const moduli::SemiNormResult& seminorm, const CascadeParams& p);

/// Constants of the fixed-point bound ln C <= C'_mu + C_mu (s^{1/2} + delta0^{1/2} ln C).
struct FixedPointConstants {
  double c_mu = 0.0;
  double c_mu_prime = 0.0;
};
FixedPointConstants fixed_point_constants(const CascadeParams& p);
/// 2 (C'_mu + C_mu seminorm^{1/2})
double uniform_log_bound(double seminorm, const CascadeParams& p);

enum class Status { ok, hypothesis_failed, open_section, resolution_exhausted };
const char* to_string(Status s);

struct CascadeState {
  int k = 0;
  double sigma = 0.0;
  double delta = 0.0;
  geom::AffineMap A;
  /// C0 + c6 sum_{i<k} sigma_i
  double ln_ck_bound = 0.0;
  /// (1 + sigma_k) sqrt 2 / sqrt(prod_{i<k} (1 - c4 sigma_i))
  double ck_tilde = 0.0;
  /// sum_{i<=k} sigma_i and its bound from sum_{j<k} delta_j^{1/2}
  double sigma_sum = 0.0;
  double sigma_sum_bound = 0.0;
  double delta_sqrt_sum = 0.0;
  /// prod_{i<k}(1 - c4 sigma_i) and prod_{i<k}(1 + c5 sigma_i)
  double lower_product = 1.0;
  double upper_product = 1.0;
  /// Eccentricity of A_k (scalar mode: the bound implied by the products).
  double ecc_A = 1.0;

  // Geometric mode only.
  double sigma_budget = 0.0;
  double r_in = 0.0;
  double r_out = 0.0;
  double grid_tolerance = 0.0;
  bool sandwich_ok = true;
  std::optional<sections::Section> section;
};

struct CascadeTrace {
  std::vector<CascadeState> states;
  Status status = Status::ok;
  /// Step at which the run stopped early, or -1.
  int failure_index = -1;
  std::string failure;
};

/// Oscillation model: delta_k given k and the covering radius C~_k mu^{k/2}.
using DeltaModel = std::function<double(int k, double radius)>;

struct ScalarOptions {
  int k_max = 50;
  /// When set, C~_k <= k_bound is required (the uniform-bound hypothesis).
  std::optional<double> k_bound;
};

/// States k = 0..k_max; delta_k = min(delta0, omega(C~_k mu^{k/2})).
CascadeTrace run_scalar_cascade(const CascadeParams& p, const moduli::Modulus& omega,
                                const ScalarOptions& options = {});
CascadeTrace run_scalar_cascade(const CascadeParams& p, const DeltaModel& delta,
                                const ScalarOptions& options = {});

struct GeometricOptions {
  int k_max = 10;
  /// Base point; defaults to the refined discrete minimum.
  std::optional<Vec2> base;
  /// Scalar trace supplying the sigma budget per step.
  std::optional<CascadeTrace> budget;
  /// Sections narrower than this many grid cells stop the run.
  double min_cells = 8.0;
  bool keep_sections = true;
};

/// Argmin node refined by one Newton step on the local quadratic fit.
Vec2 discrete_minimum(const ScalarField2D& v);

/// States k = 1..k_max for sections at heights mu^k f(x0)^{1/2} above the minimum.
CascadeTrace run_geometric_cascade(const ScalarField2D& v, const ScalarFn& f,
                                   const CascadeParams& p, const GeometricOptions& options = {});

/// Minimal width of a convex polygon.
double minimal_width(const geom::ConvexBody& body);

struct Calibration {
  CascadeParams params;
  /// Candidates tried, with whether each passed.
  std::vector<std::pair<double, bool>> ladder;
};

/// Largest c_hat from `candidates` for which the parameters validate and the
/// scalar cascade driven by the measured oscillations runs `steps` steps.
Calibration calibrate(const CascadeParams& base, std::span<const double> measured_deltas,
                      std::span<const double> candidates, int steps = 10);

/// `k,sigma,delta,lnCk,det_Ak,ecc_Ak,status`
void write_trace_csv(std::ostream& out, const CascadeTrace& trace);
nlohmann::json to_json(const CascadeTrace& trace);

}  // namespace masec::cascade
