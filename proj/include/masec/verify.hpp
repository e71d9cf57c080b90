#pragma once

// Second-derivative modulus bound, its empirical counterpart, and the
// constant-rhs approximants on shrinking sections.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "masec/cascade.hpp"
#include "masec/masolver.hpp"

namespace masec::verify {

struct BoundTerms {
  double linear = 0.0;     ///< K^{1/2} d
  double dini = 0.0;       ///< int_0^{Kd} omega/r
  double weighted = 0.0;   ///< K^{3/2} d int_{Kd}^K omega/r^2
  /// C0 K (linear + dini + weighted)
  double value = 0.0;
};

/// Requires 0 < d < 1.
BoundTerms theorem_bound_terms(double d, const moduli::Modulus& omega, double K, double C0);
double theorem_bound(double d, const moduli::Modulus& omega, double K, double C0);
double theorem_bound(double d, const moduli::Modulus& omega, const cascade::KConstant& K, double C0);

/// Componentwise max of |D^2 v(x) - D^2 v(y)| over node pairs in `inner` with
/// |x - y| <= d, per radius, with the monotone envelope applied.
moduli::Modulus empirical_hessian_modulus(const ScalarField2D& v, const geom::ConvexBody& inner,
                                          std::span<const double> radii, int jobs = 1);

/// Radii geometric between lo and hi.
std::vector<double> geometric_radii(double lo, double hi, int count);

struct ApproximantEntry {
  int k = 0;
  double height = 0.0;
  /// Spacing of the section grid.
  double spacing = 0.0;
  double delta = 0.0;
  /// max |w_k - v| on the section
  double sup_diff = 0.0;
  /// max |w_k - v| / (delta_k |v - v(x0) - height|); 0 when delta_k = 0
  double bracket = 0.0;
  /// D^2 w_k(x0)
  Mat2 hess_at_0 = Mat2::Zero();
  /// Frobenius |D^2 w_k(x0) - D^2 v(x0)|
  double hess_at_0_diff = 0.0;
  /// max |D^2 w_k - D^2 w_{k+1}| on S_{k+2}; unset for the last entries
  std::optional<double> d2_diff;
  /// max third-difference proxy of w_k - w_{k+1} on S_{k+2}, and times mu^{(k-1)/2}
  std::optional<double> d3_diff;
  std::optional<double> d3_scaled;
  /// |D^2 w_k(x0) - D^2 w_{k+1}(x0)|
  std::optional<double> step_at_0;
};

struct ApproximantTrace {
  std::vector<ApproximantEntry> entries;
  cascade::Status status = cascade::Status::ok;
  std::string message;
};

struct ApproximantOptions {
  /// Cells across the shorter side of each section's bounding box.
  int cells = 64;
  int k_max = 10;
  /// Base point; defaults to the refined discrete minimum.
  std::optional<Vec2> base;
};

/// Solves det D^2 w_k = f(x0) on each section S_{mu^k f(x0)^{1/2}} with w_k = v on its boundary.
ApproximantTrace build_approximants(const ScalarField2D& v, const ScalarFn& f,
                                    const cascade::CascadeParams& p,
                                    const ApproximantOptions& options = {});

struct Decomposition {
  double lhs = 0.0;  ///< |D^2 v(z) - D^2 v(x0)|
  double i1 = 0.0;   ///< |D^2 w(x0) - D^2 v(x0)|
  double i2 = 0.0;   ///< |D^2 v(z) - D^2 w(z)|
  double i3 = 0.0;   ///< |D^2 w(z) - D^2 w(x0)|
};
Decomposition decomposition(const ScalarField2D& v, const ScalarField2D& w, const Vec2& x0, const Vec2& z);

struct BoundReport {
  std::vector<double> d;
  std::vector<double> bound;
  std::vector<double> measured;
  cascade::KConstant K;
  double C0 = 1.0;
  /// Smallest C0 with bound >= measured on the d-grid.
  double C0_calibrated = 0.0;
  /// min_j (bound - measured) / bound with the C0 used
  double margin = 0.0;
  double seminorm = 0.0;
  double h = 0.0;
  Vec2 base = Vec2::Zero();
  cascade::Status scalar_status = cascade::Status::ok;
  cascade::Status geometric_status = cascade::Status::ok;
  int geometric_steps = 0;
};

struct ReportOptions {
  SolveOptions solve;
  /// Dilation of the domain about the minimum that defines the inner region.
  double inner_dilation = 0.5;
  /// d-grid: geometric from d_min_cells * h to d_max.
  double d_min_cells = 4.0;
  double d_max = 0.1;
  int d_count = 12;
  /// Bins for the sampled modulus of f.
  std::size_t omega_bins = 48;
  int k_max = 10;
  /// When unset the calibrated constant is used.
  std::optional<double> C0;
  int jobs = 1;
};

struct PipelineResult {
  BoundReport report;
  SolveResult solution;
  moduli::Modulus omega;
  cascade::CascadeTrace scalar;
  cascade::CascadeTrace geometric;
};

/// Modulus of f sampled on the valid nodes of `v`'s grid.
moduli::Modulus sampled_rhs_modulus(const ScalarField2D& v, const ScalarFn& f, std::size_t bins);

PipelineResult run_pipeline(const Problem& problem, const cascade::CascadeParams& p,
                            const ReportOptions& options = {});
/// Same, reusing a solution of `problem`.
PipelineResult run_pipeline(const Problem& problem, SolveResult solution, const cascade::CascadeParams& p,
                            const ReportOptions& options = {});
BoundReport assemble_report(const Problem& problem, const cascade::CascadeParams& p,
                            const ReportOptions& options = {});

nlohmann::json to_json(const BoundReport& r);
nlohmann::json to_json(const ApproximantTrace& t);
/// `d,bound,measured`
void write_bound_csv(std::ostream& out, const BoundReport& r);
/// `k,sup_diff,hess_at_0_diff,d2_diff,d3_diff,bracket`
void write_approximant_csv(std::ostream& out, const ApproximantTrace& t);

}  // namespace masec::verify
