#pragma once

// Dirichlet problem det D^2 v = f on a convex polygon, with comparison and
// Alexandrov diagnostics and Hessian evaluation.

#include <functional>
#include <optional>
#include <string>

#include "masec/field.hpp"

namespace masec {

struct Problem {
  geom::ConvexBody domain;
  ScalarFn rhs;
  /// Dirichlet data; zero when empty.
  ScalarFn boundary;
  /// When set, 1 - epsilon <= f <= 1 + epsilon is enforced with epsilon < 1/2.
  std::optional<double> epsilon;
};

enum class Scheme { newton_fd, wide_stencil };

const char* to_string(Scheme s);
Scheme scheme_from_string(const std::string& name);

struct SolveOptions {
  Scheme scheme = Scheme::newton_fd;
  /// Cells along the shorter side of the bounding box.
  int cells = 64;
  /// Max-norm tolerance on the discrete residual.
  double tolerance = 1e-10;
  int max_iterations = 200;
  /// Stall rule: relative residual reduction below `stall_reduction` over
  /// `stall_window` iterations.
  int stall_window = 20;
  double stall_reduction = 1e-3;
  /// Wide-stencil direction count (8 or 16).
  int directions = 16;
  /// Rerun with the wide stencil when Newton stalls.
  bool fallback = false;
  /// Called with (iteration, max-norm residual) before each Newton step.
  std::function<void(int, double)> on_iteration;
  /// Explicit grid; overrides `cells` when set.
  std::optional<Grid> grid;
};

struct SolveResult {
  ScalarField2D field;
  int iterations = 0;
  double residual = 0.0;
  /// Scheme that produced the field.
  Scheme scheme = Scheme::newton_fd;
  bool fell_back = false;
};

SolveResult solve(const Problem& problem, const SolveOptions& options = {});

/// Discrete residual max |det D_h^2 v - f| of the chosen scheme at interior nodes.
double discrete_residual(const ScalarField2D& v, const Problem& problem, Scheme scheme,
                         int directions = 16);

/// Largest angular gap between neighbouring stencil directions.
double stencil_angular_resolution(int directions);

struct ComparisonReport {
  /// max over interior nodes of (v2 - v1)^+.
  double max_violation = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// v1 >= v2 expected when f1 <= f2 and v1 >= v2 on the boundary.
ComparisonReport comparison_check(const ScalarField2D& v1, const ScalarField2D& v2,
                                  const ScalarFn& f1, const ScalarFn& f2, double c = 10.0);

struct AlexandrovReport {
  double lhs = 0.0;       ///< |v(x0)|^2
  double diameter = 0.0;
  double distance = 0.0;  ///< dist(x0, boundary)
  double mass = 0.0;      ///< int f
  /// Smallest C with lhs <= C diam dist mass.
  double constant = 0.0;
};

AlexandrovReport alexandrov_check(const ScalarField2D& v, const Vec2& x0, double mass);

struct HessianSample {
  Vec2 location = Vec2::Zero();
  Mat2 matrix = Mat2::Zero();
  double spacing = 0.0;
};

/// Nodal central differences, bilinear between nodes; x must be 2h inside.
HessianSample hessian(const ScalarField2D& v, const Vec2& x);
/// Nodal central-difference Hessian; the 3x3 block around (i, j) must be valid.
Mat2 nodal_hessian(const ScalarField2D& v, int i, int j);

}  // namespace masec
