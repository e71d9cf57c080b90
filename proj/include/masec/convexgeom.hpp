#pragma once

// Convex polygons, minimum-volume enclosing ellipses and determinant-one
// affine normalizations in the plane.

#include <json.hpp>
#include <span>
#include <vector>

#include "masec/types.hpp"

namespace masec::geom {

/// x -> linear * (x - shift)
struct AffineMap {
  Mat2 linear = Mat2::Identity();
  Vec2 shift = Vec2::Zero();

  static AffineMap identity() { return {}; }
  Vec2 operator()(const Vec2& x) const { return linear * (x - shift); }
  Vec2 inverse(const Vec2& y) const;
  double det() const { return linear.determinant(); }
};

/// Convex polygon stored counter-clockwise.
class ConvexBody {
public:
  /// Vertices of a convex polygon in either orientation.
  explicit ConvexBody(std::vector<Vec2> vertices);
  /// Convex hull of an arbitrary point set.
  static ConvexBody hull(std::span<const Vec2> points);

  const std::vector<Vec2>& vertices() const noexcept { return vertices_; }
  const Vec2& interior_point() const noexcept { return interior_; }

  double area() const;
  double diameter() const;
  double perimeter() const;
  /// Negative inside, positive outside; magnitude is distance to the boundary.
  double signed_distance(const Vec2& p) const;
  bool contains(const Vec2& p, double tol = 0.0) const { return signed_distance(p) <= tol; }
  /// Axis-aligned bounding box (min, max).
  std::pair<Vec2, Vec2> bounds() const;
  /// Exit parameter t > 0 with p + t d on the boundary; p must be inside.
  double ray_exit(const Vec2& p, const Vec2& d) const;

  ConvexBody transformed(const AffineMap& map) const;
  /// Dilation by `factor` about `center`.
  ConvexBody dilated(const Vec2& center, double factor) const;

private:
  std::vector<Vec2> vertices_;
  Vec2 interior_;
};

ConvexBody regular_polygon(const Vec2& center, double radius, int sides);

/// {x : (x - center)^T shape (x - center) <= 1}
struct Ellipsoid {
  Vec2 center = Vec2::Zero();
  Mat2 shape = Mat2::Identity();

  Ellipsoid() = default;
  Ellipsoid(const Vec2& c, const Mat2& m);

  double quadratic(const Vec2& x) const { return (x - center).dot(shape * (x - center)); }
  /// Semi-axis lengths, major first.
  Vec2 axes() const;
  double area() const;
  Ellipsoid transformed(const AffineMap& map) const;
  Ellipsoid dilated(double factor) const;
  /// `count` points on the boundary.
  std::vector<Vec2> boundary(int count) const;
};

struct JohnResult {
  Ellipsoid ellipsoid;
  int iterations = 0;
  /// Last relative change of the barycentric weights.
  double weight_change = 0.0;
  /// Upper bound on vol(E) / vol(E_min) - 1 from the duality gap.
  double volume_slack = 0.0;
};

/// Minimum-area enclosing ellipse of the vertices (Khachiyan with away steps).
JohnResult john_ellipsoid_detailed(const ConvexBody& body, double tolerance = 1e-3);
Ellipsoid john_ellipsoid(const ConvexBody& body, double tolerance = 1e-3);

struct SandwichReport {
  /// max over vertices of the quadratic form; <= 1 means body inside E.
  double outer_max_quadratic = 0.0;
  /// max signed distance of the sampled (1/2)E boundary to the body.
  double inner_max_excess = 0.0;
  bool outer_ok = false;
  bool inner_ok = false;
};

/// body within E, and E dilated by 1/2 about its center within body, checked on
/// 256 boundary samples.
SandwichReport check_sandwich(const ConvexBody& body, const Ellipsoid& e, double tol);

enum class NormalizeMode { to_unit_ball, det_one };

AffineMap normalizing_map(const Ellipsoid& e, NormalizeMode mode);
AffineMap compose(const AffineMap& outer, const AffineMap& inner);
double eccentricity(const Ellipsoid& e);
double operator_norm(const AffineMap& map);
double operator_norm(const Mat2& m);

/// Symmetric positive-definite square root.
Mat2 spd_sqrt(const Mat2& m);

/// Distance between the two boundaries by exhaustive vertex-edge checks.
double boundary_distance(const ConvexBody& a, const ConvexBody& b);
/// Hausdorff distance between the boundary curves, edges sampled `per_edge` times.
double hausdorff_distance(const ConvexBody& a, const ConvexBody& b, int per_edge = 8);
double hausdorff_distance(std::span<const Vec2> closed_a, std::span<const Vec2> closed_b,
                          int per_edge = 8);
double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);

nlohmann::json to_json(const ConvexBody& body);
nlohmann::json to_json(const Ellipsoid& e);
nlohmann::json to_json(const AffineMap& map);
ConvexBody body_from_json(const nlohmann::json& j);
Ellipsoid ellipsoid_from_json(const nlohmann::json& j);

}  // namespace masec::geom
