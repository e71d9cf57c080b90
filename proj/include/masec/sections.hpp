#pragma once

// Sections {x : v(x) < v(x0) + p.(x - x0) + h} of a grid solution.

#include <json.hpp>
#include <optional>
#include <utility>
#include <vector>

#include "masec/field.hpp"

namespace masec::sections {

struct Section {
  Vec2 x0 = Vec2::Zero();
  Vec2 slope = Vec2::Zero();
  double height = 0.0;
  /// Convex hull of the contour.
  geom::ConvexBody body;
  /// Contour crossings ordered by angle about x0.
  std::vector<Vec2> contour;
  /// Hausdorff distance between contour and hull.
  double hull_deviation = 0.0;
  bool contained_in_domain = true;
  /// Grid nodes strictly inside the section.
  std::vector<std::pair<int, int>> nodes;
};

/// Slope defaults to the interpolated gradient at x0, zeroed when smaller than 10 h^2.
Section extract_section(const ScalarField2D& v, const Vec2& x0, double height,
                        std::optional<Vec2> slope = std::nullopt);

/// Slope used by extract_section when none is given.
Vec2 section_slope(const ScalarField2D& v, const Vec2& x0);

struct VolumeReport {
  double area = 0.0;
  double height = 0.0;
  /// area / height (n = 2)
  double ratio = 0.0;
};
VolumeReport volume_check(const Section& s);

struct EccentricityReport {
  /// R / r of the John ellipse
  double ratio = 1.0;
  /// (R / r) h
  double scaled = 0.0;
};
EccentricityReport eccentricity_check(const Section& s);

struct SeparationReport {
  double distance = 0.0;
  /// Operator norm of the map taking John(S_h) to the unit ball.
  double map_norm = 0.0;
  double lambda = 0.0;
  /// distance * map_norm / (1 - lambda)^2
  double constant = 0.0;
  double slope_norm = 0.0;
};
SeparationReport separation_check(const ScalarField2D& v, const Vec2& x0, double height,
                                  double lambda);

nlohmann::json to_json(const Section& s);

}  // namespace masec::sections
