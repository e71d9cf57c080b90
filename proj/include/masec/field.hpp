#pragma once

// Grid-sampled scalar fields on a convex polygonal domain.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "masec/convexgeom.hpp"
#include "masec/types.hpp"

namespace masec {

enum class NodeKind : std::uint8_t { outside, interior, boundary };

/// Uniform Cartesian grid; node (i, j) sits at origin + h (i, j).
struct Grid {
  Vec2 origin = Vec2::Zero();
  double h = 1.0;
  int nx = 0;
  int ny = 0;

  Vec2 point(int i, int j) const { return origin + h * Vec2(i, j); }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i);
  }
  bool in_range(int i, int j) const { return i >= 0 && j >= 0 && i < nx && j < ny; }
  std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  bool operator==(const Grid& o) const {
    return origin == o.origin && h == o.h && nx == o.nx && ny == o.ny;
  }
};

/// Grid over the bounding box of `domain` with `cells` cells along its shorter side.
Grid grid_for(const geom::ConvexBody& domain, int cells);
/// Grid with spacing h anchored so that `anchor` is a node.
Grid grid_with_spacing(const geom::ConvexBody& domain, double h, const Vec2& anchor);

using ScalarFn = std::function<double(const Vec2&)>;

class ScalarField2D {
public:
  /// Classifies nodes against `domain`; values start at NaN outside and 0 inside.
  ScalarField2D(geom::ConvexBody domain, Grid grid);
  static ScalarField2D sample(geom::ConvexBody domain, Grid grid, const ScalarFn& fn);

  const geom::ConvexBody& domain() const noexcept { return domain_; }
  const Grid& grid() const noexcept { return grid_; }
  double h() const noexcept { return grid_.h; }

  NodeKind kind(int i, int j) const { return kinds_[grid_.index(i, j)]; }
  /// Interior or boundary node.
  bool valid(int i, int j) const { return grid_.in_range(i, j) && kind(i, j) != NodeKind::outside; }
  double operator()(int i, int j) const { return values_[grid_.index(i, j)]; }
  double& at(int i, int j) { return values_[grid_.index(i, j)]; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }
  const std::vector<NodeKind>& kinds() const noexcept { return kinds_; }

  /// Nearest node to x (may be outside the grid range).
  std::pair<int, int> nearest(const Vec2& x) const;
  /// Biquadratic interpolation on the 3x3 block around the nearest node.
  double value_at(const Vec2& x) const;
  Vec2 gradient_at(const Vec2& x) const;

  /// Copy with values replaced by fn at valid nodes.
  ScalarField2D with_values(const ScalarFn& fn) const;

  /// `x,y,value` rows for valid nodes, with a `#` header carrying h and the mask rule.
  void write_csv(std::ostream& out) const;

private:
  geom::ConvexBody domain_;
  Grid grid_;
  std::vector<NodeKind> kinds_;
  std::vector<double> values_;
};

/// Minimum unit-direction second difference over the 8-direction stencil at
/// interior nodes whose stencil is fully valid.
double min_directional_second_difference(const ScalarField2D& v);

/// Max |a - b| over valid nodes; grids must match.
double max_abs_difference(const ScalarField2D& a, const ScalarField2D& b);
/// Max |v - fn| over valid nodes.
double max_abs_error(const ScalarField2D& v, const ScalarFn& fn);

/// int over the polygon of fn, fan triangulation with subdivided midpoint rules.
double integrate(const geom::ConvexBody& domain, const ScalarFn& fn, int levels = 4);

}  // namespace masec
