#include "masec/sections.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>

#include "masec/error.hpp"

namespace masec::sections {

namespace {
constexpr std::array<std::array<int, 2>, 4> kNeighbours{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
}

Vec2 section_slope(const ScalarField2D& v, const Vec2& x0) {
  const Vec2 p = v.gradient_at(x0);
  return p.norm() < 10.0 * v.h() * v.h() ? Vec2::Zero() : p;
}

Section extract_section(const ScalarField2D& v, const Vec2& x0, double height, std::optional<Vec2> slope) {
  if (!(height > 0.0)) throw InvalidInput("section height must be positive");
  if (v.domain().signed_distance(x0) >= 0.0) throw InvalidInput("section base point must be interior");
  const Grid& g = v.grid();
  const Vec2 p = slope ? *slope : section_slope(v, x0);
  const double v0 = v.value_at(x0);
  auto phi = [&](int i, int j) { return v(i, j) - v0 - p.dot(g.point(i, j) - x0) - height; };

  // Seed: nearest node, else a corner of the containing cell.
  std::vector<std::pair<int, int>> seeds;
  {
    const auto [i, j] = v.nearest(x0);
    seeds.emplace_back(i, j);
    const Vec2 s = (x0 - g.origin) / g.h;
    const int i0 = static_cast<int>(std::floor(s.x())), j0 = static_cast<int>(std::floor(s.y()));
    for (int dj = 0; dj <= 1; ++dj) {
      for (int di = 0; di <= 1; ++di) seeds.emplace_back(i0 + di, j0 + dj);
    }
  }
  std::pair<int, int> start{-1, -1};
  for (const auto& [i, j] : seeds) {
    if (v.valid(i, j) && phi(i, j) < 0.0) {
      start = {i, j};
      break;
    }
  }
  if (start.first < 0) throw ResolutionExhausted("section is smaller than a grid cell");

  std::vector<char> seen(g.size(), 0);
  std::deque<std::pair<int, int>> queue{start};
  seen[g.index(start.first, start.second)] = 1;
  Section out{x0, p, height, geom::regular_polygon(x0, 1.0, 3), {}, 0.0, true, {}};
  std::vector<Vec2> crossings;
  while (!queue.empty()) {
    const auto [i, j] = queue.front();
    queue.pop_front();
    if (v.kind(i, j) == NodeKind::boundary) throw OpenSection("section reaches the domain boundary");
    out.nodes.emplace_back(i, j);
    const double a = phi(i, j);
    for (const auto& d : kNeighbours) {
      const int ni = i + d[0], nj = j + d[1];
      if (!v.valid(ni, nj)) throw OpenSection("section escapes the domain");
      const double b = phi(ni, nj);
      if (b < 0.0) {
        if (!seen[g.index(ni, nj)]) {
          seen[g.index(ni, nj)] = 1;
          queue.emplace_back(ni, nj);
        }
      } else {
        const double t = a / (a - b);
        crossings.push_back(g.point(i, j) + t * g.h * Vec2(d[0], d[1]));
      }
    }
  }
  if (crossings.size() < 3) throw ResolutionExhausted("section contour has fewer than 3 crossings");
  std::sort(crossings.begin(), crossings.end(), [&](const Vec2& a, const Vec2& b) {
    return std::atan2(a.y() - x0.y(), a.x() - x0.x()) < std::atan2(b.y() - x0.y(), b.x() - x0.x());
  });
  try {
    out.body = geom::ConvexBody::hull(crossings);
  } catch (const DegenerateError&) {
    throw ResolutionExhausted("section contour is degenerate at this grid resolution");
  }
  out.contour = std::move(crossings);
  out.hull_deviation = geom::hausdorff_distance(std::span<const Vec2>(out.contour),
                                                std::span<const Vec2>(out.body.vertices()), 4);
  std::sort(out.nodes.begin(), out.nodes.end());
  return out;
}

VolumeReport volume_check(const Section& s) {
  VolumeReport r;
  r.area = s.body.area();
  r.height = s.height;
  r.ratio = r.area / s.height;
  return r;
}

EccentricityReport eccentricity_check(const Section& s) {
  EccentricityReport r;
  r.ratio = geom::eccentricity(geom::john_ellipsoid(s.body));
  r.scaled = r.ratio * s.height;
  return r;
}

SeparationReport separation_check(const ScalarField2D& v, const Vec2& x0, double height, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw InvalidInput("lambda must lie in (0, 1)");
  const Section outer = extract_section(v, x0, height);
  const Section inner = extract_section(v, x0, lambda * height, outer.slope);
  SeparationReport r;
  r.lambda = lambda;
  r.slope_norm = outer.slope.norm();
  r.distance = geom::boundary_distance(inner.body, outer.body);
  const auto map = geom::normalizing_map(geom::john_ellipsoid(outer.body), geom::NormalizeMode::to_unit_ball);
  r.map_norm = geom::operator_norm(map);
  r.constant = r.distance * r.map_norm / ((1.0 - lambda) * (1.0 - lambda));
  return r;
}

nlohmann::json to_json(const Section& s) {
  nlohmann::json j = geom::to_json(s.body);
  j["x0"] = {s.x0.x(), s.x0.y()};
  j["p"] = {s.slope.x(), s.slope.y()};
  j["h"] = s.height;
  j["contained_in_domain"] = s.contained_in_domain;
  j["hull_deviation"] = s.hull_deviation;
  return j;
}

}  // namespace masec::sections
