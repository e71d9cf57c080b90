#include "masec/field.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

#include "masec/error.hpp"

namespace masec {

namespace {
constexpr double kBoundarySnap = 1e-4;  // in units of h

int cells_to_cover(double length, double h) {
  return static_cast<int>(std::ceil(length / h - 1e-9));
}
}  // namespace

Grid grid_for(const geom::ConvexBody& domain, int cells) {
  if (cells < 2) throw InvalidInput("grid needs at least 2 cells");
  const auto [lo, hi] = domain.bounds();
  const Vec2 ext = hi - lo;
  Grid g;
  g.h = std::min(ext.x(), ext.y()) / cells;
  g.origin = lo;
  g.nx = cells_to_cover(ext.x(), g.h) + 1;
  g.ny = cells_to_cover(ext.y(), g.h) + 1;
  return g;
}

Grid grid_with_spacing(const geom::ConvexBody& domain, double h, const Vec2& anchor) {
  if (!(h > 0.0)) throw InvalidInput("grid spacing must be positive");
  const auto [lo, hi] = domain.bounds();
  Grid g;
  g.h = h;
  const Vec2 back((std::ceil((anchor.x() - lo.x()) / h - 1e-9)), std::ceil((anchor.y() - lo.y()) / h - 1e-9));
  g.origin = anchor - h * back;
  g.nx = cells_to_cover(hi.x() - g.origin.x(), h) + 1;
  g.ny = cells_to_cover(hi.y() - g.origin.y(), h) + 1;
  return g;
}

ScalarField2D::ScalarField2D(geom::ConvexBody domain, Grid grid)
    : domain_(std::move(domain)), grid_(grid) {
  if (grid_.nx < 3 || grid_.ny < 3 || !(grid_.h > 0.0)) throw InvalidInput("grid too small");
  kinds_.resize(grid_.size());
  values_.resize(grid_.size());
  const double snap = kBoundarySnap * grid_.h;
  for (int j = 0; j < grid_.ny; ++j) {
    for (int i = 0; i < grid_.nx; ++i) {
      const double sd = domain_.signed_distance(grid_.point(i, j));
      NodeKind k = NodeKind::outside;
      if (sd < -snap) {
        k = NodeKind::interior;
      } else if (sd <= snap) {
        k = NodeKind::boundary;
      }
      kinds_[grid_.index(i, j)] = k;
      values_[grid_.index(i, j)] = k == NodeKind::outside ? std::nan("") : 0.0;
    }
  }
}

ScalarField2D ScalarField2D::sample(geom::ConvexBody domain, Grid grid, const ScalarFn& fn) {
  ScalarField2D f(std::move(domain), grid);
  return f.with_values(fn);
}

ScalarField2D ScalarField2D::with_values(const ScalarFn& fn) const {
  ScalarField2D f(*this);
  for (int j = 0; j < grid_.ny; ++j) {
    for (int i = 0; i < grid_.nx; ++i) {
      if (valid(i, j)) f.at(i, j) = fn(grid_.point(i, j));
    }
  }
  return f;
}

std::pair<int, int> ScalarField2D::nearest(const Vec2& x) const {
  const Vec2 s = (x - grid_.origin) / grid_.h;
  return {static_cast<int>(std::lround(s.x())), static_cast<int>(std::lround(s.y()))};
}

namespace {

struct Block {
  int ic, jc;
  std::array<double, 3> lx, ly, dx, dy;
};

std::array<double, 3> lagrange(double s) {
  return {0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)};
}
std::array<double, 3> lagrange_d(double s) { return {s - 0.5, -2.0 * s, s + 0.5}; }

Block find_block(const ScalarField2D& f, const Vec2& x) {
  const auto [i0, j0] = f.nearest(x);
  static constexpr std::array<std::array<int, 2>, 9> shifts{
      {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};
  for (const auto& s : shifts) {
    const int ic = i0 + s[0], jc = j0 + s[1];
    bool ok = true;
    for (int dj = -1; dj <= 1 && ok; ++dj) {
      for (int di = -1; di <= 1 && ok; ++di) ok = f.valid(ic + di, jc + dj);
    }
    if (!ok) continue;
    const Vec2 local = (x - f.grid().point(ic, jc)) / f.h();
    if (std::abs(local.x()) > 1.5 || std::abs(local.y()) > 1.5) continue;
    return {ic, jc, lagrange(local.x()), lagrange(local.y()), lagrange_d(local.x()),
            lagrange_d(local.y())};
  }
  throw OutOfStencil("no valid 3x3 stencil near the requested point");
}

}  // namespace

double ScalarField2D::value_at(const Vec2& x) const {
  const Block b = find_block(*this, x);
  double s = 0.0;
  for (int dj = -1; dj <= 1; ++dj) {
    for (int di = -1; di <= 1; ++di) s += b.lx[di + 1] * b.ly[dj + 1] * (*this)(b.ic + di, b.jc + dj);
  }
  return s;
}

Vec2 ScalarField2D::gradient_at(const Vec2& x) const {
  const Block b = find_block(*this, x);
  Vec2 g = Vec2::Zero();
  for (int dj = -1; dj <= 1; ++dj) {
    for (int di = -1; di <= 1; ++di) {
      const double v = (*this)(b.ic + di, b.jc + dj);
      g.x() += b.dx[di + 1] * b.ly[dj + 1] * v;
      g.y() += b.lx[di + 1] * b.dy[dj + 1] * v;
    }
  }
  return g / grid_.h;
}

void ScalarField2D::write_csv(std::ostream& out) const {
  const auto old = out.precision(17);
  out << "# h=" << grid_.h << ",nx=" << grid_.nx << ",ny=" << grid_.ny << ",origin=" << grid_.origin.x()
      << ';' << grid_.origin.y() << '\n';
  out << "# mask: only nodes inside the closed domain are listed\n";
  out << "x,y,value\n";
  for (int j = 0; j < grid_.ny; ++j) {
    for (int i = 0; i < grid_.nx; ++i) {
      if (!valid(i, j)) continue;
      const Vec2 p = grid_.point(i, j);
      out << p.x() << ',' << p.y() << ',' << (*this)(i, j) << '\n';
    }
  }
  out.precision(old);
}

double min_directional_second_difference(const ScalarField2D& v) {
  static constexpr std::array<std::array<int, 2>, 4> dirs{{{1, 0}, {0, 1}, {1, 1}, {1, -1}}};
  double worst = std::numeric_limits<double>::infinity();
  const Grid& g = v.grid();
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (v.kind(i, j) != NodeKind::interior) continue;
      for (const auto& d : dirs) {
        if (!v.valid(i + d[0], j + d[1]) || !v.valid(i - d[0], j - d[1])) continue;
        const double len2 = (d[0] * d[0] + d[1] * d[1]) * g.h * g.h;
        worst = std::min(worst, (v(i + d[0], j + d[1]) - 2.0 * v(i, j) + v(i - d[0], j - d[1])) / len2);
      }
    }
  }
  return worst;
}

double max_abs_difference(const ScalarField2D& a, const ScalarField2D& b) {
  if (!(a.grid() == b.grid()) || a.kinds() != b.kinds()) throw InvalidInput("fields live on different grids");
  double m = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k) {
    if (a.kinds()[k] != NodeKind::outside) m = std::max(m, std::abs(a.values()[k] - b.values()[k]));
  }
  return m;
}

double max_abs_error(const ScalarField2D& v, const ScalarFn& fn) {
  double m = 0.0;
  const Grid& g = v.grid();
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (v.valid(i, j)) m = std::max(m, std::abs(v(i, j) - fn(g.point(i, j))));
    }
  }
  return m;
}

namespace {
double triangle_rule(const Vec2& a, const Vec2& b, const Vec2& c, const ScalarFn& fn, int levels) {
  if (levels == 0) {
    const double area = 0.5 * std::abs((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
    return area * (fn(0.5 * (a + b)) + fn(0.5 * (b + c)) + fn(0.5 * (c + a))) / 3.0;
  }
  const Vec2 ab = 0.5 * (a + b), bc = 0.5 * (b + c), ca = 0.5 * (c + a);
  return triangle_rule(a, ab, ca, fn, levels - 1) + triangle_rule(ab, b, bc, fn, levels - 1) +
         triangle_rule(ca, bc, c, fn, levels - 1) + triangle_rule(ab, bc, ca, fn, levels - 1);
}
}  // namespace

double integrate(const geom::ConvexBody& domain, const ScalarFn& fn, int levels) {
  const auto& v = domain.vertices();
  const Vec2 c = domain.interior_point();
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += triangle_rule(c, v[i], v[(i + 1) % v.size()], fn, levels);
  return s;
}

}  // namespace masec
