#include "masec/masolver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "masec/error.hpp"

namespace masec {

namespace {

constexpr double kEigenFloor = 1e-8;
constexpr double kWideDelta = 1e-8;
constexpr int kMinCells = 32;

using Dir = std::array<int, 2>;

const std::vector<Dir> kNewtonDirs{{1, 0}, {0, 1}, {1, 1}, {1, -1}};

// Orthogonal pairs of stencil lines; 8 directions use the first two pairs.
const std::vector<std::array<Dir, 2>> kFrames{
    {Dir{1, 0}, Dir{0, 1}}, {Dir{1, 1}, Dir{1, -1}}, {Dir{2, 1}, Dir{1, -2}}, {Dir{1, 2}, Dir{2, -1}}};

int frame_count(int directions) {
  if (directions == 8) return 2;
  if (directions == 16) return 4;
  throw InvalidInput("wide stencil supports 8 or 16 directions");
}

struct Arm {
  double coef = 0.0;
  int unknown = -1;
  double fixed = 0.0;
};

// Unit-direction second difference c0 u0 + fwd + bwd.
struct Line {
  double c0 = 0.0;
  Arm fwd, bwd;
};

class Discretization {
public:
  Discretization(const ScalarField2D& field, const ScalarFn& g, const std::vector<Dir>& dirs)
      : dirs_(dirs) {
    const Grid& grid = field.grid();
    unknown_.assign(grid.size(), -1);
    for (int j = 0; j < grid.ny; ++j) {
      for (int i = 0; i < grid.nx; ++i) {
        if (field.kind(i, j) == NodeKind::interior) {
          unknown_[grid.index(i, j)] = static_cast<int>(nodes_.size());
          nodes_.push_back({i, j});
        }
      }
    }
    lines_.resize(nodes_.size() * dirs_.size());
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      const auto [i, j] = nodes_[n];
      const Vec2 p = grid.point(i, j);
      for (std::size_t d = 0; d < dirs_.size(); ++d) {
        const auto [a, b] = dirs_[d];
        double lf = 0.0, lb = 0.0;
        Arm fwd = arm(field, g, p, i, j, a, b, lf);
        Arm bwd = arm(field, g, p, i, j, -a, -b, lb);
        Line& line = lines_[n * dirs_.size() + d];
        fwd.coef = 2.0 / (lf * (lf + lb));
        bwd.coef = 2.0 / (lb * (lf + lb));
        line.c0 = -(fwd.coef + bwd.coef);
        line.fwd = fwd;
        line.bwd = bwd;
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }
  const std::array<int, 2>& node(std::size_t n) const { return nodes_[n]; }
  int unknown(const Grid& grid, int i, int j) const { return unknown_[grid.index(i, j)]; }
  const Line& line(std::size_t n, std::size_t d) const { return lines_[n * dirs_.size() + d]; }

  double apply(const Line& l, const Eigen::VectorXd& u, std::size_t n) const {
    const double uf = l.fwd.unknown >= 0 ? u(l.fwd.unknown) : l.fwd.fixed;
    const double ub = l.bwd.unknown >= 0 ? u(l.bwd.unknown) : l.bwd.fixed;
    return l.c0 * u(static_cast<Eigen::Index>(n)) + l.fwd.coef * uf + l.bwd.coef * ub;
  }

  // Adds w * dD/du into the triplet list for row n.
  void linearize(const Line& l, std::size_t n, double w, std::vector<Eigen::Triplet<double>>& t) const {
    const int row = static_cast<int>(n);
    t.emplace_back(row, row, w * l.c0);
    if (l.fwd.unknown >= 0) t.emplace_back(row, l.fwd.unknown, w * l.fwd.coef);
    if (l.bwd.unknown >= 0) t.emplace_back(row, l.bwd.unknown, w * l.bwd.coef);
  }

  // Constant part of w * D (boundary contributions).
  double fixed_part(const Line& l, double w) const {
    double s = 0.0;
    if (l.fwd.unknown < 0) s += w * l.fwd.coef * l.fwd.fixed;
    if (l.bwd.unknown < 0) s += w * l.bwd.coef * l.bwd.fixed;
    return s;
  }

  std::size_t dir_index(const Dir& d) const {
    for (std::size_t k = 0; k < dirs_.size(); ++k) {
      if (dirs_[k] == d) return k;
    }
    throw InvalidInput("direction not in stencil");
  }

private:
  Arm arm(const ScalarField2D& field, const ScalarFn& g, const Vec2& p, int i, int j, int a, int b,
          double& length) const {
    const Grid& grid = field.grid();
    const Vec2 step = grid.h * Vec2(a, b);
    Arm out;
    const int qi = i + a, qj = j + b;
    if (field.valid(qi, qj)) {
      length = step.norm();
      if (field.kind(qi, qj) == NodeKind::interior) {
        out.unknown = unknown_[grid.index(qi, qj)];
      } else {
        out.fixed = g(grid.point(qi, qj));
      }
      return out;
    }
    const double t = std::min(field.domain().ray_exit(p, step), 1.0);
    length = std::max(t, 1e-12) * step.norm();
    out.fixed = g(p + t * step);
    return out;
  }

  std::vector<Dir> dirs_;
  std::vector<int> unknown_;
  std::vector<std::array<int, 2>> nodes_;
  std::vector<Line> lines_;
};

Mat2 project_psd(const Mat2& h, double floor) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(h);
  Vec2 ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

ScalarFn boundary_or_zero(const Problem& p) {
  if (p.boundary) return p.boundary;
  return [](const Vec2&) { return 0.0; };
}

// Residual and optional Jacobian of the scheme.
class Operator {
public:
  Operator(const Discretization& disc, Scheme scheme, int frames, std::vector<double> f)
      : disc_(disc), scheme_(scheme), frames_(frames), f_(std::move(f)) {}

  Eigen::VectorXd residual(const Eigen::VectorXd& u, std::vector<Eigen::Triplet<double>>* jac) const {
    const std::size_t n = disc_.size();
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
      r(static_cast<Eigen::Index>(k)) = scheme_ == Scheme::newton_fd ? newton_row(u, k, jac) : wide_row(u, k, jac);
    }
    return r;
  }

private:
  double newton_row(const Eigen::VectorXd& u, std::size_t k, std::vector<Eigen::Triplet<double>>* jac) const {
    const Line& lx = disc_.line(k, 0);
    const Line& ly = disc_.line(k, 1);
    const Line& le = disc_.line(k, 2);
    const Line& lf = disc_.line(k, 3);
    Mat2 h;
    const double dxy = 0.5 * (disc_.apply(le, u, k) - disc_.apply(lf, u, k));
    h << disc_.apply(lx, u, k), dxy, dxy, disc_.apply(ly, u, k);
    const Mat2 hp = project_psd(h, kEigenFloor);
    if (jac) {
      disc_.linearize(lx, k, hp(1, 1), *jac);
      disc_.linearize(ly, k, hp(0, 0), *jac);
      disc_.linearize(le, k, -hp(0, 1), *jac);
      disc_.linearize(lf, k, hp(0, 1), *jac);
    }
    return hp.determinant() - f_[k];
  }

  double wide_row(const Eigen::VectorXd& u, std::size_t k, std::vector<Eigen::Triplet<double>>* jac) const {
    double best = std::numeric_limits<double>::infinity();
    int best_frame = 0;
    std::array<double, 2> best_d{};
    for (int fr = 0; fr < frames_; ++fr) {
      const double d1 = disc_.apply(disc_.line(k, 2 * fr), u, k);
      const double d2 = disc_.apply(disc_.line(k, 2 * fr + 1), u, k);
      const double value = std::max(d1, kWideDelta) * std::max(d2, kWideDelta) +
                           std::min(d1 - kWideDelta, 0.0) + std::min(d2 - kWideDelta, 0.0);
      if (value < best) {
        best = value;
        best_frame = fr;
        best_d = {d1, d2};
      }
    }
    if (jac) {
      const double w1 = best_d[0] > kWideDelta ? std::max(best_d[1], kWideDelta) : 1.0;
      const double w2 = best_d[1] > kWideDelta ? std::max(best_d[0], kWideDelta) : 1.0;
      disc_.linearize(disc_.line(k, 2 * best_frame), k, w1, *jac);
      disc_.linearize(disc_.line(k, 2 * best_frame + 1), k, w2, *jac);
    }
    return best - f_[k];
  }

  const Discretization& disc_;
  Scheme scheme_;
  int frames_;
  std::vector<double> f_;
};

std::vector<Dir> scheme_dirs(Scheme scheme, int directions) {
  if (scheme == Scheme::newton_fd) return kNewtonDirs;
  std::vector<Dir> dirs;
  for (int fr = 0; fr < frame_count(directions); ++fr) {
    dirs.push_back(kFrames[static_cast<std::size_t>(fr)][0]);
    dirs.push_back(kFrames[static_cast<std::size_t>(fr)][1]);
  }
  return dirs;
}

std::vector<double> rhs_values(const Discretization& disc, const Grid& grid, const ScalarFn& f) {
  std::vector<double> out(disc.size());
  for (std::size_t k = 0; k < disc.size(); ++k) {
    const auto [i, j] = disc.node(k);
    out[k] = f(grid.point(i, j));
  }
  return out;
}

void validate(const Problem& problem, const ScalarField2D& field) {
  if (!problem.rhs) throw InvalidInput("problem has no right-hand side");
  if (problem.epsilon) {
    const double eps = *problem.epsilon;
    if (!(eps >= 0.0 && eps < 0.5)) throw InvalidInput("epsilon must lie in [0, 1/2)");
  }
  const Grid& g = field.grid();
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (!field.valid(i, j)) continue;
      const double f = problem.rhs(g.point(i, j));
      if (!std::isfinite(f) || !(f > 0.0)) throw InvalidInput("right-hand side must be finite and positive");
      if (problem.epsilon) {
        const double eps = *problem.epsilon;
        if (f < 1.0 - eps - 1e-12 || f > 1.0 + eps + 1e-12) {
          throw InvalidInput("right-hand side violates 1 - eps <= f <= 1 + eps");
        }
      }
    }
  }
}

Eigen::VectorXd solve_sparse(int n, const std::vector<Eigen::Triplet<double>>& t, const Eigen::VectorXd& b) {
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw SolverStalled("sparse factorization failed", b.lpNorm<Eigen::Infinity>());
  Eigen::VectorXd x = lu.solve(b);
  if (lu.info() != Eigen::Success || !x.allFinite()) {
    throw SolverStalled("sparse solve failed", b.lpNorm<Eigen::Infinity>());
  }
  return x;
}


}  // namespace

const char* to_string(Scheme s) { return s == Scheme::newton_fd ? "newton_fd" : "wide_stencil"; }

Scheme scheme_from_string(const std::string& name) {
  if (name == "newton_fd") return Scheme::newton_fd;
  if (name == "wide_stencil") return Scheme::wide_stencil;
  throw InvalidInput("unknown scheme '" + name + "'");
}

double stencil_angular_resolution(int directions) {
  std::vector<double> angles;
  for (int fr = 0; fr < frame_count(directions); ++fr) {
    for (const auto& d : kFrames[static_cast<std::size_t>(fr)]) {
      double a = std::atan2(d[1], d[0]);
      if (a < 0.0) a += std::numbers::pi;
      angles.push_back(a);
    }
  }
  std::sort(angles.begin(), angles.end());
  double gap = angles.front() + std::numbers::pi - angles.back();
  for (std::size_t i = 1; i < angles.size(); ++i) gap = std::max(gap, angles[i] - angles[i - 1]);
  return gap;
}

static SolveResult solve_once(const Problem& problem, const SolveOptions& options) {
  const Grid grid = options.grid ? *options.grid : grid_for(problem.domain, options.cells);
  {
    const auto [lo, hi] = problem.domain.bounds();
    const Vec2 ext = hi - lo;
    if (std::min(ext.x(), ext.y()) / grid.h < kMinCells - 1e-9) {
      throw InvalidInput("grid must span at least 32 cells along each axis of the domain");
    }
  }
  if (!(options.tolerance > 0.0)) throw InvalidInput("solver tolerance must be positive");
  ScalarField2D field(problem.domain, grid);
  validate(problem, field);
  const ScalarFn g = boundary_or_zero(problem);
  const int frames = options.scheme == Scheme::wide_stencil ? frame_count(options.directions) : 0;
  const Discretization disc(field, g, scheme_dirs(options.scheme, options.directions));
  const int n = static_cast<int>(disc.size());
  if (n == 0) throw InvalidInput("domain has no interior nodes");
  const auto f = rhs_values(disc, grid, problem.rhs);

  // Warm start: Laplacian equal to 2 sqrt(f).
  Eigen::VectorXd u(n);
  {
    const Discretization lap(field, g, kNewtonDirs);
    std::vector<Eigen::Triplet<double>> t;
    Eigen::VectorXd b(n);
    for (std::size_t k = 0; k < lap.size(); ++k) {
      double s = 2.0 * std::sqrt(f[k]);
      for (std::size_t d = 0; d < 2; ++d) {
        lap.linearize(lap.line(k, d), k, 1.0, t);
        s -= lap.fixed_part(lap.line(k, d), 1.0);
      }
      b(static_cast<Eigen::Index>(k)) = s;
    }
    u = solve_sparse(n, t, b);
  }

  const Operator op(disc, options.scheme, frames, f);
  std::vector<double> history;
  SolveResult result{field, 0, 0.0, options.scheme};
  for (int it = 0;; ++it) {
    std::vector<Eigen::Triplet<double>> jac;
    const Eigen::VectorXd r = op.residual(u, &jac);
    const double res = r.lpNorm<Eigen::Infinity>();
    history.push_back(res);
    result.iterations = it;
    result.residual = res;
    if (options.on_iteration) options.on_iteration(it, res);
    if (res <= options.tolerance) break;
    if (it >= options.max_iterations) {
      throw SolverStalled("iteration limit reached; try the wide_stencil scheme", res);
    }
    const std::size_t w = static_cast<std::size_t>(options.stall_window);
    if (history.size() > w && res > (1.0 - options.stall_reduction) * history[history.size() - 1 - w]) {
      throw SolverStalled("Newton residual stagnated; try the wide_stencil scheme", res);
    }
    const Eigen::VectorXd step = solve_sparse(n, jac, -r);
    // Round-off floor: the update no longer changes u.
    if (step.lpNorm<Eigen::Infinity>() <= 1e-14 * std::max(1.0, u.lpNorm<Eigen::Infinity>())) break;
    const double merit = r.squaredNorm();
    double alpha = 1.0;
    Eigen::VectorXd trial = u + step;
    while (alpha > 1e-4) {
      const double m = op.residual(trial, nullptr).squaredNorm();
      if (m < (1.0 - 1e-4 * alpha) * merit) break;
      alpha *= 0.5;
      trial = u + alpha * step;
    }
    u = trial;
  }

  for (int k = 0; k < n; ++k) {
    const auto [i, j] = disc.node(static_cast<std::size_t>(k));
    result.field.at(i, j) = u(k);
  }
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      if (result.field.kind(i, j) == NodeKind::boundary) result.field.at(i, j) = g(grid.point(i, j));
    }
  }
  return result;
}

SolveResult solve(const Problem& problem, const SolveOptions& options) {
  if (!options.fallback || options.scheme == Scheme::wide_stencil) return solve_once(problem, options);
  try {
    return solve_once(problem, options);
  } catch (const SolverStalled&) {
    SolveOptions wide = options;
    wide.scheme = Scheme::wide_stencil;
    SolveResult r = solve_once(problem, wide);
    r.fell_back = true;
    return r;
  }
}

double discrete_residual(const ScalarField2D& v, const Problem& problem, Scheme scheme, int directions) {
  const ScalarFn g = boundary_or_zero(problem);
  const int frames = scheme == Scheme::wide_stencil ? frame_count(directions) : 0;
  const Discretization disc(v, g, scheme_dirs(scheme, directions));
  const Operator op(disc, scheme, frames, rhs_values(disc, v.grid(), problem.rhs));
  Eigen::VectorXd u(static_cast<Eigen::Index>(disc.size()));
  for (std::size_t k = 0; k < disc.size(); ++k) {
    const auto [i, j] = disc.node(k);
    u(static_cast<Eigen::Index>(k)) = v(i, j);
  }
  return op.residual(u, nullptr).lpNorm<Eigen::Infinity>();
}

ComparisonReport comparison_check(const ScalarField2D& v1, const ScalarField2D& v2, const ScalarFn& f1,
                                  const ScalarFn& f2, double c) {
  if (!(v1.grid() == v2.grid()) || v1.kinds() != v2.kinds()) {
    throw InvalidInput("comparison needs fields on the same grid");
  }
  const Grid& g = v1.grid();
  ComparisonReport rep;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (!v1.valid(i, j)) continue;
      const Vec2 p = g.point(i, j);
      if (f1(p) > f2(p) + 1e-14) throw InvalidInput("comparison needs f1 <= f2");
      if (v1.kind(i, j) == NodeKind::boundary) {
        if (v1(i, j) < v2(i, j) - 1e-12) throw InvalidInput("comparison needs v1 >= v2 on the boundary");
        continue;
      }
      rep.max_violation = std::max(rep.max_violation, v2(i, j) - v1(i, j));
    }
  }
  rep.tolerance = c * g.h * g.h;
  rep.pass = rep.max_violation <= rep.tolerance;
  return rep;
}

AlexandrovReport alexandrov_check(const ScalarField2D& v, const Vec2& x0, double mass) {
  const double sd = v.domain().signed_distance(x0);
  if (sd > 1e-12) throw InvalidInput("alexandrov point lies outside the domain");
  if (!(mass > 0.0)) throw InvalidInput("Monge-Ampere mass must be positive");
  AlexandrovReport rep;
  rep.diameter = v.domain().diameter();
  rep.distance = std::max(-sd, 0.0);
  rep.mass = mass;
  if (rep.distance <= 1e-12) return rep;
  const double value = v.value_at(x0);
  rep.lhs = value * value;
  rep.constant = rep.lhs / (rep.diameter * rep.distance * mass);
  return rep;
}

Mat2 nodal_hessian(const ScalarField2D& v, int i, int j) {
  for (int dj = -1; dj <= 1; ++dj) {
    for (int di = -1; di <= 1; ++di) {
      if (!v.valid(i + di, j + dj)) throw OutOfStencil("Hessian stencil leaves the domain");
    }
  }
  const double h2 = v.h() * v.h();
  Mat2 m;
  m(0, 0) = (v(i + 1, j) - 2.0 * v(i, j) + v(i - 1, j)) / h2;
  m(1, 1) = (v(i, j + 1) - 2.0 * v(i, j) + v(i, j - 1)) / h2;
  m(0, 1) = m(1, 0) = (v(i + 1, j + 1) - v(i + 1, j - 1) - v(i - 1, j + 1) + v(i - 1, j - 1)) / (4.0 * h2);
  return m;
}

HessianSample hessian(const ScalarField2D& v, const Vec2& x) {
  const double h = v.h();
  if (v.domain().signed_distance(x) > -2.0 * h * (1.0 - 1e-9)) {
    throw OutOfStencil("Hessian point closer than 2h to the boundary");
  }
  const Vec2 s = (x - v.grid().origin) / h;
  const int i0 = static_cast<int>(std::floor(s.x()));
  const int j0 = static_cast<int>(std::floor(s.y()));
  const double tx = s.x() - i0, ty = s.y() - j0;
  HessianSample out;
  out.location = x;
  out.spacing = h;
  try {
    out.matrix = (1 - tx) * (1 - ty) * nodal_hessian(v, i0, j0) + tx * (1 - ty) * nodal_hessian(v, i0 + 1, j0) +
                 (1 - tx) * ty * nodal_hessian(v, i0, j0 + 1) + tx * ty * nodal_hessian(v, i0 + 1, j0 + 1);
  } catch (const OutOfStencil&) {
    const auto [i, j] = v.nearest(x);
    out.matrix = nodal_hessian(v, i, j);
  }
  return out;
}

}  // namespace masec
