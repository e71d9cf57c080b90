#include "masec/convexgeom.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "masec/error.hpp"

namespace masec::geom {

namespace {

constexpr int kMaxIterations = 10000;
constexpr double kWeightTolerance = 1e-9;
constexpr int kSandwichSamples = 256;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double signed_area(std::span<const Vec2> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += cross(v[i], v[(i + 1) % v.size()]);
  return 0.5 * s;
}

double max_pairwise(std::span<const Vec2> v) {
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) d = std::max(d, (v[i] - v[j]).norm());
  }
  return d;
}

}  // namespace

Vec2 AffineMap::inverse(const Vec2& y) const { return linear.inverse() * y + shift; }

ConvexBody::ConvexBody(std::vector<Vec2> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 3) throw InvalidInput("convex body needs at least 3 vertices");
  for (const auto& v : vertices_) {
    if (!v.allFinite()) throw InvalidInput("convex body vertices must be finite");
  }
  const double diam = max_pairwise(vertices_);
  double a = signed_area(vertices_);
  if (std::abs(a) < 1e-14 * diam * diam || diam == 0.0) {
    throw DegenerateError("convex body has near-zero area");
  }
  if (a < 0.0) {
    std::reverse(vertices_.begin(), vertices_.end());
    a = -a;
  }
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = vertices_[i];
    const Vec2& q = vertices_[(i + 1) % n];
    const Vec2& r = vertices_[(i + 2) % n];
    if (cross(q - p, r - q) < -1e-12 * diam * diam) {
      throw InvalidInput("polygon is not convex");
    }
  }
  Vec2 c = Vec2::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = vertices_[i];
    const Vec2& q = vertices_[(i + 1) % n];
    c += (p + q) * cross(p, q);
  }
  interior_ = c / (6.0 * a);
}

ConvexBody ConvexBody::hull(std::span<const Vec2> points) {
  std::vector<Vec2> p(points.begin(), points.end());
  if (p.size() < 3) throw InvalidInput("hull needs at least 3 points");
  std::sort(p.begin(), p.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  std::vector<Vec2> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 1] - h[k - 2], p[i] - h[k - 2]) <= 0.0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(h[k - 1] - h[k - 2], p[i - 1] - h[k - 2]) <= 0.0) --k;
    h[k++] = p[i - 1];
  }
  h.resize(k - 1);
  if (h.size() < 3) throw DegenerateError("hull of collinear points");
  return ConvexBody(std::move(h));
}

double ConvexBody::area() const { return signed_area(vertices_); }

double ConvexBody::diameter() const { return max_pairwise(vertices_); }

double ConvexBody::perimeter() const {
  double s = 0.0;
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    s += (vertices_[(i + 1) % vertices_.size()] - vertices_[i]).norm();
  }
  return s;
}

double ConvexBody::signed_distance(const Vec2& p) const {
  const std::size_t n = vertices_.size();
  bool inside = true;
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = vertices_[i];
    const Vec2& b = vertices_[(i + 1) % n];
    if (cross(b - a, p - a) < 0.0) inside = false;
    d = std::min(d, point_segment_distance(p, a, b));
  }
  return inside ? -d : d;
}

std::pair<Vec2, Vec2> ConvexBody::bounds() const {
  Vec2 lo = vertices_.front(), hi = vertices_.front();
  for (const auto& v : vertices_) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return {lo, hi};
}

double ConvexBody::ray_exit(const Vec2& p, const Vec2& d) const {
  const std::size_t n = vertices_.size();
  double t = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = vertices_[i];
    const Vec2 e = vertices_[(i + 1) % n] - a;
    const Vec2 normal(e.y(), -e.x());  // outward for CCW
    const double rate = normal.dot(d);
    if (rate > 0.0) t = std::min(t, normal.dot(a - p) / rate);
  }
  return std::max(t, 0.0);
}

ConvexBody ConvexBody::transformed(const AffineMap& map) const {
  std::vector<Vec2> v;
  v.reserve(vertices_.size());
  for (const auto& x : vertices_) v.push_back(map(x));
  return ConvexBody(std::move(v));
}

ConvexBody ConvexBody::dilated(const Vec2& center, double factor) const {
  if (!(factor > 0.0)) throw InvalidInput("dilation factor must be positive");
  std::vector<Vec2> v;
  v.reserve(vertices_.size());
  for (const auto& x : vertices_) v.push_back(center + factor * (x - center));
  return ConvexBody(std::move(v));
}

ConvexBody regular_polygon(const Vec2& center, double radius, int sides) {
  if (sides < 3 || !(radius > 0.0)) throw InvalidInput("regular polygon needs >= 3 sides and radius > 0");
  std::vector<Vec2> v;
  for (int i = 0; i < sides; ++i) {
    const double t = 2.0 * std::numbers::pi * i / sides;
    v.push_back(center + radius * Vec2(std::cos(t), std::sin(t)));
  }
  return ConvexBody(std::move(v));
}

Ellipsoid::Ellipsoid(const Vec2& c, const Mat2& m) : center(c), shape(m) {
  if (!c.allFinite() || !m.allFinite()) throw InvalidInput("ellipsoid must be finite");
  if (std::abs(m(0, 1) - m(1, 0)) > 1e-12 * std::max(1.0, m.norm())) {
    throw InvalidInput("ellipsoid shape must be symmetric");
  }
  shape = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat2> es(shape);
  if (!(es.eigenvalues().minCoeff() > 0.0)) {
    throw InvalidInput("ellipsoid shape must be positive definite");
  }
}

Vec2 Ellipsoid::axes() const {
  Eigen::SelfAdjointEigenSolver<Mat2> es(shape);
  const Vec2 ev = es.eigenvalues();  // ascending
  return {1.0 / std::sqrt(ev(0)), 1.0 / std::sqrt(ev(1))};
}

double Ellipsoid::area() const { return std::numbers::pi / std::sqrt(shape.determinant()); }

Ellipsoid Ellipsoid::transformed(const AffineMap& map) const {
  const Mat2 inv = map.linear.inverse();
  return Ellipsoid(map(center), inv.transpose() * shape * inv);
}

Ellipsoid Ellipsoid::dilated(double factor) const {
  return Ellipsoid(center, shape / (factor * factor));
}

std::vector<Vec2> Ellipsoid::boundary(int count) const {
  const Mat2 root_inv = spd_sqrt(shape).inverse();
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double t = 2.0 * std::numbers::pi * i / count;
    pts.push_back(center + root_inv * Vec2(std::cos(t), std::sin(t)));
  }
  return pts;
}

JohnResult john_ellipsoid_detailed(const ConvexBody& body, double tolerance) {
  if (!(tolerance > 0.0 && tolerance <= 0.1)) throw InvalidInput("john tolerance must lie in (0, 0.1]");
  const auto& pts = body.vertices();
  const std::size_t m = pts.size();
  constexpr double d = 3.0;  // lifted dimension n + 1

  // Work in coordinates centered and scaled to the body for conditioning.
  const Vec2 origin = body.interior_point();
  const double scale = body.diameter();
  std::vector<Eigen::Vector3d> q(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Vec2 x = (pts[i] - origin) / scale;
    q[i] = Eigen::Vector3d(x.x(), x.y(), 1.0);
  }

  Eigen::VectorXd u = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), 1.0 / m);
  JohnResult result;
  Eigen::VectorXd g(static_cast<Eigen::Index>(m));
  double eps_plus = 0.0;
  for (int it = 0; it < kMaxIterations; ++it) {
    Eigen::Matrix3d x = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < m; ++i) x += u(static_cast<Eigen::Index>(i)) * q[i] * q[i].transpose();
    const Eigen::Matrix3d xi = x.inverse();
    Eigen::Index jp = 0, jm = -1;
    for (std::size_t i = 0; i < m; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      g(ii) = q[i].dot(xi * q[i]);
      if (g(ii) > g(jp)) jp = ii;
      if (u(ii) > 0.0 && (jm < 0 || g(ii) < g(jm))) jm = ii;
    }
    eps_plus = g(jp) / d - 1.0;
    const double eps_minus = 1.0 - g(jm) / d;
    Eigen::VectorXd next = u;
    bool dropped = false;
    if (eps_plus >= eps_minus) {
      const double lambda = (g(jp) - d) / (d * (g(jp) - 1.0));
      next *= 1.0 - lambda;
      next(jp) += lambda;
    } else {
      const double uj = u(jm);
      double lambda = (d - g(jm)) / (d * (g(jm) - 1.0));
      if (uj < 1.0 && uj / (1.0 - uj) <= lambda) {
        lambda = uj / (1.0 - uj);
        dropped = true;
      }
      next *= 1.0 + lambda;
      next(jm) = dropped ? 0.0 : next(jm) - lambda;
    }
    const double change = (next - u).norm() / u.norm();
    u = next;
    result.iterations = it + 1;
    if (dropped) continue;
    result.weight_change = change;
    if (change < kWeightTolerance) break;
  }

  Vec2 c = Vec2::Zero();
  Mat2 s = Mat2::Zero();
  for (std::size_t i = 0; i < m; ++i) {
    const Vec2 x = q[i].head<2>();
    c += u(static_cast<Eigen::Index>(i)) * x;
    s += u(static_cast<Eigen::Index>(i)) * x * x.transpose();
  }
  Mat2 shape = (s - c * c.transpose()).inverse() / 2.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Vec2 y = q[i].head<2>() - c;
    worst = std::max(worst, y.dot(shape * y));
  }
  shape /= worst;
  shape /= scale * scale;
  result.ellipsoid = Ellipsoid(origin + scale * c, 0.5 * (shape + shape.transpose()));
  result.volume_slack = std::pow(1.0 + std::max(eps_plus, 0.0), d / 2.0) - 1.0;
  return result;
}

Ellipsoid john_ellipsoid(const ConvexBody& body, double tolerance) {
  return john_ellipsoid_detailed(body, tolerance).ellipsoid;
}

SandwichReport check_sandwich(const ConvexBody& body, const Ellipsoid& e, double tol) {
  SandwichReport r;
  for (const auto& v : body.vertices()) r.outer_max_quadratic = std::max(r.outer_max_quadratic, e.quadratic(v));
  r.inner_max_excess = -std::numeric_limits<double>::infinity();
  for (const auto& p : e.dilated(0.5).boundary(kSandwichSamples)) {
    r.inner_max_excess = std::max(r.inner_max_excess, body.signed_distance(p));
  }
  r.outer_ok = r.outer_max_quadratic <= 1.0 + tol;
  r.inner_ok = r.inner_max_excess <= tol * body.diameter();
  return r;
}

Mat2 spd_sqrt(const Mat2& m) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(m);
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

AffineMap normalizing_map(const Ellipsoid& e, NormalizeMode mode) {
  AffineMap map;
  map.linear = spd_sqrt(e.shape);
  map.shift = e.center;
  if (mode == NormalizeMode::det_one) map.linear /= std::sqrt(map.linear.determinant());
  return map;
}

AffineMap compose(const AffineMap& outer, const AffineMap& inner) {
  AffineMap map;
  map.linear = outer.linear * inner.linear;
  map.shift = inner.shift + inner.linear.inverse() * outer.shift;
  return map;
}

double eccentricity(const Ellipsoid& e) {
  const Vec2 a = e.axes();
  return a(0) / a(1);
}

double operator_norm(const Mat2& m) {
  Eigen::JacobiSVD<Mat2> svd(m);
  return svd.singularValues()(0);
}

double operator_norm(const AffineMap& map) { return operator_norm(map.linear); }

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

namespace {
double vertex_edge(std::span<const Vec2> from, std::span<const Vec2> to) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& p : from) {
    for (std::size_t i = 0; i < to.size(); ++i) {
      d = std::min(d, point_segment_distance(p, to[i], to[(i + 1) % to.size()]));
    }
  }
  return d;
}

double directed_hausdorff(std::span<const Vec2> a, std::span<const Vec2> b, int per_edge) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec2& p = a[i];
    const Vec2& q = a[(i + 1) % a.size()];
    for (int s = 0; s < per_edge; ++s) {
      const Vec2 x = p + (q - p) * (static_cast<double>(s) / per_edge);
      double d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < b.size(); ++j) {
        d = std::min(d, point_segment_distance(x, b[j], b[(j + 1) % b.size()]));
      }
      worst = std::max(worst, d);
    }
  }
  return worst;
}
}  // namespace

double boundary_distance(const ConvexBody& a, const ConvexBody& b) {
  return std::min(vertex_edge(a.vertices(), b.vertices()), vertex_edge(b.vertices(), a.vertices()));
}

double hausdorff_distance(std::span<const Vec2> a, std::span<const Vec2> b, int per_edge) {
  if (a.empty() || b.empty()) throw InvalidInput("hausdorff distance of empty curve");
  return std::max(directed_hausdorff(a, b, per_edge), directed_hausdorff(b, a, per_edge));
}

double hausdorff_distance(const ConvexBody& a, const ConvexBody& b, int per_edge) {
  return hausdorff_distance(std::span<const Vec2>(a.vertices()), std::span<const Vec2>(b.vertices()),
                            per_edge);
}

nlohmann::json to_json(const ConvexBody& body) {
  nlohmann::json v = nlohmann::json::array();
  for (const auto& p : body.vertices()) v.push_back({p.x(), p.y()});
  return {{"vertices", v}};
}

nlohmann::json to_json(const Ellipsoid& e) {
  return {{"center", {e.center.x(), e.center.y()}},
          {"shape", {{e.shape(0, 0), e.shape(0, 1)}, {e.shape(1, 0), e.shape(1, 1)}}}};
}

nlohmann::json to_json(const AffineMap& map) {
  return {{"linear", {{map.linear(0, 0), map.linear(0, 1)}, {map.linear(1, 0), map.linear(1, 1)}}},
          {"shift", {map.shift.x(), map.shift.y()}}};
}

ConvexBody body_from_json(const nlohmann::json& j) {
  try {
    std::vector<Vec2> v;
    for (const auto& p : j.at("vertices")) v.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    return ConvexBody(std::move(v));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("bad convex body JSON: ") + e.what());
  }
}

Ellipsoid ellipsoid_from_json(const nlohmann::json& j) {
  try {
    const auto& c = j.at("center");
    const auto& s = j.at("shape");
    Mat2 m;
    m << s.at(0).at(0).get<double>(), s.at(0).at(1).get<double>(), s.at(1).at(0).get<double>(),
        s.at(1).at(1).get<double>();
    return Ellipsoid(Vec2(c.at(0).get<double>(), c.at(1).get<double>()), m);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("bad ellipsoid JSON: ") + e.what());
  }
}

}  // namespace masec::geom
