#include "masec/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "masec/expr.hpp"

namespace masec::config {

namespace {

std::string join(const std::vector<std::string>& issues) {
  std::string s = "invalid configuration";
  for (const auto& i : issues) s += "\n  " + i;
  return s;
}

// Reads one JSON object, recording a message per bad or unknown field.
class Reader {
public:
  Reader(const nlohmann::json* j, std::string path, std::vector<std::string>& issues)
      : j_(j), path_(std::move(path)), issues_(issues) {
    if (j_ && !j_->is_object()) {
      issue("", "must be an object");
      j_ = nullptr;
    }
  }

  ~Reader() {
    if (!j_) return;
    for (const auto& [key, value] : j_->items()) {
      if (!seen_.count(key)) issues_.push_back(name(key) + ": unknown field");
    }
  }

  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_ && j_->contains(key) && !j_->at(key).is_null();
  }

  const nlohmann::json* child(const std::string& key) {
    return has(key) ? &j_->at(key) : nullptr;
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void issue(const std::string& key, const std::string& what) {
    issues_.push_back((key.empty() ? path_ : name(key)) + ": " + what);
  }

  template <typename T, typename Check>
  void get(const std::string& key, T& out, Check&& ok, const std::string& rule) {
    if (!has(key)) return;
    try {
      T value = j_->at(key).get<T>();
      if (!ok(value)) {
        issue(key, rule);
        return;
      }
      out = value;
    } catch (const nlohmann::json::exception&) {
      issue(key, "has the wrong type");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    get(key, out, [](const T&) { return true; }, "");
  }

  template <typename T, typename Check>
  void get(const std::string& key, std::optional<T>& out, Check&& ok, const std::string& rule) {
    if (!has(key)) return;
    T value{};
    get(key, value, ok, rule);
    try {
      if (ok(j_->at(key).get<T>())) out = value;
    } catch (const nlohmann::json::exception&) {
    }
  }

  bool vec2(const std::string& key, Vec2& out) {
    if (!has(key)) return false;
    const auto& v = j_->at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      issue(key, "must be a pair of numbers");
      return false;
    }
    out = Vec2(v[0].get<double>(), v[1].get<double>());
    return true;
  }

private:
  const nlohmann::json* j_;
  std::string path_;
  std::vector<std::string>& issues_;
  std::set<std::string> seen_;
};

const auto positive = [](double x) { return x > 0.0 && std::isfinite(x); };
const auto non_negative = [](double x) { return x >= 0.0 && std::isfinite(x); };

bool check_expression(const std::string& source, const std::string& field, std::vector<std::string>& issues) {
  try {
    (void)Expression::parse(source);
    return true;
  } catch (const InvalidInput& e) {
    issues.push_back(field + ": " + e.what());
    return false;
  }
}

std::vector<std::vector<double>> read_lattice(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw InvalidInput("non-numeric entry '" + cell + "' in " + path.string());
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void read_domain(Reader& r, DomainSpec& d) {
  std::string kind = "disc";
  r.get("kind", kind);
  r.vec2("center", d.center);
  if (kind == "disc") {
    d.kind = DomainSpec::Kind::disc;
    r.get("radius", d.radius, positive, "must be positive");
    r.get("sides", d.sides, [](int s) { return s >= 8; }, "must be at least 8");
  } else if (kind == "box") {
    d.kind = DomainSpec::Kind::box;
    if (r.vec2("half_widths", d.half_widths) && !(d.half_widths.x() > 0.0 && d.half_widths.y() > 0.0))
      r.issue("half_widths", "must be positive");
  } else if (kind == "polygon") {
    d.kind = DomainSpec::Kind::polygon;
    const auto* v = r.child("vertices");
    if (!v || !v->is_array() || v->size() < 3) {
      r.issue("vertices", "needs at least three points");
    } else {
      for (const auto& p : *v) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
          r.issue("vertices", "entries must be pairs of numbers");
          return;
        }
        d.vertices.emplace_back(p[0].get<double>(), p[1].get<double>());
      }
      try {
        (void)d.body();
      } catch (const Error& e) {
        r.issue("vertices", e.what());
      }
    }
  } else {
    r.issue("kind", "must be disc, box or polygon");
  }
}

void read_rhs(Reader& r, RhsSpec& f, const std::filesystem::path& base, std::vector<std::string>& issues) {
  std::string kind = "constant";
  r.get("kind", kind);
  if (kind == "constant") {
    f.kind = RhsSpec::Kind::constant;
    r.get("value", f.value, positive, "must be positive");
  } else if (kind == "expr") {
    f.kind = RhsSpec::Kind::expr;
    if (!r.has("expression")) r.issue("expression", "is required");
    r.get("expression", f.expression);
    if (!f.expression.empty()) check_expression(f.expression, r.name("expression"), issues);
  } else if (kind == "grid") {
    f.kind = RhsSpec::Kind::grid;
    std::string p;
    r.get("path", p);
    if (p.empty()) {
      r.issue("path", "is required");
    } else {
      f.path = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p;
      if (!std::filesystem::exists(f.path)) r.issue("path", "file " + f.path.string() + " does not exist");
    }
  } else {
    r.issue("kind", "must be constant, expr or grid");
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues) : InvalidInput(join(issues)), issues_(std::move(issues)) {}

geom::ConvexBody DomainSpec::body() const {
  switch (kind) {
    case Kind::disc: return geom::regular_polygon(center, radius, sides);
    case Kind::box: {
      const Vec2 a = half_widths;
      return geom::ConvexBody({center + Vec2(-a.x(), -a.y()), center + Vec2(a.x(), -a.y()),
                               center + Vec2(a.x(), a.y()), center + Vec2(-a.x(), a.y())});
    }
    case Kind::polygon: return geom::ConvexBody(vertices);
  }
  throw InvalidInput("unknown domain kind");
}

ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  std::vector<std::string> issues;
  ExperimentConfig c;
  {
    Reader top(&j, "", issues);
    {
      Reader pr(top.child("problem"), "problem", issues);
      if (!top.has("problem")) issues.push_back("problem: is required");
      {
        Reader dr(pr.child("domain"), "problem.domain", issues);
        read_domain(dr, c.problem.domain);
      }
      {
        Reader rr(pr.child("rhs"), "problem.rhs", issues);
        read_rhs(rr, c.problem.rhs, base_dir, issues);
      }
      std::string text;
      if (pr.has("boundary")) {
        pr.get("boundary", text);
        if (check_expression(text, "problem.boundary", issues)) c.problem.boundary = text;
      }
      if (pr.has("exact")) {
        text.clear();
        pr.get("exact", text);
        if (check_expression(text, "problem.exact", issues)) c.problem.exact = text;
      }
      pr.get("epsilon", c.problem.epsilon, [](double e) { return e >= 0.0 && e < 0.5; }, "must lie in [0, 1/2)");
    }
    {
      Reader sr(top.child("solver"), "solver", issues);
      std::string scheme = to_string(c.solver.scheme);
      sr.get("scheme", scheme);
      try {
        c.solver.scheme = scheme_from_string(scheme);
      } catch (const InvalidInput&) {
        sr.issue("scheme", "must be newton_fd or wide_stencil");
      }
      sr.get("cells", c.solver.cells, [](int n) { return n >= 8 && n <= 4096; }, "must lie in [8, 4096]");
      sr.get("tolerance", c.solver.tolerance, positive, "must be positive");
      sr.get("max_iterations", c.solver.max_iterations, [](int n) { return n >= 1; }, "must be at least 1");
      sr.get("stall_window", c.solver.stall_window, [](int n) { return n >= 1; }, "must be at least 1");
      sr.get("stall_reduction", c.solver.stall_reduction, positive, "must be positive");
      sr.get("directions", c.solver.directions, [](int n) { return n == 8 || n == 16; }, "must be 8 or 16");
      sr.get("fallback", c.solver.fallback);
    }
    {
      Reader cr(top.child("cascade"), "cascade", issues);
      if (const auto* p = cr.child("params")) {
        try {
          if (!p->is_object()) throw InvalidInput("must be an object");
          static const std::set<std::string> known{"mu", "c_hat", "c_hat0", "c_hat1", "c_hat2", "c_hat3", "c3",
                                                   "c4", "c5",  "c6",     "C0",     "n",      "sigma0", "delta0"};
          for (const auto& [key, value] : p->items()) {
            if (!known.count(key)) issues.push_back("cascade.params." + key + ": unknown field");
          }
          c.cascade.params = cascade::params_from_json(*p);
          c.cascade.params.validate();
        } catch (const InvalidInput& e) {
          issues.push_back(std::string("cascade.params: ") + e.what());
        } catch (const nlohmann::json::exception&) {
          issues.push_back("cascade.params: has a field of the wrong type");
        }
      }
      cr.get("scalar_k_max", c.cascade.scalar_k_max, [](int n) { return n >= 0 && n <= 10000; }, "must lie in [0, 10000]");
      cr.get("geometric_k_max", c.cascade.geometric_k_max, [](int n) { return n >= 1 && n <= 64; }, "must lie in [1, 64]");
      cr.get("min_cells", c.cascade.min_cells, positive, "must be positive");
      cr.get("unit_vectors", c.cascade.unit_vectors, [](int n) { return n >= 0; }, "must be non-negative");
      cr.get("calibrate", c.cascade.calibrate);
      cr.get("calibration_candidates", c.cascade.calibration_candidates,
             [](const std::vector<double>& v) { return !v.empty() && std::all_of(v.begin(), v.end(), positive); },
             "must be a non-empty list of positive numbers");
      if (cr.has("k_bound")) {
        if (const auto* kb = cr.child("k_bound"); kb->is_number()) {
          cr.get("k_bound", c.cascade.k_bound_value, positive, "must be positive");
          c.cascade.k_bound = "value";
        } else {
          cr.get("k_bound", c.cascade.k_bound, [](const std::string& s) { return s == "uniform" || s == "none"; },
                 "must be \"uniform\", \"none\" or a positive number");
        }
      }
      {
        Reader orr(cr.child("omega"), "cascade.omega", issues);
        auto& o = c.cascade.omega;
        std::string kind = "sampled";
        orr.get("kind", kind);
        if (kind == "sampled") o.kind = OmegaSpec::Kind::sampled;
        else if (kind == "holder") o.kind = OmegaSpec::Kind::holder;
        else if (kind == "log_power") o.kind = OmegaSpec::Kind::log_power;
        else if (kind == "constant") o.kind = OmegaSpec::Kind::constant;
        else if (kind == "zero") o.kind = OmegaSpec::Kind::zero;
        else orr.issue("kind", "must be sampled, holder, log_power, constant or zero");
        orr.get("alpha", o.alpha, [](double a) { return a > 0.0 && a <= 1.0; }, "must lie in (0, 1]");
        orr.get("c", o.c, non_negative, "must be non-negative");
        orr.get("p", o.p, positive, "must be positive");
      }
    }
    {
      Reader sr(top.child("sections"), "sections", issues);
      sr.get("count", c.sections.count, [](int n) { return n >= 1 && n <= 64; }, "must lie in [1, 64]");
    }
    {
      Reader vr(top.child("verify"), "verify", issues);
      auto& v = c.verify;
      vr.get("inner_dilation", v.inner_dilation, [](double x) { return x > 0.0 && x < 1.0; }, "must lie in (0, 1)");
      vr.get("d_min_cells", v.d_min_cells, positive, "must be positive");
      vr.get("d_max", v.d_max, [](double x) { return x > 0.0 && x < 1.0; }, "must lie in (0, 1)");
      vr.get("d_count", v.d_count, [](int n) { return n >= 2; }, "must be at least 2");
      vr.get("omega_bins", v.omega_bins, [](std::size_t n) { return n >= 4; }, "must be at least 4");
      vr.get("k_max", v.k_max, [](int n) { return n >= 1 && n <= 64; }, "must lie in [1, 64]");
      vr.get("C0", v.C0, positive, "must be positive");
      vr.get("approximants", v.approximants);
      vr.get("approximant_cells", v.approximant_cells, [](int n) { return n >= 8; }, "must be at least 8");
      vr.get("approximant_k_max", v.approximant_k_max, [](int n) { return n >= 1 && n <= 64; }, "must lie in [1, 64]");
      vr.get("l0", v.l0, [](int n) { return n >= 0; }, "must be non-negative");
    }
    std::string out;
    top.get("output_dir", out);
    if (!out.empty()) c.output_dir = out;
    top.get("seed", c.seed);
    top.get("jobs", c.jobs, [](int n) { return n >= 1 && n <= 256; }, "must lie in [1, 256]");
  }
  if (c.problem.rhs.kind == RhsSpec::Kind::grid && issues.empty()) {
    try {
      (void)build_problem(c);
    } catch (const Error& e) {
      issues.push_back(std::string("problem.rhs.path: ") + e.what());
    }
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  c.canonical = j.dump();
  return c;
}

ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot open " + path.string()});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({std::string("config: ") + e.what()});
  }
  return from_json(j, path.parent_path());
}

ScalarFn lattice_function(std::vector<std::vector<double>> rows, const Vec2& lo, const Vec2& hi) {
  if (rows.size() < 2 || rows.front().size() < 2) throw InvalidInput("value lattice needs at least 2x2 entries");
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw InvalidInput("value lattice rows differ in length");
  }
  const int nx = static_cast<int>(rows.front().size()), ny = static_cast<int>(rows.size());
  const double hx = (hi.x() - lo.x()) / (nx - 1), hy = (hi.y() - lo.y()) / (ny - 1);
  return [rows = std::move(rows), lo, hx, hy, nx, ny](const Vec2& p) {
    const double s = std::clamp((p.x() - lo.x()) / hx, 0.0, nx - 1.0);
    const double t = std::clamp((p.y() - lo.y()) / hy, 0.0, ny - 1.0);
    const int i = std::min(static_cast<int>(s), nx - 2), j = std::min(static_cast<int>(t), ny - 2);
    const double a = s - i, b = t - j;
    return (1 - a) * (1 - b) * rows[j][i] + a * (1 - b) * rows[j][i + 1] + (1 - a) * b * rows[j + 1][i] +
           a * b * rows[j + 1][i + 1];
  };
}

Problem build_problem(const ExperimentConfig& c) {
  const auto body = c.problem.domain.body();
  Problem p{body, {}, {}, c.problem.epsilon};
  const auto& f = c.problem.rhs;
  switch (f.kind) {
    case RhsSpec::Kind::constant: {
      const double value = f.value;
      p.rhs = [value](const Vec2&) { return value; };
      break;
    }
    case RhsSpec::Kind::expr: p.rhs = Expression::parse(f.expression); break;
    case RhsSpec::Kind::grid: {
      const auto [lo, hi] = body.bounds();
      p.rhs = lattice_function(read_lattice(f.path), lo, hi);
      break;
    }
  }
  if (c.problem.boundary) p.boundary = Expression::parse(*c.problem.boundary);
  return p;
}

verify::ReportOptions report_options(const ExperimentConfig& c) {
  verify::ReportOptions r;
  r.solve = c.solver;
  r.inner_dilation = c.verify.inner_dilation;
  r.d_min_cells = c.verify.d_min_cells;
  r.d_max = c.verify.d_max;
  r.d_count = c.verify.d_count;
  r.omega_bins = c.verify.omega_bins;
  r.k_max = c.verify.k_max;
  r.C0 = c.verify.C0;
  r.jobs = c.jobs;
  return r;
}

}  // namespace masec::config
