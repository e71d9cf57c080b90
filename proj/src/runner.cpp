#include "masec/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "masec/expr.hpp"

#ifndef MASEC_VERSION
#define MASEC_VERSION "0.0.0"
#endif

namespace masec::runner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Context {
public:
  Context(const config::ExperimentConfig& c, const RunOptions& o, std::ostream& log)
      : cfg(c), opts(o), log(log), problem(config::build_problem(c)) {
    out = o.out_dir ? *o.out_dir : c.output_dir;
    jobs = o.jobs ? *o.jobs : c.jobs;
    seed = o.seed ? *o.seed : c.seed;
  }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ostringstream s;
    body(s);
    std::ofstream f(out / name, std::ios::binary);
    if (!f) throw IoError("cannot write " + (out / name).string());
    f << s.str();
    if (!f) throw IoError("failed writing " + (out / name).string());
    outputs.push_back(name);
  }

  void write_json(const std::string& name, const json& j) {
    write(name, [&](std::ostream& s) { s << j.dump(2) << '\n'; });
  }

  const SolveResult& solution() {
    if (!solved) {
      SolveOptions so = cfg.solver;
      log << "solve: " << cfg.solver.cells << " cells, scheme " << to_string(so.scheme) << '\n';
      solved = solve(problem, so);
    }
    return *solved;
  }

  /// Cascade parameters, calibrated against the measured oscillations when requested.
  const cascade::CascadeParams& params() {
    if (resolved_params) return *resolved_params;
    cascade::CascadeParams p = cfg.cascade.params;
    if (cfg.cascade.calibrate) {
      const auto& v = solution().field;
      cascade::GeometricOptions go;
      go.k_max = cfg.cascade.geometric_k_max;
      go.min_cells = cfg.cascade.min_cells;
      go.keep_sections = false;
      const auto probe = cascade::run_geometric_cascade(v, problem.rhs, p, go);
      std::vector<double> deltas;
      for (const auto& s : probe.states) deltas.push_back(s.delta);
      const auto cal = cascade::calibrate(p, deltas, cfg.cascade.calibration_candidates,
                                          std::min(cfg.cascade.scalar_k_max, 10));
      p = cal.params;
      calibration = json::array();
      for (const auto& [c, pass] : cal.ladder) calibration.push_back({{"c_hat", c}, {"passed", pass}});
      log << "calibrated c_hat = " << p.c_hat << '\n';
    }
    resolved_params = p;
    return *resolved_params;
  }

  const config::ExperimentConfig& cfg;
  const RunOptions& opts;
  std::ostream& log;
  Problem problem;
  fs::path out;
  int jobs = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::optional<SolveResult> solved;
  std::optional<cascade::CascadeParams> resolved_params;
  json calibration = nullptr;
};

void stage_solve(Context& ctx) {
  const auto& s = ctx.solution();
  json j{{"iterations", s.iterations},
         {"residual", s.residual},
         {"scheme", to_string(s.scheme)},
         {"fell_back", s.fell_back},
         {"h", s.field.h()},
         {"cells", ctx.cfg.solver.cells}};
  if (ctx.cfg.problem.exact) {
    const double err = max_abs_error(s.field, Expression::parse(*ctx.cfg.problem.exact));
    j["max_error"] = err;
    ctx.log << "max error vs exact: " << err << '\n';
  }
  ctx.write("solution.csv", [&](std::ostream& o) { s.field.write_csv(o); });
  ctx.write_json("solve.json", j);
}

void stage_sections(Context& ctx) {
  const auto& v = ctx.solution().field;
  const auto& p = ctx.params();
  const Vec2 x0 = cascade::discrete_minimum(v);
  const double f0 = ctx.problem.rhs(x0);
  if (!(f0 > 0.0)) throw InvalidInput("rhs must be positive at the minimum");
  json list = json::array();
  std::ostringstream csv;
  csv.precision(12);
  csv << "k,height,area,area_over_h,eccentricity,hull_deviation,contained\n";
  std::string stop = "ok";
  for (int k = 1; k <= ctx.cfg.sections.count; ++k) {
    const double height = std::pow(p.mu, k) * std::sqrt(f0);
    std::optional<sections::Section> s;
    try {
      s = sections::extract_section(v, x0, height, Vec2::Zero());
    } catch (const OpenSection&) {
      if (list.empty()) continue;
      stop = "open_section";
      break;
    } catch (const ResolutionExhausted&) {
      stop = "resolution_exhausted";
      break;
    }
    const auto vol = sections::volume_check(*s);
    const auto ecc = sections::eccentricity_check(*s);
    csv << k << ',' << height << ',' << vol.area << ',' << vol.ratio << ',' << ecc.ratio << ',' << s->hull_deviation
        << ',' << (s->contained_in_domain ? 1 : 0) << '\n';
    json sj = sections::to_json(*s);
    sj["k"] = k;
    sj["area_over_h"] = vol.ratio;
    sj["eccentricity"] = ecc.ratio;
    list.push_back(std::move(sj));
  }
  ctx.write("sections.csv", [&](std::ostream& o) { o << csv.str(); });
  ctx.write_json("sections.json", {{"base", {x0.x(), x0.y()}}, {"stop", stop}, {"sections", list}});
  if (list.empty()) {
    if (stop == "open_section") throw OpenSection("every requested section reaches the boundary");
    throw ResolutionExhausted("no section resolved on this grid");
  }
}

moduli::Modulus model_omega(Context& ctx) {
  using namespace moduli;
  const auto& o = ctx.cfg.cascade.omega;
  switch (o.kind) {
    case config::OmegaSpec::Kind::holder: return modulus_model(Holder{o.alpha, o.c});
    case config::OmegaSpec::Kind::log_power: return modulus_model(LogPower{o.p});
    case config::OmegaSpec::Kind::constant: return modulus_model(Constant{o.c});
    case config::OmegaSpec::Kind::zero: return modulus_model(Zero{});
    case config::OmegaSpec::Kind::sampled: break;
  }
  const auto& body = ctx.problem.domain;
  const ScalarField2D grid(body, grid_for(body, ctx.cfg.solver.cells));
  const double f0 = ctx.problem.rhs(body.interior_point());
  return verify::sampled_rhs_modulus(grid, ctx.problem.rhs, ctx.cfg.verify.omega_bins).scaled(1.0 / f0);
}

void stage_cascade(Context& ctx) {
  const bool scalar_only = ctx.opts.scalar_only;
  std::optional<moduli::Modulus> omega;
  Vec2 x0 = Vec2::Zero();
  if (!scalar_only) x0 = cascade::discrete_minimum(ctx.solution().field);
  if (scalar_only || ctx.cfg.cascade.omega.kind != config::OmegaSpec::Kind::sampled) {
    omega = model_omega(ctx);
  } else {
    const auto& v = ctx.solution().field;
    omega = verify::sampled_rhs_modulus(v, ctx.problem.rhs, ctx.cfg.verify.omega_bins).scaled(1.0 / ctx.problem.rhs(x0));
  }
  const auto& p = scalar_only ? ctx.cfg.cascade.params : ctx.params();
  json summary{{"params", cascade::to_json(p)}, {"calibration", ctx.calibration}};

  cascade::ScalarOptions so;
  so.k_max = ctx.cfg.cascade.scalar_k_max;
  std::optional<double> K;
  try {
    const auto semi = moduli::chalf_seminorm(*omega);
    const auto kc = cascade::k_constant(semi, p);
    K = kc.value;
    summary["seminorm"] = semi.value;
    summary["K"] = {{"value", kc.value}, {"C1", kc.C1}, {"C2", kc.C2}};
    summary["uniform_log_bound"] = cascade::uniform_log_bound(semi.value, p);
  } catch (const DivergenceError& e) {
    summary["seminorm"] = "divergent";
    if (ctx.cfg.cascade.k_bound == "uniform") {
      ctx.write_json("cascade_summary.json", summary);
      throw CascadeHypothesisError("finite C^{1/2} semi-norm", 0);
    }
  }
  if (ctx.cfg.cascade.k_bound == "uniform") so.k_bound = K;
  else if (ctx.cfg.cascade.k_bound == "value") so.k_bound = ctx.cfg.cascade.k_bound_value;
  if (so.k_bound) summary["k_bound"] = *so.k_bound;

  const auto scalar = cascade::run_scalar_cascade(p, *omega, so);
  ctx.write("cascade_scalar.csv", [&](std::ostream& o) { cascade::write_trace_csv(o, scalar); });
  ctx.write_json("cascade_scalar.json", cascade::to_json(scalar));
  summary["scalar_status"] = cascade::to_string(scalar.status);
  summary["scalar_steps"] = scalar.states.size();
  ctx.log << "scalar cascade: " << scalar.states.size() << " states, " << cascade::to_string(scalar.status) << '\n';

  std::optional<cascade::CascadeTrace> geometric;
  if (!scalar_only) {
    const auto& v = ctx.solution().field;
    cascade::GeometricOptions go;
    go.k_max = ctx.cfg.cascade.geometric_k_max;
    go.base = x0;
    go.budget = scalar;
    go.min_cells = ctx.cfg.cascade.min_cells;
    go.keep_sections = false;
    geometric = cascade::run_geometric_cascade(v, ctx.problem.rhs, p, go);
    ctx.write("cascade_geometric.csv", [&](std::ostream& o) { cascade::write_trace_csv(o, *geometric); });
    ctx.write_json("cascade_geometric.json", cascade::to_json(*geometric));
    summary["geometric_status"] = cascade::to_string(geometric->status);
    summary["geometric_steps"] = geometric->states.size();
    ctx.log << "geometric cascade: " << geometric->states.size() << " steps, "
            << cascade::to_string(geometric->status) << '\n';

    if (K && ctx.cfg.cascade.unit_vectors > 0) {
      std::mt19937_64 rng(ctx.seed);
      std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
      std::vector<Vec2> dirs;
      for (int i = 0; i < ctx.cfg.cascade.unit_vectors; ++i) {
        const double t = angle(rng);
        dirs.emplace_back(std::cos(t), std::sin(t));
      }
      double worst = 0.0;
      for (const auto& s : geometric->states) {
        for (const auto& x : dirs) worst = std::max(worst, (s.A.linear * x).squaredNorm());
      }
      summary["unit_vector_check"] = {{"count", dirs.size()}, {"max_norm_sq", worst}, {"passed", worst <= *K}};
    }
  }
  ctx.write_json("cascade_summary.json", summary);

  if (scalar.status == cascade::Status::hypothesis_failed) throw CascadeHypothesisError(scalar.failure, scalar.failure_index);
  if (geometric && geometric->states.empty()) {
    if (geometric->status == cascade::Status::open_section) throw OpenSection(geometric->failure);
    throw ResolutionExhausted(geometric->failure.empty() ? "no cascade step resolved" : geometric->failure);
  }
}

void stage_verify(Context& ctx) {
  const auto& sol = ctx.solution();
  const auto& p = ctx.params();
  auto ro = config::report_options(ctx.cfg);
  ro.jobs = ctx.jobs;
  const auto result = verify::run_pipeline(ctx.problem, sol, p, ro);
  ctx.write_json("bound_report.json", verify::to_json(result.report));
  ctx.write("bound.csv", [&](std::ostream& o) { verify::write_bound_csv(o, result.report); });
  ctx.write("omega.csv", [&](std::ostream& o) { moduli::write_csv(o, result.omega); });
  ctx.log << "bound report: K = " << result.report.K.value << ", C0 = " << result.report.C0
          << ", margin = " << result.report.margin << '\n';
  if (ctx.cfg.verify.approximants) {
    verify::ApproximantOptions ao;
    ao.cells = ctx.cfg.verify.approximant_cells;
    ao.k_max = ctx.cfg.verify.approximant_k_max;
    ao.base = result.report.base;
    const auto t = verify::build_approximants(sol.field, ctx.problem.rhs, p, ao);
    ctx.write("approximants.csv", [&](std::ostream& o) { verify::write_approximant_csv(o, t); });
    ctx.write_json("approximants.json", verify::to_json(t));
    ctx.log << "approximants: " << t.entries.size() << " sections, " << cascade::to_string(t.status) << '\n';
  }
}

}  // namespace

const char* to_string(Command c) {
  switch (c) {
    case Command::solve: return "solve";
    case Command::sections: return "sections";
    case Command::cascade: return "cascade";
    case Command::verify: return "verify";
    case Command::all: return "all";
  }
  return "?";
}

Command command_from_string(const std::string& name) {
  for (Command c : {Command::solve, Command::sections, Command::cascade, Command::verify, Command::all}) {
    if (name == to_string(c)) return c;
  }
  throw InvalidInput("unknown command '" + name + "'");
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return exit_config;
    case ErrorCode::solver_stalled: return exit_solver;
    case ErrorCode::divergence:
    case ErrorCode::cascade_hypothesis: return exit_hypothesis;
    case ErrorCode::degenerate:
    case ErrorCode::out_of_stencil:
    case ErrorCode::resolution_exhausted: return exit_resolution;
    case ErrorCode::open_section: return exit_open_section;
    case ErrorCode::io: return exit_io;
  }
  return exit_internal;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string library_version() { return MASEC_VERSION; }

RunResult run(const config::ExperimentConfig& config, Command command, const RunOptions& options, std::ostream& log) {
  RunResult result;
  result.out_dir = options.out_dir ? *options.out_dir : config.output_dir;
  std::optional<Context> ctx;
  try {
    std::error_code ec;
    fs::create_directories(result.out_dir, ec);
    if (ec) throw IoError("cannot create " + result.out_dir.string() + ": " + ec.message());
    ctx.emplace(config, options, log);
    switch (command) {
      case Command::solve: stage_solve(*ctx); break;
      case Command::sections: stage_sections(*ctx); break;
      case Command::cascade:
        if (!options.scalar_only) stage_solve(*ctx);
        stage_cascade(*ctx);
        break;
      case Command::verify: stage_verify(*ctx); break;
      case Command::all:
        stage_solve(*ctx);
        stage_sections(*ctx);
        stage_cascade(*ctx);
        stage_verify(*ctx);
        break;
    }
  } catch (const Error& e) {
    result.exit_code = exit_code_for(e.code());
    result.status = masec::to_string(e.code());
    result.message = e.what();
  } catch (const std::exception& e) {
    result.exit_code = exit_internal;
    result.status = "internal";
    result.message = e.what();
  }
  if (ctx) result.outputs = ctx->outputs;

  json outputs = json::array();
  for (const auto& name : result.outputs) {
    std::ifstream in(result.out_dir / name, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    outputs.push_back({{"file", name}, {"fnv1a", hex64(fnv1a(s.str()))}});
  }
  const std::string version = library_version();
  json manifest{{"command", to_string(command)},
                {"config_hash", "fnv1a64:" + hex64(fnv1a(config.canonical))},
                {"seed", ctx ? ctx->seed : config.seed},
                {"jobs", ctx ? ctx->jobs : config.jobs},
                {"scalar_only", options.scalar_only},
                {"versions",
                 {{"moduli", version}, {"convexgeom", version}, {"masolver", version}, {"sections", version},
                  {"cascade", version}, {"verify", version}, {"cli", version}}},
                {"outputs", outputs},
                {"status", result.status},
                {"exit_code", result.exit_code},
                {"message", result.message},
                {"timestamp", utc_now()}};
  std::ofstream m(result.out_dir / "manifest.json", std::ios::binary);
  if (m) {
    m << manifest.dump(2) << '\n';
  } else if (result.exit_code == exit_ok) {
    result.exit_code = exit_io;
    result.status = "io";
    result.message = "cannot write manifest";
  }
  return result;
}

}  // namespace masec::runner
