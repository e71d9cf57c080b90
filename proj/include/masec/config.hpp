#pragma once

// Experiment configuration: a single JSON document validated field by field
// before any computation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "masec/cascade.hpp"
#include "masec/error.hpp"
#include "masec/masolver.hpp"
#include "masec/verify.hpp"

namespace masec::config {

/// Validation failure carrying one message per offending field.
class ConfigError : public InvalidInput {
public:
  explicit ConfigError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const noexcept { return issues_; }

private:
  std::vector<std::string> issues_;
};

struct DomainSpec {
  enum class Kind { disc, box, polygon };
  Kind kind = Kind::disc;
  Vec2 center = Vec2::Zero();
  double radius = 1.0;
  int sides = 128;
  Vec2 half_widths = Vec2::Ones();
  std::vector<Vec2> vertices;

  geom::ConvexBody body() const;
};

struct RhsSpec {
  enum class Kind { constant, expr, grid };
  Kind kind = Kind::constant;
  double value = 1.0;
  std::string expression;
  /// CSV of values on a uniform lattice over the domain's bounding box, first row at the bottom.
  std::filesystem::path path;
};

struct ProblemSpec {
  DomainSpec domain;
  RhsSpec rhs;
  std::optional<std::string> boundary;
  /// Known solution used to report the solve error.
  std::optional<std::string> exact;
  std::optional<double> epsilon;
};

/// Modulus fed to the scalar cascade.
struct OmegaSpec {
  enum class Kind { sampled, holder, log_power, constant, zero };
  Kind kind = Kind::sampled;
  double alpha = 1.0;
  double c = 1.0;
  double p = 3.0;
};

struct CascadeSpec {
  cascade::CascadeParams params;
  int scalar_k_max = 50;
  int geometric_k_max = 10;
  double min_cells = 8.0;
  OmegaSpec omega;
  /// "uniform" uses K from the semi-norm, "none" disables the check, a number is used as is.
  std::string k_bound = "uniform";
  std::optional<double> k_bound_value;
  bool calibrate = false;
  std::vector<double> calibration_candidates{1.0, 0.5, 0.25, 0.125, 0.0625};
  /// Random unit vectors for the |A_k x|^2 <= K |x|^2 check.
  int unit_vectors = 100;
};

struct SectionsSpec {
  int count = 6;
};

struct VerifySpec {
  double inner_dilation = 0.5;
  double d_min_cells = 4.0;
  double d_max = 0.1;
  int d_count = 12;
  std::size_t omega_bins = 48;
  int k_max = 10;
  std::optional<double> C0;
  bool approximants = true;
  int approximant_cells = 64;
  int approximant_k_max = 10;
  /// Offset of comparison sections; recorded but unused.
  int l0 = 3;
};

struct ExperimentConfig {
  ProblemSpec problem;
  SolveOptions solver;
  CascadeSpec cascade;
  SectionsSpec sections;
  VerifySpec verify;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  int jobs = 1;
  /// Canonical dump of the validated input document.
  std::string canonical;
};

/// Relative paths inside the document resolve against `base_dir`.
ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load(const std::filesystem::path& path);

Problem build_problem(const ExperimentConfig& c);
verify::ReportOptions report_options(const ExperimentConfig& c);

/// Bilinear interpolant of a value lattice covering [lo, hi].
ScalarFn lattice_function(std::vector<std::vector<double>> rows, const Vec2& lo, const Vec2& hi);

}  // namespace masec::config
