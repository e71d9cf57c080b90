#pragma once

// Config-driven experiment runs writing CSV/JSON artifacts and a manifest.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "masec/config.hpp"

namespace masec::runner {

enum class Command { solve, sections, cascade, verify, all };
const char* to_string(Command c);
Command command_from_string(const std::string& name);

/// Process exit codes.
enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_config = 2,
  exit_solver = 3,
  exit_hypothesis = 4,
  exit_resolution = 5,
  exit_open_section = 6,
  exit_io = 7,
};
int exit_code_for(ErrorCode code);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  bool scalar_only = false;
};

struct RunResult {
  int exit_code = exit_ok;
  std::string status = "ok";
  std::string message;
  std::filesystem::path out_dir;
  /// Files written, relative to out_dir, manifest excluded.
  std::vector<std::string> outputs;
};

std::uint64_t fnv1a(std::string_view bytes);
std::string library_version();

/// Runs `command`, always writing manifest.json; errors become exit codes.
RunResult run(const config::ExperimentConfig& config, Command command, const RunOptions& options,
              std::ostream& log);

}  // namespace masec::runner
