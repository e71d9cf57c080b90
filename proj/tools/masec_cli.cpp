// masec: run solve, sections, cascade, verify or the full pipeline from a JSON config.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "masec/runner.hpp"

namespace {

int run_command(masec::runner::Command command, const std::string& config_path,
                const masec::runner::RunOptions& options) {
  masec::config::ExperimentConfig cfg;
  try {
    cfg = masec::config::load(config_path);
  } catch (const masec::config::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return masec::runner::exit_config;
  }
  const auto result = masec::runner::run(cfg, command, options, std::cout);
  if (result.exit_code != masec::runner::exit_ok) {
    std::cerr << "error [" << result.status << "]: " << result.message << '\n';
  }
  std::cout << "manifest: " << (result.out_dir / "manifest.json").string() << '\n';
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monge-Ampere section cascade experiments"};
  app.set_version_flag("--version", masec::runner::library_version());
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int jobs = 0;
  std::uint64_t seed = 0;
  bool scalar_only = false;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory (overrides MASEC_OUT_DIR and the config)");
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::Range(1, 256));
    sub->add_option("--seed", seed, "Seed for randomized checks");
  };

  masec::runner::Command command = masec::runner::Command::all;
  for (auto c : {masec::runner::Command::solve, masec::runner::Command::sections, masec::runner::Command::cascade,
                 masec::runner::Command::verify, masec::runner::Command::all}) {
    auto* sub = app.add_subcommand(masec::runner::to_string(c));
    add_common(sub);
    if (c == masec::runner::Command::cascade) sub->add_flag("--scalar-only", scalar_only, "Run only the scalar recursion");
    sub->callback([&command, c] { command = c; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : masec::runner::exit_config;
  }

  masec::runner::RunOptions options;
  options.scalar_only = scalar_only;
  if (!out_dir.empty()) {
    options.out_dir = out_dir;
  } else if (const char* env = std::getenv("MASEC_OUT_DIR"); env && *env) {
    options.out_dir = env;
  }
  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--jobs")) options.jobs = jobs;
    if (sub->count("--seed")) options.seed = seed;
  }
  return run_command(command, config_path, options);
}
