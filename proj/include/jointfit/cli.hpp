#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "jointfit/report.hpp"

namespace jointfit {

enum ExitCode { kExitOk = 0, kExitInput = 1, kExitNonConvergence = 2 };

/// Parsed invocation: command, merged configuration document and the
/// directory relative data paths in the config file are resolved against.
struct RunConfig {
  std::string command;
  Json config = Json::object();
  std::string base_dir = ".";
  std::vector<std::string> positional;

  std::string out_dir() const;
  std::uint64_t seed() const;
  int threads() const;
};

/// Applies one key=value override. Dotted keys address nested blocks;
/// bare keys are resolved against the command's main block.
void apply_override(RunConfig& run, const std::string& assignment);

int cmd_fit(const RunConfig& run, std::ostream& out);
int cmd_simulate(const RunConfig& run, std::ostream& out);
int cmd_compare(const RunConfig& run, std::ostream& out);
int cmd_curve(const RunConfig& run, std::ostream& out);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace jointfit
