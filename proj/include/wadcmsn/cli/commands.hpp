// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "wadcmsn/cli/config.hpp"

namespace wadcmsn {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

// Maps an exception thrown by a command onto an exit code.
int exit_code_for(const std::exception& e);

// Each command reads its inputs from config.paths (resolved) and returns the
// files it wrote. Inputs are checked for existence before any compute.
std::vector<std::filesystem::path> cmd_gen_synth(const RunConfig& config);
std::vector<std::filesystem::path> cmd_embed(const RunConfig& config);
std::vector<std::filesystem::path> cmd_train(const RunConfig& config);
std::vector<std::filesystem::path> cmd_eval(const RunConfig& config);
std::vector<std::filesystem::path> cmd_retrieve(const RunConfig& config);

// File name of a grid-mode semantic table, e.g. "semantic_a_jc.json".
std::string grid_semantic_name(const std::string& text_source, HierarchyMeasure measure);

// Full command line: parses arguments, runs the subcommand, prints errors to
// `err` and returns the exit code. argv[0] is the program name.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wadcmsn
