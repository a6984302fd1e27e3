#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace shapenet {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

/// Runs one subcommand (voxelize, synth, train, finetune, complete, classify,
/// nbv, episode, eval). args excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace shapenet
