// Command-line front end.
//
//   spsb random-task [flags]   train model (a) or (b) on random data
//   spsb quanv [flags]         train the quanvolutional model on IDX images
//   spsb lr-sweep [flags]      both differentiators over a learning-rate list
//   spsb verify                gradient oracle checks, pass/fail table
//   spsb plot --csv F... --out FILE.svg
//
// Exit codes: 0 success, 1 configuration/usage error, 2 data error,
// 3 numerical abort.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "spsb/experiment.hpp"

namespace spsb::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kDataError = 2, kNumericalError = 3 };

// Parses `key = value` lines; '#' starts a comment. DataError if unreadable,
// ConfigError on a malformed line.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);
void write_config_file(const std::filesystem::path& path, const tasks::ExperimentConfig& config);

// args excludes the program name.
int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err);
int run_command(int argc, char** argv);

}  // namespace spsb::cli
