#pragma once

#include "cimdl/cimdl.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cimdl::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInvalid = 1,
  kExitDiverged = 2,
  kExitGradcheck = 3,
};

/// key=value settings shared by train and sweep.
struct RunConfig {
  ParameterOverrides overrides;  // hyperparameter keys, resolved once M and N are known
  InitScheme init = InitScheme::SplitIdentity;
  bool standardize = false;
  Index batch_size = 0;
};

/// Applies one setting; unknown keys and malformed values throw ValidationError.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Lines of key=value; blank lines and lines starting with '#' are skipped.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Standardizer statistics written next to a model: "<model>.stats.cimf".
std::filesystem::path stats_path(const std::filesystem::path& model);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cimdl::cli
