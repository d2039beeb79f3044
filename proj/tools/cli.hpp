#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cpe::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kVerificationFailure = 1, kUsageError = 2 };

/// Runs one command line (without the program name) in-process.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Reads CPE_LOG_LEVEL (error, warn, info, debug) and routes logs to stderr.
void configure_logging();

/// Git blob id of the file: sha1("blob <size>\0" + contents), lowercase hex.
std::string git_blob_sha1(const std::filesystem::path& path);

}  // namespace cpe::cli
