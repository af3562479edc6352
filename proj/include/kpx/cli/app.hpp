#ifndef KPX_CLI_APP_HPP_
#define KPX_CLI_APP_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace kpx::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,  // training diverged
  kUsage = 2,
  kIo = 3,
  kIncompatible = 4,
};

/// Entry point of the kpx tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Hex SHA-256 of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

}  // namespace kpx::cli

#endif  // KPX_CLI_APP_HPP_
