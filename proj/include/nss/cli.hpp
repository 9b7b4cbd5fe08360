#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace nss::cli {

inline constexpr const char* kToolName = "nss";
inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr std::uint64_t kDefaultSeed = 20200101;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Parses and runs one subcommand. args excludes the program name.
/// Returns kExitOk, kExitUsage (bad/unknown/conflicting flags) or
/// kExitRuntime (I/O, format or numerical failure).
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Sidecar manifest path written next to a primary output.
std::string manifest_path_for(const std::string& output);

}  // namespace nss::cli
