#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace msclstm::cli {

inline constexpr std::string_view kToolName = "msclstm";
inline constexpr std::string_view kToolVersion = "0.1.0";

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitInput = 2,          // configuration, schema, data or I/O
  kExitCompatibility = 3,  // checkpoint does not fit the dataset
  kExitCorrupt = 4,        // malformed or unsupported artifact
};

inline constexpr std::string_view kManifestFile = "run_manifest.json";
inline constexpr std::string_view kCheckpointFile = "model.ckpt";
inline constexpr std::string_view kEpochLogFile = "epoch_log.csv";
inline constexpr std::string_view kCurvesFile = "curves.svg";
inline constexpr std::string_view kReportFile = "report.json";
inline constexpr std::string_view kPredictionsFile = "predictions.csv";

/// Runs one invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace msclstm::cli
