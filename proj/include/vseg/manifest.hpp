#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vseg {

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Record of one CLI run, written next to its primary output.
struct RunManifest {
  std::string subcommand;
  std::string config_path;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, std::string> parameters;
  // Wall-clock fields, grouped under "timing"; they vary between reruns.
  std::string started_utc;
  std::string finished_utc;
  double runtime_s = 0.0;

  /// Checksums every output, stamps the finish time and writes JSON.
  void write(const std::filesystem::path& path);
};

std::string utc_now();

}  // namespace vseg
