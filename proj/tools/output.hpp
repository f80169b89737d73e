#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace infalign::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Buffers outputs in memory and writes them together with a manifest, each
/// through a temporary file and a rename. Nothing is written if the command
/// fails before commit().
class OutputCollector {
 public:
  explicit OutputCollector(std::filesystem::path manifest_path);

  void add(std::filesystem::path path, std::string content);

  /// Writes every output, then the manifest listing their checksums.
  /// `config` is echoed into the manifest and hashed.
  void commit(const nlohmann::json& config, std::uint64_t seed);

 private:
  std::filesystem::path manifest_path_;
  std::string started_at_;
  std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

/// UTC timestamp, or SOURCE_DATE_EPOCH when set (reproducible manifests).
std::string timestamp_now();

void write_atomically(const std::filesystem::path& path, const std::string& content);

}  // namespace infalign::cli
