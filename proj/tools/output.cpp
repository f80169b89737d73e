#include "output.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <system_error>

#include "infalign/error.hpp"
#include "infalign/io.hpp"

namespace infalign::cli {

namespace fs = std::filesystem;

std::string timestamp_now() {
  std::time_t t;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomically(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, content);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

OutputCollector::OutputCollector(fs::path manifest_path)
    : manifest_path_(std::move(manifest_path)), started_at_(timestamp_now()) {}

void OutputCollector::add(fs::path path, std::string content) {
  files_.emplace_back(std::move(path), std::move(content));
}

void OutputCollector::commit(const nlohmann::json& config, std::uint64_t seed) {
  nlohmann::json outputs = nlohmann::json::array();
  const fs::path base = manifest_path_.parent_path();
  std::vector<fs::path> written;
  try {
    for (const auto& [path, content] : files_) {
      write_atomically(path, content);
      written.push_back(path);
      outputs.push_back({{"path", path.lexically_relative(base.empty() ? "." : base).string()},
                         {"fnv1a64", fnv1a_hex(content)},
                         {"bytes", content.size()}});
    }
    const nlohmann::json manifest{{"tool", "infalign"},
                                  {"version", kToolVersion},
                                  {"seed", seed},
                                  {"config", config},
                                  {"config_hash", fnv1a_hex(config.dump())},
                                  {"started_at", started_at_},
                                  {"finished_at", timestamp_now()},
                                  {"outputs", outputs}};
    write_atomically(manifest_path_, manifest.dump(2) + "\n");
  } catch (...) {
    // Leave no unmanifested files behind.
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    throw;
  }
}

}  // namespace infalign::cli
