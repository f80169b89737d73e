#pragma once

// Text formats shared by the library and the command-line tool.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "infalign/calibration.hpp"

namespace infalign {

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double x);

/// Strict parse of a full string as a double; throws ParseError.
double parse_double(std::string_view text);

/// Numeric CSV with a header row that must equal `columns` exactly.
/// Line numbers in errors are 1-based and count the header.
std::vector<std::vector<double>> read_csv(std::istream& in,
                                          const std::vector<std::string>& columns);

/// Writes `content` to `path`, replacing any existing file.
void write_file(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// Line-delimited JSON reward records (`prompt_id`, `response_id`, `reward`).
/// Blank lines are skipped; duplicate (prompt_id, response_id) pairs and
/// non-finite rewards are rejected with the offending line number.
std::vector<RewardRecord> read_reward_records(std::istream& in);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace infalign
