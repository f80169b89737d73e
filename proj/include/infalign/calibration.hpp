#pragma once

// Empirical per-prompt reward calibration: each prompt owns a sorted table of
// K reference rewards and a response's calibrated score is the fraction of
// the table it beats, counting ties as one half.

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "infalign/error.hpp"

namespace infalign {

inline constexpr std::size_t kDefaultRolloutsPerPrompt = 100;

struct RewardRecord {
  std::string prompt_id;
  std::string response_id;
  double reward = 0;
};

/// A calibrated reward in [0,1].
class CalibratedScore {
 public:
  explicit CalibratedScore(double value);
  double value() const { return value_; }

 private:
  double value_;
};

/// Sorted reference rewards for one prompt. Immutable after construction.
class CalibrationTable {
 public:
  CalibrationTable(std::string prompt_id, std::vector<double> rewards);

  const std::string& prompt_id() const { return prompt_id_; }
  std::span<const double> sorted_rewards() const { return sorted_; }
  std::size_t size() const { return sorted_.size(); }

 private:
  std::string prompt_id_;
  std::vector<double> sorted_;
};

/// Table from every record whose prompt matches. Throws MissingPrompt when no
/// record matches and InvalidReward on non-finite rewards.
CalibrationTable build_table(std::span<const RewardRecord> records,
                             const std::string& prompt_id);

/// One table per distinct prompt in `records`.
std::map<std::string, CalibrationTable> build_tables(
    std::span<const RewardRecord> records);

/// (#{z < r} + 0.5 #{z == r}) / K by binary search.
CalibratedScore empirical_calibrate(const CalibrationTable& table,
                                    double reward);

/// Looks up the prompt's table; throws MissingPrompt if absent.
CalibratedScore empirical_calibrate(
    const std::map<std::string, CalibrationTable>& tables,
    const std::string& prompt_id, double reward);

/// sqrt(log(2/delta) / (2K)): sup-norm deviation of the empirical calibrated
/// reward that holds with probability at least 1 - delta.
double dkw_error_bound(std::size_t rollouts, double delta);

/// True iff calibrating map(r) against the mapped table reproduces the
/// original score exactly for every probe. `map` must be strictly increasing.
bool check_monotone_invariance(const CalibrationTable& table,
                               const std::function<double(double)>& map,
                               std::span<const double> probe_rewards);

}  // namespace infalign
