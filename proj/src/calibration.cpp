#include "infalign/calibration.hpp"

#include <algorithm>
#include <cmath>

namespace infalign {

CalibratedScore::CalibratedScore(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw DomainError("calibrated score outside [0,1]");
  }
}

CalibrationTable::CalibrationTable(std::string prompt_id,
                                   std::vector<double> rewards)
    : prompt_id_(std::move(prompt_id)), sorted_(std::move(rewards)) {
  if (sorted_.empty()) {
    throw MissingPrompt("no rewards for prompt '" + prompt_id_ + "'");
  }
  for (double r : sorted_) {
    if (!std::isfinite(r)) {
      throw InvalidReward("non-finite reward for prompt '" + prompt_id_ + "'");
    }
  }
  std::sort(sorted_.begin(), sorted_.end());
}

CalibrationTable build_table(std::span<const RewardRecord> records,
                             const std::string& prompt_id) {
  std::vector<double> rewards;
  for (const auto& rec : records) {
    if (rec.prompt_id == prompt_id) rewards.push_back(rec.reward);
  }
  return CalibrationTable(prompt_id, std::move(rewards));
}

std::map<std::string, CalibrationTable> build_tables(
    std::span<const RewardRecord> records) {
  std::map<std::string, std::vector<double>> grouped;
  for (const auto& rec : records) grouped[rec.prompt_id].push_back(rec.reward);
  std::map<std::string, CalibrationTable> tables;
  for (auto& [prompt, rewards] : grouped) {
    tables.emplace(prompt, CalibrationTable(prompt, std::move(rewards)));
  }
  return tables;
}

CalibratedScore empirical_calibrate(const CalibrationTable& table,
                                    double reward) {
  if (!std::isfinite(reward)) throw InvalidReward("non-finite query reward");
  const auto z = table.sorted_rewards();
  const auto lo = std::lower_bound(z.begin(), z.end(), reward);
  const auto hi = std::upper_bound(lo, z.end(), reward);
  const double wins = static_cast<double>(lo - z.begin());
  const double ties = static_cast<double>(hi - lo);
  return CalibratedScore((wins + 0.5 * ties) / static_cast<double>(z.size()));
}

CalibratedScore empirical_calibrate(
    const std::map<std::string, CalibrationTable>& tables,
    const std::string& prompt_id, double reward) {
  const auto it = tables.find(prompt_id);
  if (it == tables.end()) {
    throw MissingPrompt("no calibration table for prompt '" + prompt_id + "'");
  }
  return empirical_calibrate(it->second, reward);
}

double dkw_error_bound(std::size_t rollouts, double delta) {
  if (rollouts == 0) throw InvalidParameter("K must be positive");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw InvalidParameter("delta must lie in (0,1)");
  }
  return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(rollouts)));
}

bool check_monotone_invariance(const CalibrationTable& table,
                               const std::function<double(double)>& map,
                               std::span<const double> probe_rewards) {
  std::vector<double> mapped;
  mapped.reserve(table.size());
  for (double r : table.sorted_rewards()) mapped.push_back(map(r));
  const CalibrationTable mapped_table(table.prompt_id(), std::move(mapped));
  return std::all_of(probe_rewards.begin(), probe_rewards.end(), [&](double r) {
    return empirical_calibrate(table, r).value() ==
           empirical_calibrate(mapped_table, map(r)).value();
  });
}

}  // namespace infalign
