#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "infalign/mc_oracle.hpp"

namespace infalign::cli {

struct Check {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  std::size_t trials = kDefaultTrials;
  Eigen::Index grid_size = kDefaultGridSize;
  RewindFallback fallback = RewindFallback::Last;
  FixedPointOptions fixed_point;
};

inline const std::vector<std::string> kSuites = {
    "trivial", "anchors", "calibration", "oracle", "ordering", "fixedpoint", "discrete", "multitask"};

/// Runs one suite by name ("all" runs every suite). Throws ConfigError for an
/// unknown name.
std::vector<Check> run_suite(const std::string& name, const VerifyOptions& options);

/// One aligned policy per (transform, KL target), with beta chosen so the
/// policy's KL matches the target. Fixed-point transforms are re-solved at
/// their matched beta.
std::vector<OraclePolicy> build_kl_matched_policies(const std::vector<std::string>& transforms,
                                                    const std::vector<double>& kl_targets,
                                                    Eigen::Index grid_size,
                                                    const FixedPointOptions& fp_options);

/// |mc - analytic| <= sigmas * std_error + 1 / trials. The last term is the
/// resolution of a finite run: with every trial won the standard error is 0.
bool within_error(const OracleCell& cell, double sigmas = 3.0);

}  // namespace infalign::cli
