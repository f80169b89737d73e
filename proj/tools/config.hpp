#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "infalign/error.hpp"
#include "infalign/fixedpoint.hpp"
#include "infalign/mc_oracle.hpp"
#include "infalign/procedure.hpp"
#include "infalign/transforms.hpp"

namespace infalign::cli {

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A curve transform: either a fixed Phi or a fixed point re-solved at every
/// beta.
struct CurveTransform {
  std::string spec;
  std::optional<Transform> fixed;
  FixedPointKind kind = FixedPointKind::BestOfN;
  int n = 0;

  bool is_fixed_point() const { return !fixed.has_value(); }
  std::string label() const;
};

/// Parses a transform spec, also accepting `bon_fp:<N>` and `won_fp:<N>`.
CurveTransform parse_curve_transform(const std::string& spec);

struct SweepConfig {
  std::vector<std::string> transforms;  // empty: default suite per procedure
  std::vector<std::string> procedures;   // empty: the command's default
  std::vector<double> betas;            // explicit values, used as given
  double beta_min = 0.02;
  double beta_max = 5.0;
  int beta_count = 16;
  // Multiply range betas by each transform's span (max Phi - min Phi).
  bool scale_by_span = true;
  std::vector<double> kl_targets;       // simulate: betas matched to these KLs
  Eigen::Index grid_size = kDefaultGridSize;
  std::size_t mc_trials = kDefaultTrials;
  std::uint64_t seed = 1;
  RewindFallback rewind_fallback = RewindFallback::Last;
  std::string output_dir = "out";
  FixedPointOptions fixed_point;

  static SweepConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Checks ranges and that every spec parses; throws ConfigError.
  void validate() const;

  std::vector<InferenceProcedure> parsed_procedures() const;
  /// Transforms for a procedure: the configured list or the default suite.
  std::vector<CurveTransform> transforms_for(const InferenceProcedure& procedure) const;
  /// Betas for one transform.
  std::vector<double> betas_for(const CurveTransform& transform) const;
};

/// Default suite for a procedure: identity, log, two exponential tilts in the
/// procedure's direction, one against it, and the matching fixed point.
std::vector<std::string> default_transforms(const InferenceProcedure& procedure);

/// Standard transform suite of the oracle checks, with fixed points for `n`.
std::vector<std::string> oracle_transforms(int n = 4);
/// Identity, BoN(2,4,32), WoN(2,4,32) and rewind-and-repeat(0.85, 32).
std::vector<InferenceProcedure> oracle_procedures(RewindFallback fallback);
/// KL levels at which oracle policies are built.
std::vector<double> oracle_kl_targets();

}  // namespace infalign::cli
