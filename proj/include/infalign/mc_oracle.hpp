#pragma once

// Monte Carlo oracle: simulates continuous toy language models in calibrated
// reward space and serves them through inference-time procedures by literal
// sampling, independently of the closed-form integrals.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "infalign/analytic.hpp"

namespace infalign {

inline constexpr std::size_t kDefaultTrials = 1'000'000;

/// Counter-based generator: the n-th output of stream (seed, stream) is a
/// SplitMix64 hash of a key derived from both and n, so streams are
/// reproducible and independent of scheduling.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream);

  result_type operator()() {
    std::uint64_t z = key_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  /// Uniform on the open interval (0,1).
  double uniform() { return (double((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

enum class BaseDistribution { Uniform, Exponential };

/// A continuous toy model: raw rewards follow the base distribution under the
/// base policy, and the aligned policy tilts calibrated rewards by
/// exp(Phi / beta). A model without a policy is the base policy itself.
struct ToyModel {
  BaseDistribution base = BaseDistribution::Uniform;
  std::shared_ptr<const TiltedPolicy> policy;
  std::uint64_t seed = 0;

  static ToyModel base_policy(std::uint64_t seed,
                              BaseDistribution base = BaseDistribution::Uniform);
  static ToyModel aligned(const Transform& transform, double beta, std::uint64_t seed,
                          BaseDistribution base = BaseDistribution::Uniform,
                          Eigen::Index grid_size = kDefaultGridSize);
  static ToyModel aligned(std::shared_ptr<const TiltedPolicy> policy, std::uint64_t seed,
                          BaseDistribution base = BaseDistribution::Uniform);

  double beta() const;
};

struct MCEstimate {
  double value = 0;
  double std_error = 0;
  std::size_t samples = 0;
};

/// Draws from the aligned policy, returned as calibrated rewards in [0,1].
std::vector<double> sample_aligned(const ToyModel& model, std::size_t n);

/// Serves `trials` requests through `procedure`; returns the calibrated reward
/// of each served response.
std::vector<double> apply_procedure(const ToyModel& model, const InferenceProcedure& procedure,
                                    std::size_t trials, std::uint64_t seed);

/// Fraction of trials whose served response from `a` out-scores the served
/// response from `b`, both passed through `procedure` (ties count one half).
MCEstimate estimate_win_rate(const ToyModel& a, const ToyModel& b,
                             const InferenceProcedure& procedure, std::size_t trials);

/// Mean of log f(u) over aligned draws, with f the exact tilted density.
MCEstimate estimate_kl(const ToyModel& model, std::size_t samples);

/// One analytic-vs-simulation comparison.
struct OracleCell {
  std::string transform;
  double beta = 0;
  std::string procedure;
  double analytic = 0;
  MCEstimate mc;
  double z_score = 0;
};

struct OraclePolicy {
  std::string label;
  std::shared_ptr<const TiltedPolicy> policy;
};

/// Every policy x procedure pair against the uniform base policy. Cell seeds
/// derive from `seed` and the cell index, so results do not depend on thread
/// count.
std::vector<OracleCell> oracle_grid(std::span<const OraclePolicy> policies,
                                    std::span<const InferenceProcedure> procedures,
                                    std::size_t trials, std::uint64_t seed);

}  // namespace infalign
