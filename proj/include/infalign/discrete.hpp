#pragma once

// Exact enumeration on small finite alphabets.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "infalign/error.hpp"

namespace infalign {

inline constexpr Eigen::Index kMaxOutcomes = 12;

struct DiscreteInstance {
  std::vector<std::string> outcomes;
  Eigen::VectorXd base_probs;
  Eigen::VectorXd rewards;

  Eigen::Index size() const { return base_probs.size(); }
  /// Throws InvalidParameter unless 2 <= n <= 12, sizes agree, probabilities
  /// are positive and sum to 1 (within 1e-9), and rewards are finite.
  void validate() const;
};

struct LogLinearInstance {
  Eigen::MatrixXd features;  // n outcomes x d features
  Eigen::VectorXd sft_distribution;
  Eigen::VectorXd reward_vector;
  double beta = 1;

  void validate() const;
};

/// C_{r,q}(y) = sum_z q(z) (1{r(y) > r(z)} + 1/2 1{r(y) = r(z)}).
template <typename DerivedQ, typename DerivedR>
Eigen::VectorXd calibrated_reward(const Eigen::MatrixBase<DerivedQ>& q,
                                  const Eigen::MatrixBase<DerivedR>& rewards) {
  const Eigen::Index n = q.size();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  for (Eigen::Index y = 0; y < n; ++y) {
    for (Eigen::Index z = 0; z < n; ++z) {
      if (rewards[y] > rewards[z]) {
        c[y] += q[z];
      } else if (rewards[y] == rewards[z]) {
        c[y] += 0.5 * q[z];
      }
    }
  }
  return c;
}

/// p(y) proportional to base(y) exp(reward(y) / beta), in log space.
template <typename DerivedP, typename DerivedR>
Eigen::VectorXd tilt(const Eigen::MatrixBase<DerivedP>& base,
                     const Eigen::MatrixBase<DerivedR>& reward, double beta) {
  if (!(beta > 0)) throw InvalidParameter("beta must be positive");
  Eigen::ArrayXd logits = base.array().log() + reward.array() / beta;
  logits -= logits.maxCoeff();
  Eigen::ArrayXd p = logits.exp();
  return (p / p.sum()).matrix();
}

/// KL(p || q) for strictly positive q.
template <typename DerivedP, typename DerivedQ>
double kl(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  double total = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0) total += p[i] * std::log(p[i] / q[i]);
  }
  return total;
}

template <typename DerivedP, typename DerivedQ>
double total_variation(const Eigen::MatrixBase<DerivedP>& p,
                       const Eigen::MatrixBase<DerivedQ>& q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

Eigen::VectorXd exact_rlhf(const DiscreteInstance& instance,
                           const Eigen::Ref<const Eigen::VectorXd>& reward, double beta);

Eigen::VectorXd exact_calibrated_reward(const DiscreteInstance& instance);

/// Direct double sum of p(y) q(z) w_r(y,z). Throws Error if it differs from
/// sum_y C_{r,q}(y) p(y) by more than 1e-12.
double exact_win_rate(const Eigen::Ref<const Eigen::VectorXd>& p,
                      const Eigen::Ref<const Eigen::VectorXd>& q,
                      const Eigen::Ref<const Eigen::VectorXd>& rewards);

/// |double sum - calibrated-reward expectation|.
double win_rate_identity_gap(const Eigen::Ref<const Eigen::VectorXd>& p,
                             const Eigen::Ref<const Eigen::VectorXd>& q,
                             const Eigen::Ref<const Eigen::VectorXd>& rewards);

/// W(p > base) - beta KL(p || base), no inference-time procedure.
double identity_objective(const DiscreteInstance& instance,
                          const Eigen::Ref<const Eigen::VectorXd>& p, double beta);

struct OptimalityReport {
  bool optimal = false;
  double objective = 0;         // at the calibrated RLHF solution
  double best_competitor = 0;   // largest objective among alternatives
  std::size_t comparisons = 0;
};

/// Compares the calibrated RLHF solution against `trials` Dirichlet policies
/// and +-eps pairwise perturbations of itself; optimal iff none exceeds it by
/// more than `slack`.
OptimalityReport verify_no_procedure_optimality(const DiscreteInstance& instance, double beta,
                                                std::size_t trials, std::uint64_t seed,
                                                double slack = 1e-9);

/// Which divergence the bilevel objective regularizes with.
/// Bregman: KL(pi_sft || pi_theta), the Bregman divergence of the log-partition
/// at theta_sft. Forward: KL(pi_theta || pi_sft).
enum class KlDirection { Bregman, Forward };

struct DescentOptions {
  double step = 0.1;
  double gradient_tolerance = 1e-10;
  std::size_t max_iterations = 2'000'000;
  KlDirection direction = KlDirection::Bregman;
};

struct MultitaskReport {
  double tv = 0;
  Eigen::VectorXd bilevel_policy;
  Eigen::VectorXd multitask_policy;
  Eigen::VectorXd sft_policy;
  double bilevel_gradient_norm = 0;
  double multitask_gradient_norm = 0;
  double sft_gradient_norm = 0;
  bool converged = false;
};

MultitaskReport verify_multitask_equivalence(const LogLinearInstance& instance,
                                             const DescentOptions& options = {});

/// softmax(features * theta)
Eigen::VectorXd log_linear_policy(const Eigen::Ref<const Eigen::MatrixXd>& features,
                                  const Eigen::Ref<const Eigen::VectorXd>& theta);

struct ObjectiveGap {
  double mean = 0;
  double spread = 0;  // max - min over the probes
};

/// L_bilevel(theta) - L_multitask(theta) at `probes` random theta, with pi_sft
/// fitted first.
ObjectiveGap multitask_objective_gap(const LogLinearInstance& instance, std::size_t probes,
                                     std::uint64_t seed, const DescentOptions& options = {});

struct CoupledResult {
  Eigen::VectorXd policy;
  std::size_t iterations = 0;  // updates until the fixed point first appeared
  double residual = 0;         // sup-norm change of the confirming update
};

/// Alternates R <- C_{r,pi_0} and pi <- tilt(pi_0, R, beta) for the identity
/// procedure until the sup-norm change is at most `tol`.
CoupledResult coupled_em_identity(const DiscreteInstance& instance, double beta,
                                  double tol = 1e-12, std::size_t max_iter = 100);

/// n outcomes, Dirichlet(1) base, normal rewards; some instances round the
/// rewards to create ties.
DiscreteInstance random_instance(Eigen::Index n, std::uint64_t seed);
/// Saturated features (d = n), random SFT target and rewards.
LogLinearInstance random_log_linear(Eigen::Index n, double beta, std::uint64_t seed);

/// CSV with header `outcome,base_prob,reward`.
DiscreteInstance read_instance(std::istream& in);
void write_instance(std::ostream& out, const DiscreteInstance& instance);

}  // namespace infalign
