#include "infalign/discrete.hpp"

#include <algorithm>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "infalign/io.hpp"
#include "infalign/mc_oracle.hpp"

namespace infalign {

namespace {

Eigen::VectorXd dirichlet(Eigen::Index n, double alpha, CounterRng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Eigen::VectorXd p(n);
  for (;;) {
    for (Eigen::Index i = 0; i < n; ++i) p[i] = gamma(rng);
    const double s = p.sum();
    if (s > 0) return p / s;
  }
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  return z.array() - (m + std::log((z.array() - m).exp().sum()));
}

struct Descent {
  Eigen::VectorXd theta;
  double gradient_norm = 0;
  bool converged = false;
};

// Full-batch gradient descent, step reset to options.step each iteration and
// halved until the loss decreases (Armijo). Near the optimum, loss changes
// drop below rounding, so a step that shrinks the gradient is also accepted.
Descent descend(Eigen::VectorXd theta,
                const std::function<double(const Eigen::VectorXd&)>& loss,
                const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                const DescentOptions& options, double tolerance) {
  Eigen::VectorXd g = grad(theta);
  double value = loss(theta);
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    const double gnorm = g.norm();
    if (gnorm <= tolerance) return {theta, gnorm, true};
    double alpha = options.step;
    Eigen::VectorXd next, g_next;
    double next_value = 0;
    for (int halvings = 0;; ++halvings) {
      next = theta - alpha * g;
      next_value = loss(next);
      if (next_value <= value - 1e-4 * alpha * gnorm * gnorm) break;
      const double noise = 8 * std::numeric_limits<double>::epsilon() * (1 + std::abs(value));
      if (next_value <= value + noise) {
        g_next = grad(next);
        if (g_next.norm() < gnorm) break;
        g_next.resize(0);
      }
      if (halvings == 60) break;
      alpha *= 0.5;
    }
    theta = std::move(next);
    value = next_value;
    g = g_next.size() ? std::move(g_next) : grad(theta);
  }
  const double gnorm = g.norm();
  return {theta, gnorm, gnorm <= tolerance};
}

struct LogLinearProblem {
  const Eigen::MatrixXd& phi;
  const Eigen::VectorXd& reward;
  double beta;

  Eigen::VectorXd log_pi(const Eigen::VectorXd& theta) const {
    return log_softmax(phi * theta);
  }
  // Pulls a gradient with respect to pi back through the softmax.
  Eigen::VectorXd pull_back(const Eigen::VectorXd& pi, const Eigen::VectorXd& dpi) const {
    return phi.transpose() * (pi.array() * (dpi.array() - pi.dot(dpi))).matrix();
  }
  double ro(const Eigen::VectorXd& pi) const { return -pi.dot(reward); }
  Eigen::VectorXd ro_grad(const Eigen::VectorXd& pi) const { return pull_back(pi, -reward); }
};

// -sum target log pi_theta
double cross_entropy(const Eigen::VectorXd& target, const Eigen::VectorXd& log_pi) {
  return -target.dot(log_pi);
}

}  // namespace

void DiscreteInstance::validate() const {
  const Eigen::Index n = base_probs.size();
  if (n < 2 || n > kMaxOutcomes) {
    throw InvalidParameter("instance needs between 2 and 12 outcomes");
  }
  if (rewards.size() != n) throw InvalidParameter("rewards and base_probs differ in size");
  if (!outcomes.empty() && Eigen::Index(outcomes.size()) != n) {
    throw InvalidParameter("outcome names and base_probs differ in size");
  }
  if ((base_probs.array() <= 0).any() || !base_probs.allFinite()) {
    throw InvalidParameter("base probabilities must be positive");
  }
  if (std::abs(base_probs.sum() - 1.0) > 1e-9) {
    throw InvalidParameter("base probabilities must sum to 1");
  }
  if (!rewards.allFinite()) throw InvalidReward("rewards must be finite");
}

void LogLinearInstance::validate() const {
  const Eigen::Index n = features.rows();
  if (n < 2 || features.cols() > n || features.cols() < 1) {
    throw InvalidParameter("features must be n x d with 1 <= d <= n");
  }
  if (!features.allFinite()) throw InvalidParameter("features must be finite");
  if (sft_distribution.size() != n || reward_vector.size() != n) {
    throw InvalidParameter("distribution and reward sizes must match features");
  }
  if ((sft_distribution.array() <= 0).any() ||
      std::abs(sft_distribution.sum() - 1.0) > 1e-9) {
    throw InvalidParameter("sft distribution must be positive and sum to 1");
  }
  if (!(beta > 0)) throw InvalidParameter("beta must be positive");
}

Eigen::VectorXd exact_rlhf(const DiscreteInstance& instance,
                           const Eigen::Ref<const Eigen::VectorXd>& reward, double beta) {
  instance.validate();
  if (reward.size() != instance.size()) throw InvalidParameter("reward size mismatch");
  return tilt(instance.base_probs, reward, beta);
}

Eigen::VectorXd exact_calibrated_reward(const DiscreteInstance& instance) {
  return calibrated_reward(instance.base_probs, instance.rewards);
}

namespace {

double double_sum(const Eigen::Ref<const Eigen::VectorXd>& p,
                  const Eigen::Ref<const Eigen::VectorXd>& q,
                  const Eigen::Ref<const Eigen::VectorXd>& r) {
  double w = 0;
  for (Eigen::Index y = 0; y < p.size(); ++y) {
    for (Eigen::Index z = 0; z < q.size(); ++z) {
      const double win = r[y] > r[z] ? 1.0 : (r[y] == r[z] ? 0.5 : 0.0);
      w += p[y] * q[z] * win;
    }
  }
  return w;
}

}  // namespace

double win_rate_identity_gap(const Eigen::Ref<const Eigen::VectorXd>& p,
                             const Eigen::Ref<const Eigen::VectorXd>& q,
                             const Eigen::Ref<const Eigen::VectorXd>& rewards) {
  return std::abs(double_sum(p, q, rewards) - calibrated_reward(q, rewards).dot(p));
}

double exact_win_rate(const Eigen::Ref<const Eigen::VectorXd>& p,
                      const Eigen::Ref<const Eigen::VectorXd>& q,
                      const Eigen::Ref<const Eigen::VectorXd>& rewards) {
  if (p.size() != q.size() || p.size() != rewards.size()) {
    throw InvalidParameter("win rate arguments differ in size");
  }
  const double direct = double_sum(p, q, rewards);
  if (std::abs(direct - calibrated_reward(q, rewards).dot(p)) > 1e-12) {
    throw Error("win rate identity violated");
  }
  return direct;
}

double identity_objective(const DiscreteInstance& instance,
                          const Eigen::Ref<const Eigen::VectorXd>& p, double beta) {
  return exact_calibrated_reward(instance).dot(p) - beta * kl(p, instance.base_probs);
}

OptimalityReport verify_no_procedure_optimality(const DiscreteInstance& instance, double beta,
                                                std::size_t trials, std::uint64_t seed,
                                                double slack) {
  const Eigen::VectorXd c = exact_calibrated_reward(instance);
  const Eigen::VectorXd star = exact_rlhf(instance, c, beta);
  OptimalityReport report;
  report.objective = identity_objective(instance, star, beta);
  report.best_competitor = -std::numeric_limits<double>::infinity();
  auto consider = [&](const Eigen::VectorXd& p) {
    report.best_competitor = std::max(report.best_competitor, identity_objective(instance, p, beta));
    ++report.comparisons;
  };

  CounterRng rng(seed, 0);
  const double alphas[] = {1.0, 0.3, 3.0};
  for (std::size_t t = 0; t < trials; ++t) consider(dirichlet(instance.size(), alphas[t % 3], rng));
  // Mixtures of the optimum and the base policy probe the path between them.
  for (double lambda : {0.5, 0.9, 0.99, 1.01}) {
    Eigen::VectorXd p = lambda * star + (1 - lambda) * instance.base_probs;
    if ((p.array() > 0).all()) consider(p);
  }
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    for (Eigen::Index i = 0; i < instance.size(); ++i) {
      for (Eigen::Index j = 0; j < instance.size(); ++j) {
        if (i == j) continue;
        const double step = std::min(eps, 0.5 * star[j]);
        Eigen::VectorXd p = star;
        p[i] += step;
        p[j] -= step;
        consider(p);
      }
    }
  }
  report.optimal = report.best_competitor <= report.objective + slack;
  return report;
}

Eigen::VectorXd log_linear_policy(const Eigen::Ref<const Eigen::MatrixXd>& features,
                                  const Eigen::Ref<const Eigen::VectorXd>& theta) {
  return log_softmax(features * theta).array().exp().matrix();
}

namespace {

struct FittedSft {
  Eigen::VectorXd policy;
  double gradient_norm;
  bool converged;
};

FittedSft fit_sft(const LogLinearInstance& inst, const DescentOptions& options) {
  const LogLinearProblem prob{inst.features, inst.reward_vector, inst.beta};
  const auto& s = inst.sft_distribution;
  auto loss = [&](const Eigen::VectorXd& th) { return cross_entropy(s, prob.log_pi(th)); };
  auto grad = [&](const Eigen::VectorXd& th) -> Eigen::VectorXd {
    const Eigen::VectorXd pi = prob.log_pi(th).array().exp();
    return inst.features.transpose() * (pi - s);
  };
  // The objective gap depends on how well pi_sft matches the data, so the
  // fit runs to a tighter tolerance than the comparison itself.
  const double tol = std::min(options.gradient_tolerance, 1e-13);
  const Descent d = descend(Eigen::VectorXd::Zero(inst.features.cols()), loss, grad, options, tol);
  return {log_linear_policy(inst.features, d.theta), d.gradient_norm, d.converged};
}

struct Objectives {
  std::function<double(const Eigen::VectorXd&)> bilevel, multitask;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> bilevel_grad, multitask_grad;
};

Objectives make_objectives(const LogLinearInstance& inst, const Eigen::VectorXd& pi_sft,
                           KlDirection direction) {
  const LogLinearProblem prob{inst.features, inst.reward_vector, inst.beta};
  const Eigen::VectorXd s = inst.sft_distribution;
  const Eigen::VectorXd log_sft = pi_sft.array().log();
  Objectives o;
  o.bilevel = [=](const Eigen::VectorXd& th) {
    const Eigen::VectorXd lp = prob.log_pi(th);
    const Eigen::VectorXd pi = lp.array().exp();
    const double div = direction == KlDirection::Bregman ? pi_sft.dot(log_sft - lp)
                                                         : pi.dot(lp - log_sft);
    return div + prob.ro(pi) / prob.beta;
  };
  o.bilevel_grad = [=](const Eigen::VectorXd& th) -> Eigen::VectorXd {
    const Eigen::VectorXd lp = prob.log_pi(th);
    const Eigen::VectorXd pi = lp.array().exp();
    Eigen::VectorXd g = direction == KlDirection::Bregman
                            ? Eigen::VectorXd(inst.features.transpose() * (pi - pi_sft))
                            : prob.pull_back(pi, lp - log_sft);
    return g + prob.ro_grad(pi) / prob.beta;
  };
  o.multitask = [=](const Eigen::VectorXd& th) {
    const Eigen::VectorXd lp = prob.log_pi(th);
    return cross_entropy(s, lp) + prob.ro(lp.array().exp().matrix()) / prob.beta;
  };
  o.multitask_grad = [=](const Eigen::VectorXd& th) -> Eigen::VectorXd {
    const Eigen::VectorXd pi = prob.log_pi(th).array().exp();
    return inst.features.transpose() * (pi - s) + prob.ro_grad(pi) / prob.beta;
  };
  return o;
}

}  // namespace

MultitaskReport verify_multitask_equivalence(const LogLinearInstance& instance,
                                             const DescentOptions& options) {
  instance.validate();
  const FittedSft sft = fit_sft(instance, options);
  const Objectives o = make_objectives(instance, sft.policy, options.direction);
  const Eigen::VectorXd start = Eigen::VectorXd::Zero(instance.features.cols());
  const Descent bi = descend(start, o.bilevel, o.bilevel_grad, options, options.gradient_tolerance);
  const Descent mt =
      descend(start, o.multitask, o.multitask_grad, options, options.gradient_tolerance);

  MultitaskReport r;
  r.sft_policy = sft.policy;
  r.bilevel_policy = log_linear_policy(instance.features, bi.theta);
  r.multitask_policy = log_linear_policy(instance.features, mt.theta);
  r.tv = total_variation(r.bilevel_policy, r.multitask_policy);
  r.sft_gradient_norm = sft.gradient_norm;
  r.bilevel_gradient_norm = bi.gradient_norm;
  r.multitask_gradient_norm = mt.gradient_norm;
  r.converged = sft.converged && bi.converged && mt.converged;
  return r;
}

ObjectiveGap multitask_objective_gap(const LogLinearInstance& instance, std::size_t probes,
                                     std::uint64_t seed, const DescentOptions& options) {
  instance.validate();
  if (probes == 0) throw InvalidParameter("probes must be positive");
  const FittedSft sft = fit_sft(instance, options);
  const Objectives o = make_objectives(instance, sft.policy, options.direction);
  CounterRng rng(seed, 1);
  std::normal_distribution<double> normal;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0;
  for (std::size_t k = 0; k < probes; ++k) {
    Eigen::VectorXd theta(instance.features.cols());
    for (auto& t : theta) t = normal(rng);
    const double gap = o.bilevel(theta) - o.multitask(theta);
    lo = std::min(lo, gap);
    hi = std::max(hi, gap);
    sum += gap;
  }
  return {sum / double(probes), hi - lo};
}

CoupledResult coupled_em_identity(const DiscreteInstance& instance, double beta, double tol,
                                  std::size_t max_iter) {
  instance.validate();
  if (!(beta > 0)) throw InvalidParameter("beta must be positive");
  Eigen::VectorXd pi = instance.base_probs;
  CoupledResult result{pi, 0, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 1; k <= max_iter; ++k) {
    // Reward step: for the identity procedure the calibrated reward is taken
    // against the base policy and does not depend on pi.
    const Eigen::VectorXd reward = calibrated_reward(instance.base_probs, instance.rewards);
    const Eigen::VectorXd next = tilt(instance.base_probs, reward, beta);
    result.residual = (next - pi).cwiseAbs().maxCoeff();
    if (result.residual <= tol) {
      result.policy = next;
      result.iterations = k - 1;
      return result;
    }
    pi = next;
  }
  result.policy = pi;
  result.iterations = max_iter;
  return result;
}

DiscreteInstance random_instance(Eigen::Index n, std::uint64_t seed) {
  CounterRng rng(seed, 2);
  DiscreteInstance inst;
  inst.base_probs = dirichlet(n, 1.0, rng);
  // Keep probabilities away from zero so KL stays well scaled.
  inst.base_probs = (inst.base_probs.array() + 0.01).matrix();
  inst.base_probs /= inst.base_probs.sum();
  std::normal_distribution<double> normal;
  inst.rewards.resize(n);
  for (auto& r : inst.rewards) r = normal(rng);
  if (seed % 4 == 0) inst.rewards = inst.rewards.array().round();
  for (Eigen::Index i = 0; i < n; ++i) inst.outcomes.push_back("y" + std::to_string(i));
  return inst;
}

LogLinearInstance random_log_linear(Eigen::Index n, double beta, std::uint64_t seed) {
  CounterRng rng(seed, 3);
  std::normal_distribution<double> normal;
  LogLinearInstance inst;
  inst.features = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) inst.features(i, j) += 0.2 * normal(rng);
  }
  inst.sft_distribution = (dirichlet(n, 2.0, rng).array() + 0.02).matrix();
  inst.sft_distribution /= inst.sft_distribution.sum();
  inst.reward_vector.resize(n);
  for (auto& r : inst.reward_vector) r = normal(rng);
  inst.beta = beta;
  return inst;
}

DiscreteInstance read_instance(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  if (!std::getline(in, line)) throw ParseError("empty instance file", 1);
  ++line_no;
  if (trim(line) != "outcome,base_prob,reward") {
    throw ParseError("expected header 'outcome,base_prob,reward'", line_no);
  }
  std::vector<std::string> names;
  std::vector<double> probs, rewards;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(trim(f));
    if (fields.size() != 3) throw ParseError("expected 3 fields", line_no);
    try {
      probs.push_back(parse_double(fields[1]));
      rewards.push_back(parse_double(fields[2]));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    names.push_back(fields[0]);
  }
  DiscreteInstance inst;
  inst.outcomes = std::move(names);
  inst.base_probs = Eigen::Map<Eigen::VectorXd>(probs.data(), Eigen::Index(probs.size()));
  inst.rewards = Eigen::Map<Eigen::VectorXd>(rewards.data(), Eigen::Index(rewards.size()));
  inst.validate();
  return inst;
}

void write_instance(std::ostream& out, const DiscreteInstance& instance) {
  out << "outcome,base_prob,reward\n";
  for (Eigen::Index i = 0; i < instance.size(); ++i) {
    const std::string name = i < Eigen::Index(instance.outcomes.size())
                                 ? instance.outcomes[std::size_t(i)]
                                 : "y" + std::to_string(i);
    out << name << ',' << format_double(instance.base_probs[i]) << ','
        << format_double(instance.rewards[i]) << '\n';
  }
}

}  // namespace infalign
