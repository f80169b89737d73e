#include "verify.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "infalign/analytic.hpp"
#include "infalign/calibration.hpp"
#include "infalign/discrete.hpp"
#include "infalign/fixedpoint.hpp"
#include "infalign/io.hpp"
#include "infalign/parallel.hpp"
#include "infalign/stats.hpp"

namespace infalign::cli {

namespace {

std::string num(double x) {
  std::ostringstream o;
  o.precision(4);
  o << x;
  return o.str();
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<Check> trivial(const VerifyOptions& opt) {
  const auto t0 = Clock::now();
  std::vector<InferenceProcedure> procs = oracle_procedures(RewindFallback::Last);
  procs.push_back(InferenceProcedure::rewind_repeat(0.85, 32, RewindFallback::Best));
  double max_wr = 0, max_kl = 0;
  for (double c : {-1.0, 0.0, 2.5}) {
    for (double beta : {0.01, 1.0, 100.0}) {
      const TiltedPolicy p(Transform::constant(c), beta, opt.grid_size);
      max_kl = std::max(max_kl, kl_divergence(p));
      for (const auto& proc : procs) max_wr = std::max(max_wr, std::abs(win_rate(p, proc) - 0.5));
    }
  }
  const double secs = seconds_since(t0);
  return {{"trivial", "constant transform: win rate 0.5", max_wr <= 1e-8, "max |w-0.5| " + num(max_wr)},
          {"trivial", "constant transform: KL 0", max_kl <= 1e-8, "max KL " + num(max_kl)},
          {"trivial", "runtime under 1 s", secs < 1.0, num(secs) + " s"}};
}

std::vector<Check> anchors(const VerifyOptions& opt) {
  const double e = std::exp(1.0);
  const double w_exact = 1.0 / (e - 1.0);
  const double kl_exact = w_exact - std::log(e - 1.0);
  const TiltedPolicy p(Transform::identity(), 1.0, opt.grid_size);
  const double w = win_rate(p, InferenceProcedure::identity());
  const double kl = kl_divergence(p);
  std::vector<Check> out{
      {"anchors", "identity beta=1 win rate", std::abs(w - w_exact) <= 1e-6,
       "error " + num(std::abs(w - w_exact))},
      {"anchors", "identity beta=1 KL", std::abs(kl - kl_exact) <= 1e-6,
       "error " + num(std::abs(kl - kl_exact))}};

  // Grid refinement 2001 -> 4001 changes nothing beyond 1e-6.
  double worst = 0;
  for (const char* spec : {"identity", "log", "exp:5", "exp:-5", "exp:10", "exp:-10"}) {
    const Transform t = parse_transform(spec);
    for (double beta : {0.05, 0.5, 5.0}) {
      const double b = beta * transform_span(t);
      const TiltedPolicy coarse(t, b, 2001), fine(t, b, 4001);
      for (const auto& proc : {InferenceProcedure::identity(), InferenceProcedure::best_of(4),
                               InferenceProcedure::worst_of(4)}) {
        worst = std::max(worst, std::abs(win_rate(coarse, proc) - win_rate(fine, proc)));
      }
      worst = std::max(worst, std::abs(kl_divergence(coarse) - kl_divergence(fine)));
    }
  }
  out.push_back({"anchors", "grid convergence 2001 vs 4001", worst < 1e-6, "max change " + num(worst)});
  return out;
}

std::vector<Check> calibration(const VerifyOptions& opt) {
  std::vector<Check> out;
  // Uniformity of calibrated rewards for a continuous reward distribution.
  {
    CounterRng rng(opt.seed, 100);
    std::normal_distribution<double> normal(1.0, 2.0);
    std::vector<double> ref(10000);
    for (auto& r : ref) r = normal(rng);
    const CalibrationTable table("p", ref);
    std::vector<double> scores(10000);
    for (auto& s : scores) s = empirical_calibrate(table, normal(rng)).value();
    const double d = stats::ks_statistic(scores, [](double u) { return std::clamp(u, 0.0, 1.0); });
    const double pv = stats::ks_pvalue(d, scores.size());
    out.push_back({"calibration", "calibrated rewards uniform (KS, alpha 0.01)", pv >= 0.01,
                   "D " + num(d) + " p " + num(pv)});
  }
  // DKW coverage. The bound is nearly tight (exact coverage is about
  // 1 - delta + 0.005 at K = 100), so 1000 repetitions would decide the check
  // by sampling noise; 100000 resolve it.
  {
    const std::size_t k = kDefaultRolloutsPerPrompt, reps = 100000;
    const double deltas[2] = {0.1, 0.05};
    std::size_t covered[2] = {0, 0};
    CounterRng rng(opt.seed, 101);
    std::normal_distribution<double> normal;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      std::vector<double> rewards(k);
      for (auto& r : rewards) r = normal(rng);
      const CalibrationTable table("p", rewards);
      double sup = 0;
      for (double x : table.sorted_rewards()) {
        const double truth = 0.5 * std::erfc(-x / std::sqrt(2.0));
        const double below = empirical_calibrate(table, std::nextafter(x, -INFINITY)).value();
        const double above = empirical_calibrate(table, std::nextafter(x, INFINITY)).value();
        sup = std::max({sup, std::abs(below - truth), std::abs(above - truth)});
      }
      for (int i = 0; i < 2; ++i) covered[i] += sup <= dkw_error_bound(k, deltas[i]);
    }
    for (int i = 0; i < 2; ++i) {
      const double rate = double(covered[i]) / double(reps);
      const double exact = stats::ks_cdf_exact(dkw_error_bound(k, deltas[i]), k);
      out.push_back({"calibration", "DKW coverage delta=" + num(deltas[i]), rate >= 1 - deltas[i],
                     "coverage " + num(rate) + " over " + std::to_string(reps) + " reps, exact " +
                         num(exact)});
    }
  }
  // Monotone-map invariance.
  {
    bool ok = true;
    CounterRng rng(opt.seed, 103);
    std::normal_distribution<double> normal;
    for (int t = 0; t < 100 && ok; ++t) {
      std::vector<double> rewards(5 + t % 40);
      for (auto& r : rewards) r = std::round(normal(rng) * 4) / 4;  // includes ties
      std::vector<double> probes(rewards);
      for (int i = 0; i < 20; ++i) probes.push_back(normal(rng));
      const CalibrationTable table("p", rewards);
      ok = check_monotone_invariance(table, [](double r) { return std::exp(r); }, probes) &&
           check_monotone_invariance(table, [](double r) { return r * r * r + r; }, probes) &&
           check_monotone_invariance(table, [](double r) { return 2 * r - 7; }, probes);
    }
    out.push_back({"calibration", "monotone-map invariance on 100 tables", ok, ok ? "exact" : "mismatch"});
  }
  return out;
}

std::vector<Check> oracle(const VerifyOptions& opt) {
  const auto policies =
      build_kl_matched_policies(oracle_transforms(4), oracle_kl_targets(), opt.grid_size, opt.fixed_point);
  const auto procs = oracle_procedures(opt.fallback);
  const auto cells = oracle_grid(policies, procs, opt.trials, opt.seed);
  std::size_t good = 0;
  double max_z = 0;
  for (const auto& c : cells) {
    good += within_error(c);
    max_z = std::max(max_z, std::abs(c.z_score));
  }
  const double frac = double(good) / double(cells.size());
  return {{"oracle", "MC within 3 std errors of analytic", frac >= 0.99,
           std::to_string(good) + "/" + std::to_string(cells.size()) + " cells, max |z| " + num(max_z) +
               ", " + std::to_string(opt.trials) + " trials"}};
}

struct Matched {
  double beta;
  std::shared_ptr<const TiltedPolicy> policy;
};

Matched match_kl(const std::string& spec, double kl, Eigen::Index grid, const FixedPointOptions& fp) {
  const auto t = parse_curve_transform(spec);
  if (t.is_fixed_point()) {
    auto options = fp;
    options.grid_size = grid;
    auto [beta, sol] = fixed_point_beta_for_kl(t.kind, t.n, kl, options);
    return {beta, std::make_shared<const TiltedPolicy>(sol.transform, beta, grid)};
  }
  const double beta = beta_for_kl(*t.fixed, kl, grid);
  return {beta, std::make_shared<const TiltedPolicy>(*t.fixed, beta, grid)};
}

std::vector<Check> ordering(const VerifyOptions& opt) {
  const double tol = 1e-4;
  const std::vector<double> checkpoints = {0.1, 0.25, 0.5, 1.0, 1.5};
  const std::vector<std::string> specs = {"bon_fp:4", "won_fp:4", "identity", "log",
                                          "exp:5",    "exp:10",   "exp:-10"};
  std::vector<std::map<std::string, std::shared_ptr<const TiltedPolicy>>> at(checkpoints.size());
  std::vector<std::vector<Matched>> slots(checkpoints.size(), std::vector<Matched>(specs.size()));
  parallel_for(checkpoints.size() * specs.size(), [&](std::size_t idx) {
    slots[idx / specs.size()][idx % specs.size()] =
        match_kl(specs[idx % specs.size()], checkpoints[idx / specs.size()], opt.grid_size, opt.fixed_point);
  });
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    for (std::size_t s = 0; s < specs.size(); ++s) at[c][specs[s]] = slots[c][s].policy;
  }

  auto chain = [&](const std::string& title, const InferenceProcedure& proc,
                   const std::vector<std::string>& order) {
    bool ok = true;
    std::ostringstream detail;
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      detail << (c ? "; " : "") << "KL " << checkpoints[c] << ":";
      double prev = INFINITY;
      for (const auto& name : order) {
        const double w = win_rate(*at[c][name], proc);
        detail << ' ' << num(w);
        if (w > prev + tol) ok = false;
        prev = w;
      }
    }
    return Check{"ordering", title, ok, detail.str()};
  };
  return {chain("BoN4: bon_fp >= exp(10) >= identity >= log", InferenceProcedure::best_of(4),
                {"bon_fp:4", "exp:10", "identity", "log"}),
          chain("WoN4: won_fp >= exp(-10) >= log >= identity", InferenceProcedure::worst_of(4),
                {"won_fp:4", "exp:-10", "log", "identity"}),
          chain("BoN2: exp(5) >= exp(10)", InferenceProcedure::best_of(2), {"exp:5", "exp:10"}),
          chain("BoN4: exp(10) >= exp(5)", InferenceProcedure::best_of(4), {"exp:10", "exp:5"})};
}

std::vector<Check> fixedpoint(const VerifyOptions& opt) {
  std::vector<Check> out;
  FixedPointOptions fp = opt.fixed_point;
  fp.grid_size = opt.grid_size;
  {
    double worst = 0;
    const quad::UniformGrid<> grid(fp.grid_size);
    const Eigen::ArrayXd u = grid.nodes();
    for (auto kind : {FixedPointKind::BestOfN, FixedPointKind::WorstOfN}) {
      for (double beta : {0.1, 1.0}) {
        const auto sol = solve_fixed_point(kind, 1, beta, fp);
        const Eigen::ArrayXd phi = sol.transform.table();
        worst = std::max(worst, ((phi - phi.mean()) - (u - u.mean())).abs().maxCoeff());
      }
    }
    out.push_back({"fixedpoint", "N=1 equals u-1 after centering", worst <= 1e-8, "max error " + num(worst)});
  }
  const std::vector<std::string> suite = {"identity", "log", "exp:5", "exp:-5", "exp:10", "exp:-10"};
  bool resub_ok = true, beats_ok = true, converged = true;
  double worst_resub = 0, worst_margin = INFINITY;
  for (auto kind : {FixedPointKind::BestOfN, FixedPointKind::WorstOfN}) {
    for (int n : {2, 4}) {
      const InferenceProcedure proc =
          kind == FixedPointKind::BestOfN ? InferenceProcedure::best_of(n) : InferenceProcedure::worst_of(n);
      for (double beta : {0.1, 0.5, 1.0}) {
        const auto sol = solve_fixed_point(kind, n, beta, fp);
        converged = converged && sol.converged;
        const double r = substitution_residual(sol.transform, kind, n, beta, fp.grid_size);
        worst_resub = std::max(worst_resub, r);
        resub_ok = resub_ok && r <= 2 * fp.tolerance;
        const double obj = infalign_objective(TiltedPolicy(sol.transform, beta, fp.grid_size), proc, beta);
        for (const auto& spec : suite) {
          const double other =
              infalign_objective(TiltedPolicy(parse_transform(spec), beta, fp.grid_size), proc, beta);
          worst_margin = std::min(worst_margin, obj - other);
          beats_ok = beats_ok && obj >= other - 1e-4;
        }
      }
    }
  }
  out.push_back({"fixedpoint", "BoN/WoN N=2,4 converge", converged, ""});
  out.push_back({"fixedpoint", "re-substitution residual <= 2 tol", resub_ok, "max " + num(worst_resub)});
  out.push_back({"fixedpoint", "beats transform suite on objective", beats_ok,
                 "min margin " + num(worst_margin)});
  return out;
}

std::vector<Check> discrete(const VerifyOptions& opt) {
  const std::size_t instances = 100;
  std::vector<char> optimal(instances), identity_ok(instances), coupled_ok(instances);
  const double betas[] = {0.1, 1.0, 10.0};
  parallel_for(instances, [&](std::size_t i) {
    const Eigen::Index n = 2 + Eigen::Index(i % 7);
    const double beta = betas[i % 3];
    const auto inst = random_instance(n, opt.seed * 1000 + i);
    optimal[i] = verify_no_procedure_optimality(inst, beta, 10000, opt.seed + i).optimal;
    const Eigen::VectorXd star = exact_rlhf(inst, exact_calibrated_reward(inst), beta);
    identity_ok[i] = win_rate_identity_gap(star, inst.base_probs, inst.rewards) <= 1e-12 &&
                     win_rate_identity_gap(inst.base_probs, star, inst.rewards) <= 1e-12;
    const auto em = coupled_em_identity(inst, beta);
    coupled_ok[i] = em.iterations == 1 && (em.policy - star).cwiseAbs().maxCoeff() == 0.0;
  });
  auto count = [](const std::vector<char>& v) { return std::size_t(std::count(v.begin(), v.end(), 1)); };
  const std::string of = "/" + std::to_string(instances);
  return {{"discrete", "calibrated RLHF solution is optimal", count(optimal) == instances,
           std::to_string(count(optimal)) + of},
          {"discrete", "win-rate identity to 1e-12", count(identity_ok) == instances,
           std::to_string(count(identity_ok)) + of},
          {"discrete", "coupled equations converge in one step", count(coupled_ok) == instances,
           std::to_string(count(coupled_ok)) + of}};
}

std::vector<Check> multitask(const VerifyOptions& opt) {
  const std::size_t instances = 20;
  std::vector<double> tv(instances), spread(instances);
  std::vector<char> conv(instances);
  parallel_for(instances, [&](std::size_t i) {
    const double beta = std::exp(std::log(0.5) + std::log(10.0) * double(i) / double(instances - 1));
    const auto inst = random_log_linear(3 + Eigen::Index(i % 4), beta, opt.seed * 7919 + i);
    const auto r = verify_multitask_equivalence(inst);
    tv[i] = r.tv;
    conv[i] = r.converged;
    spread[i] = multitask_objective_gap(inst, 100, opt.seed + i).spread;
  });
  const double max_tv = *std::max_element(tv.begin(), tv.end());
  const double max_spread = *std::max_element(spread.begin(), spread.end());
  const bool all_conv = std::count(conv.begin(), conv.end(), 1) == std::ptrdiff_t(instances);
  return {{"multitask", "bilevel and multitask minimizers agree (TV <= 1e-4)", max_tv <= 1e-4 && all_conv,
           "max TV " + num(max_tv) + (all_conv ? "" : ", not all converged")},
          {"multitask", "objective gap independent of theta (1e-9)", max_spread <= 1e-9,
           "max spread " + num(max_spread)}};
}

}  // namespace

bool within_error(const OracleCell& cell, double sigmas) {
  return std::abs(cell.mc.value - cell.analytic) <=
         sigmas * cell.mc.std_error + 1.0 / double(cell.mc.samples);
}

std::vector<OraclePolicy> build_kl_matched_policies(const std::vector<std::string>& transforms,
                                                    const std::vector<double>& kl_targets,
                                                    Eigen::Index grid_size,
                                                    const FixedPointOptions& fp_options) {
  std::vector<OraclePolicy> out(transforms.size() * kl_targets.size());
  parallel_for(out.size(), [&](std::size_t idx) {
    const std::string& spec = transforms[idx / kl_targets.size()];
    const Matched m = match_kl(spec, kl_targets[idx % kl_targets.size()], grid_size, fp_options);
    out[idx] = {parse_curve_transform(spec).label(), m.policy};
  });
  return out;
}

std::vector<Check> run_suite(const std::string& name, const VerifyOptions& options) {
  if (name == "all") {
    std::vector<Check> all;
    for (const auto& s : kSuites) {
      auto part = run_suite(s, options);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  if (name == "trivial") return trivial(options);
  if (name == "anchors") return anchors(options);
  if (name == "calibration") return calibration(options);
  if (name == "oracle") return oracle(options);
  if (name == "ordering") return ordering(options);
  if (name == "fixedpoint") return fixedpoint(options);
  if (name == "discrete") return discrete(options);
  if (name == "multitask") return multitask(options);
  throw ConfigError("unknown suite '" + name + "'");
}

}  // namespace infalign::cli
