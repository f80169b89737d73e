#include "infalign/mc_oracle.hpp"

#include <algorithm>
#include <cmath>

#include "infalign/error.hpp"
#include "infalign/parallel.hpp"
#include "infalign/stats.hpp"

namespace infalign {

namespace {

constexpr std::uint64_t kSideSalt[2] = {0xA5A5A5A5DEADBEEFULL, 0x5A5A5A5AC0FFEE11ULL};
constexpr std::uint64_t kSampleSalt = 0x243F6A8885A308D3ULL;
constexpr std::size_t kChunks = 64;

std::uint64_t mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Calibrated reward (w.r.t. the base policy) of the response at policy
// quantile v.
double calibrated_at(const ToyModel& m, double v) {
  return m.policy ? m.policy->quantile(v) : v;
}

// Inverse of calibrated_at, consistent with the linear quantile.
double self_calibrate(const ToyModel& m, double u) {
  return m.policy ? m.policy->cdf_linear(u) : u;
}

double raw_reward(BaseDistribution base, double u) {
  return base == BaseDistribution::Uniform ? u : -std::log1p(-std::min(u, 1.0 - 1e-17));
}

double calibrate_raw(BaseDistribution base, double x) {
  return base == BaseDistribution::Uniform ? x : -std::expm1(-x);
}

// One served response, as a raw reward. Draws are generated, scored by the
// reward model, and filtered exactly as the procedure prescribes.
double serve(const ToyModel& m, const InferenceProcedure& p, CounterRng& rng) {
  auto draw = [&] { return raw_reward(m.base, calibrated_at(m, rng.uniform())); };
  switch (p.kind()) {
    case ProcedureKind::Identity:
      return draw();
    case ProcedureKind::BestOfN: {
      double best = draw();
      for (int k = 1; k < p.n(); ++k) best = std::max(best, draw());
      return best;
    }
    case ProcedureKind::WorstOfN: {
      double worst = draw();
      for (int k = 1; k < p.n(); ++k) worst = std::min(worst, draw());
      return worst;
    }
    case ProcedureKind::RewindRepeat: {
      double best = -INFINITY, x = 0;
      for (int k = 0; k < p.n(); ++k) {
        x = draw();
        if (self_calibrate(m, calibrate_raw(m.base, x)) >= p.threshold()) return x;
        best = std::max(best, x);
      }
      return p.fallback() == RewindFallback::Last ? x : best;
    }
    case ProcedureKind::Custom: {
      const double gmax = p.g_max();
      for (;;) {
        const double v = rng.uniform();
        if (rng.uniform() * gmax <= p.g(v)) {
          return raw_reward(m.base, calibrated_at(m, v));
        }
      }
    }
  }
  return 0.0;
}

std::size_t chunk_size(std::size_t total, std::size_t chunks, std::size_t c) {
  return total / chunks + (c < total % chunks ? 1 : 0);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix(mix(seed) ^ (stream * 0xD1B54A32D192ED03ULL))) {}

ToyModel ToyModel::base_policy(std::uint64_t seed, BaseDistribution base) {
  return ToyModel{base, nullptr, seed};
}

ToyModel ToyModel::aligned(const Transform& transform, double beta, std::uint64_t seed,
                           BaseDistribution base, Eigen::Index grid_size) {
  return aligned(std::make_shared<const TiltedPolicy>(transform, beta, grid_size), seed, base);
}

ToyModel ToyModel::aligned(std::shared_ptr<const TiltedPolicy> policy, std::uint64_t seed,
                           BaseDistribution base) {
  if (!policy) throw InvalidParameter("aligned model needs a policy");
  return ToyModel{base, std::move(policy), seed};
}

double ToyModel::beta() const { return policy ? policy->beta() : INFINITY; }

std::vector<double> sample_aligned(const ToyModel& model, std::size_t n) {
  std::vector<double> out(n);
  CounterRng rng(model.seed, kSampleSalt);
  for (auto& u : out) {
    u = calibrate_raw(model.base, raw_reward(model.base, calibrated_at(model, rng.uniform())));
  }
  return out;
}

std::vector<double> apply_procedure(const ToyModel& model, const InferenceProcedure& procedure,
                                    std::size_t trials, std::uint64_t seed) {
  std::vector<double> out(trials);
  const std::size_t chunks = std::min(kChunks, std::max<std::size_t>(trials, 1));
  std::vector<std::size_t> offset(chunks + 1, 0);
  for (std::size_t c = 0; c < chunks; ++c) offset[c + 1] = offset[c] + chunk_size(trials, chunks, c);
  parallel_for(chunks, [&](std::size_t c) {
    CounterRng rng(seed ^ model.seed, c);
    for (std::size_t i = offset[c]; i < offset[c + 1]; ++i) {
      out[i] = calibrate_raw(model.base, serve(model, procedure, rng));
    }
  });
  return out;
}

MCEstimate estimate_win_rate(const ToyModel& a, const ToyModel& b,
                             const InferenceProcedure& procedure, std::size_t trials) {
  if (trials == 0) throw InvalidParameter("trials must be positive");
  if (a.base != b.base) throw InvalidParameter("models must share a base distribution");
  const std::size_t chunks = std::min(kChunks, trials);
  std::vector<stats::RunningMoments> moments(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    CounterRng ra(a.seed ^ kSideSalt[0], c), rb(b.seed ^ kSideSalt[1], c);
    auto& acc = moments[c];
    const std::size_t count = chunk_size(trials, chunks, c);
    for (std::size_t i = 0; i < count; ++i) {
      const double xa = serve(a, procedure, ra);
      const double xb = serve(b, procedure, rb);
      acc.add(xa > xb ? 1.0 : (xa == xb ? 0.5 : 0.0));
    }
  });
  stats::RunningMoments total;
  for (const auto& m : moments) total.merge(m);
  return {total.mean, std::sqrt(total.variance() / double(total.count)), total.count};
}

MCEstimate estimate_kl(const ToyModel& model, std::size_t samples) {
  if (samples == 0) throw InvalidParameter("samples must be positive");
  if (!model.policy) return {0.0, 0.0, samples};
  stats::RunningMoments acc;
  for (double u : sample_aligned(model, samples)) acc.add(model.policy->log_density(u));
  return {acc.mean, std::sqrt(acc.variance() / double(acc.count)), acc.count};
}

std::vector<OracleCell> oracle_grid(std::span<const OraclePolicy> policies,
                                    std::span<const InferenceProcedure> procedures,
                                    std::size_t trials, std::uint64_t seed) {
  std::vector<OracleCell> cells(policies.size() * procedures.size());
  // Cells are large; parallelism lives inside estimate_win_rate.
  for (std::size_t i = 0; i < policies.size(); ++i) {
    for (std::size_t j = 0; j < procedures.size(); ++j) {
      const std::size_t idx = i * procedures.size() + j;
      const std::uint64_t cell_seed = mix(seed + idx);
      const auto a = ToyModel::aligned(policies[i].policy, cell_seed);
      const auto b = ToyModel::base_policy(mix(cell_seed));
      OracleCell& cell = cells[idx];
      cell.transform = policies[i].label;
      cell.beta = policies[i].policy->beta();
      cell.procedure = procedures[j].label();
      cell.analytic = win_rate(*policies[i].policy, procedures[j]);
      cell.mc = estimate_win_rate(a, b, procedures[j], trials);
      cell.z_score = cell.mc.std_error > 0
                         ? (cell.mc.value - cell.analytic) / cell.mc.std_error
                         : (cell.mc.value == cell.analytic ? 0.0 : INFINITY);
    }
  }
  return cells;
}

}  // namespace infalign
