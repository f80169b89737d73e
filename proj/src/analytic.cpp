#include "infalign/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <tuple>

#include "infalign/error.hpp"
#include "infalign/parallel.hpp"

namespace infalign {

namespace {

constexpr Eigen::Index kRefinedCells = 16;
constexpr Eigen::Index kScanPoints = 20001;
// Probability mass left outside the window on each side.
constexpr double kWindowMass = 1e-16;

// Smallest interval of [0,1] whose complement carries at most kWindowMass on
// each side, from a trapezoid estimate on a scan grid. Scans repeat inside
// the window so that very concentrated policies are still resolved.
std::pair<double, double> support_window(const Transform& t, double beta) {
  double lo = 0.0, hi = 1.0;
  std::vector<double> phi(static_cast<std::size_t>(kScanPoints));
  std::vector<double> cum(static_cast<std::size_t>(kScanPoints));
  for (int round = 0; round < 8; ++round) {
    const double h = (hi - lo) / double(kScanPoints - 1);
    auto at = [&](Eigen::Index i) { return i == kScanPoints - 1 ? hi : lo + double(i) * h; };
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < kScanPoints; ++i) {
      phi[std::size_t(i)] = t(at(i));
      top = std::max(top, phi[std::size_t(i)]);
    }
    if (!std::isfinite(top)) throw InvalidParameter("transform is not finite on [0,1]");
    double prev = std::exp((phi[0] - top) / beta);
    cum[0] = 0.0;
    for (std::size_t i = 1; i < cum.size(); ++i) {
      const double w = std::exp((phi[i] - top) / beta);
      cum[i] = cum[i - 1] + 0.5 * (prev + w);
      prev = w;
    }
    const double total = cum.back();
    Eigen::Index first = 0, last = kScanPoints - 1;
    while (first < kScanPoints - 1 && cum[std::size_t(first)] <= kWindowMass * total) ++first;
    while (last > 0 && total - cum[std::size_t(last)] <= kWindowMass * total) --last;
    // Two scan cells of padding on each side.
    const double new_lo = first <= 2 ? lo : at(first - 2);
    const double new_hi = last + 2 >= kScanPoints - 1 ? hi : at(last + 2);
    if (new_hi - new_lo > 0.5 * (hi - lo)) break;
    lo = new_lo;
    hi = new_hi;
  }
  return {lo, hi};
}

// Cells are subdivided until log f changes by at most kMaxLogStep and F by at
// most kMaxCdfStep across one. The second bound keeps F^N accurate for N up
// to about 32.
constexpr double kMaxLogStep = 0.02;
constexpr double kMaxCdfStep = 1e-3;
constexpr Eigen::Index kMaxRefinement = 32;

Eigen::Index refinement_factor(const Transform& t, double beta, double lo, double hi,
                               Eigen::Index m) {
  const double h = (hi - lo) / double(m - 1);
  Eigen::ArrayXd phi(m);
  for (Eigen::Index i = 0; i < m; ++i) phi[i] = t(lo + double(i) * h);
  const double worst_log = ((phi.tail(m - 1) - phi.head(m - 1)).abs() / beta).maxCoeff();
  const Eigen::ArrayXd w = ((phi - phi.maxCoeff()) / beta).exp();
  const double z = h * (w.sum() - 0.5 * (w[0] + w[m - 1]));
  const double worst_cdf = h / z;  // peak density times the cell width
  const double need = std::max(std::ceil(worst_log / kMaxLogStep), std::ceil(worst_cdf / kMaxCdfStep));
  return std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::min(need, 1e6)), 1,
                                  kMaxRefinement);
}

}  // namespace

TiltedPolicy::TiltedPolicy(Transform transform, double beta,
                           Eigen::Index grid_size, Support support)
    : transform_(std::move(transform)), beta_(beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw InvalidParameter("beta must be positive and finite");
  }
  quad::UniformGrid<> grid(grid_size);
  if (support == Support::Adaptive) {
    std::tie(lo_, hi_) = support_window(transform_, beta_);
    const Eigen::Index factor = refinement_factor(transform_, beta_, lo_, hi_, grid.size);
    if (factor > 1) grid = quad::UniformGrid<>((grid.size - 1) * factor + 1);
  }
  const Eigen::Index m = grid.size;
  step_ = (hi_ - lo_) / double(m - 1);
  nodes_ = lo_ + (hi_ - lo_) * grid.nodes();
  nodes_[m - 1] = hi_;
  region_cells_ = std::min<Eigen::Index>(kRefinedCells, m - 1);

  // Piece boundaries of the refined region: graded toward 0 inside the first
  // cell when the window starts at 0, then one piece per cell.
  if (lo_ == 0.0) {
    region_breaks_ = quad::graded_breakpoints(step_);
  } else {
    region_breaks_ = {lo_, nodes_[1]};
  }
  for (Eigen::Index i = 2; i <= region_cells_; ++i) region_breaks_.push_back(nodes_[i]);

  std::vector<double> gauss_u;
  for (std::size_t k = 0; k + 1 < region_breaks_.size(); ++k) {
    const double mid = 0.5 * (region_breaks_[k] + region_breaks_[k + 1]);
    const double half = 0.5 * (region_breaks_[k + 1] - region_breaks_[k]);
    for (std::size_t j = 0; j < quad::kGaussNodes.size(); ++j) {
      gauss_u.push_back(mid + half * quad::kGaussNodes[j]);
      region_weights_.push_back(half * quad::kGaussWeights[j]);
    }
  }

  Eigen::ArrayXd phi(m);
  for (Eigen::Index i = 0; i < m; ++i) phi[i] = transform_(nodes_[i]);
  shift_ = phi.maxCoeff();
  for (double u : gauss_u) shift_ = std::max(shift_, transform_(u));
  if (!std::isfinite(shift_)) throw InvalidParameter("transform is not finite on [0,1]");

  const Eigen::ArrayXd log_w = (phi - shift_) / beta_;
  const Eigen::ArrayXd w = log_w.exp();
  auto weight = [&](double u) { return std::exp(shifted_log_weight(u)); };

  // Unnormalized running integral at every break of the refined region.
  std::vector<double> break_mass(region_breaks_.size(), 0.0);
  for (std::size_t k = 0; k + 1 < region_breaks_.size(); ++k) {
    break_mass[k + 1] = break_mass[k] +
                        quad::gauss_legendre(weight, region_breaks_[k], region_breaks_[k + 1]);
  }
  std::vector<double> gauss_mass(gauss_u.size());
  for (std::size_t q = 0; q < gauss_u.size(); ++q) {
    const std::size_t k = q / quad::kGaussNodes.size();
    gauss_mass[q] = break_mass[k] + quad::gauss_legendre(weight, region_breaks_[k], gauss_u[q]);
  }

  const Eigen::Index tail = m - region_cells_;
  double tail_mass = 0;
  if (tail >= 3) {
    tail_weights_ = quad::simpson_weights<double>(tail, step_);
    tail_mass = (tail_weights_ * w.tail(tail)).sum();
  } else {
    tail_weights_ = Eigen::ArrayXd::Zero(tail);
  }
  const double z = break_mass.back() + tail_mass;
  log_shifted_z_ = std::log(z);

  density_ = w / z;
  log_density_ = log_w - log_shifted_z_;

  cdf_.resize(m);
  cdf_[0] = 0.0;
  region_break_cdf_.resize(region_breaks_.size());
  for (std::size_t k = 0; k < region_breaks_.size(); ++k) {
    region_break_cdf_[k] = break_mass[k] / z;
  }
  // Nodes 1..region_cells_ are the last region_cells_ breaks.
  const std::size_t first_node_break = region_breaks_.size() - static_cast<std::size_t>(region_cells_);
  for (Eigen::Index i = 1; i <= region_cells_; ++i) {
    cdf_[i] = region_break_cdf_[first_node_break + static_cast<std::size_t>(i) - 1];
  }
  if (tail >= 3) {
    const Eigen::ArrayXd running =
        quad::cumulative_simpson(density_.tail(tail), step_, /*nonnegative=*/true);
    cdf_.tail(tail) = cdf_[region_cells_] + running;
  }
  cdf_ = cdf_.min(1.0).max(0.0);
  cdf_[m - 1] = 1.0;

  quantile_bucket_.resize(kQuantileBuckets + 1);
  for (std::size_t b = 0; b <= kQuantileBuckets; ++b) {
    const double v = double(b) / double(kQuantileBuckets);
    const auto* it = std::upper_bound(cdf_.data(), cdf_.data() + m, v);
    quantile_bucket_[b] = std::clamp<Eigen::Index>(Eigen::Index(it - cdf_.data()) - 1, 0, m - 1);
  }

  region_samples_.reserve(gauss_u.size());
  for (std::size_t q = 0; q < gauss_u.size(); ++q) {
    const double lf = shifted_log_weight(gauss_u[q]) - log_shifted_z_;
    region_samples_.push_back({gauss_u[q], std::exp(lf), gauss_mass[q] / z, lf});
  }
}

double TiltedPolicy::log_density(double u) const {
  return shifted_log_weight(u) - log_shifted_z_;
}

double TiltedPolicy::density(double u) const { return std::exp(log_density(u)); }

double TiltedPolicy::cdf(double u) const {
  if (u <= lo_) return 0.0;
  if (u >= hi_) return 1.0;
  auto dens = [&](double x) { return density(x); };
  double value;
  if (u <= nodes_[region_cells_]) {
    auto it = std::upper_bound(region_breaks_.begin(), region_breaks_.end(), u);
    const std::size_t k = std::min<std::size_t>(
        static_cast<std::size_t>(it - region_breaks_.begin()) - 1, region_breaks_.size() - 2);
    value = region_break_cdf_[k] + quad::gauss_legendre(dens, region_breaks_[k], u);
  } else {
    const Eigen::Index i = cell_of(u);
    value = cdf_[i] + quad::gauss_legendre(dens, nodes_[i], u);
  }
  return std::clamp(value, 0.0, 1.0);
}

double TiltedPolicy::cdf_linear(double u) const {
  if (u <= lo_) return 0.0;
  if (u >= hi_) return 1.0;
  const Eigen::Index i = cell_of(u);
  const double frac = std::clamp((u - nodes_[i]) / step_, 0.0, 1.0);
  return cdf_[i] + frac * (cdf_[i + 1] - cdf_[i]);
}

Eigen::Index TiltedPolicy::cell_of(double u) const {
  return std::clamp<Eigen::Index>(static_cast<Eigen::Index>((u - lo_) / step_), 0,
                                  nodes_.size() - 2);
}

double TiltedPolicy::quantile(double v) const {
  if (v <= 0.0) return lo_;
  if (v >= 1.0) return hi_;
  // The bucket of v bounds the search to the cells whose CDF range meets it.
  const std::size_t b = std::min(static_cast<std::size_t>(v * double(kQuantileBuckets)),
                                 kQuantileBuckets - 1);
  const auto* begin = cdf_.data() + quantile_bucket_[b];
  const auto* end = cdf_.data() + quantile_bucket_[b + 1] + 1;
  const Eigen::Index i = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::upper_bound(begin, end, v) - cdf_.data()) - 1, 0,
      cdf_.size() - 2);
  const double width = cdf_[i + 1] - cdf_[i];
  const double frac = width > 0.0 ? std::clamp((v - cdf_[i]) / width, 0.0, 1.0) : 0.0;
  return std::min(hi_, nodes_[i] + frac * step_);
}

PolicySample TiltedPolicy::sample_at(double u) const {
  const double lf = log_density(u);
  return {u, std::exp(lf), cdf(u), lf};
}

TiltedPolicy build_tilted(const Transform& transform, double beta,
                          Eigen::Index grid_size) {
  return TiltedPolicy(transform, beta, grid_size);
}

double kl_divergence(const TiltedPolicy& policy) {
  const double kl = policy.integrate(
      [](const PolicySample& s) { return s.density * s.log_density; });
  return std::max(kl, 0.0);
}

namespace {

// u with F(u) = v, refined by bisection on the exact CDF.
double exact_quantile(const TiltedPolicy& policy, double v) {
  const double guess = policy.quantile(v);
  const double h = policy.step();
  double lo = std::max(0.0, guess - h), hi = std::min(1.0, guess + h);
  if (policy.cdf(lo) > v) lo = 0.0;
  if (policy.cdf(hi) < v) hi = 1.0;
  for (int it = 0; it < 80 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    (policy.cdf(mid) < v ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double general_win_rate(const TiltedPolicy& policy, const InferenceProcedure& proc) {
  const auto jumps = proc.discontinuities();
  std::vector<double> cuts{0.0, 1.0};
  for (double d : jumps) {
    cuts.push_back(d);  // kink of the base side's cumulative
    cuts.push_back(exact_quantile(policy, d));  // jump of g(F(u))
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  double numerator = 0, mass = 0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double a = cuts[k], b = cuts[k + 1];
    if (!(b > a)) continue;
    const double mid_v = policy.cdf(0.5 * (a + b));
    // Evaluate g on the side of each jump that this piece lies on.
    auto g_piece = [&](double v) {
      for (double d : jumps) {
        if (mid_v < d && v >= d) v = std::nextafter(d, 0.0);
        if (mid_v > d && v < d) v = d;
      }
      return proc.g(v);
    };
    numerator += policy.integrate(
        [&](const PolicySample& s) {
          return s.density * g_piece(s.cdf) * proc.cumulative(s.u);
        },
        a, b);
    mass += policy.integrate(
        [&](const PolicySample& s) { return s.density * g_piece(s.cdf); }, a, b);
  }
  return numerator / (mass * proc.total());
}

}  // namespace

double win_rate(const TiltedPolicy& policy, const InferenceProcedure& procedure) {
  const int n = procedure.n();
  double w = 0;
  switch (procedure.kind()) {
    case ProcedureKind::Identity:
      w = policy.integrate([](const PolicySample& s) { return s.u * s.density; });
      break;
    case ProcedureKind::BestOfN:
      w = 1.0 - n * policy.integrate([n](const PolicySample& s) {
            return std::pow(s.cdf, n) * std::pow(s.u, n - 1);
          });
      break;
    case ProcedureKind::WorstOfN:
      w = n * policy.integrate([n](const PolicySample& s) {
            return std::pow(1.0 - s.cdf, n) * std::pow(1.0 - s.u, n - 1);
          });
      break;
    case ProcedureKind::RewindRepeat:
    case ProcedureKind::Custom:
      w = general_win_rate(policy, procedure);
      break;
  }
  return std::clamp(w, 0.0, 1.0);
}

double infalign_objective(const TiltedPolicy& policy,
                          const InferenceProcedure& procedure, double beta) {
  if (std::abs(beta - policy.beta()) > 1e-12 * policy.beta()) {
    throw InvalidParameter("objective beta does not match the policy's beta");
  }
  return win_rate(policy, procedure) - beta * kl_divergence(policy);
}

std::vector<TradeoffPoint> sweep_curve(const Transform& transform,
                                       const InferenceProcedure& procedure,
                                       std::span<const double> betas,
                                       Eigen::Index grid_size) {
  if (betas.empty()) throw InvalidParameter("beta list is empty");
  for (double b : betas) {
    if (!(b > 0.0)) throw InvalidParameter("every beta must be positive");
  }
  std::vector<std::optional<TradeoffPoint>> slots(betas.size());
  parallel_for(betas.size(), [&](std::size_t i) {
    const TiltedPolicy policy(transform, betas[i], grid_size);
    slots[i].emplace(TradeoffPoint{betas[i], kl_divergence(policy),
                                   win_rate(policy, procedure), procedure, transform});
  });
  std::vector<TradeoffPoint> points;
  for (auto& s : slots) points.push_back(std::move(*s));
  std::stable_sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    return a.kl < b.kl || (a.kl == b.kl && a.beta > b.beta);
  });
  return points;
}

std::vector<double> log_spaced(double lo, double hi, int count) {
  if (!(lo > 0.0 && hi >= lo) || count < 1) {
    throw InvalidParameter("log-spaced range needs 0 < lo <= hi and count >= 1");
  }
  std::vector<double> out;
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : double(i) / double(count - 1);
    out.push_back(std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))));
  }
  out.front() = lo;
  if (count > 1) out.back() = hi;
  return out;
}

double transform_span(const Transform& transform, Eigen::Index grid_size) {
  const Eigen::ArrayXd v = tabulate(transform, grid_size);
  const double span = v.maxCoeff() - v.minCoeff();
  return span > 0.0 ? span : 1.0;
}

double beta_for_kl(const Transform& transform, double target_kl,
                   Eigen::Index grid_size) {
  if (!(target_kl > 0.0)) throw InvalidParameter("target KL must be positive");
  const double center = std::log(transform_span(transform, grid_size));
  double lo = center - 12.0, hi = center + 12.0;
  auto kl_at = [&](double log_beta) {
    return kl_divergence(TiltedPolicy(transform, std::exp(log_beta), grid_size));
  };
  if (kl_at(lo) < target_kl) {
    throw InvalidParameter("target KL is not attainable for " + transform.label());
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    (kl_at(mid) > target_kl ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

double grid_objective(const Eigen::ArrayXd& density,
                      const InferenceProcedure& procedure, double beta) {
  const Eigen::Index m = density.size();
  const quad::UniformGrid<> grid(m);
  const double h = grid.step();
  const Eigen::ArrayXd u = grid.nodes();
  const Eigen::ArrayXd w = quad::simpson_weights<double>(m, h);
  const Eigen::ArrayXd cdf = quad::cumulative_simpson(density, h, true);
  const Eigen::ArrayXd xlogx =
      (density > 0.0).select(density * density.max(1e-300).log(), 0.0);
  const double kl = (w * xlogx).sum();
  Eigen::ArrayXd g_of_f(m), base_cum(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    g_of_f[i] = procedure.g(std::clamp(cdf[i], 0.0, 1.0));
    base_cum[i] = procedure.cumulative(u[i]);
  }
  const double num = (w * density * g_of_f * base_cum).sum();
  const double mass = (w * density * g_of_f).sum();
  return num / (mass * procedure.total()) - beta * kl;
}

}  // namespace infalign
