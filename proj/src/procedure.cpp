#include "infalign/procedure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "infalign/error.hpp"
#include "infalign/io.hpp"

namespace infalign {

namespace {

// sum_{k<terms} phi^k, well defined at phi = 1.
double geometric_sum(double phi, int terms) {
  double sum = 0, power = 1;
  for (int k = 0; k < terms; ++k, power *= phi) sum += power;
  return sum;
}

void check_n(int n) {
  if (n < 1) throw InvalidParameter("procedure N must be >= 1");
}

}  // namespace

InferenceProcedure InferenceProcedure::identity() {
  return {ProcedureKind::Identity, 1};
}

InferenceProcedure InferenceProcedure::best_of(int n) {
  check_n(n);
  return {ProcedureKind::BestOfN, n};
}

InferenceProcedure InferenceProcedure::worst_of(int n) {
  check_n(n);
  return {ProcedureKind::WorstOfN, n};
}

InferenceProcedure InferenceProcedure::rewind_repeat(double phi, int n,
                                                     RewindFallback fallback) {
  check_n(n);
  if (!(phi >= 0.0 && phi <= 1.0)) {
    throw InvalidParameter("rewind threshold must lie in [0,1]");
  }
  InferenceProcedure p(ProcedureKind::RewindRepeat, n);
  p.phi_ = phi;
  p.fallback_ = fallback;
  return p;
}

InferenceProcedure InferenceProcedure::custom(Eigen::ArrayXd g_values,
                                              std::string label) {
  if (g_values.size() < 2) throw InvalidParameter("custom g needs >= 2 points");
  if (!g_values.allFinite() || (g_values < 0.0).any()) {
    throw InvalidParameter("custom g must be finite and nonnegative");
  }
  const Eigen::Index m = g_values.size();
  const double h = 1.0 / double(m - 1);
  Eigen::ArrayXd cum(m);
  cum[0] = 0;
  for (Eigen::Index i = 1; i < m; ++i) {
    cum[i] = cum[i - 1] + 0.5 * h * (g_values[i - 1] + g_values[i]);
  }
  if (!(cum[m - 1] > 0.0)) throw InvalidParameter("custom g must have positive mass");
  InferenceProcedure p(ProcedureKind::Custom, 1);
  p.g_table_ = std::move(g_values);
  p.g_cumulative_ = std::move(cum);
  p.label_ = std::move(label);
  return p;
}

double InferenceProcedure::g(double v) const {
  switch (kind_) {
    case ProcedureKind::Identity:
      return 1.0;
    case ProcedureKind::BestOfN:
      return std::pow(v, n_ - 1);
    case ProcedureKind::WorstOfN:
      return std::pow(1.0 - v, n_ - 1);
    case ProcedureKind::RewindRepeat: {
      // A threshold of 1 never accepts, not even at v = 1.
      const bool accept = v >= phi_ && phi_ < 1.0;
      if (fallback_ == RewindFallback::Last) {
        return (accept ? geometric_sum(phi_, n_ - 1) : 0.0) + std::pow(phi_, n_ - 1);
      }
      return accept ? geometric_sum(phi_, n_) : n_ * std::pow(v, n_ - 1);
    }
    case ProcedureKind::Custom: {
      const Eigen::Index cells = g_table_.size() - 1;
      const double x = v * double(cells);
      const Eigen::Index i =
          std::clamp<Eigen::Index>(static_cast<Eigen::Index>(x), 0, cells - 1);
      const double frac = x - double(i);
      return g_table_[i] + frac * (g_table_[i + 1] - g_table_[i]);
    }
  }
  return 0.0;
}

double InferenceProcedure::cumulative(double v) const {
  switch (kind_) {
    case ProcedureKind::Identity:
      return v;
    case ProcedureKind::BestOfN:
      return std::pow(v, n_) / n_;
    case ProcedureKind::WorstOfN:
      return (1.0 - std::pow(1.0 - v, n_)) / n_;
    case ProcedureKind::RewindRepeat:
      if (fallback_ == RewindFallback::Last) {
        return std::pow(phi_, n_ - 1) * v +
               geometric_sum(phi_, n_ - 1) * std::max(0.0, v - phi_);
      }
      return v < phi_ ? std::pow(v, n_)
                      : std::pow(phi_, n_) + geometric_sum(phi_, n_) * (v - phi_);
    case ProcedureKind::Custom: {
      const Eigen::Index cells = g_table_.size() - 1;
      const double h = 1.0 / double(cells);
      const double x = v * double(cells);
      const Eigen::Index i =
          std::clamp<Eigen::Index>(static_cast<Eigen::Index>(x), 0, cells - 1);
      const double frac = x - double(i);
      return g_cumulative_[i] +
             h * (frac * g_table_[i] + 0.5 * frac * frac * (g_table_[i + 1] - g_table_[i]));
    }
  }
  return 0.0;
}

std::vector<double> InferenceProcedure::discontinuities() const {
  if (kind_ == ProcedureKind::RewindRepeat && n_ > 1 && phi_ > 0.0 && phi_ < 1.0) {
    return {phi_};
  }
  return {};
}

std::string InferenceProcedure::label() const {
  switch (kind_) {
    case ProcedureKind::Identity:
      return "identity";
    case ProcedureKind::BestOfN:
      return "bon:" + std::to_string(n_);
    case ProcedureKind::WorstOfN:
      return "won:" + std::to_string(n_);
    case ProcedureKind::RewindRepeat:
      return "rr:" + format_double(phi_) + ":" + std::to_string(n_) +
             (fallback_ == RewindFallback::Last ? ":last" : ":best");
    case ProcedureKind::Custom:
      return label_;
  }
  return {};
}

double InferenceProcedure::g_max() const {
  switch (kind_) {
    case ProcedureKind::Identity:
    case ProcedureKind::BestOfN:
    case ProcedureKind::WorstOfN:
      return 1.0;
    case ProcedureKind::RewindRepeat: {
      const double left = fallback_ == RewindFallback::Last ? std::pow(phi_, n_ - 1)
                                                            : n_ * std::pow(phi_, n_ - 1);
      return std::max({g(0.0), g(1.0), left});
    }
    case ProcedureKind::Custom:
      return g_table_.maxCoeff();
  }
  return 1.0;
}

Eigen::ArrayXd rewind_repeat_g(double phi, int n, Eigen::Index m) {
  if (m < 2) throw InvalidParameter("grid needs at least 2 points");
  const auto proc = InferenceProcedure::rewind_repeat(phi, n, RewindFallback::Last);
  Eigen::ArrayXd g(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    g[i] = proc.g(i == m - 1 ? 1.0 : double(i) / double(m - 1));
  }
  return g;
}

RewindFallback parse_rewind_fallback(std::string_view text) {
  if (text == "last") return RewindFallback::Last;
  if (text == "best") return RewindFallback::Best;
  throw ParseError("rewind fallback must be 'last' or 'best'");
}

namespace {

int parse_count(std::string_view text) {
  const double v = parse_double(text);
  if (v != std::floor(v) || v < 1 || v > 1e6) {
    throw ParseError("expected a positive integer, got '" + std::string(text) + "'");
  }
  return static_cast<int>(v);
}

}  // namespace

InferenceProcedure parse_procedure(std::string_view spec,
                                   RewindFallback default_fallback) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = spec.find(':', start);
    parts.push_back(spec.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  const auto& head = parts[0];
  if (head == "identity" && parts.size() == 1) return InferenceProcedure::identity();
  if (head == "bon" && parts.size() == 2) {
    return InferenceProcedure::best_of(parse_count(parts[1]));
  }
  if (head == "won" && parts.size() == 2) {
    return InferenceProcedure::worst_of(parse_count(parts[1]));
  }
  if (head == "rr" && (parts.size() == 3 || parts.size() == 4)) {
    const double phi = parse_double(parts[1]);
    if (!(phi >= 0.0 && phi <= 1.0)) throw ParseError("rr threshold must lie in [0,1]");
    return InferenceProcedure::rewind_repeat(
        phi, parse_count(parts[2]),
        parts.size() == 4 ? parse_rewind_fallback(parts[3]) : default_fallback);
  }
  if (head == "custom" && parts.size() >= 2) {
    const std::string path(spec.substr(spec.find(':') + 1));
    std::ifstream in(path);
    if (!in) throw IoError("cannot open custom procedure table " + path);
    const auto rows = read_csv(in, {"u", "g"});
    if (rows.size() < 2) throw ParseError("custom g table needs at least 2 rows");
    Eigen::ArrayXd g(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double expected = double(i) / double(rows.size() - 1);
      if (std::abs(rows[i][0] - expected) > 1e-9) {
        throw ParseError("custom g table must use a uniform grid on [0,1]", i + 2);
      }
      g[static_cast<Eigen::Index>(i)] = rows[i][1];
    }
    return InferenceProcedure::custom(std::move(g), "custom");
  }
  throw ParseError("unknown procedure spec '" + std::string(spec) + "'");
}

}  // namespace infalign
