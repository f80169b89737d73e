#include "infalign/transforms.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "infalign/io.hpp"

namespace infalign {

Transform Transform::identity() { return {TransformKind::Identity, 0.0}; }

Transform Transform::log(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw InvalidParameter("log clamp epsilon must lie in (0,1)");
  }
  return {TransformKind::Log, epsilon};
}

Transform Transform::exp_tilt(double t) {
  if (!std::isfinite(t)) throw InvalidParameter("tilt must be finite");
  return {TransformKind::ExpTilt, t};
}

Transform Transform::tabulated(Eigen::ArrayXd values, std::string label) {
  if (values.size() < 2) {
    throw InvalidParameter("tabulated transform needs at least 2 points");
  }
  if (!values.allFinite()) {
    throw InvalidParameter("tabulated transform values must be finite");
  }
  Transform t(TransformKind::Tabulated, 0.0);
  t.table_ = std::move(values);
  t.label_ = std::move(label);
  return t;
}

Transform Transform::constant(double c) {
  return tabulated(Eigen::ArrayXd::Constant(2, c), "const:" + format_double(c));
}

double Transform::operator()(double u) const {
  switch (kind_) {
    case TransformKind::Identity:
      return u;
    case TransformKind::Log:
      return std::log(std::max(u, param_));
    case TransformKind::ExpTilt:
      return (param_ >= 0 ? 1.0 : -1.0) * std::exp(param_ * u);
    case TransformKind::Tabulated: {
      const Eigen::Index cells = table_.size() - 1;
      const double x = u * static_cast<double>(cells);
      const Eigen::Index i =
          std::clamp<Eigen::Index>(static_cast<Eigen::Index>(x), 0, cells - 1);
      const double frac = x - static_cast<double>(i);
      return table_[i] + frac * (table_[i + 1] - table_[i]);
    }
  }
  return 0.0;
}

std::string Transform::label() const {
  switch (kind_) {
    case TransformKind::Identity:
      return "identity";
    case TransformKind::Log:
      return param_ == kDefaultLogEpsilon ? "log" : "log:" + format_double(param_);
    case TransformKind::ExpTilt:
      return "exp:" + format_double(param_);
    case TransformKind::Tabulated:
      return label_;
  }
  return {};
}

double eval(const Transform& transform, double u) {
  if (!(u >= 0.0 && u <= 1.0)) {
    throw DomainError("transform argument outside [0,1]");
  }
  return transform(u);
}

TransformedReward compose(const Transform& transform, CalibratedScore score) {
  return {eval(transform, score.value())};
}

Eigen::ArrayXd tabulate(const Transform& transform, Eigen::Index m) {
  if (m < 2) throw InvalidParameter("table needs at least 2 points");
  Eigen::ArrayXd values(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double u = i == m - 1 ? 1.0 : static_cast<double>(i) / double(m - 1);
    values[i] = transform(u);
  }
  return values;
}

Transform reflected(const Transform& transform, Eigen::Index m) {
  Eigen::ArrayXd values = tabulate(transform, m);
  return Transform::tabulated(values.reverse().eval(),
                              "reflect(" + transform.label() + ")");
}

bool is_nondecreasing(const Transform& transform, Eigen::Index samples) {
  const Eigen::ArrayXd v = tabulate(transform, samples);
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] < v[i - 1]) return false;
  }
  return true;
}

Transform parse_transform(std::string_view spec) {
  const auto colon = spec.find(':');
  const std::string_view head = spec.substr(0, colon);
  const std::string_view arg =
      colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
  if (head == "identity" && arg.empty()) return Transform::identity();
  if (head == "log") {
    return arg.empty() ? Transform::log() : Transform::log(parse_double(arg));
  }
  if (head == "exp" && !arg.empty()) return Transform::exp_tilt(parse_double(arg));
  if (head == "table" && !arg.empty()) return load_transform_table(std::string(arg));
  throw ParseError("unknown transform spec '" + std::string(spec) + "'");
}

Transform load_transform_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open transform table " + path.string());
  const auto rows = read_csv(in, {"u", "phi"});
  if (rows.size() < 2) {
    throw ParseError("transform table needs at least 2 rows: " + path.string());
  }
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  Eigen::ArrayXd values(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double expected = static_cast<double>(i) / double(m - 1);
    if (std::abs(rows[i][0] - expected) > 1e-9) {
      throw ParseError("transform table must use a uniform grid on [0,1]",
                       static_cast<std::size_t>(i) + 2);
    }
    values[i] = rows[i][1];
  }
  return Transform::tabulated(std::move(values),
                              "table:" + path.filename().string());
}

void save_transform_table(const std::filesystem::path& path,
                          const Eigen::ArrayXd& values) {
  std::ostringstream out;
  out << "u,phi\n";
  const Eigen::Index m = values.size();
  for (Eigen::Index i = 0; i < m; ++i) {
    const double u = i == m - 1 ? 1.0 : static_cast<double>(i) / double(m - 1);
    out << format_double(u) << ',' << format_double(values[i]) << '\n';
  }
  write_file(path, out.str());
}

}  // namespace infalign
