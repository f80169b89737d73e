#include "config.hpp"

#include <filesystem>

#include "infalign/io.hpp"

namespace infalign::cli {

using nlohmann::json;

std::string CurveTransform::label() const {
  return fixed ? fixed->label() : fixed_point_label(kind, n);
}

CurveTransform parse_curve_transform(const std::string& spec) {
  CurveTransform t;
  t.spec = spec;
  for (auto [prefix, kind] : {std::pair{"bon_fp:", FixedPointKind::BestOfN},
                              std::pair{"won_fp:", FixedPointKind::WorstOfN}}) {
    const std::string p = prefix;
    if (spec.rfind(p, 0) == 0) {
      const double n = parse_double(spec.substr(p.size()));
      if (n != std::floor(n) || n < 1 || n > 1000) {
        throw ConfigError("bad fixed-point order in '" + spec + "'");
      }
      t.kind = kind;
      t.n = int(n);
      return t;
    }
  }
  if (spec.rfind("table:", 0) == 0 && !std::filesystem::exists(spec.substr(6))) {
    throw ConfigError("transform table not found: " + spec.substr(6));
  }
  t.fixed = parse_transform(spec);
  return t;
}

namespace {

const std::vector<std::string> kKnownKeys = {
    "transforms", "procedures", "betas",      "beta_min",  "beta_max",
    "beta_count", "beta_scale", "kl_targets", "grid_size", "mc_trials",
    "seed",       "rewind_fallback", "output_dir", "fixed_point"};

template <typename T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

SweepConfig SweepConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(kKnownKeys.begin(), kKnownKeys.end(), it.key()) == kKnownKeys.end()) {
      throw ConfigError("unknown config key '" + it.key() + "'");
    }
  }
  SweepConfig c;
  c.transforms = get(j, "transforms", c.transforms);
  c.procedures = get(j, "procedures", c.procedures);
  c.betas = get(j, "betas", c.betas);
  c.beta_min = get(j, "beta_min", c.beta_min);
  c.beta_max = get(j, "beta_max", c.beta_max);
  c.beta_count = get(j, "beta_count", c.beta_count);
  const std::string scale = get<std::string>(j, "beta_scale", "range");
  if (scale != "range" && scale != "absolute") {
    throw ConfigError("beta_scale must be 'range' or 'absolute'");
  }
  c.scale_by_span = scale == "range";
  c.kl_targets = get(j, "kl_targets", c.kl_targets);
  c.grid_size = get<Eigen::Index>(j, "grid_size", c.grid_size);
  c.mc_trials = get<std::size_t>(j, "mc_trials", c.mc_trials);
  c.seed = get<std::uint64_t>(j, "seed", c.seed);
  try {
    c.rewind_fallback = parse_rewind_fallback(get<std::string>(j, "rewind_fallback", "last"));
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  c.output_dir = get(j, "output_dir", c.output_dir);
  if (j.contains("fixed_point")) {
    const json& fp = j.at("fixed_point");
    if (!fp.is_object()) throw ConfigError("fixed_point must be an object");
    c.fixed_point.tolerance = get(fp, "tolerance", c.fixed_point.tolerance);
    c.fixed_point.max_iterations = get(fp, "max_iterations", c.fixed_point.max_iterations);
    c.fixed_point.damping = get(fp, "damping", c.fixed_point.damping);
    c.fixed_point.adaptive_damping = get(fp, "adaptive_damping", c.fixed_point.adaptive_damping);
  }
  return c;
}

json SweepConfig::to_json() const {
  return json{{"transforms", transforms},
              {"procedures", procedures},
              {"betas", betas},
              {"beta_min", beta_min},
              {"beta_max", beta_max},
              {"beta_count", beta_count},
              {"beta_scale", scale_by_span ? "range" : "absolute"},
              {"kl_targets", kl_targets},
              {"grid_size", grid_size},
              {"mc_trials", mc_trials},
              {"seed", seed},
              {"rewind_fallback", rewind_fallback == RewindFallback::Last ? "last" : "best"},
              {"output_dir", output_dir},
              {"fixed_point",
               {{"tolerance", fixed_point.tolerance},
                {"max_iterations", fixed_point.max_iterations},
                {"damping", fixed_point.damping},
                {"adaptive_damping", fixed_point.adaptive_damping}}}};
}

void SweepConfig::validate() const {
  if (grid_size < 3 || grid_size % 2 == 0) throw ConfigError("grid_size must be odd and >= 3");
  if (mc_trials < 1) throw ConfigError("mc_trials must be >= 1");
  for (double b : betas) {
    if (!(b > 0) || !std::isfinite(b)) throw ConfigError("every beta must be positive");
  }
  if (betas.empty()) {
    if (!(beta_min > 0) || !(beta_max >= beta_min)) {
      throw ConfigError("beta range needs 0 < beta_min <= beta_max");
    }
    if (beta_count < 1) throw ConfigError("beta_count must be >= 1");
  }
  for (double k : kl_targets) {
    if (!(k > 0) || !std::isfinite(k)) throw ConfigError("kl_targets must be positive");
  }
  if (!(fixed_point.tolerance > 0)) throw ConfigError("fixed_point.tolerance must be positive");
  if (fixed_point.max_iterations < 1) throw ConfigError("fixed_point.max_iterations must be >= 1");
  if (!(fixed_point.damping > 0 && fixed_point.damping <= 1)) {
    throw ConfigError("fixed_point.damping must lie in (0,1]");
  }
  try {
    for (const auto& p : parsed_procedures()) transforms_for(p);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

std::vector<InferenceProcedure> SweepConfig::parsed_procedures() const {
  std::vector<InferenceProcedure> out;
  for (const auto& spec : procedures) out.push_back(parse_procedure(spec, rewind_fallback));
  return out;
}

std::vector<CurveTransform> SweepConfig::transforms_for(const InferenceProcedure& procedure) const {
  std::vector<CurveTransform> out;
  for (const auto& spec : transforms.empty() ? default_transforms(procedure) : transforms) {
    out.push_back(parse_curve_transform(spec));
  }
  return out;
}

std::vector<double> SweepConfig::betas_for(const CurveTransform& transform) const {
  if (!betas.empty()) return betas;
  std::vector<double> out = log_spaced(beta_min, beta_max, beta_count);
  if (scale_by_span && transform.fixed) {
    const double span = transform_span(*transform.fixed, grid_size);
    for (double& b : out) b *= span;
  }
  return out;
}

std::vector<std::string> default_transforms(const InferenceProcedure& procedure) {
  const std::string n = std::to_string(procedure.n());
  switch (procedure.kind()) {
    case ProcedureKind::WorstOfN:
      return {"identity", "log", "exp:-5", "exp:-10", "exp:5", "won_fp:" + n};
    case ProcedureKind::BestOfN:
    case ProcedureKind::RewindRepeat:
      return {"identity", "log", "exp:5", "exp:10", "exp:-5", "bon_fp:" + n};
    default:
      return {"identity", "log", "exp:5", "exp:10", "exp:-5", "exp:-10"};
  }
}

std::vector<std::string> oracle_transforms(int n) {
  return {"identity", "log",  "exp:5", "exp:-5", "exp:10", "exp:-10",
          "bon_fp:" + std::to_string(n), "won_fp:" + std::to_string(n)};
}

std::vector<InferenceProcedure> oracle_procedures(RewindFallback fallback) {
  return {InferenceProcedure::identity(),  InferenceProcedure::best_of(2),
          InferenceProcedure::best_of(4),  InferenceProcedure::best_of(32),
          InferenceProcedure::worst_of(2), InferenceProcedure::worst_of(4),
          InferenceProcedure::worst_of(32),
          InferenceProcedure::rewind_repeat(0.85, 32, fallback)};
}

std::vector<double> oracle_kl_targets() { return {0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0}; }

}  // namespace infalign::cli
