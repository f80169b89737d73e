#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "infalign/analytic.hpp"
#include "infalign/calibration.hpp"
#include "infalign/fixedpoint.hpp"
#include "infalign/io.hpp"
#include "infalign/mc_oracle.hpp"
#include "output.hpp"
#include "svg.hpp"
#include "verify.hpp"

namespace infalign::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<Eigen::Index> grid;
  std::optional<std::size_t> trials;
  std::string out;
  std::string rewind_fallback;
};

SweepConfig load_config(const GlobalOptions& g) {
  SweepConfig c;
  if (!g.config_path.empty()) {
    json j;
    try {
      j = json::parse(read_file(g.config_path));
    } catch (const json::parse_error& e) {
      throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    c = SweepConfig::from_json(j);
  }
  if (g.seed) c.seed = *g.seed;
  if (g.grid) c.grid_size = *g.grid;
  if (g.trials) c.mc_trials = *g.trials;
  if (!g.out.empty()) c.output_dir = g.out;
  if (!g.rewind_fallback.empty()) c.rewind_fallback = parse_rewind_fallback(g.rewind_fallback);
  return c;
}

std::string file_stem(const std::string& label) {
  std::string s;
  for (char ch : label) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.') {
      s += ch;
    } else if (ch == '-') {
      s += 'm';
    } else {
      s += '_';
    }
  }
  return s;
}

// ---- calibrate -------------------------------------------------------------

int cmd_calibrate(const GlobalOptions& g, const std::string& input, const std::string& reference,
                  const std::string& transform_spec, std::ostream& out) {
  if (g.out.empty()) throw ConfigError("calibrate needs --out");
  const Transform transform = parse_transform(transform_spec);
  const std::string text = read_file(input);
  std::istringstream in(text);
  const auto records = read_reward_records(in);
  if (records.empty()) throw ConfigError("no records in " + input);

  std::vector<RewardRecord> ref_records;
  if (!reference.empty()) {
    std::istringstream ref_in(read_file(reference));
    ref_records = read_reward_records(ref_in);
    if (ref_records.empty()) throw ConfigError("no records in " + reference);
  }
  const auto tables = build_tables(reference.empty() ? records : ref_records);
  const double eps = transform.kind() == TransformKind::Log ? transform.parameter() : 0.0;

  std::string body;
  std::size_t clamped = 0, line_no = 0;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj = json::parse(line);
    const double c = empirical_calibrate(tables, obj.at("prompt_id").get<std::string>(),
                                         obj.at("reward").get<double>())
                         .value();
    if (transform.kind() == TransformKind::Log && c < eps) ++clamped;
    obj["calibrated"] = c;
    obj["transformed"] = eval(transform, c);
    body += obj.dump() + "\n";
  }

  json prompts = json::object();
  for (const auto& [id, table] : tables) prompts[id] = {{"K", table.size()}};
  const json summary{{"records", records.size()},
                     {"transform", transform.label()},
                     {"reference", reference.empty() ? input : reference},
                     {"prompts", prompts},
                     {"log_clamped", clamped}};

  const fs::path out_path = g.out;
  fs::path summary_path = out_path, manifest_path = out_path;
  summary_path += ".summary.json";
  manifest_path += ".manifest.json";
  OutputCollector collector(manifest_path);
  collector.add(out_path, body);
  collector.add(summary_path, summary.dump(2) + "\n");
  collector.commit({{"command", "calibrate"},
                    {"input", input},
                    {"reference", reference},
                    {"transform", transform_spec}},
                   0);
  out << "calibrated " << records.size() << " records over " << tables.size() << " prompts";
  if (clamped) out << " (" << clamped << " clamped by log epsilon)";
  out << "\n";
  return kSuccess;
}

// ---- curve -----------------------------------------------------------------

std::vector<TradeoffPoint> curve_points(const SweepConfig& config, const CurveTransform& t,
                                        const InferenceProcedure& proc) {
  const auto betas = config.betas_for(t);
  if (t.is_fixed_point()) {
    FixedPointOptions fp = config.fixed_point;
    fp.grid_size = config.grid_size;
    return sweep_fixed_point_curve(t.kind, t.n, proc, betas, fp);
  }
  return sweep_curve(*t.fixed, proc, betas, config.grid_size);
}

int cmd_curve(const GlobalOptions& g, std::ostream& out) {
  SweepConfig config = load_config(g);
  if (config.procedures.empty()) config.procedures = {"bon:4"};
  config.validate();

  const fs::path dir = config.output_dir;
  OutputCollector collector(dir / "manifest.json");
  for (const auto& proc : config.parsed_procedures()) {
    std::vector<Series> series;
    for (const auto& t : config.transforms_for(proc)) {
      const auto points = curve_points(config, t, proc);
      std::string csv = "beta,kl,win_rate,transform,procedure\n";
      Series s{t.label(), {}};
      for (const auto& p : points) {
        csv += format_double(p.beta) + "," + format_double(p.kl) + "," + format_double(p.win_rate) +
               "," + t.label() + "," + proc.label() + "\n";
        s.points.emplace_back(p.kl, p.win_rate);
      }
      collector.add(dir / ("curve_" + file_stem(proc.label()) + "__" + file_stem(t.label()) + ".csv"),
                    std::move(csv));
      series.push_back(std::move(s));
      out << proc.label() << " " << t.label() << ": " << points.size() << " points\n";
    }
    collector.add(dir / ("curve_" + file_stem(proc.label()) + ".svg"),
                  render_tradeoff_svg(proc.label() + " win rate vs KL", series));
  }
  collector.commit(config.to_json(), config.seed);
  out << "wrote " << (dir / "manifest.json").string() << "\n";
  return kSuccess;
}

// ---- fixedpoint ------------------------------------------------------------

int cmd_fixedpoint(const GlobalOptions& g, int n, double beta, const std::string& kind_name,
                   FixedPointOptions options, std::ostream& out, std::ostream& err) {
  if (g.out.empty()) throw ConfigError("fixedpoint needs --out");
  FixedPointKind kind;
  if (kind_name == "bon") {
    kind = FixedPointKind::BestOfN;
  } else if (kind_name == "won") {
    kind = FixedPointKind::WorstOfN;
  } else {
    throw ConfigError("--kind must be 'bon' or 'won'");
  }
  if (g.grid) options.grid_size = *g.grid;
  const auto sol = solve_fixed_point(kind, n, beta, options);
  if (!sol.converged) {
    err << "fixed point did not converge after " << sol.iterations
        << " iterations, residual " << format_double(sol.residual) << "\n";
    return kVerificationFailed;
  }
  const Eigen::ArrayXd& phi = sol.transform.table();
  const quad::UniformGrid<> grid(phi.size());
  std::string csv = "u,phi\n";
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    csv += format_double(i == phi.size() - 1 ? 1.0 : grid.at(i)) + "," + format_double(phi[i]) + "\n";
  }
  const json meta{{"kind", kind_name},  {"n", n},
                  {"beta", beta},       {"converged", sol.converged},
                  {"residual", sol.residual}, {"iterations", sol.iterations},
                  {"grid_size", phi.size()},  {"tolerance", options.tolerance},
                  {"damping", options.damping}, {"adaptive_damping", options.adaptive_damping}};
  const fs::path table = g.out;
  fs::path meta_path = table, manifest_path = table;
  meta_path += ".json";
  manifest_path += ".manifest.json";
  OutputCollector collector(manifest_path);
  collector.add(table, csv);
  collector.add(meta_path, meta.dump(2) + "\n");
  collector.commit({{"command", "fixedpoint"}, {"kind", kind_name}, {"n", n}, {"beta", beta},
                    {"grid_size", options.grid_size}, {"tolerance", options.tolerance},
                    {"max_iterations", options.max_iterations}, {"damping", options.damping}},
                   0);
  out << fixed_point_label(kind, n) << " beta=" << format_double(beta) << " converged in "
      << sol.iterations << " iterations, residual " << format_double(sol.residual) << "\n";
  return kSuccess;
}

// ---- simulate --------------------------------------------------------------

int cmd_simulate(const GlobalOptions& g, std::ostream& out) {
  SweepConfig config = load_config(g);
  config.validate();
  const auto transforms = config.transforms.empty() ? oracle_transforms(4) : config.transforms;
  const auto procs = config.procedures.empty() ? oracle_procedures(config.rewind_fallback)
                                               : config.parsed_procedures();
  FixedPointOptions fp = config.fixed_point;
  fp.grid_size = config.grid_size;

  std::vector<OraclePolicy> policies;
  if (!config.betas.empty()) {
    for (const auto& spec : transforms) {
      const auto t = parse_curve_transform(spec);
      for (double beta : config.betas) {
        Transform phi = t.is_fixed_point() ? solve_fixed_point(t.kind, t.n, beta, fp).transform
                                           : *t.fixed;
        policies.push_back({t.label(), std::make_shared<const TiltedPolicy>(phi, beta, config.grid_size)});
      }
    }
  } else {
    const auto targets = config.kl_targets.empty() ? oracle_kl_targets() : config.kl_targets;
    policies = build_kl_matched_policies(transforms, targets, config.grid_size, fp);
  }

  const auto cells = oracle_grid(policies, procs, config.mc_trials, config.seed);
  std::string csv = "transform,beta,procedure,analytic,mc,std_err,z_score\n";
  std::size_t good = 0;
  for (const auto& c : cells) {
    csv += c.transform + "," + format_double(c.beta) + "," + c.procedure + "," +
           format_double(c.analytic) + "," + format_double(c.mc.value) + "," +
           format_double(c.mc.std_error) + "," + format_double(c.z_score) + "\n";
    good += within_error(c);
  }
  const fs::path dir = config.output_dir;
  OutputCollector collector(dir / "manifest.json");
  collector.add(dir / "simulate.csv", csv);
  json echo = config.to_json();
  echo["transforms"] = transforms;
  collector.commit(echo, config.seed);
  out << good << "/" << cells.size() << " cells within 3 std errors\n";
  return kSuccess;
}

// ---- verify ----------------------------------------------------------------

int cmd_verify(const GlobalOptions& g, const std::string& suite, std::ostream& out) {
  VerifyOptions opt;
  const SweepConfig config = load_config(g);
  opt.seed = config.seed;
  opt.trials = config.mc_trials;
  opt.grid_size = config.grid_size;
  opt.fallback = config.rewind_fallback;
  opt.fixed_point = config.fixed_point;
  opt.fixed_point.grid_size = config.grid_size;
  const auto checks = run_suite(suite, opt);
  bool all = true;
  for (const auto& c : checks) {
    out << std::left << std::setw(12) << c.suite << ' ' << (c.passed ? "PASS" : "FAIL") << "  "
        << c.name;
    if (!c.detail.empty()) out << "  [" << c.detail << "]";
    out << "\n";
    all = all && c.passed;
  }
  out << (all ? "all checks passed" : "some checks failed") << "\n";
  return all ? kSuccess : kVerificationFailed;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inference-aware alignment toolkit: calibration, tradeoff curves, fixed points, "
               "Monte Carlo checks"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON sweep configuration");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--grid", g.grid, "quadrature grid size (odd)");
  app.add_option("--trials", g.trials, "Monte Carlo trials per estimate");
  app.add_option("--out", g.out, "output file or directory");
  app.add_option("--rewind-fallback", g.rewind_fallback, "rewind-and-repeat fallback")
      ->check(CLI::IsMember({"last", "best"}));

  auto* calibrate = app.add_subcommand("calibrate", "calibrate and transform reward records");
  std::string input, reference, transform_spec = "identity";
  calibrate->add_option("--input", input, "reward records (JSONL)")->required();
  calibrate->add_option("--reference", reference, "records that form the calibration tables");
  calibrate->add_option("--transform", transform_spec, "transform spec");

  app.add_subcommand("curve", "win rate vs KL tradeoff curves");

  auto* fixedpoint = app.add_subcommand("fixedpoint", "solve for bon_fp / won_fp");
  int n = 4;
  double beta = 1.0;
  std::string kind = "bon";
  FixedPointOptions fp;
  fixedpoint->add_option("--n", n, "N of the procedure")->check(CLI::PositiveNumber);
  fixedpoint->add_option("--beta", beta, "KL regularization strength")->check(CLI::PositiveNumber);
  fixedpoint->add_option("--kind", kind, "bon or won");
  fixedpoint->add_option("--tolerance", fp.tolerance, "convergence tolerance");
  fixedpoint->add_option("--max-iter", fp.max_iterations, "iteration cap");
  fixedpoint->add_option("--damping", fp.damping, "initial damping in (0,1]");

  app.add_subcommand("simulate", "Monte Carlo vs analytic win rates");

  auto* verify = app.add_subcommand("verify", "property suites");
  std::string suite = "all";
  verify->add_option("--suite", suite, "trivial, anchors, calibration, oracle, ordering, "
                                        "fixedpoint, discrete, multitask or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kSuccess : kConfigError;
  }

  try {
    if (calibrate->parsed()) return cmd_calibrate(g, input, reference, transform_spec, out);
    if (app.got_subcommand("curve")) return cmd_curve(g, out);
    if (fixedpoint->parsed()) return cmd_fixedpoint(g, n, beta, kind, fp, out, err);
    if (app.got_subcommand("simulate")) return cmd_simulate(g, out);
    if (verify->parsed()) return cmd_verify(g, suite, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidParameter& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const MissingPrompt& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidReward& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kVerificationFailed;
  }
  return kConfigError;
}

}  // namespace infalign::cli
