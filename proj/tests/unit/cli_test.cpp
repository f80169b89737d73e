#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "infalign/io.hpp"

namespace fs = std::filesystem;
using namespace infalign;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "infalign");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& s) const { return path / s; }
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string records_2x4() {
  std::string s;
  const double rewards[2][4] = {{0.3, -1.0, 2.5, 1.1}, {10, 40, 20, 30}};
  for (int p = 0; p < 2; ++p) {
    for (int r = 0; r < 4; ++r) {
      s += nlohmann::json{{"prompt_id", "p" + std::to_string(p)},
                          {"response_id", "r" + std::to_string(r)},
                          {"reward", rewards[p][r]}}
               .dump() +
           "\n";
    }
  }
  return s;
}

}  // namespace

TEST_CASE("calibrate scores each record against its own prompt") {
  TempDir dir("infalign_cli_cal");
  write(dir / "in.jsonl", records_2x4());
  const auto r = run_cli({"calibrate", "--input", (dir / "in.jsonl").string(), "--out",
                          (dir / "out.jsonl").string(), "--transform", "exp:10"});
  REQUIRE(r.code == 0);
  std::ifstream in(dir / "out.jsonl");
  std::map<std::string, std::set<double>> seen;
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    const auto j = nlohmann::json::parse(line);
    const double c = j.at("calibrated").get<double>();
    seen[j.at("prompt_id").get<std::string>()].insert(c);
    CHECK(j.at("transformed").get<double>() == doctest::Approx(std::exp(10 * c)).epsilon(1e-14));
  }
  CHECK(lines == 8);
  const std::set<double> expect = {0.125, 0.375, 0.625, 0.875};
  CHECK(seen["p0"] == expect);
  CHECK(seen["p1"] == expect);
  const auto summary = nlohmann::json::parse(read_file(dir / "out.jsonl.summary.json"));
  CHECK(summary.dump().find("\"p0\"") != std::string::npos);
  CHECK(fs::exists(dir / "out.jsonl.manifest.json"));
}

TEST_CASE("calibrate input errors") {
  TempDir dir("infalign_cli_cal_err");
  write(dir / "empty.jsonl", "");
  auto r = run_cli({"calibrate", "--input", (dir / "empty.jsonl").string(), "--out",
                    (dir / "o.jsonl").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("no records") != std::string::npos);

  write(dir / "bad.jsonl", "{\"prompt_id\":\"p\",\"response_id\":\"a\",\"reward\":1}\n{oops\n");
  r = run_cli({"calibrate", "--input", (dir / "bad.jsonl").string(), "--out",
               (dir / "o.jsonl").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 2") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "o.jsonl"));

  r = run_cli({"calibrate", "--input", (dir / "absent.jsonl").string(), "--out",
               (dir / "o.jsonl").string()});
  CHECK(r.code == 3);
}

TEST_CASE("fixedpoint writes a table and reports non-convergence") {
  TempDir dir("infalign_cli_fp");
  auto r = run_cli({"fixedpoint", "--n", "1", "--beta", "0.5", "--out",
                    (dir / "fp1.csv").string()});
  REQUIRE(r.code == 0);
  std::ifstream in(dir / "fp1.csv");
  const auto rows = read_csv(in, {"u", "phi"});
  REQUIRE(rows.size() == 2001);
  double shift = rows[0][1] - (rows[0][0] - 1);
  for (const auto& row : rows) CHECK(std::abs(row[1] - (row[0] - 1) - shift) < 1e-8);

  r = run_cli({"fixedpoint", "--n", "4", "--beta", "0.1", "--max-iter", "1", "--out",
               (dir / "fp4.csv").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("residual") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "fp4.csv"));
}

TEST_CASE("curve writes CSV, SVG and a manifest") {
  TempDir dir("infalign_cli_curve");
  write(dir / "cfg.json",
        R"({"transforms": ["identity", "exp:10"], "procedures": ["bon:2"],
            "betas": [0.1, 0.5, 2.0], "output_dir": ")" + (dir / "out").string() + "\"}");
  const auto r = run_cli({"--config", (dir / "cfg.json").string(), "curve"});
  REQUIRE(r.code == 0);
  std::ifstream csv(dir / "out" / "curve_bon_2__identity.csv");
  REQUIRE(csv);
  std::string header;
  std::getline(csv, header);
  CHECK(header.find("kl") != std::string::npos);
  const std::string svg = read_file(dir / "out" / "curve_bon_2.svg");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("polyline") != std::string::npos);
  const auto manifest = nlohmann::json::parse(read_file(dir / "out" / "manifest.json"));
  CHECK(manifest.contains("config_hash"));
}

TEST_CASE("curve rejects a bad config before computing") {
  TempDir dir("infalign_cli_curve_bad");
  write(dir / "cfg.json", R"({"transforms": ["sqrt"], "output_dir": ")" +
                              (dir / "out").string() + "\"}");
  auto r = run_cli({"--config", (dir / "cfg.json").string(), "curve"});
  CHECK(r.code == 2);
  CHECK_FALSE(fs::exists(dir / "out" / "manifest.json"));
  write(dir / "cfg2.json", R"({"betas": [-1]})");
  r = run_cli({"--config", (dir / "cfg2.json").string(), "curve"});
  CHECK(r.code == 2);
  write(dir / "cfg3.json", R"({"colour": "red"})");
  r = run_cli({"--config", (dir / "cfg3.json").string(), "curve"});
  CHECK(r.code == 2);
}

TEST_CASE("verify and usage errors") {
  auto r = run_cli({"verify", "--suite", "trivial"});
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(run_cli({"verify", "--suite", "nonsense"}).code == 2);
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK(run_cli({"fixedpoint", "--n", "0"}).code == 2);
}

TEST_CASE("the installed binary runs") {
  const std::string cmd = std::string(INFALIGN_TOOL) + " verify --suite anchors > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
}
