#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "wbary/measures.hpp"
#include "wbary/models.hpp"

using namespace wbary;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string output;
};

std::string binary() {
  const char* env = std::getenv("WBARY_BIN");
  REQUIRE_MESSAGE(env != nullptr, "WBARY_BIN must point at the wbary binary");
  return env;
}

RunResult run(const std::string& args) {
  const fs::path out = fs::temp_directory_path() / "wbary_cli_out.txt";
  const std::string cmd =
      binary() + " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  int code = -1;
  if (WIFEXITED(status)) code = WEXITSTATUS(status);
  return {code, ss.str()};
}

fs::path fixture_dir() {
  const fs::path dir = fs::temp_directory_path() / "wbary_cli_fixtures";
  fs::create_directories(dir);
  return dir;
}

fs::path write_measure_fixture(const char* name) {
  const fs::path p = fixture_dir() / name;
  Eigen::MatrixXd pts(2, 1);
  pts << -0.25, 0.25;
  const DiscreteMeasure m(pts, Eigen::VectorXd::Constant(2, 0.5),
                          Box::interval(-1.0, 1.0));
  save_measure(Measure(m), p, FileFormat::Json);
  return p;
}

fs::path write_shift_family_fixture() {
  const fs::path p = fixture_dir() / "shift_family.json";
  const Box tb = Box::interval(-0.2, 0.2);
  save_family(make_shift_family(triangular_density(-0.5, 0.5, 256),
                                WeightDensity::uniform(tb), tb),
              p);
  return p;
}

}  // namespace

TEST_CASE("w2 of a measure with itself prints zero and exits 0") {
  const fs::path m = write_measure_fixture("self.json");
  const RunResult r = run("w2 --mu " + m.string() + " --nu " + m.string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.substr(0, 2) == "0\n");
}

TEST_CASE("w2 runs are byte-identical across invocations") {
  const fs::path m = write_measure_fixture("self2.json");
  const std::string args = "w2 --mu " + m.string() + " --nu " + m.string();
  const RunResult a = run(args);
  const RunResult b = run(args);
  CHECK(a.exit_code == 0);
  CHECK(a.output == b.output);
}

TEST_CASE("missing input file is a validation failure (exit 2)") {
  const RunResult r = run("w2 --mu /nonexistent.json --nu /nonexistent.json");
  CHECK(r.exit_code == 2);
}

TEST_CASE("simulate with one replicate exits 2 with a message") {
  const fs::path fam = write_shift_family_fixture();
  const RunResult r = run("simulate --family " + fam.string() + " --reps 1");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("50 replicates") != std::string::npos);
}

TEST_CASE("duality-check on the shift fixture passes its threshold") {
  const fs::path fam = write_shift_family_fixture();
  const RunResult r = run("duality-check --family " + fam.string() +
                          " --nodes 33 --grid 256 --max-rel-gap 0.02");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("J_P") != std::string::npos);
  CHECK(r.output.find("OK") != std::string::npos);
}

TEST_CASE("barycenter 1d over a directory of measures") {
  const fs::path dir = fixture_dir() / "inputs";
  fs::create_directories(dir);
  for (int k = 0; k < 3; ++k) {
    Eigen::MatrixXd pts(2, 1);
    pts << -0.5 + 0.1 * k, 0.5 + 0.1 * k;
    const DiscreteMeasure m(pts, Eigen::VectorXd::Constant(2, 0.5),
                            Box::interval(-2.0, 2.0));
    save_measure(Measure(m), dir / ("m" + std::to_string(k) + ".json"),
                 FileFormat::Json);
  }
  const fs::path out = fixture_dir() / "bary_out.json";
  const RunResult r = run("barycenter --inputs " + dir.string() +
                          " --method 1d --out " + out.string());
  CHECK(r.exit_code == 0);
  REQUIRE(fs::exists(out));
  const Measure bary = load_measure(out, FileFormat::Json);
  const auto& b = std::get<DiscreteMeasure>(bary);
  CHECK(b.size() == 2);
  CHECK(b.points()(0, 0) == doctest::Approx(-0.4));
  CHECK(b.points()(1, 0) == doctest::Approx(0.6));
}

TEST_CASE("family-info prints the frozen support box") {
  const fs::path fam = write_shift_family_fixture();
  const RunResult r = run("family-info --family " + fam.string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("shift") != std::string::npos);
  CHECK(r.output.find("omega") != std::string::npos);
}

TEST_CASE("compare-means runs on a small sample") {
  const fs::path fam = write_shift_family_fixture();
  const fs::path out = fixture_dir() / "cmp.json";
  const RunResult r = run("compare-means --family " + fam.string() +
                          " --n 200 --grid 128 --out " + out.string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(out));
  CHECK(r.output.find("L1(euclid, q0*g)") != std::string::npos);
}

TEST_CASE("every subcommand offers --help") {
  for (const char* sub : {"w2", "barycenter", "duality-check", "simulate",
                          "compare-means", "family-info"}) {
    const RunResult r = run(std::string(sub) + " --help");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("--") != std::string::npos);
  }
}

TEST_CASE("unknown subcommand is a usage error") {
  const RunResult r = run("frobnicate");
  CHECK(r.exit_code != 0);
}

TEST_CASE("simulate is deterministic: repeated runs agree byte for byte") {
  const fs::path fam = write_shift_family_fixture();
  const fs::path d1 = fixture_dir() / "rep1";
  const fs::path d2 = fixture_dir() / "rep2";
  const std::string base = "simulate --family " + fam.string() +
                           " --n 8,16,32,64 --reps 50 --seed 3 --grid 128"
                           " --no-slope-check --out ";
  const RunResult a = run(base + d1.string());
  const RunResult b = run(base + d2.string());
  CHECK(a.exit_code == 0);
  CHECK(a.output == b.output);
  // every artifact except records.csv (which carries wall times) matches
  for (const char* name :
       {"aggregates.csv", "slope.json", "envelope.csv", "mean_vs_n.dat",
        "envelope.dat"}) {
    std::ifstream f1(d1 / name), f2(d2 / name);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK_MESSAGE(s1.str() == s2.str(), name);
    CHECK(!s1.str().empty());
  }
}

TEST_CASE("config file supplies flags and explicit flags win") {
  const fs::path mu = write_measure_fixture("cfg_mu.json");
  const fs::path other = fixture_dir() / "cfg_other.json";
  {
    Eigen::MatrixXd pts(1, 1);
    pts << 0.75;
    save_measure(Measure(DiscreteMeasure(pts, Eigen::VectorXd::Ones(1),
                                         Box::interval(-1.0, 1.0))),
                 other, FileFormat::Json);
  }
  const fs::path cfg = fixture_dir() / "cfg.ini";
  std::ofstream(cfg) << "[w2]\nmu = " << mu.string() << "\nnu = "
                     << other.string() << "\n";
  const RunResult from_config = run("w2 --config " + cfg.string());
  CHECK(from_config.exit_code == 0);
  CHECK(from_config.output.substr(0, 2) != "0\n");  // distinct measures
  const RunResult overridden =
      run("w2 --config " + cfg.string() + " --nu " + mu.string());
  CHECK(overridden.exit_code == 0);
  CHECK(overridden.output.substr(0, 2) == "0\n");  // flag beat the config
}
