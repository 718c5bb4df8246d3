#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "test_support.hpp"
#include "wbary/barycenter.hpp"
#include "wbary/errors.hpp"
#include "wbary/experiments.hpp"
#include "wbary/transport_exact.hpp"

using namespace wbary;

namespace {

DeformableFamily shift_family(double half_width, double eps, int cells) {
  return make_shift_family(
      triangular_density(-half_width, half_width, cells),
      WeightDensity::uniform(Box::interval(-eps, eps)),
      Box::interval(-eps, eps));
}

ExperimentReport synthetic_report(const std::vector<int>& ns, int reps,
                                  std::function<double(int, int)> d2) {
  ExperimentReport report;
  report.config.n_grid = ns;
  report.config.replicates = reps;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    for (int r = 0; r < reps; ++r) {
      report.records.push_back(
          {ns[i], r, 0, d2(ns[i], r), 0.0});
    }
  }
  report.aggregates = aggregate_records(report.records);
  report.checksum = checksum_records(report.records);
  return report;
}

}  // namespace

TEST_CASE("rate fit recovers an exact power law") {
  const std::vector<int> ns{8, 16, 32, 64, 128};
  const ExperimentReport report = synthetic_report(
      ns, 60, [](int n, int) { return 3.7 / n; });
  const SlopeFit fit = rate_fit(report, 200, 1);
  CHECK(fit.slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(fit.ci_lo == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(fit.ci_hi == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("rate fit of constant records has slope zero") {
  const std::vector<int> ns{8, 16, 32, 64};
  const ExperimentReport report =
      synthetic_report(ns, 50, [](int, int) { return 0.25; });
  const SlopeFit fit = rate_fit(report, 100, 1);
  CHECK(fit.slope == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rate fit preconditions") {
  const ExperimentReport three_ns = synthetic_report(
      {8, 16, 32}, 60, [](int n, int) { return 1.0 / n; });
  CHECK_THROWS_AS(rate_fit(three_ns), InsufficientDataError);
  const ExperimentReport few_reps = synthetic_report(
      {8, 16, 32, 64}, 10, [](int n, int) { return 1.0 / n; });
  CHECK_THROWS_AS(rate_fit(few_reps), InsufficientDataError);
}

TEST_CASE("bernstein envelope limits") {
  const DeformableFamily fam = shift_family(0.5, 0.2, 128);
  const ThetaQuadrature quad = midpoint_quadrature(fam.theta_box(), 129);
  const BernsteinConstants c = bernstein_constants(fam, quad);
  CHECK(bernstein_envelope(c, 0.0, 100) == 1.0);
  CHECK(bernstein_envelope(c, 1e9, 100) <= 1e-6);
  CHECK(bernstein_envelope(c, 0.01, 8) >= bernstein_envelope(c, 0.01, 1024));
}

TEST_CASE("bernstein constants of the shift family match the analytic values") {
  // theta ~ U[-eps, eps]: E|b - bbar|^2 = eps^2/3, B2 = eps, A-term absent
  const double eps = 0.25;
  const DeformableFamily fam = shift_family(0.5, eps, 128);
  const ThetaQuadrature quad = midpoint_quadrature(fam.theta_box(), 513);
  const BernsteinConstants c = bernstein_constants(fam, quad);
  CHECK(c.b1 <= 1e-12);
  CHECK(c.sigma1_sq <= 1e-12);
  CHECK(c.b2 == doctest::Approx(eps).epsilon(1e-9));
  CHECK(c.sigma2_sq == doctest::Approx(eps * eps / 3.0).epsilon(1e-4));
  // with the A-term degenerate the bound is the single vector term
  const double t = 0.01;
  const int n = 64;
  const double expected =
      2.0 * std::exp(-(n * t) / (8.0 * c.sigma2_sq +
                                 (4.0 / 3.0) * c.b2 * std::sqrt(t)));
  CHECK(bernstein_envelope(c, t, n) == doctest::Approx(expected));
}

TEST_CASE("consistency run: determinism and aggregate reconstruction") {
  const DeformableFamily fam = shift_family(0.5, 0.3, 128);
  ExperimentConfig config;
  config.n_grid = {8, 32};
  config.replicates = 60;
  config.seed = 99;
  config.grid_cells = 128;
  const ExperimentReport a = consistency_run(fam, config);
  const ExperimentReport b = consistency_run(fam, config);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].n == b.records[i].n);
    CHECK(a.records[i].replicate == b.records[i].replicate);
    CHECK(a.records[i].seed == b.records[i].seed);
    CHECK(a.records[i].d2 == b.records[i].d2);  // bit-exact
  }
  CHECK(a.checksum == b.checksum);
  // aggregates recomputable from the records
  const std::vector<AggregateRow> again = aggregate_records(a.records);
  REQUIRE(again.size() == a.aggregates.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].mean == a.aggregates[i].mean);
    CHECK(again[i].median == a.aggregates[i].median);
  }
}

TEST_CASE("consistency run with n = 1 reproduces single-draw distances") {
  const DeformableFamily fam = shift_family(0.5, 0.3, 128);
  ExperimentConfig config;
  config.n_grid = {1};
  config.replicates = 40;
  config.seed = 5;
  config.grid_cells = 128;
  const ExperimentReport report = consistency_run(fam, config);
  // recompute each record independently from its seed
  const GridGeometry tgrid = GridGeometry::uniform_on(
      fam.template_density().domain(), config.grid_cells);
  const DiscreteMeasure atoms0 = atoms_on_grid(fam.template_density(), tgrid);
  const ThetaQuadrature quad = midpoint_quadrature(fam.theta_box(), 257);
  const AffineMap mean_map = family_mean_map(fam, quad);
  const DiscreteMeasure star =
      pushforward_affine(atoms0, mean_map, fam.omega());
  for (const ReplicateRecord& rec : report.records) {
    const auto thetas = sample_theta(fam, rec.seed, 1);
    const DiscreteMeasure member = pushforward_affine(
        atoms0, sample_mean_map(thetas, fam), fam.omega());
    CHECK(rec.d2 == w2sq_discrete(member, star));
  }
}

TEST_CASE("zero-variance family yields vanishing distances") {
  const DeformableFamily fam = shift_family(0.5, 1e-9, 64);
  ExperimentConfig config;
  config.n_grid = {4, 16};
  config.replicates = 20;
  config.seed = 11;
  config.grid_cells = 64;
  const ExperimentReport report = consistency_run(fam, config);
  for (const ReplicateRecord& rec : report.records) {
    CHECK(rec.d2 <= 1e-17);
  }
}

TEST_CASE("distances shrink with n on the shift family") {
  const DeformableFamily fam = shift_family(0.5, 0.3, 256);
  ExperimentConfig config;
  config.n_grid = {8, 64, 1024};
  config.replicates = 80;
  config.seed = 17;
  config.grid_cells = 256;
  const ExperimentReport report = consistency_run(fam, config);
  REQUIRE(report.aggregates.size() == 3);
  CHECK(report.aggregates[2].median < report.aggregates[0].median);
  CHECK(report.aggregates[2].mean < report.aggregates[1].mean);
  CHECK(report.aggregates[1].mean < report.aggregates[0].mean);
}

TEST_CASE("envelope rows hold on a real run") {
  const DeformableFamily fam = shift_family(0.5, 0.3, 128);
  ExperimentConfig config;
  config.n_grid = {8, 16, 32, 64};
  config.replicates = 60;
  config.seed = 23;
  config.grid_cells = 128;
  const ExperimentReport report = consistency_run(fam, config);
  const std::vector<double> probs{0.5, 0.9, 0.99};
  const std::vector<double> t_grid = tail_quantiles(report, 8, probs);
  const ThetaQuadrature quad = midpoint_quadrature(fam.theta_box(), 257);
  const auto rows = envelope_check(report, fam, t_grid, quad);
  REQUIRE(rows.size() == 12);
  for (const EnvelopeRow& row : rows) CHECK(row.ok);

  SUBCASE("t = 0 rows are trivially ok (bound clipped to 1)") {
    const std::vector<double> zero{0.0};
    for (const EnvelopeRow& row : envelope_check(report, fam, zero, quad)) {
      CHECK(row.bound == 1.0);
      CHECK(row.ok);
    }
  }
  SUBCASE("huge t rows have zero exceedances") {
    const std::vector<double> huge{1e6};
    for (const EnvelopeRow& row : envelope_check(report, fam, huge, quad)) {
      CHECK(row.empirical_tail == 0.0);
      CHECK(row.ok);
    }
  }
}

TEST_CASE("euclid vs wasserstein on the shift family") {
  const DeformableFamily fam = shift_family(0.4, 0.3, 256);
  const MeanComparison cmp = euclid_vs_wasserstein(fam, 4000, 3, 256);
  // the euclidean average tracks the convolution, not the template
  CHECK(cmp.l1_convolution_to_template >= 0.1);
  CHECK(cmp.l1_euclid_to_convolution <= 0.05);
  CHECK(cmp.l1_euclid_to_template >=
        cmp.l1_convolution_to_template - cmp.l1_euclid_to_convolution - 1e-9);
  // the wasserstein barycenter tracks the template
  CHECK(cmp.w2_wasserstein_to_template <=
        cmp.mean_shift_norm + 2.0 * 0.707 * 2.0 / 256.0);

  SUBCASE("a point-like shift distribution makes both means agree") {
    const DeformableFamily tight = shift_family(0.4, 1e-6, 256);
    const MeanComparison c2 = euclid_vs_wasserstein(tight, 500, 3, 256);
    CHECK(c2.l1_convolution_to_template <= 1e-3);
    CHECK(c2.l1_euclid_to_template <= 1e-3);
    CHECK(c2.w2_wasserstein_to_template <= 1e-3);
  }
}

TEST_CASE("euclid vs wasserstein requires a shift family") {
  const Box tb(Eigen::Vector2d(1.0, -0.5), Eigen::Vector2d(2.0, 0.5));
  const DeformableFamily fam = make_location_scale_1d(
      triangular_density(0.0, 2.0, 64), WeightDensity::uniform(tb), tb);
  CHECK_THROWS_AS(euclid_vs_wasserstein(fam, 10, 1), FamilyError);
}

TEST_CASE("report files are written") {
  namespace fs = std::filesystem;
  const DeformableFamily fam = shift_family(0.5, 0.3, 64);
  ExperimentConfig config;
  config.n_grid = {8, 16, 32, 64};
  config.replicates = 50;
  config.seed = 1;
  config.grid_cells = 64;
  ExperimentReport report = consistency_run(fam, config);
  report.slope = rate_fit(report, 100, 2);
  const std::vector<double> t_grid =
      tail_quantiles(report, 8, std::vector<double>{0.5, 0.9});
  const ThetaQuadrature quad = midpoint_quadrature(fam.theta_box(), 129);
  const auto rows = envelope_check(report, fam, t_grid, quad);
  const fs::path dir = fs::temp_directory_path() / "wbary_report_test";
  fs::remove_all(dir);
  write_report(report, rows, dir);
  for (const char* name : {"records.csv", "aggregates.csv", "slope.json",
                           "envelope.csv", "mean_vs_n.dat", "envelope.dat"}) {
    CHECK(fs::exists(dir / name));
  }
  // the records file carries one line per record plus the header
  std::ifstream in(dir / "records.csv");
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == static_cast<int>(report.records.size()) + 1);
}

TEST_CASE("worker count does not change the records") {
  const DeformableFamily fam = shift_family(0.5, 0.3, 64);
  ExperimentConfig config;
  config.n_grid = {8, 16};
  config.replicates = 30;
  config.seed = 41;
  config.grid_cells = 64;
  config.threads = 1;
  const ExperimentReport serial = consistency_run(fam, config);
  config.threads = 4;
  const ExperimentReport parallel = consistency_run(fam, config);
  CHECK(serial.checksum == parallel.checksum);
}
