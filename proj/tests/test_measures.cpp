#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "test_support.hpp"
#include "wbary/errors.hpp"
#include "wbary/measures.hpp"
#include "wbary/rng.hpp"

using namespace wbary;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("csv load: uniform two-point measure") {
  const fs::path p = temp_file("m_two_point.csv");
  std::ofstream(p) << "0,0,0.5\n1,0,0.5\n";
  const Measure m = load_measure(p, FileFormat::Csv);
  const auto& d = std::get<DiscreteMeasure>(m);
  CHECK(d.dim() == 2);
  CHECK(d.size() == 2);
  CHECK(d.weights()[0] == doctest::Approx(0.5));
  CHECK(d.weights()[1] == doctest::Approx(0.5));
}

TEST_CASE("csv load: weight sum 0.9 is rejected") {
  const fs::path p = temp_file("m_bad_sum.csv");
  std::ofstream(p) << "0,0,0.5\n1,0,0.4\n";
  CHECK_THROWS_AS(load_measure(p, FileFormat::Csv), InvariantError);
}

TEST_CASE("negative weight is rejected") {
  Eigen::MatrixXd pts(2, 1);
  pts << 0.0, 1.0;
  Eigen::VectorXd w(2);
  w << 1.5, -0.5;
  CHECK_THROWS_AS(DiscreteMeasure(pts, w, Box::interval(0, 1)),
                  InvariantError);
}

TEST_CASE("grid json: uniform density on [0,1]") {
  const fs::path p = temp_file("g_uniform.json");
  std::ofstream(p) << R"({"dim":1,"origin":[0.0],"cell_size":[0.25],)"
                   << R"("shape":[4],"values":[1.0,1.0,1.0,1.0]})";
  const Measure m = load_measure(p, FileFormat::Json);
  const auto& g = std::get<GridDensity>(m);
  CHECK(g.dim() == 1);
  CHECK(g.values().sum() * g.geometry().cell_volume() == doctest::Approx(1.0));
  CHECK(g.domain().lo[0] == doctest::Approx(0.0));
  CHECK(g.domain().hi[0] == doctest::Approx(1.0));
}

TEST_CASE("json round-trip is bit-exact, csv within 1e-12") {
  Rng rng(31, 0);
  const Box box(Eigen::Vector2d(-1.0, -2.0), Eigen::Vector2d(2.0, 1.5));
  for (int trial = 0; trial < 120; ++trial) {
    const DiscreteMeasure m = testing::random_measure(rng, box, 1 + int(rng.below(9)));
    const fs::path pj = temp_file("roundtrip.json");
    save_measure(Measure(m), pj, FileFormat::Json);
    const auto mj = std::get<DiscreteMeasure>(load_measure(pj, FileFormat::Json));
    REQUIRE(mj.size() == m.size());
    CHECK((mj.points() - m.points()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((mj.weights() - m.weights()).cwiseAbs().maxCoeff() == 0.0);

    const fs::path pc = temp_file("roundtrip.csv");
    save_measure(Measure(m), pc, FileFormat::Csv);
    const auto mc = std::get<DiscreteMeasure>(load_measure(pc, FileFormat::Csv));
    REQUIRE(mc.size() == m.size());
    CHECK((mc.points() - m.points()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((mc.weights() - m.weights()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("grid json round-trip is bit-exact") {
  Rng rng(77, 0);
  for (int trial = 0; trial < 40; ++trial) {
    const GridDensity g = testing::random_density(rng, -1.0, 3.0, 16);
    const fs::path p = temp_file("grid_roundtrip.json");
    save_measure(Measure(g), p, FileFormat::Json);
    const auto g2 = std::get<GridDensity>(load_measure(p, FileFormat::Json));
    CHECK((g2.values() - g.values()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g2.geometry().same_as(g.geometry()));
  }
}

TEST_CASE("discretize: uniform grid, m = 2") {
  const GridDensity g = uniform_density(0.0, 1.0, 4);
  const DiscreteMeasure m = discretize(g, 2);
  REQUIRE(m.size() == 2);
  CHECK(m.points()(0, 0) == doctest::Approx(0.25));
  CHECK(m.points()(1, 0) == doctest::Approx(0.75));
  CHECK(m.weights()[0] == doctest::Approx(0.5));
  CHECK(m.weights()[1] == doctest::Approx(0.5));
}

TEST_CASE("discretize: delta-like grid collapses to one atom") {
  GridGeometry geom = GridGeometry::uniform_1d(0.0, 1.0, 4);
  Eigen::VectorXd v(4);
  v << 0.0, 4.0, 0.0, 0.0;  // all mass on [0.25, 0.5)
  const GridDensity g(geom, v);
  for (const int m : {1, 2, 4}) {
    const DiscreteMeasure d = discretize(g, m);
    CHECK(d.size() == 1);
    CHECK(d.weights()[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("discretize: triangular cell masses match the analytic integrals") {
  const GridDensity g = triangular_density(0.0, 2.0, 256);
  const DiscreteMeasure m = discretize(g, 4);
  REQUIRE(m.size() == 4);
  for (int i = 0; i < 4; ++i) {
    const double lo = 0.5 * i, hi = 0.5 * (i + 1);
    const double expected =
        testing::triangle_cdf(0.0, 2.0, hi) - testing::triangle_cdf(0.0, 2.0, lo);
    CHECK(m.weights()[i] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("discretize preserves total mass exactly") {
  Rng rng(5, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const GridDensity g = testing::random_density(rng, -2.0, 2.0, 32);
    const DiscreteMeasure m = discretize(g, 3 + int(rng.below(20)));
    CHECK(std::abs(m.weights().sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("discretize iid mode is seeded and in-domain") {
  const GridDensity g = triangular_density(-1.0, 1.0, 64);
  const DiscreteMeasure a = discretize(g, 50, DiscretizeMode::IidSamples, 42);
  const DiscreteMeasure b = discretize(g, 50, DiscretizeMode::IidSamples, 42);
  CHECK((a.points() - b.points()).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.points()(i, 0) >= -1.0);
    CHECK(a.points()(i, 0) <= 1.0);
  }
}

TEST_CASE("tiny weights are pruned with one renormalization") {
  Eigen::MatrixXd pts(3, 1);
  pts << 0.0, 0.5, 1.0;
  Eigen::VectorXd w(3);
  w << 0.5, 1e-17, 0.5;
  const DiscreteMeasure m(pts, w, Box::interval(0, 1));
  CHECK(m.size() == 2);
  CHECK(m.weights().sum() == doctest::Approx(1.0));
}

TEST_CASE("atom outside the declared box is rejected") {
  Eigen::MatrixXd pts(1, 1);
  pts << 2.0;
  Eigen::VectorXd w(1);
  w << 1.0;
  CHECK_THROWS_AS(DiscreteMeasure(pts, w, Box::interval(0, 1)), DomainError);
}

TEST_CASE("affine map invariants") {
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 0.5, 0.2, 1.0;  // not symmetric
  CHECK_THROWS_AS(AffineMap(bad, Eigen::Vector2d(0, 0)), InvariantError);

  Eigen::MatrixXd sing(2, 2);
  sing << 1.0, 1.0, 1.0, 1.0;  // eigenvalue 0
  CHECK_THROWS_AS(AffineMap(sing, Eigen::Vector2d(0, 0)), InvariantError);
}

TEST_CASE("affine composition with the inverse is the identity") {
  Rng rng(9, 0);
  for (int trial = 0; trial < 150; ++trial) {
    // random SPD matrix: Q D Q^T with positive diagonal
    const double a = rng.uniform(0.3, 2.0);
    const double b = rng.uniform(0.3, 2.0);
    const double t = rng.uniform(0.0, 3.14159);
    Eigen::Matrix2d q;
    q << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
    Eigen::Matrix2d A = q * Eigen::Vector2d(a, b).asDiagonal() * q.transpose();
    A = 0.5 * (A + A.transpose());
    const AffineMap map(A, Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1)));
    const AffineMap inv = map.inverse();
    const Eigen::Vector2d x(rng.uniform(-2, 2), rng.uniform(-2, 2));
    CHECK((inv(map(x)) - x).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((map(inv(x)) - x).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("transport plan marginals are enforced") {
  Eigen::MatrixXd pts(2, 1);
  pts << 0.0, 1.0;
  Eigen::VectorXd w(2);
  w << 0.5, 0.5;
  const DiscreteMeasure m(pts, w, Box::interval(0, 1));
  Eigen::MatrixXd bad(2, 2);
  bad << 0.5, 0.0, 0.3, 0.2;  // column sums (0.8, 0.2) != (0.5, 0.5)
  CHECK_THROWS_AS(TransportPlan(bad, m, m), InvariantError);
  Eigen::MatrixXd good(2, 2);
  good << 0.25, 0.25, 0.25, 0.25;
  const TransportPlan plan(good, m, m);
  CHECK(plan.cost() == doctest::Approx(0.5));
}

TEST_CASE("resample conserves mass on covering grids") {
  Rng rng(13, 0);
  for (int trial = 0; trial < 60; ++trial) {
    const GridDensity g = testing::random_density(rng, 0.0, 1.0, 17);
    const GridGeometry target = GridGeometry::uniform_1d(-0.5, 1.5, 23);
    double renorm = 0.0;
    const GridDensity r = resample(g, target, &renorm);
    CHECK(renorm == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.values().sum() * r.geometry().cell_volume() ==
          doctest::Approx(1.0));
  }
}

TEST_CASE("second moment of the uniform density is exact") {
  const GridDensity g = uniform_density(0.0, 1.0, 7);
  CHECK(g.second_moment() == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}
