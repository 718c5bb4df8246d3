#include <benchmark/benchmark.h>

#include "wbary/barycenter.hpp"
#include "wbary/duality.hpp"
#include "wbary/measures.hpp"
#include "wbary/models.hpp"
#include "wbary/rng.hpp"
#include "wbary/transport1d.hpp"
#include "wbary/transport_exact.hpp"

using namespace wbary;

namespace {

DiscreteMeasure random_cloud(Rng& rng, const Box& box, int m) {
  const int d = box.dim();
  Eigen::MatrixXd pts(m, d);
  for (int i = 0; i < m; ++i) {
    for (int a = 0; a < d; ++a) pts(i, a) = rng.uniform(box.lo[a], box.hi[a]);
  }
  Eigen::VectorXd w(m);
  for (int i = 0; i < m; ++i) w[i] = 0.05 + rng.uniform();
  w /= w.sum();
  return DiscreteMeasure(std::move(pts), std::move(w), box);
}

void BM_NetworkSimplex2d(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const Box box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1));
  Rng rng(42, 0);
  const DiscreteMeasure a = random_cloud(rng, box, m);
  const DiscreteMeasure b = random_cloud(rng, box, m);
  for (auto _ : state) {
    benchmark::DoNotOptimize(w2sq_lp_cost(a, b));
  }
  state.SetComplexityN(m);
}
BENCHMARK(BM_NetworkSimplex2d)->RangeMultiplier(2)->Range(64, 1024)
    ->Unit(benchmark::kMillisecond)->Complexity();

void BM_QuantileDistance1d(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const Box box = Box::interval(-1, 1);
  Rng rng(43, 0);
  const Measure a = random_cloud(rng, box, m);
  const Measure b = random_cloud(rng, box, m);
  for (auto _ : state) {
    benchmark::DoNotOptimize(w2sq_1d(a, b));
  }
}
BENCHMARK(BM_QuantileDistance1d)->RangeMultiplier(4)->Range(256, 16384)
    ->Unit(benchmark::kMicrosecond);

void BM_CTransform(benchmark::State& state) {
  const int cells = static_cast<int>(state.range(0));
  const GridGeometry g = GridGeometry::uniform_1d(-1, 1, cells);
  Rng rng(44, 0);
  Eigen::VectorXd values(cells);
  for (int i = 0; i < cells; ++i) values[i] = rng.uniform(-1, 1);
  const GridFn f(g, values);
  for (auto _ : state) {
    benchmark::DoNotOptimize(c_transform(f, 2.5));
  }
}
BENCHMARK(BM_CTransform)->RangeMultiplier(2)->Range(128, 2048)
    ->Unit(benchmark::kMicrosecond);

void BM_ShiftResample(benchmark::State& state) {
  const int cells = static_cast<int>(state.range(0));
  const DeformableFamily fam = make_shift_family(
      triangular_density(-0.5, 0.5, cells),
      WeightDensity::uniform(Box::interval(-0.2, 0.2)),
      Box::interval(-0.2, 0.2));
  const GridGeometry grid = fam.omega_grid(cells);
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 0.137);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fam.member_grid(theta, grid));
  }
}
BENCHMARK(BM_ShiftResample)->RangeMultiplier(2)->Range(128, 2048)
    ->Unit(benchmark::kMicrosecond);

void BM_FixedSupportSolve(benchmark::State& state) {
  const int cells = static_cast<int>(state.range(0));
  const DeformableFamily fam = make_shift_family(
      triangular_density(-0.5, 0.5, cells),
      WeightDensity::uniform(Box::interval(-0.2, 0.2)),
      Box::interval(-0.2, 0.2));
  const GridGeometry grid = fam.omega_grid(cells);
  std::vector<DiscreteMeasure> members;
  for (const double s : {-0.15, -0.05, 0.1, 0.2}) {
    members.push_back(
        fam.member_discrete(Eigen::VectorXd::Constant(1, s), grid));
  }
  const DiscreteMeasure seed(
      members.front().points(),
      Eigen::VectorXd::Constant(members.front().size(),
                                1.0 / members.front().size()),
      members.front().domain());
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        empirical_barycenter_fixed_support(members, seed));
  }
}
BENCHMARK(BM_FixedSupportSolve)->RangeMultiplier(2)->Range(32, 128)
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
