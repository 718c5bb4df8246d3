#include "wbary/barycenter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "wbary/errors.hpp"
#include "wbary/parallel.hpp"
#include "wbary/transport1d.hpp"
#include "wbary/transport_exact.hpp"

namespace wbary {

DiscreteMeasure empirical_barycenter_1d(std::span<const Measure> measures,
                                        int max_atoms) {
  const int n = static_cast<int>(measures.size());
  if (n == 0) throw InvariantError("empirical barycenter: no inputs");
  return barycenter_1d(measures, Eigen::VectorXd::Constant(n, 1.0 / n),
                       max_atoms);
}

AffineMap sample_mean_map(std::span<const Eigen::VectorXd> thetas,
                          const DeformableFamily& family) {
  if (thetas.empty()) throw InvariantError("sample mean map: no parameters");
  const int d = family.dim();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
  for (const Eigen::VectorXd& theta : thetas) {
    const AffineMap map = family.map_at(theta);
    A += map.A();
    b += map.b();
  }
  const double n = static_cast<double>(thetas.size());
  return AffineMap(A / n, b / n);
}

GridDensity empirical_barycenter_affine(
    std::span<const Eigen::VectorXd> thetas, const DeformableFamily& family) {
  return pushforward_affine(family.template_density(),
                            sample_mean_map(thetas, family));
}

GridDensity empirical_barycenter_affine(
    std::span<const Eigen::VectorXd> thetas, const DeformableFamily& family,
    const GridGeometry& target) {
  return pushforward_affine_to(family.template_density(),
                               sample_mean_map(thetas, family), target);
}

double empirical_objective(const DiscreteMeasure& nu,
                           std::span<const DiscreteMeasure> measures,
                           int threads, int atom_cap) {
  const std::size_t n = measures.size();
  if (n == 0) throw InvariantError("empirical objective: no inputs");
  std::vector<double> terms(n, 0.0);
  parallel_for(n, threads, [&](std::size_t j) {
    terms[j] = 0.5 * w2sq_discrete(nu, measures[j], atom_cap);
  });
  double acc = 0.0;
  for (const double t : terms) acc += t;  // merged by input index
  return acc / static_cast<double>(n);
}

FixedSupportResult empirical_barycenter_fixed_support(
    std::span<const DiscreteMeasure> measures, const DiscreteMeasure& seed,
    const FixedSupportOptions& options) {
  const std::size_t n = measures.size();
  if (n == 0) throw InvariantError("fixed-support solver: no inputs");
  const Box box = measures.front().domain();
  const int d = measures.front().dim();
  for (const DiscreteMeasure& m : measures) {
    if (m.dim() != d) throw DimensionError("fixed-support solver: mixed dimensions");
    if (!m.domain().approx_equal(box)) {
      throw DomainError("fixed-support solver: measures declare different boxes");
    }
  }
  if (!seed.domain().approx_equal(box) || seed.dim() != d) {
    throw DomainError("fixed-support solver: seed does not match the inputs");
  }
  {
    const double uniform = 1.0 / seed.size();
    if ((seed.weights().array() - uniform).abs().maxCoeff() > 1e-12) {
      throw InvariantError("fixed-support solver: seed must carry equal weights");
    }
  }
  const double tol =
      options.tol >= 0.0 ? options.tol : 1e-7 * box.diameter();

  DiscreteMeasure current = merge_duplicate_atoms(seed);
  FixedSupportResult result{current, {}, 0, false};
  double prev_obj = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter <= options.max_iter; ++iter) {
    const int m = current.size();
    std::vector<std::optional<LpSolution>> plans(n);
    parallel_for(n, options.threads, [&](std::size_t j) {
      plans[j] = w2sq_lp(current, measures[j], options.atom_cap);
    });
    double obj = 0.0;
    for (const auto& sol : plans) obj += 0.5 * sol->cost;
    obj /= static_cast<double>(n);
    if (obj > prev_obj + 1e-9) {
      throw NoDecreaseError("fixed-support solver: objective increased by " +
                            std::to_string(obj - prev_obj));
    }
    prev_obj = obj;
    result.objective_trace.push_back(obj);
    result.barycenter = current;
    result.iterations = iter;

    // move every atom to the average of its barycentric projections
    Eigen::MatrixXd moved = Eigen::MatrixXd::Zero(m, d);
    for (const auto& plan : plans) {
      const LpSolution& sol = *plan;
      // sol.mu equals `current` (already merged), so indices line up
      Eigen::MatrixXd proj = current.points();
      Eigen::VectorXd row_mass = Eigen::VectorXd::Zero(m);
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, d);
      for (const FlowEntry& f : sol.flows) {
        acc.row(f.i) += f.mass * sol.nu.points().row(f.j);
        row_mass[f.i] += f.mass;
      }
      for (int i = 0; i < m; ++i) {
        if (row_mass[i] > 0.0) proj.row(i) = acc.row(i) / row_mass[i];
      }
      moved += proj;
    }
    moved /= static_cast<double>(n);
    const double displacement =
        (moved - current.points()).rowwise().norm().maxCoeff();
    if (displacement < tol) {
      result.converged = true;
      break;
    }
    if (iter == options.max_iter) break;  // max-iter warning: converged stays false
    current = merge_duplicate_atoms(
        DiscreteMeasure(std::move(moved), current.weights(), box));
  }
  return result;
}

GridDensity euclidean_mean(std::span<const GridDensity> densities) {
  if (densities.empty()) throw InvariantError("euclidean mean: no inputs");
  const GridGeometry& geom = densities.front().geometry();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(geom.cell_count());
  for (const GridDensity& g : densities) {
    if (!g.geometry().same_as(geom)) {
      throw GridMismatchError("euclidean mean: densities on different grids");
    }
    acc += g.values();
  }
  return GridDensity(geom, acc / static_cast<double>(densities.size()));
}

}  // namespace wbary
