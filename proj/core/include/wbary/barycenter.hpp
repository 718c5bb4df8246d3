#pragma once

#include <span>
#include <vector>

#include "wbary/models.hpp"

namespace wbary {

/// Uniform-weight Wasserstein barycenter of 1-d measures (quantile average).
DiscreteMeasure empirical_barycenter_1d(std::span<const Measure> measures,
                                        int max_atoms = 4096);

/// Closed-form barycenter of sampled affine-family members: the template
/// pushed by the sample-mean deformation.
GridDensity empirical_barycenter_affine(
    std::span<const Eigen::VectorXd> thetas, const DeformableFamily& family);
GridDensity empirical_barycenter_affine(
    std::span<const Eigen::VectorXd> thetas, const DeformableFamily& family,
    const GridGeometry& target);
AffineMap sample_mean_map(std::span<const Eigen::VectorXd> thetas,
                          const DeformableFamily& family);

struct FixedSupportOptions {
  int max_iter = 200;
  double tol = -1.0;    // < 0: defaults to 1e-7 * diam(Omega)
  int threads = 1;
  int atom_cap = 2000;
};

struct FixedSupportResult {
  DiscreteMeasure barycenter;
  std::vector<double> objective_trace;  // J_n at each visited iterate
  int iterations = 0;
  bool converged = false;               // false = stopped at max_iter
};

/// Free-support fixed-point solver for the empirical barycenter of general
/// discrete measures: every support atom moves to the average of its
/// barycentric projections onto the n inputs until the support stops moving.
/// The objective trace is asserted non-increasing (NoDecreaseError otherwise).
FixedSupportResult empirical_barycenter_fixed_support(
    std::span<const DiscreteMeasure> measures, const DiscreteMeasure& seed,
    const FixedSupportOptions& options = {});

/// J_n(nu) = (1/n) sum_j (1/2) W2^2(nu, mu_j).
double empirical_objective(const DiscreteMeasure& nu,
                           std::span<const DiscreteMeasure> measures,
                           int threads = 1, int atom_cap = 2000);

/// Pointwise average of densities living on one common grid.
GridDensity euclidean_mean(std::span<const GridDensity> densities);

}  // namespace wbary
