#pragma once

#include <span>

#include "wbary/models.hpp"

namespace wbary {

/// Scalar function sampled at the cell centers of a grid.
struct GridFn {
  GridGeometry geom;
  Eigen::VectorXd values;

  GridFn() = default;
  GridFn(GridGeometry g, Eigen::VectorXd v);
};

/// Candidate dual variable: one potential f_theta per quadrature node on a
/// common Omega grid, subject to the zero-sum constraint
/// sum_nodes w(theta) f_theta(x) = 0 at every grid point.
struct DualFamily {
  ThetaQuadrature quad;
  std::vector<GridFn> f;

  const GridGeometry& grid() const;
  /// Largest |sum_nodes w f| over grid points.
  double zero_sum_defect() const;
  /// ConstraintError if the defect exceeds `tol`.
  void validate(double tol = 1e-8) const;
};

/// c-transform (S_c f)(x) = min_y { (c/2)|x-y|^2 - f(y) } with the infimum
/// restricted to the grid points of f's geometry.
GridFn c_transform(const GridFn& f, double scale);

/// The same grid-restricted infimum evaluated at an arbitrary point.
double c_transform_value(const GridFn& f, double scale,
                         const Eigen::Ref<const Eigen::VectorXd>& x);

/// Integral of a grid function against a member measure represented on the
/// same grid.
double integrate(const GridFn& f, const GridDensity& member);

/// Quadrature of theta |-> g(theta) * (1/2) W2^2(nu, mu_theta) with members
/// discretized at the cells of `grid` (fixed node order reduction).
double primal_objective(const DiscreteMeasure& nu,
                        const DeformableFamily& family,
                        const ThetaQuadrature& quad, const GridGeometry& grid,
                        int threads = 1);

/// Quadrature of theta |-> int S_{g(theta)} f_theta dmu_theta.
double dual_objective(const DualFamily& df, const DeformableFamily& family,
                      int threads = 1);

/// Matched-discretization variants: members are represented as the atoms of
/// the discretized barycenter pushed through the centered deformations
/// (mu_theta = phibar_theta # mu*), which cancels the lattice quantization
/// bias of the cell-center scheme in the duality gap.  The pair shares one
/// member construction, so weak duality holds exactly for the discrete
/// objects.
struct MatchedMembers {
  DiscreteMeasure barycenter_atoms;           // on the Omega grid
  std::vector<DiscreteMeasure> members;       // one per quadrature node
};
MatchedMembers matched_members(const DeformableFamily& family,
                               const ThetaQuadrature& quad,
                               const GridGeometry& grid);
double primal_objective_matched(const DiscreteMeasure& nu,
                                const DeformableFamily& family,
                                const ThetaQuadrature& quad,
                                const MatchedMembers& members,
                                int threads = 1);
double dual_objective_matched(const DualFamily& df,
                              const DeformableFamily& family,
                              const MatchedMembers& members, int threads = 1);

/// Closed-form dual maximizer of an affine family at one parameter value:
///   f_theta(x) = -(g/2) <(Abar_theta - I) x, x> - g <bbar_theta, x>.
GridFn affine_dual_maximizer(const DeformableFamily& family,
                             const Eigen::VectorXd& theta,
                             const AffineMap& mean_map,
                             const GridGeometry& grid);

/// The full maximizer family over the quadrature nodes (zero-sum by
/// construction of the normalized quadrature means).
DualFamily make_affine_dual_family(const DeformableFamily& family,
                                   const ThetaQuadrature& quad,
                                   const GridGeometry& grid);

/// Coarse grid-search fallback for families without a closed-form maximizer:
/// scans scalar multiples of the affine candidate (still zero-sum) and keeps
/// the one with the largest dual value.  No ascent, just certification of the
/// best candidate found.
DualFamily grid_search_dual_family(const DeformableFamily& family,
                                   const ThetaQuadrature& quad,
                                   const GridGeometry& grid,
                                   std::span<const double> scales,
                                   int threads = 1);

/// Brenier recovery at one node: the potential
///   phi_theta(x) = |x|^2/2 - S_{g(theta)} f_theta(x) / g(theta),
/// its axis-aligned discrete convexity, and the push-forward of the
/// discretized member through the finite-difference gradient.
struct BrenierRecovery {
  GridFn potential;
  DiscreteMeasure pushed;
  double min_second_difference = 0.0;  // over both axes, raw differences
  bool convexity_ok = true;            // false below -1e-4 (non-fatal)
};

BrenierRecovery brenier_recover(const DualFamily& df,
                                const DeformableFamily& family,
                                int node_index);

/// primal(nu) - dual(df); nonnegative up to tolerance for zero-sum df by weak
/// duality, ~0 exactly when nu is the barycenter and df a maximizer.
double duality_gap(const DiscreteMeasure& nu, const DualFamily& df,
                   const DeformableFamily& family, int threads = 1);

}  // namespace wbary
