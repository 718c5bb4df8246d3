#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "wbary/measures.hpp"

namespace wbary {

/// Midpoint-rule quadrature nodes over a box in parameter space.
struct ThetaQuadrature {
  Eigen::MatrixXd nodes;    // q x p, one node per row
  Eigen::VectorXd weights;  // Lebesgue cell volumes, sum = vol(box)

  int count() const { return static_cast<int>(nodes.rows()); }
};

ThetaQuadrature midpoint_quadrature(const Box& theta_box,
                                    const std::vector<int>& nodes_per_axis);
ThetaQuadrature midpoint_quadrature(const Box& theta_box, int nodes_per_axis);

/// Weight density g on the parameter box.  Built-in kinds are serializable;
/// `custom` accepts any nonnegative callable together with an upper bound.
class WeightDensity {
 public:
  static WeightDensity uniform(const Box& theta_box);
  static WeightDensity truncated_gaussian(const Box& theta_box,
                                          Eigen::VectorXd mean,
                                          Eigen::VectorXd sigma);
  /// Product over axes of max(sum_k coeffs[a][k] t^k, 0), normalized
  /// numerically on the box.
  static WeightDensity polynomial(const Box& theta_box,
                                  std::vector<std::vector<double>> coeffs);
  static WeightDensity custom(std::function<double(const Eigen::VectorXd&)> fn,
                              double bound);

  double operator()(const Eigen::VectorXd& theta) const { return fn_(theta); }
  /// Upper bound on g over the box (rejection-sampling envelope).
  double bound() const { return bound_; }
  const std::string& kind() const { return kind_; }

  // serializable parameters (empty for custom densities)
  const Eigen::VectorXd& gauss_mean() const { return gauss_mean_; }
  const Eigen::VectorXd& gauss_sigma() const { return gauss_sigma_; }
  const std::vector<std::vector<double>>& poly_coeffs() const { return poly_; }

 private:
  WeightDensity() = default;
  std::function<double(const Eigen::VectorXd&)> fn_;
  double bound_ = 0.0;
  std::string kind_;
  Eigen::VectorXd gauss_mean_, gauss_sigma_;
  std::vector<std::vector<double>> poly_;
};

/// Parametric family of measures mu_theta = phi_theta # mu_0 with affine
/// deformations phi_theta(x) = A_theta x + b_theta, a weight density g on a
/// compact parameter box, and a frozen common support box Omega (bounding box
/// of the image supports over a theta grid, inflated by 1%).
class DeformableFamily {
 public:
  enum class Kind { Shift, LocationScale, Affine };

  const Box& theta_box() const { return theta_box_; }
  const Box& omega() const { return omega_; }
  const GridDensity& template_density() const { return template_; }
  const WeightDensity& weight_density() const { return g_; }
  Kind kind() const { return kind_; }
  int theta_dim() const { return theta_box_.dim(); }
  int dim() const { return template_.dim(); }

  double g(const Eigen::VectorXd& theta) const { return g_(theta); }
  AffineMap map_at(const Eigen::VectorXd& theta) const { return phi_(theta); }

  GridGeometry omega_grid(int cells_per_axis) const {
    return GridGeometry::uniform_on(omega_, cells_per_axis);
  }

  /// mu_theta represented on `target` (exact overlap masses for diagonal
  /// deformations, subsampled evaluation otherwise).
  GridDensity member_grid(const Eigen::VectorXd& theta,
                          const GridGeometry& target) const;

  /// Atoms at the cells of `target` carrying mu_theta's cell masses; the
  /// declared domain box is Omega.
  DiscreteMeasure member_discrete(const Eigen::VectorXd& theta,
                                  const GridGeometry& target) const;

  // serializable affine coefficient tables (empty unless kind == Affine and
  // the family was built from tables)
  struct AffineTables {
    Eigen::MatrixXd A0;
    std::vector<Eigen::MatrixXd> A;  // one per theta coordinate
    Eigen::VectorXd b0;
    std::vector<Eigen::VectorXd> b;
  };
  const std::shared_ptr<const AffineTables>& affine_tables() const {
    return tables_;
  }

  friend DeformableFamily make_shift_family(GridDensity, WeightDensity, Box);
  friend DeformableFamily make_location_scale_1d(GridDensity, WeightDensity,
                                                 Box);
  friend DeformableFamily make_affine_family(
      std::function<AffineMap(const Eigen::VectorXd&)>, WeightDensity, Box,
      GridDensity);
  friend DeformableFamily make_affine_family_from_tables(AffineTables,
                                                         WeightDensity, Box,
                                                         GridDensity);

 private:
  DeformableFamily(Kind kind, GridDensity tmpl, WeightDensity g, Box theta_box,
                   std::function<AffineMap(const Eigen::VectorXd&)> phi);

  Kind kind_;
  GridDensity template_;
  WeightDensity g_;
  Box theta_box_;
  std::function<AffineMap(const Eigen::VectorXd&)> phi_;
  Box omega_;
  std::shared_ptr<const AffineTables> tables_;
};

DeformableFamily make_shift_family(GridDensity tmpl, WeightDensity g,
                                   Box theta_box);
DeformableFamily make_location_scale_1d(GridDensity fbar, WeightDensity g,
                                        Box theta_box);
DeformableFamily make_affine_family(
    std::function<AffineMap(const Eigen::VectorXd&)> phi, WeightDensity g,
    Box theta_box, GridDensity tmpl);

/// Affine family from coefficient tables: A_theta = A0 + sum_k theta_k A_k,
/// b_theta = b0 + sum_k theta_k b_k.
DeformableFamily make_affine_family_from_tables(
    DeformableFamily::AffineTables tables, WeightDensity g, Box theta_box,
    GridDensity tmpl);

/// i.i.d. draws from g by rejection sampling on the box; deterministic in the
/// seed.  EfficiencyError if the acceptance rate collapses below 1e-4.
std::vector<Eigen::VectorXd> sample_theta(const DeformableFamily& family,
                                          std::uint64_t seed, int n);

/// Push-forward of a point cloud: atoms mapped, weights kept.
DiscreteMeasure pushforward_affine(const DiscreteMeasure& m,
                                   const AffineMap& map, const Box& domain);

/// Push-forward of a grid density onto its natural image grid (exact for
/// diagonal maps, subsampled re-evaluation otherwise).
GridDensity pushforward_affine(const GridDensity& density,
                               const AffineMap& map);

/// Push-forward represented on a caller-supplied grid.  The renormalization
/// factor is written to *renorm; DomainError if the image support leaves the
/// target extent or the factor drifts from 1 by more than 1e-3.
GridDensity pushforward_affine_to(const GridDensity& density,
                                  const AffineMap& map,
                                  const GridGeometry& target,
                                  double* renorm = nullptr);

/// Quadrature means (Abar, bbar), normalized by the quadrature mass of g so
/// that the centered identities below hold exactly.
AffineMap family_mean_map(const DeformableFamily& family,
                          const ThetaQuadrature& quad);

/// Centered parameters Abar_theta = A_theta Abar^{-1},
/// bbar_theta = b_theta - A_theta Abar^{-1} bbar; their quadrature means are
/// the identity and zero.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> centered_params(
    const DeformableFamily& family, const Eigen::VectorXd& theta,
    const AffineMap& mean_map);

/// Barycenter of the family: the template pushed by the mean deformation.
GridDensity population_barycenter(const DeformableFamily& family,
                                  const ThetaQuadrature& quad);
GridDensity population_barycenter_on(const DeformableFamily& family,
                                     const ThetaQuadrature& quad,
                                     const GridGeometry& target);

/// Family spec file (JSON), see the measures schemas for the template:
///   {"kind": "shift"|"location_scale"|"affine",
///    "template": {...grid...} | {"path": "grid.json"},
///    "theta_box": [[lo,hi],...],
///    "g": {"kind": "uniform"} |
///         {"kind": "trunc_gauss", "mean": [...], "sigma": [...]} |
///         {"kind": "poly", "coeffs": [[...], ...]},
///    "phi": {"A0": [[...]], "A": [[[...]],...], "b0": [...], "b": [[...],...]}}
DeformableFamily load_family(const std::filesystem::path& path);
void save_family(const DeformableFamily& family,
                 const std::filesystem::path& path);

}  // namespace wbary
