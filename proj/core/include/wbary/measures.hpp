#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include "wbary/geometry.hpp"

namespace wbary {

/// Weighted point cloud in R^d together with its declared domain box.
///
/// Invariants (enforced at construction):
///   - weights sum to 1 within 1e-12 (sums within 1e-6 are renormalized,
///     anything further off is an InvariantError),
///   - every weight >= 0, atoms below 1e-15 are pruned once,
///   - at least one atom, every atom inside the domain box.
class DiscreteMeasure {
 public:
  DiscreteMeasure(Eigen::MatrixXd points, Eigen::VectorXd weights, Box domain);

  int dim() const { return static_cast<int>(points_.cols()); }
  int size() const { return static_cast<int>(points_.rows()); }
  const Eigen::MatrixXd& points() const { return points_; }  // n x d
  const Eigen::VectorXd& weights() const { return weights_; }
  const Box& domain() const { return domain_; }

 private:
  Eigen::MatrixXd points_;
  Eigen::VectorXd weights_;
  Box domain_;
};

/// Piecewise-constant probability density on a uniform grid (d = 1 or 2).
class GridDensity {
 public:
  GridDensity(GridGeometry geometry, Eigen::VectorXd values);

  int dim() const { return geometry_.dim(); }
  const GridGeometry& geometry() const { return geometry_; }
  const Eigen::VectorXd& values() const { return values_; }
  Box domain() const { return geometry_.extent(); }

  /// Cell masses: values * cell volume.
  Eigen::VectorXd masses() const {
    return values_ * geometry_.cell_volume();
  }

  /// Density value at a point (0 outside the grid).
  double value_at(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Exact second moment of |x| under the piecewise-constant model.
  double second_moment() const;

 private:
  GridGeometry geometry_;
  Eigen::VectorXd values_;
};

/// Affine map x -> A x + b with A symmetric positive definite.
class AffineMap {
 public:
  AffineMap(Eigen::MatrixXd A, Eigen::VectorXd b);

  static AffineMap identity(int dim);
  static AffineMap shift(const Eigen::VectorXd& b);

  int dim() const { return static_cast<int>(b_.size()); }
  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& b() const { return b_; }

  Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return A_ * x + b_;
  }

  AffineMap inverse() const;
  AffineMap compose(const AffineMap& inner) const;  // this after inner
  bool is_diagonal(double tol = 1e-13) const;

 private:
  AffineMap() = default;
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
};

/// Coupling matrix between two discrete measures with marginal constraints.
class TransportPlan {
 public:
  TransportPlan(Eigen::MatrixXd gamma, DiscreteMeasure source,
                DiscreteMeasure target);

  const Eigen::MatrixXd& gamma() const { return gamma_; }  // m x n
  const DiscreteMeasure& source() const { return source_; }
  const DiscreteMeasure& target() const { return target_; }

  double cost() const;  // sum gamma_ij |x_i - y_j|^2

 private:
  Eigen::MatrixXd gamma_;
  DiscreteMeasure source_;
  DiscreteMeasure target_;
};

using Measure = std::variant<DiscreteMeasure, GridDensity>;

int measure_dim(const Measure& m);
Box measure_domain(const Measure& m);

// ---------------------------------------------------------------------------
// Serialization.
//
// JSON point-cloud schema:
//   {"dim": d, "domain": [[lo,hi] x d], "points": [[...]], "weights": [...]}
// JSON grid schema:
//   {"dim": d, "origin": [...], "cell_size": [...], "shape": [...],
//    "values": [...]}
// CSV schema (point clouds only): one row per atom, d coordinate columns then
// one weight column; optional header row.
// ---------------------------------------------------------------------------

enum class FileFormat { Csv, Json };

struct CsvOptions {
  bool has_header = false;
};

Measure load_measure(const std::filesystem::path& path, FileFormat format,
                     const CsvOptions& csv = {});
void save_measure(const Measure& measure, const std::filesystem::path& path,
                  FileFormat format, const CsvOptions& csv = {});

// ---------------------------------------------------------------------------
// Discretization and resampling.
// ---------------------------------------------------------------------------

enum class DiscretizeMode {
  CellCenters,  // m cells over the support box, atoms at centers
  IidSamples,   // m i.i.d. samples from the density, weights 1/m
};

/// Discretizes a grid density into m atoms.  With CellCenters the support box
/// is repartitioned into m cells (d = 1) or sqrt(m) x sqrt(m) cells (d = 2,
/// m must be a perfect square) and weights are the exact cell masses of the
/// piecewise-constant model.  Total mass is renormalized once at the end.
DiscreteMeasure discretize(const GridDensity& density, int m,
                           DiscretizeMode mode = DiscretizeMode::CellCenters,
                           std::uint64_t seed = 0);

/// Atoms at the cells of `target` carrying the density's exact cell masses.
DiscreteMeasure atoms_on_grid(const GridDensity& density,
                              const GridGeometry& target);

/// Re-represents a density on another grid.  Masses are exact overlap
/// integrals of the piecewise-constant model; the renormalization factor
/// (1 / captured mass) is written to *renorm if given.
GridDensity resample(const GridDensity& density, const GridGeometry& target,
                     double* renorm = nullptr);

// Analytic template builders (exact cell masses).
GridDensity uniform_density(double lo, double hi, int cells);
GridDensity triangular_density(double lo, double hi, int cells);
GridDensity uniform_density_2d(const Box& box, int nx, int ny);

}  // namespace wbary
