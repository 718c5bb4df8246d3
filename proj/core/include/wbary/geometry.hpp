#pragma once

#include <Eigen/Core>
#include <vector>

namespace wbary {

/// Axis-aligned product of closed intervals; the ambient box of a measure.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  Box() = default;
  Box(Eigen::VectorXd lo_, Eigen::VectorXd hi_);

  static Box interval(double a, double b);

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x,
                double tol = 1e-9) const;
  double diameter() const { return (hi - lo).norm(); }
  Eigen::VectorXd center() const { return 0.5 * (lo + hi); }

  /// Inflates the box about its center by the given factor (1.01 = +1%).
  Box inflated(double factor) const;

  static Box hull(const Box& a, const Box& b);
  bool approx_equal(const Box& other, double tol = 1e-9) const;
};

/// Uniform axis-aligned grid of cells; d = 1 or 2 in this library.
struct GridGeometry {
  Eigen::VectorXd origin;    // lower corner of the grid
  Eigen::VectorXd cell;      // cell size per axis (> 0)
  std::vector<int> shape;    // number of cells per axis

  GridGeometry() = default;
  GridGeometry(Eigen::VectorXd origin_, Eigen::VectorXd cell_,
               std::vector<int> shape_);

  static GridGeometry uniform_1d(double lo, double hi, int cells);
  static GridGeometry uniform_on(const Box& box, int cells_per_axis);

  int dim() const { return static_cast<int>(shape.size()); }
  int cell_count() const;
  double cell_volume() const { return cell.prod(); }
  Box extent() const;

  Eigen::VectorXd cell_center(int flat) const;
  /// Flat row-major index of the cell containing x; -1 if outside.
  int cell_index(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  bool same_as(const GridGeometry& other, double tol = 1e-12) const;
};

}  // namespace wbary
