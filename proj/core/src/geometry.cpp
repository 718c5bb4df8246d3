#include "wbary/geometry.hpp"

#include <cmath>

#include "wbary/errors.hpp"

namespace wbary {

Box::Box(Eigen::VectorXd lo_, Eigen::VectorXd hi_)
    : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size() || lo.size() == 0) {
    throw InvariantError("box bounds must share a positive dimension");
  }
  for (int a = 0; a < lo.size(); ++a) {
    if (!(lo[a] < hi[a])) {
      throw InvariantError("box must have positive extent on every axis");
    }
  }
}

Box Box::interval(double a, double b) {
  Eigen::VectorXd lo(1), hi(1);
  lo << a;
  hi << b;
  return Box(lo, hi);
}

bool Box::contains(const Eigen::Ref<const Eigen::VectorXd>& x,
                   double tol) const {
  if (x.size() != lo.size()) return false;
  for (int a = 0; a < lo.size(); ++a) {
    if (x[a] < lo[a] - tol || x[a] > hi[a] + tol) return false;
  }
  return true;
}

Box Box::inflated(double factor) const {
  const Eigen::VectorXd c = center();
  const Eigen::VectorXd half = 0.5 * factor * (hi - lo);
  return Box(c - half, c + half);
}

Box Box::hull(const Box& a, const Box& b) {
  if (a.dim() != b.dim()) throw DimensionError("box hull: dimension mismatch");
  return Box(a.lo.cwiseMin(b.lo), a.hi.cwiseMax(b.hi));
}

bool Box::approx_equal(const Box& other, double tol) const {
  if (dim() != other.dim()) return false;
  return (lo - other.lo).cwiseAbs().maxCoeff() <= tol &&
         (hi - other.hi).cwiseAbs().maxCoeff() <= tol;
}

GridGeometry::GridGeometry(Eigen::VectorXd origin_, Eigen::VectorXd cell_,
                           std::vector<int> shape_)
    : origin(std::move(origin_)), cell(std::move(cell_)),
      shape(std::move(shape_)) {
  const int d = static_cast<int>(shape.size());
  if (d < 1 || origin.size() != d || cell.size() != d) {
    throw InvariantError("grid geometry fields must agree in dimension");
  }
  for (int a = 0; a < d; ++a) {
    if (shape[a] < 1) throw InvariantError("grid needs at least one cell per axis");
    if (!(cell[a] > 0.0)) throw InvariantError("grid cell size must be positive");
  }
}

GridGeometry GridGeometry::uniform_1d(double lo, double hi, int cells) {
  if (!(hi > lo)) throw InvariantError("grid interval must be nonempty");
  Eigen::VectorXd o(1), c(1);
  o << lo;
  c << (hi - lo) / cells;
  return GridGeometry(o, c, {cells});
}

GridGeometry GridGeometry::uniform_on(const Box& box, int cells_per_axis) {
  const int d = box.dim();
  Eigen::VectorXd c = (box.hi - box.lo) / cells_per_axis;
  return GridGeometry(box.lo, c, std::vector<int>(static_cast<std::size_t>(d),
                                                  cells_per_axis));
}

int GridGeometry::cell_count() const {
  int n = 1;
  for (int s : shape) n *= s;
  return n;
}

Box GridGeometry::extent() const {
  Eigen::VectorXd hi = origin;
  for (int a = 0; a < dim(); ++a) hi[a] += cell[a] * shape[a];
  return Box(origin, hi);
}

Eigen::VectorXd GridGeometry::cell_center(int flat) const {
  const int d = dim();
  Eigen::VectorXd x(d);
  for (int a = d - 1; a >= 0; --a) {
    const int i = flat % shape[a];
    flat /= shape[a];
    x[a] = origin[a] + (i + 0.5) * cell[a];
  }
  return x;
}

int GridGeometry::cell_index(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const int d = dim();
  if (x.size() != d) return -1;
  int flat = 0;
  for (int a = 0; a < d; ++a) {
    double t = (x[a] - origin[a]) / cell[a];
    int i = static_cast<int>(std::floor(t));
    if (i == shape[a] && t <= shape[a] + 1e-12) i = shape[a] - 1;  // top edge
    if (i < 0 || i >= shape[a]) return -1;
    flat = flat * shape[a] + i;
  }
  return flat;
}

bool GridGeometry::same_as(const GridGeometry& other, double tol) const {
  if (shape != other.shape) return false;
  return (origin - other.origin).cwiseAbs().maxCoeff() <= tol &&
         (cell - other.cell).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace wbary
