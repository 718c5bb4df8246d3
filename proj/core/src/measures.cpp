#include "wbary/measures.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <utility>

#include "wbary/errors.hpp"
#include "wbary/rng.hpp"

namespace wbary {

namespace {

constexpr double kWeightSumAccept = 1e-12;  // keep weights as-is below this
constexpr double kWeightSumFix = 1e-6;      // renormalize up to this, error past
constexpr double kWeightPrune = 1e-15;

// Renormalizes `w` so it sums to 1: exact sums are kept untouched (so that
// save/load round-trips stay bit-exact), small drift is divided out, anything
// worse is rejected.
void normalize_weights(Eigen::VectorXd& w, const char* what) {
  const double s = w.sum();
  if (std::abs(s - 1.0) <= kWeightSumAccept) return;
  if (std::abs(s - 1.0) <= kWeightSumFix) {
    w /= s;
    return;
  }
  throw InvariantError(std::string(what) + ": total mass " +
                       std::to_string(s) + " is off by more than 1e-6");
}

}  // namespace

DiscreteMeasure::DiscreteMeasure(Eigen::MatrixXd points,
                                 Eigen::VectorXd weights, Box domain)
    : points_(std::move(points)), weights_(std::move(weights)),
      domain_(std::move(domain)) {
  if (points_.rows() == 0 || points_.rows() != weights_.size()) {
    throw InvariantError("discrete measure needs matching, nonempty points and weights");
  }
  if (points_.cols() != domain_.dim()) {
    throw DimensionError("discrete measure: points and domain dimension differ");
  }
  if ((weights_.array() < 0.0).any()) {
    throw InvariantError("discrete measure: negative weight");
  }
  normalize_weights(weights_, "discrete measure");
  if ((weights_.array() < kWeightPrune).any()) {
    // prune near-zero atoms, then a single renormalization
    std::vector<int> keep;
    keep.reserve(static_cast<std::size_t>(weights_.size()));
    for (int i = 0; i < weights_.size(); ++i) {
      if (weights_[i] >= kWeightPrune) keep.push_back(i);
    }
    if (keep.empty()) throw InvariantError("discrete measure: all atoms pruned");
    Eigen::MatrixXd p(static_cast<int>(keep.size()), points_.cols());
    Eigen::VectorXd w(static_cast<int>(keep.size()));
    for (std::size_t r = 0; r < keep.size(); ++r) {
      p.row(static_cast<int>(r)) = points_.row(keep[r]);
      w[static_cast<int>(r)] = weights_[keep[r]];
    }
    points_ = std::move(p);
    weights_ = w / w.sum();
  }
  for (int i = 0; i < points_.rows(); ++i) {
    if (!domain_.contains(points_.row(i).transpose())) {
      throw DomainError("discrete measure: atom outside the declared domain box");
    }
  }
}

GridDensity::GridDensity(GridGeometry geometry, Eigen::VectorXd values)
    : geometry_(std::move(geometry)), values_(std::move(values)) {
  if (geometry_.dim() > 2) {
    throw DimensionError("grid densities are limited to d <= 2");
  }
  if (values_.size() != geometry_.cell_count()) {
    throw InvariantError("grid density: values do not match the grid shape");
  }
  if ((values_.array() < 0.0).any()) {
    throw InvariantError("grid density: negative value");
  }
  const double vol = geometry_.cell_volume();
  Eigen::VectorXd mass = values_ * vol;
  normalize_weights(mass, "grid density");
  values_ = mass / vol;
}

double GridDensity::value_at(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const int idx = geometry_.cell_index(x);
  return idx < 0 ? 0.0 : values_[idx];
}

double GridDensity::second_moment() const {
  // Exact under the piecewise-constant model: per cell,
  // int |x|^2 = mass * (|center|^2 + sum_a h_a^2 / 12).
  const double corr = geometry_.cell.array().square().sum() / 12.0;
  const double vol = geometry_.cell_volume();
  double acc = 0.0;
  for (int i = 0; i < values_.size(); ++i) {
    if (values_[i] == 0.0) continue;
    acc += values_[i] * vol * (geometry_.cell_center(i).squaredNorm() + corr);
  }
  return acc;
}

AffineMap::AffineMap(Eigen::MatrixXd A, Eigen::VectorXd b)
    : A_(std::move(A)), b_(std::move(b)) {
  if (A_.rows() != A_.cols() || A_.rows() != b_.size() || b_.size() == 0) {
    throw DimensionError("affine map: A must be d x d and b of length d");
  }
  if ((A_ - A_.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvariantError("affine map: A is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A_,
                                                    Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 1e-10) {
    throw InvariantError("affine map: A is not positive definite");
  }
}

AffineMap AffineMap::identity(int dim) {
  return AffineMap(Eigen::MatrixXd::Identity(dim, dim),
                   Eigen::VectorXd::Zero(dim));
}

AffineMap AffineMap::shift(const Eigen::VectorXd& b) {
  return AffineMap(Eigen::MatrixXd::Identity(b.size(), b.size()), b);
}

AffineMap AffineMap::inverse() const {
  const Eigen::MatrixXd Ainv = A_.inverse();
  // symmetrize away round-off so the invariant check stays happy
  return AffineMap(0.5 * (Ainv + Ainv.transpose()), -Ainv * b_);
}

AffineMap AffineMap::compose(const AffineMap& inner) const {
  return AffineMap(A_ * inner.A_, A_ * inner.b_ + b_);
}

bool AffineMap::is_diagonal(double tol) const {
  const int d = dim();
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (i != j && std::abs(A_(i, j)) > tol) return false;
    }
  }
  return true;
}

TransportPlan::TransportPlan(Eigen::MatrixXd gamma, DiscreteMeasure source,
                             DiscreteMeasure target)
    : gamma_(std::move(gamma)), source_(std::move(source)),
      target_(std::move(target)) {
  if (gamma_.rows() != source_.size() || gamma_.cols() != target_.size()) {
    throw InvariantError("transport plan: coupling shape mismatch");
  }
  if ((gamma_.array() < -1e-15).any()) {
    throw InvariantError("transport plan: negative entry");
  }
  const double row_err =
      (gamma_.rowwise().sum() - source_.weights()).cwiseAbs().maxCoeff();
  const double col_err =
      (gamma_.colwise().sum().transpose() - target_.weights())
          .cwiseAbs()
          .maxCoeff();
  if (row_err > 1e-9 || col_err > 1e-9) {
    throw InvariantError("transport plan: marginals violated beyond 1e-9");
  }
}

double TransportPlan::cost() const {
  double acc = 0.0;
  for (int i = 0; i < gamma_.rows(); ++i) {
    for (int j = 0; j < gamma_.cols(); ++j) {
      const double g = gamma_(i, j);
      if (g > 0.0) {
        acc += g * (source_.points().row(i) - target_.points().row(j))
                       .squaredNorm();
      }
    }
  }
  return acc;
}

int measure_dim(const Measure& m) {
  return std::visit([](const auto& v) { return v.dim(); }, m);
}

Box measure_domain(const Measure& m) {
  return std::visit([](const auto& v) { return v.domain(); }, m);
}

// ---------------------------------------------------------------------------
// Resampling (exact overlap integrals of the piecewise-constant model).
// ---------------------------------------------------------------------------

namespace {

struct AxisOverlap {
  // For target cell i, source cells [begin[i], begin[i] + len_i) with the
  // overlap lengths in weights[offset[i] .. offset[i+1]).
  std::vector<int> begin;
  std::vector<std::size_t> offset;
  std::vector<double> weights;
};

AxisOverlap axis_overlap(double src_lo, double src_cell, int src_n,
                         double tgt_lo, double tgt_cell, int tgt_n) {
  AxisOverlap ov;
  ov.begin.resize(static_cast<std::size_t>(tgt_n));
  ov.offset.assign(static_cast<std::size_t>(tgt_n) + 1, 0);
  ov.weights.reserve(static_cast<std::size_t>(tgt_n) * 3);
  for (int i = 0; i < tgt_n; ++i) {
    const double tl = tgt_lo + i * tgt_cell;
    const double tr = tl + tgt_cell;
    int k0 = static_cast<int>(std::floor((tl - src_lo) / src_cell));
    int k1 = static_cast<int>(std::floor((tr - src_lo) / src_cell));
    k0 = std::max(k0, 0);
    k1 = std::min(k1, src_n - 1);
    ov.begin[static_cast<std::size_t>(i)] = k0;
    for (int k = k0; k <= k1; ++k) {
      const double sl = src_lo + k * src_cell;
      const double sr = sl + src_cell;
      const double w = std::min(tr, sr) - std::max(tl, sl);
      if (w > 0.0) {
        ov.weights.push_back(w);
      } else if (k == k0 && k0 < k1) {
        ov.begin[static_cast<std::size_t>(i)] = k + 1;
        continue;
      } else {
        break;
      }
    }
    ov.offset[static_cast<std::size_t>(i) + 1] = ov.weights.size();
  }
  return ov;
}

}  // namespace

GridDensity resample(const GridDensity& density, const GridGeometry& target,
                     double* renorm) {
  const GridGeometry& src = density.geometry();
  if (src.dim() != target.dim()) {
    throw DimensionError("resample: grid dimensions differ");
  }
  const int d = src.dim();
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(target.cell_count());
  if (d == 1) {
    const AxisOverlap ov = axis_overlap(src.origin[0], src.cell[0],
                                        src.shape[0], target.origin[0],
                                        target.cell[0], target.shape[0]);
    for (int i = 0; i < target.shape[0]; ++i) {
      double acc = 0.0;
      const std::size_t o = ov.offset[static_cast<std::size_t>(i)];
      const std::size_t e = ov.offset[static_cast<std::size_t>(i) + 1];
      for (std::size_t t = o; t < e; ++t) {
        const int k = ov.begin[static_cast<std::size_t>(i)] +
                      static_cast<int>(t - o);
        acc += density.values()[k] * ov.weights[t];
      }
      mass[i] = acc;
    }
  } else {
    const AxisOverlap ov0 = axis_overlap(src.origin[0], src.cell[0],
                                         src.shape[0], target.origin[0],
                                         target.cell[0], target.shape[0]);
    const AxisOverlap ov1 = axis_overlap(src.origin[1], src.cell[1],
                                         src.shape[1], target.origin[1],
                                         target.cell[1], target.shape[1]);
    for (int i = 0; i < target.shape[0]; ++i) {
      const std::size_t o0 = ov0.offset[static_cast<std::size_t>(i)];
      const std::size_t e0 = ov0.offset[static_cast<std::size_t>(i) + 1];
      for (int j = 0; j < target.shape[1]; ++j) {
        const std::size_t o1 = ov1.offset[static_cast<std::size_t>(j)];
        const std::size_t e1 = ov1.offset[static_cast<std::size_t>(j) + 1];
        double acc = 0.0;
        for (std::size_t t0 = o0; t0 < e0; ++t0) {
          const int k0 = ov0.begin[static_cast<std::size_t>(i)] +
                         static_cast<int>(t0 - o0);
          for (std::size_t t1 = o1; t1 < e1; ++t1) {
            const int k1 = ov1.begin[static_cast<std::size_t>(j)] +
                           static_cast<int>(t1 - o1);
            acc += density.values()[k0 * src.shape[1] + k1] *
                   ov0.weights[t0] * ov1.weights[t1];
          }
        }
        mass[i * target.shape[1] + j] = acc;
      }
    }
  }
  const double total = mass.sum();
  if (!(total > 0.0)) {
    throw DomainError("resample: target grid misses the support entirely");
  }
  if (renorm != nullptr) *renorm = 1.0 / total;
  return GridDensity(target, mass / (total * target.cell_volume()));
}

DiscreteMeasure atoms_on_grid(const GridDensity& density,
                              const GridGeometry& target) {
  const GridDensity on_target = density.geometry().same_as(target)
                                    ? density
                                    : resample(density, target);
  const Eigen::VectorXd mass = on_target.masses();
  const int n = target.cell_count();
  Eigen::MatrixXd pts(n, target.dim());
  for (int i = 0; i < n; ++i) pts.row(i) = target.cell_center(i).transpose();
  return DiscreteMeasure(pts, mass, target.extent());
}

DiscreteMeasure discretize(const GridDensity& density, int m,
                           DiscretizeMode mode, std::uint64_t seed) {
  if (m < 1) throw InvariantError("discretize: need m >= 1");
  const int d = density.dim();
  if (mode == DiscretizeMode::CellCenters) {
    GridGeometry target;
    if (d == 1) {
      const Box box = density.domain();
      target = GridGeometry::uniform_1d(box.lo[0], box.hi[0], m);
    } else {
      const int k = static_cast<int>(std::lround(std::sqrt(double(m))));
      if (k * k != m) {
        throw InvariantError("discretize: m must be a perfect square for d = 2");
      }
      target = GridGeometry::uniform_on(density.domain(), k);
    }
    return atoms_on_grid(density, target);
  }
  // i.i.d. mode: sample a cell by mass, then uniformly inside the cell.
  Rng rng(seed, 0x9d1);
  const Eigen::VectorXd mass = density.masses();
  std::vector<double> cdf(static_cast<std::size_t>(mass.size()));
  double acc = 0.0;
  for (int i = 0; i < mass.size(); ++i) {
    acc += mass[i];
    cdf[static_cast<std::size_t>(i)] = acc;
  }
  const GridGeometry& g = density.geometry();
  Eigen::MatrixXd pts(m, d);
  for (int s = 0; s < m; ++s) {
    const double u = rng.uniform() * acc;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const int cell = static_cast<int>(it - cdf.begin());
    Eigen::VectorXd x = g.cell_center(std::min(cell, int(mass.size()) - 1));
    for (int a = 0; a < d; ++a) x[a] += (rng.uniform() - 0.5) * g.cell[a];
    pts.row(s) = x.transpose();
  }
  return DiscreteMeasure(pts, Eigen::VectorXd::Constant(m, 1.0 / m),
                         density.domain());
}

// ---------------------------------------------------------------------------
// Analytic templates.
// ---------------------------------------------------------------------------

GridDensity uniform_density(double lo, double hi, int cells) {
  GridGeometry g = GridGeometry::uniform_1d(lo, hi, cells);
  return GridDensity(g, Eigen::VectorXd::Constant(cells, 1.0 / (hi - lo)));
}

GridDensity triangular_density(double lo, double hi, int cells) {
  // Symmetric triangle: peak at the midpoint, CDF is
  //   F(x) = 2 (x - lo)^2 / L^2 on the left half, mirrored on the right.
  const double L = hi - lo;
  auto cdf = [&](double x) {
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    const double c = 0.5 * (lo + hi);
    if (x <= c) {
      const double t = (x - lo) / L;
      return 2.0 * t * t;
    }
    const double t = (hi - x) / L;
    return 1.0 - 2.0 * t * t;
  };
  GridGeometry g = GridGeometry::uniform_1d(lo, hi, cells);
  Eigen::VectorXd values(cells);
  for (int i = 0; i < cells; ++i) {
    const double l = lo + i * g.cell[0];
    values[i] = (cdf(l + g.cell[0]) - cdf(l)) / g.cell[0];
  }
  return GridDensity(g, values);
}

GridDensity uniform_density_2d(const Box& box, int nx, int ny) {
  if (box.dim() != 2) throw DimensionError("uniform_density_2d: box must be 2-d");
  Eigen::VectorXd cell(2);
  cell << (box.hi[0] - box.lo[0]) / nx, (box.hi[1] - box.lo[1]) / ny;
  GridGeometry g(box.lo, cell, {nx, ny});
  const double area = (box.hi - box.lo).prod();
  return GridDensity(g, Eigen::VectorXd::Constant(nx * ny, 1.0 / area));
}

}  // namespace wbary
