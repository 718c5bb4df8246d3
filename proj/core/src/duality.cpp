#include "wbary/duality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wbary/errors.hpp"
#include "wbary/parallel.hpp"
#include "wbary/transport_exact.hpp"

namespace wbary {

GridFn::GridFn(GridGeometry g, Eigen::VectorXd v)
    : geom(std::move(g)), values(std::move(v)) {
  if (values.size() != geom.cell_count()) {
    throw InvariantError("grid function: values do not match the grid shape");
  }
}

const GridGeometry& DualFamily::grid() const {
  if (f.empty()) throw InvariantError("dual family: no potentials");
  return f.front().geom;
}

double DualFamily::zero_sum_defect() const {
  if (f.empty()) throw InvariantError("dual family: no potentials");
  if (static_cast<int>(f.size()) != quad.count()) {
    throw InvariantError("dual family: one potential per quadrature node");
  }
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(f.front().values.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    if (!f[k].geom.same_as(f.front().geom)) {
      throw GridMismatchError("dual family: potentials on different grids");
    }
    acc += quad.weights[static_cast<int>(k)] * f[k].values;
  }
  return acc.cwiseAbs().maxCoeff();
}

void DualFamily::validate(double tol) const {
  if (zero_sum_defect() > tol) {
    throw ConstraintError("dual family: zero-sum constraint violated");
  }
}

GridFn c_transform(const GridFn& f, double scale) {
  if (!(scale > 0.0)) throw ScaleError("c-transform: scale must be positive");
  if (!f.values.allFinite()) {
    throw InvariantError("c-transform: potential must be finite");
  }
  const int n = f.geom.cell_count();
  const int d = f.geom.dim();
  Eigen::MatrixXd centers(n, d);
  for (int i = 0; i < n; ++i) centers.row(i) = f.geom.cell_center(i).transpose();
  Eigen::VectorXd out(n);
  const double half_scale = 0.5 * scale;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      const double v = half_scale * (centers.row(i) - centers.row(j)).squaredNorm() -
                       f.values[j];
      if (v < best) best = v;
    }
    out[i] = best;
  }
  return GridFn(f.geom, std::move(out));
}

double c_transform_value(const GridFn& f, double scale,
                         const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (!(scale > 0.0)) throw ScaleError("c-transform: scale must be positive");
  const int n = f.geom.cell_count();
  const double half_scale = 0.5 * scale;
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    const double v =
        half_scale * (x - f.geom.cell_center(j)).squaredNorm() - f.values[j];
    if (v < best) best = v;
  }
  return best;
}

double integrate(const GridFn& f, const GridDensity& member) {
  if (!f.geom.same_as(member.geometry())) {
    throw GridMismatchError("integrate: function and member on different grids");
  }
  return f.values.dot(member.masses());
}

double primal_objective(const DiscreteMeasure& nu,
                        const DeformableFamily& family,
                        const ThetaQuadrature& quad, const GridGeometry& grid,
                        int threads) {
  std::vector<double> terms(static_cast<std::size_t>(quad.count()), 0.0);
  parallel_for(static_cast<std::size_t>(quad.count()), threads,
               [&](std::size_t r) {
                 const Eigen::VectorXd theta =
                     quad.nodes.row(static_cast<int>(r)).transpose();
                 const double g = family.g(theta);
                 if (g <= 0.0) return;
                 const DiscreteMeasure member =
                     family.member_discrete(theta, grid);
                 terms[r] = quad.weights[static_cast<int>(r)] * g * 0.5 *
                            w2sq_discrete(nu, member);
               });
  double acc = 0.0;
  for (const double t : terms) acc += t;  // fixed node order
  return acc;
}

double dual_objective(const DualFamily& df, const DeformableFamily& family,
                      int threads) {
  df.validate();
  const GridGeometry& grid = df.grid();
  std::vector<double> terms(df.f.size(), 0.0);
  parallel_for(df.f.size(), threads, [&](std::size_t r) {
    const Eigen::VectorXd theta =
        df.quad.nodes.row(static_cast<int>(r)).transpose();
    const double g = family.g(theta);
    if (g <= 0.0) return;
    const GridFn s = c_transform(df.f[r], g);
    terms[r] = df.quad.weights[static_cast<int>(r)] *
               integrate(s, family.member_grid(theta, grid));
  });
  double acc = 0.0;
  for (const double t : terms) acc += t;
  return acc;
}

MatchedMembers matched_members(const DeformableFamily& family,
                               const ThetaQuadrature& quad,
                               const GridGeometry& grid) {
  const AffineMap mean = family_mean_map(family, quad);
  const DiscreteMeasure star =
      atoms_on_grid(population_barycenter_on(family, quad, grid), grid);
  const Box omega = grid.extent();
  MatchedMembers out{star, {}};
  out.members.reserve(static_cast<std::size_t>(quad.count()));
  for (int r = 0; r < quad.count(); ++r) {
    const auto [Ac, bc] =
        centered_params(family, quad.nodes.row(r).transpose(), mean);
    Eigen::MatrixXd pts =
        (star.points() * Ac.transpose()).rowwise() + bc.transpose();
    for (int i = 0; i < pts.rows(); ++i) {
      for (int a = 0; a < pts.cols(); ++a) {
        pts(i, a) = std::clamp(pts(i, a), omega.lo[a], omega.hi[a]);
      }
    }
    out.members.emplace_back(std::move(pts), star.weights(), omega);
  }
  return out;
}

double primal_objective_matched(const DiscreteMeasure& nu,
                                const DeformableFamily& family,
                                const ThetaQuadrature& quad,
                                const MatchedMembers& members, int threads) {
  if (static_cast<int>(members.members.size()) != quad.count()) {
    throw InvariantError("matched primal: members do not match the quadrature");
  }
  std::vector<double> terms(members.members.size(), 0.0);
  parallel_for(members.members.size(), threads, [&](std::size_t r) {
    const Eigen::VectorXd theta =
        quad.nodes.row(static_cast<int>(r)).transpose();
    const double g = family.g(theta);
    if (g <= 0.0) return;
    terms[r] = quad.weights[static_cast<int>(r)] * g * 0.5 *
               w2sq_discrete(nu, members.members[r]);
  });
  double acc = 0.0;
  for (const double t : terms) acc += t;
  return acc;
}

double dual_objective_matched(const DualFamily& df,
                              const DeformableFamily& family,
                              const MatchedMembers& members, int threads) {
  df.validate();
  if (members.members.size() != df.f.size()) {
    throw InvariantError("matched dual: members do not match the quadrature");
  }
  std::vector<double> terms(df.f.size(), 0.0);
  parallel_for(df.f.size(), threads, [&](std::size_t r) {
    const Eigen::VectorXd theta =
        df.quad.nodes.row(static_cast<int>(r)).transpose();
    const double g = family.g(theta);
    if (g <= 0.0) return;
    const DiscreteMeasure& member = members.members[r];
    double acc = 0.0;
    for (int i = 0; i < member.size(); ++i) {
      acc += member.weights()[i] *
             c_transform_value(df.f[r], g, member.points().row(i).transpose());
    }
    terms[r] = df.quad.weights[static_cast<int>(r)] * acc;
  });
  double acc = 0.0;
  for (const double t : terms) acc += t;
  return acc;
}

GridFn affine_dual_maximizer(const DeformableFamily& family,
                             const Eigen::VectorXd& theta,
                             const AffineMap& mean_map,
                             const GridGeometry& grid) {
  const double g = family.g(theta);
  if (!(g > 0.0)) {
    throw FamilyError("affine dual maximizer: needs g(theta) > 0");
  }
  const auto [Ac, bc] = centered_params(family, theta, mean_map);
  const Eigen::MatrixXd M =
      Ac - Eigen::MatrixXd::Identity(Ac.rows(), Ac.cols());
  const int n = grid.cell_count();
  Eigen::VectorXd values(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = grid.cell_center(i);
    values[i] = -0.5 * g * x.dot(M * x) - g * bc.dot(x);
  }
  return GridFn(grid, std::move(values));
}

DualFamily make_affine_dual_family(const DeformableFamily& family,
                                   const ThetaQuadrature& quad,
                                   const GridGeometry& grid) {
  const AffineMap mean = family_mean_map(family, quad);
  DualFamily df;
  df.quad = quad;
  df.f.reserve(static_cast<std::size_t>(quad.count()));
  for (int r = 0; r < quad.count(); ++r) {
    df.f.push_back(affine_dual_maximizer(family, quad.nodes.row(r).transpose(),
                                         mean, grid));
  }
  return df;
}

DualFamily grid_search_dual_family(const DeformableFamily& family,
                                   const ThetaQuadrature& quad,
                                   const GridGeometry& grid,
                                   std::span<const double> scales,
                                   int threads) {
  if (scales.empty()) {
    throw InvariantError("grid-search dual: need candidate scales");
  }
  const DualFamily base = make_affine_dual_family(family, quad, grid);
  double best_value = -std::numeric_limits<double>::infinity();
  double best_scale = scales.front();
  for (const double s : scales) {
    DualFamily candidate = base;
    for (GridFn& f : candidate.f) f.values *= s;
    const double value = dual_objective(candidate, family, threads);
    if (value > best_value) {
      best_value = value;
      best_scale = s;
    }
  }
  DualFamily out = base;
  for (GridFn& f : out.f) f.values *= best_scale;
  return out;
}

BrenierRecovery brenier_recover(const DualFamily& df,
                                const DeformableFamily& family,
                                int node_index) {
  if (node_index < 0 || node_index >= df.quad.count()) {
    throw RangeError("brenier_recover: node index out of range");
  }
  const Eigen::VectorXd theta = df.quad.nodes.row(node_index).transpose();
  const double g = family.g(theta);
  if (!(g > 0.0)) throw FamilyError("brenier_recover: needs g(theta) > 0");
  const GridGeometry& grid = df.grid();
  const GridFn s = c_transform(df.f[static_cast<std::size_t>(node_index)], g);

  const int n = grid.cell_count();
  Eigen::VectorXd phi(n);
  for (int i = 0; i < n; ++i) {
    phi[i] = 0.5 * grid.cell_center(i).squaredNorm() - s.values[i] / g;
  }

  // axis-aligned second differences (raw, not divided by h^2)
  const int d = grid.dim();
  double min_second = std::numeric_limits<double>::infinity();
  const int n0 = grid.shape[0];
  const int n1 = d == 2 ? grid.shape[1] : 1;
  auto at = [&](int i0, int i1) { return phi[i0 * n1 + i1]; };
  for (int i0 = 0; i0 < n0; ++i0) {
    for (int i1 = 0; i1 < n1; ++i1) {
      if (i0 >= 1 && i0 + 1 < n0) {
        min_second = std::min(
            min_second, at(i0 + 1, i1) - 2.0 * at(i0, i1) + at(i0 - 1, i1));
      }
      if (d == 2 && i1 >= 1 && i1 + 1 < n1) {
        min_second = std::min(
            min_second, at(i0, i1 + 1) - 2.0 * at(i0, i1) + at(i0, i1 - 1));
      }
    }
  }
  if (!std::isfinite(min_second)) min_second = 0.0;

  // finite-difference gradient: central in the interior, one-sided at the
  // boundary of Omega
  Eigen::MatrixXd grad(n, d);
  for (int i0 = 0; i0 < n0; ++i0) {
    for (int i1 = 0; i1 < n1; ++i1) {
      const int flat = i0 * n1 + i1;
      {
        const int lo = std::max(i0 - 1, 0);
        const int hi = std::min(i0 + 1, n0 - 1);
        grad(flat, 0) =
            (at(hi, i1) - at(lo, i1)) / ((hi - lo) * grid.cell[0]);
      }
      if (d == 2) {
        const int lo = std::max(i1 - 1, 0);
        const int hi = std::min(i1 + 1, n1 - 1);
        grad(flat, 1) =
            (at(i0, hi) - at(i0, lo)) / ((hi - lo) * grid.cell[1]);
      }
    }
  }

  const GridDensity member = family.member_grid(theta, grid);
  const Eigen::VectorXd mass = member.masses();
  const Box omega = grid.extent();
  Eigen::MatrixXd pts(n, d);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd y = grad.row(i).transpose();
    // clamp float overshoot at the boundary back into Omega
    for (int a = 0; a < d; ++a) y[a] = std::clamp(y[a], omega.lo[a], omega.hi[a]);
    pts.row(i) = y.transpose();
  }
  return BrenierRecovery{GridFn(grid, std::move(phi)),
                         DiscreteMeasure(std::move(pts), mass, omega),
                         min_second, min_second >= -1e-4};
}

double duality_gap(const DiscreteMeasure& nu, const DualFamily& df,
                   const DeformableFamily& family, int threads) {
  return primal_objective(nu, family, df.quad, df.grid(), threads) -
         dual_objective(df, family, threads);
}

}  // namespace wbary
