#include "wbary/models.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>

#include "wbary/errors.hpp"
#include "wbary/rng.hpp"

namespace wbary {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }
double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / 2.5066282746310005024;
}

std::vector<int> default_axis_nodes(int p) {
  // dense enough to certify the normalization of g within 1e-6
  const int per_axis = p <= 1 ? 513 : (p == 2 ? 129 : 33);
  return std::vector<int>(static_cast<std::size_t>(p), per_axis);
}

double map_distance(const AffineMap& a, const AffineMap& b) {
  return (a.A() - b.A()).norm() + (a.b() - b.b()).norm();
}

}  // namespace

ThetaQuadrature midpoint_quadrature(const Box& theta_box,
                                    const std::vector<int>& nodes_per_axis) {
  const int p = theta_box.dim();
  if (static_cast<int>(nodes_per_axis.size()) != p) {
    throw DimensionError("quadrature: nodes_per_axis does not match the box");
  }
  long long count = 1;
  for (int a = 0; a < p; ++a) {
    if (nodes_per_axis[static_cast<std::size_t>(a)] < 1) {
      throw InvariantError("quadrature: need at least one node per axis");
    }
    count *= nodes_per_axis[static_cast<std::size_t>(a)];
  }
  if (count > 2000000) throw SizeError("quadrature: too many nodes");
  ThetaQuadrature quad;
  quad.nodes.resize(static_cast<int>(count), p);
  double cell_vol = 1.0;
  Eigen::VectorXd h(p);
  for (int a = 0; a < p; ++a) {
    h[a] = (theta_box.hi[a] - theta_box.lo[a]) /
           nodes_per_axis[static_cast<std::size_t>(a)];
    cell_vol *= h[a];
  }
  quad.weights = Eigen::VectorXd::Constant(static_cast<int>(count), cell_vol);
  std::vector<int> idx(static_cast<std::size_t>(p), 0);
  for (int r = 0; r < static_cast<int>(count); ++r) {
    for (int a = 0; a < p; ++a) {
      quad.nodes(r, a) =
          theta_box.lo[a] + (idx[static_cast<std::size_t>(a)] + 0.5) * h[a];
    }
    for (int a = p - 1; a >= 0; --a) {
      if (++idx[static_cast<std::size_t>(a)] <
          nodes_per_axis[static_cast<std::size_t>(a)]) {
        break;
      }
      idx[static_cast<std::size_t>(a)] = 0;
    }
  }
  return quad;
}

ThetaQuadrature midpoint_quadrature(const Box& theta_box, int nodes_per_axis) {
  return midpoint_quadrature(
      theta_box, std::vector<int>(static_cast<std::size_t>(theta_box.dim()),
                                  nodes_per_axis));
}

// ---------------------------------------------------------------------------
// Weight densities.
// ---------------------------------------------------------------------------

WeightDensity WeightDensity::uniform(const Box& theta_box) {
  WeightDensity g;
  const double vol = (theta_box.hi - theta_box.lo).prod();
  const double value = 1.0 / vol;
  Box box = theta_box;
  g.fn_ = [box, value](const Eigen::VectorXd& t) {
    return box.contains(t, 1e-12) ? value : 0.0;
  };
  g.bound_ = value;
  g.kind_ = "uniform";
  return g;
}

WeightDensity WeightDensity::truncated_gaussian(const Box& theta_box,
                                                Eigen::VectorXd mean,
                                                Eigen::VectorXd sigma) {
  const int p = theta_box.dim();
  if (mean.size() != p || sigma.size() != p) {
    throw DimensionError("truncated gaussian: parameter sizes do not match");
  }
  if ((sigma.array() <= 0.0).any()) {
    throw InvariantError("truncated gaussian: sigma must be positive");
  }
  Eigen::VectorXd z(p);
  for (int a = 0; a < p; ++a) {
    z[a] = normal_cdf((theta_box.hi[a] - mean[a]) / sigma[a]) -
           normal_cdf((theta_box.lo[a] - mean[a]) / sigma[a]);
    if (z[a] <= 0.0) {
      throw InvariantError("truncated gaussian: box carries no mass");
    }
  }
  WeightDensity g;
  Box box = theta_box;
  g.fn_ = [box, mean, sigma, z](const Eigen::VectorXd& t) {
    if (!box.contains(t, 1e-12)) return 0.0;
    double acc = 1.0;
    for (int a = 0; a < t.size(); ++a) {
      acc *= normal_pdf((t[a] - mean[a]) / sigma[a]) / (sigma[a] * z[a]);
    }
    return acc;
  };
  double bound = 1.0;
  for (int a = 0; a < p; ++a) {
    const double peak = std::clamp(mean[a], theta_box.lo[a], theta_box.hi[a]);
    bound *= normal_pdf((peak - mean[a]) / sigma[a]) / (sigma[a] * z[a]);
  }
  g.bound_ = bound;
  g.kind_ = "trunc_gauss";
  g.gauss_mean_ = std::move(mean);
  g.gauss_sigma_ = std::move(sigma);
  return g;
}

WeightDensity WeightDensity::polynomial(
    const Box& theta_box, std::vector<std::vector<double>> coeffs) {
  const int p = theta_box.dim();
  if (static_cast<int>(coeffs.size()) != p) {
    throw DimensionError("polynomial density: one coefficient list per axis");
  }
  auto axis_value = [](const std::vector<double>& c, double t) {
    double acc = 0.0;
    double tp = 1.0;
    for (const double ck : c) {
      acc += ck * tp;
      tp *= t;
    }
    return std::max(acc, 0.0);
  };
  // per-axis numerical normalization on a dense midpoint grid
  std::vector<double> norms(static_cast<std::size_t>(p), 0.0);
  std::vector<double> maxima(static_cast<std::size_t>(p), 0.0);
  const int res = 4096;
  for (int a = 0; a < p; ++a) {
    const double h = (theta_box.hi[a] - theta_box.lo[a]) / res;
    double s = 0.0, mx = 0.0;
    for (int k = 0; k < res; ++k) {
      const double v =
          axis_value(coeffs[static_cast<std::size_t>(a)],
                     theta_box.lo[a] + (k + 0.5) * h);
      s += v * h;
      mx = std::max(mx, v);
    }
    if (s <= 0.0) throw InvariantError("polynomial density: nonpositive mass");
    norms[static_cast<std::size_t>(a)] = s;
    maxima[static_cast<std::size_t>(a)] = mx / s;
  }
  WeightDensity g;
  Box box = theta_box;
  auto co = coeffs;
  g.fn_ = [box, co, norms, axis_value](const Eigen::VectorXd& t) {
    if (!box.contains(t, 1e-12)) return 0.0;
    double acc = 1.0;
    for (int a = 0; a < t.size(); ++a) {
      acc *= axis_value(co[static_cast<std::size_t>(a)], t[a]) /
             norms[static_cast<std::size_t>(a)];
    }
    return acc;
  };
  double bound = 1.0;
  for (const double mx : maxima) bound *= mx;
  g.bound_ = bound * 1.01;  // grid max can undershoot the true peak
  g.kind_ = "poly";
  g.poly_ = std::move(coeffs);
  return g;
}

WeightDensity WeightDensity::custom(
    std::function<double(const Eigen::VectorXd&)> fn, double bound) {
  if (!(bound > 0.0)) throw InvariantError("custom density: bound must be positive");
  WeightDensity g;
  g.fn_ = std::move(fn);
  g.bound_ = bound;
  g.kind_ = "custom";
  return g;
}

// ---------------------------------------------------------------------------
// DeformableFamily.
// ---------------------------------------------------------------------------

DeformableFamily::DeformableFamily(
    Kind kind, GridDensity tmpl, WeightDensity g, Box theta_box,
    std::function<AffineMap(const Eigen::VectorXd&)> phi)
    : kind_(kind), template_(std::move(tmpl)), g_(std::move(g)),
      theta_box_(std::move(theta_box)), phi_(std::move(phi)) {
  // g must integrate to 1 over the box (quadrature certificate)
  const ThetaQuadrature quad =
      midpoint_quadrature(theta_box_, default_axis_nodes(theta_box_.dim()));
  double mass = 0.0;
  for (int r = 0; r < quad.count(); ++r) {
    const double v = g_(quad.nodes.row(r).transpose());
    if (v < 0.0) throw InvariantError("family: g takes a negative value");
    mass += v * quad.weights[r];
  }
  if (std::abs(mass - 1.0) > 1e-6) {
    throw InvariantError("family: g does not integrate to 1 (got " +
                         std::to_string(mass) + ")");
  }

  // Omega: bounding box of the image supports over a theta grid (plus the
  // box corners, where affine-in-theta maps attain their extremes), +1%.
  const Box support = template_.domain();
  std::vector<Eigen::VectorXd> probes;
  const ThetaQuadrature coarse = midpoint_quadrature(
      theta_box_,
      std::vector<int>(static_cast<std::size_t>(theta_box_.dim()),
                       theta_box_.dim() <= 2 ? 9 : 5));
  for (int r = 0; r < coarse.count(); ++r) {
    probes.push_back(coarse.nodes.row(r).transpose());
  }
  const int p = theta_box_.dim();
  for (int mask = 0; mask < (1 << p); ++mask) {
    Eigen::VectorXd corner(p);
    for (int a = 0; a < p; ++a) {
      corner[a] = (mask >> a) & 1 ? theta_box_.hi[a] : theta_box_.lo[a];
    }
    probes.push_back(corner);
  }
  const int d = template_.dim();
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(d, 1e300);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(d, -1e300);
  double lipschitz = 0.0;
  for (const Eigen::VectorXd& theta : probes) {
    const AffineMap map = phi_(theta);
    if (map.dim() != d) {
      throw DimensionError("family: phi(theta) dimension does not match the template");
    }
    for (int mask = 0; mask < (1 << d); ++mask) {
      Eigen::VectorXd corner(d);
      for (int a = 0; a < d; ++a) {
        corner[a] = (mask >> a) & 1 ? support.hi[a] : support.lo[a];
      }
      const Eigen::VectorXd img = map(corner);
      lo = lo.cwiseMin(img);
      hi = hi.cwiseMax(img);
    }
  }
  // coarse Lipschitz estimate for the continuity spot check below
  for (std::size_t i = 1; i < probes.size(); ++i) {
    const double dt = (probes[i] - probes[i - 1]).norm();
    if (dt > 1e-12) {
      lipschitz = std::max(
          lipschitz, map_distance(phi_(probes[i]), phi_(probes[i - 1])) / dt);
    }
  }
  omega_ = Box(lo, hi).inflated(1.01);

  // continuity spot check on random nearby pairs
  Rng rng(0x5eedf00du, 17);
  const double scale = (theta_box_.hi - theta_box_.lo).norm();
  const double allowed = std::max(10.0 * lipschitz, 1e-6);
  for (int trial = 0; trial < 32; ++trial) {
    Eigen::VectorXd t0(p), t1(p);
    for (int a = 0; a < p; ++a) {
      t0[a] = rng.uniform(theta_box_.lo[a], theta_box_.hi[a]);
      t1[a] = std::clamp(t0[a] + (rng.uniform() - 0.5) * 2e-3 * scale,
                         theta_box_.lo[a], theta_box_.hi[a]);
    }
    const double dt = (t1 - t0).norm();
    if (dt < 1e-15) continue;
    if (map_distance(phi_(t0), phi_(t1)) > allowed * dt + 1e-9) {
      throw InvariantError("family: phi fails the continuity spot check");
    }
  }
}

GridDensity DeformableFamily::member_grid(const Eigen::VectorXd& theta,
                                          const GridGeometry& target) const {
  return pushforward_affine_to(template_, phi_(theta), target);
}

DiscreteMeasure DeformableFamily::member_discrete(
    const Eigen::VectorXd& theta, const GridGeometry& target) const {
  const GridDensity grid = member_grid(theta, target);
  const Eigen::VectorXd mass = grid.masses();
  const int n = target.cell_count();
  Eigen::MatrixXd pts(n, target.dim());
  for (int i = 0; i < n; ++i) pts.row(i) = target.cell_center(i).transpose();
  return DiscreteMeasure(std::move(pts), mass, target.extent());
}

DeformableFamily make_shift_family(GridDensity tmpl, WeightDensity g,
                                   Box theta_box) {
  const int d = tmpl.dim();
  if (theta_box.dim() != d) {
    throw DimensionError("shift family: theta box must match the template dimension");
  }
  auto phi = [d](const Eigen::VectorXd& theta) {
    return AffineMap(Eigen::MatrixXd::Identity(d, d), theta);
  };
  return DeformableFamily(DeformableFamily::Kind::Shift, std::move(tmpl),
                          std::move(g), std::move(theta_box), phi);
}

DeformableFamily make_location_scale_1d(GridDensity fbar, WeightDensity g,
                                        Box theta_box) {
  if (fbar.dim() != 1 || theta_box.dim() != 2) {
    throw DimensionError("location-scale family: needs a 1-d template and theta = (a, b)");
  }
  if (theta_box.lo[0] <= 0.0) {
    throw InvariantError("location-scale family: the scale must stay positive");
  }
  auto phi = [](const Eigen::VectorXd& theta) {
    Eigen::MatrixXd A(1, 1);
    A << theta[0];
    Eigen::VectorXd b(1);
    b << theta[1];
    return AffineMap(A, b);
  };
  return DeformableFamily(DeformableFamily::Kind::LocationScale,
                          std::move(fbar), std::move(g), std::move(theta_box),
                          phi);
}

DeformableFamily make_affine_family(
    std::function<AffineMap(const Eigen::VectorXd&)> phi, WeightDensity g,
    Box theta_box, GridDensity tmpl) {
  return DeformableFamily(DeformableFamily::Kind::Affine, std::move(tmpl),
                          std::move(g), std::move(theta_box), std::move(phi));
}

DeformableFamily make_affine_family_from_tables(
    DeformableFamily::AffineTables tables, WeightDensity g, Box theta_box,
    GridDensity tmpl) {
  auto shared = std::make_shared<const DeformableFamily::AffineTables>(
      std::move(tables));
  const int p = theta_box.dim();
  if (static_cast<int>(shared->A.size()) != p ||
      static_cast<int>(shared->b.size()) != p) {
    throw DimensionError("affine tables: need one A_k and b_k per theta coordinate");
  }
  auto phi = [shared](const Eigen::VectorXd& theta) {
    Eigen::MatrixXd A = shared->A0;
    Eigen::VectorXd b = shared->b0;
    for (int k = 0; k < theta.size(); ++k) {
      A += theta[k] * shared->A[static_cast<std::size_t>(k)];
      b += theta[k] * shared->b[static_cast<std::size_t>(k)];
    }
    return AffineMap(std::move(A), std::move(b));
  };
  DeformableFamily family(DeformableFamily::Kind::Affine, std::move(tmpl),
                          std::move(g), std::move(theta_box), phi);
  family.tables_ = shared;
  return family;
}

std::vector<Eigen::VectorXd> sample_theta(const DeformableFamily& family,
                                          std::uint64_t seed, int n) {
  if (n < 0) throw RangeError("sample_theta: n must be nonnegative");
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(n));
  if (n == 0) return out;
  const Box& box = family.theta_box();
  const double bound = family.weight_density().bound();
  Rng rng(seed, 0x7e7a);
  long long proposals = 0;
  while (static_cast<int>(out.size()) < n) {
    Eigen::VectorXd theta(box.dim());
    for (int a = 0; a < box.dim(); ++a) {
      theta[a] = rng.uniform(box.lo[a], box.hi[a]);
    }
    const double u = rng.uniform() * bound;
    ++proposals;
    if (u <= family.g(theta)) out.push_back(std::move(theta));
    if (proposals % 65536 == 0 &&
        static_cast<double>(out.size()) < 1e-4 * static_cast<double>(proposals)) {
      throw EfficiencyError("sample_theta: acceptance rate below 1e-4");
    }
  }
  return out;
}

DiscreteMeasure pushforward_affine(const DiscreteMeasure& m,
                                   const AffineMap& map, const Box& domain) {
  if (map.dim() != m.dim()) {
    throw DimensionError("pushforward: map and measure dimension differ");
  }
  Eigen::MatrixXd pts =
      (m.points() * map.A().transpose()).rowwise() + map.b().transpose();
  for (int i = 0; i < pts.rows(); ++i) {
    if (!domain.contains(pts.row(i).transpose())) {
      throw DomainError("pushforward: image atom leaves the declared box");
    }
  }
  return DiscreteMeasure(std::move(pts), m.weights(), domain);
}

namespace {

// Image of a grid geometry under a *diagonal* positive map: still a uniform
// axis-aligned grid, so the push-forward density is exact.
GridDensity diagonal_image(const GridDensity& density, const AffineMap& map) {
  const GridGeometry& g = density.geometry();
  const int d = g.dim();
  Eigen::VectorXd a = map.A().diagonal();
  Eigen::VectorXd origin(d), cell(d);
  for (int k = 0; k < d; ++k) {
    origin[k] = a[k] * g.origin[k] + map.b()[k];
    cell[k] = a[k] * g.cell[k];
  }
  const double det = a.prod();
  return GridDensity(GridGeometry(origin, cell, g.shape),
                     density.values() / det);
}

}  // namespace

GridDensity pushforward_affine(const GridDensity& density,
                               const AffineMap& map) {
  if (map.dim() != density.dim()) {
    throw DimensionError("pushforward: map and density dimension differ");
  }
  if (map.is_diagonal()) return diagonal_image(density, map);
  // general symmetric positive definite A: evaluate the image density on the
  // bounding box of the image support at the template's resolution
  const Box support = density.domain();
  const int d = density.dim();
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(d, 1e300);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(d, -1e300);
  for (int mask = 0; mask < (1 << d); ++mask) {
    Eigen::VectorXd corner(d);
    for (int a = 0; a < d; ++a) {
      corner[a] = (mask >> a) & 1 ? support.hi[a] : support.lo[a];
    }
    const Eigen::VectorXd img = map(corner);
    lo = lo.cwiseMin(img);
    hi = hi.cwiseMax(img);
  }
  Eigen::VectorXd cell(d);
  for (int a = 0; a < d; ++a) {
    cell[a] = (hi[a] - lo[a]) / density.geometry().shape[a];
  }
  GridGeometry target(lo, cell, density.geometry().shape);
  return pushforward_affine_to(density, map, target);
}

GridDensity pushforward_affine_to(const GridDensity& density,
                                  const AffineMap& map,
                                  const GridGeometry& target, double* renorm) {
  if (map.dim() != density.dim() || target.dim() != density.dim()) {
    throw DimensionError("pushforward: dimension mismatch");
  }
  const Box support = density.domain();
  const Box target_box = target.extent();
  const int d = density.dim();
  for (int mask = 0; mask < (1 << d); ++mask) {
    Eigen::VectorXd corner(d);
    for (int a = 0; a < d; ++a) {
      corner[a] = (mask >> a) & 1 ? support.hi[a] : support.lo[a];
    }
    if (!target_box.contains(map(corner), 1e-9)) {
      throw DomainError("pushforward: image support leaves the target grid");
    }
  }
  double factor = 1.0;
  GridDensity out = [&]() {
    if (map.is_diagonal()) {
      return resample(diagonal_image(density, map), target, &factor);
    }
    // subsampled evaluation of det(A^{-1}) q0(A^{-1}(x - b)) per target cell
    const AffineMap inv = map.inverse();
    const double det_inv = inv.A().determinant();
    const int k = 8;
    Eigen::VectorXd mass(target.cell_count());
    for (int i = 0; i < target.cell_count(); ++i) {
      const Eigen::VectorXd c = target.cell_center(i);
      double acc = 0.0;
      if (d == 1) {
        for (int s = 0; s < k; ++s) {
          Eigen::VectorXd x = c;
          x[0] += ((s + 0.5) / k - 0.5) * target.cell[0];
          acc += density.value_at(inv(x));
        }
        acc /= k;
      } else {
        for (int s0 = 0; s0 < k; ++s0) {
          for (int s1 = 0; s1 < k; ++s1) {
            Eigen::VectorXd x = c;
            x[0] += ((s0 + 0.5) / k - 0.5) * target.cell[0];
            x[1] += ((s1 + 0.5) / k - 0.5) * target.cell[1];
            acc += density.value_at(inv(x));
          }
        }
        acc /= k * k;
      }
      mass[i] = det_inv * acc * target.cell_volume();
    }
    const double total = mass.sum();
    if (!(total > 0.0)) {
      throw DomainError("pushforward: target grid captured no mass");
    }
    factor = 1.0 / total;
    return GridDensity(target, mass / (total * target.cell_volume()));
  }();
  if (std::abs(factor - 1.0) > 1e-3) {
    throw DomainError("pushforward: renormalization factor drifted beyond 1e-3");
  }
  if (renorm != nullptr) *renorm = factor;
  return out;
}

AffineMap family_mean_map(const DeformableFamily& family,
                          const ThetaQuadrature& quad) {
  const int d = family.dim();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
  double mass = 0.0;
  for (int r = 0; r < quad.count(); ++r) {
    const Eigen::VectorXd theta = quad.nodes.row(r).transpose();
    const double w = quad.weights[r] * family.g(theta);
    if (w == 0.0) continue;
    const AffineMap map = family.map_at(theta);
    A += w * map.A();
    b += w * map.b();
    mass += w;
  }
  if (!(mass > 0.0)) throw InvariantError("mean map: g has no quadrature mass");
  return AffineMap(A / mass, b / mass);
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> centered_params(
    const DeformableFamily& family, const Eigen::VectorXd& theta,
    const AffineMap& mean_map) {
  const AffineMap map = family.map_at(theta);
  const Eigen::MatrixXd Abar_inv = mean_map.A().inverse();
  Eigen::MatrixXd Ac = map.A() * Abar_inv;
  Eigen::VectorXd bc = map.b() - map.A() * Abar_inv * mean_map.b();
  return {std::move(Ac), std::move(bc)};
}

GridDensity population_barycenter(const DeformableFamily& family,
                                  const ThetaQuadrature& quad) {
  return pushforward_affine(family.template_density(),
                            family_mean_map(family, quad));
}

GridDensity population_barycenter_on(const DeformableFamily& family,
                                     const ThetaQuadrature& quad,
                                     const GridGeometry& target) {
  return pushforward_affine_to(family.template_density(),
                               family_mean_map(family, quad), target);
}

}  // namespace wbary
