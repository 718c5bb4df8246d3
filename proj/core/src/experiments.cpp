#include "wbary/experiments.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "wbary/barycenter.hpp"
#include "wbary/errors.hpp"
#include "wbary/parallel.hpp"
#include "wbary/rng.hpp"
#include "wbary/transport1d.hpp"
#include "wbary/transport_exact.hpp"

namespace wbary {

namespace {

double quantile_of_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = p * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return (1.0 - t) * sorted[lo] + t * sorted[hi];
}

double operator_norm(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<AggregateRow> aggregate_records(
    std::span<const ReplicateRecord> records) {
  std::vector<int> ns;
  for (const ReplicateRecord& r : records) {
    if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
  }
  std::vector<AggregateRow> rows;
  for (const int n : ns) {
    std::vector<double> d2;
    for (const ReplicateRecord& r : records) {
      if (r.n == n) d2.push_back(r.d2);
    }
    std::sort(d2.begin(), d2.end());
    AggregateRow row;
    row.n = n;
    row.count = static_cast<int>(d2.size());
    double s = 0.0;
    for (const double v : d2) s += v;
    row.mean = s / static_cast<double>(d2.size());
    row.q10 = quantile_of_sorted(d2, 0.10);
    row.q25 = quantile_of_sorted(d2, 0.25);
    row.median = quantile_of_sorted(d2, 0.50);
    row.q75 = quantile_of_sorted(d2, 0.75);
    row.q90 = quantile_of_sorted(d2, 0.90);
    rows.push_back(row);
  }
  return rows;
}

std::uint64_t checksum_records(std::span<const ReplicateRecord> records) {
  // FNV-1a over the deterministic fields (wall time excluded)
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::string& s) {
    for (const unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const ReplicateRecord& r : records) {
    mix(std::to_string(r.n));
    mix(std::to_string(r.replicate));
    mix(std::to_string(r.seed));
    mix(format_double(r.d2));
  }
  return h;
}

ExperimentReport consistency_run(const DeformableFamily& family,
                                 const ExperimentConfig& config) {
  if (config.n_grid.empty() || config.replicates < 1) {
    throw InvariantError("consistency run: need n values and replicates");
  }
  // matched discretization: one template atom set, pushed through the
  // sample-mean and the population-mean deformation
  const GridGeometry tgrid = GridGeometry::uniform_on(
      family.template_density().domain(), config.grid_cells);
  const DiscreteMeasure atoms0 =
      atoms_on_grid(family.template_density(), tgrid);
  const ThetaQuadrature quad = midpoint_quadrature(
      family.theta_box(),
      std::vector<int>(static_cast<std::size_t>(family.theta_dim()),
                       family.theta_dim() <= 2 ? config.mean_map_nodes : 17));
  const AffineMap mean_map = family_mean_map(family, quad);
  const DiscreteMeasure star =
      pushforward_affine(atoms0, mean_map, family.omega());

  ExperimentReport report;
  report.config = config;
  const std::size_t total =
      config.n_grid.size() * static_cast<std::size_t>(config.replicates);
  report.records.resize(total);
  parallel_for(total, config.threads, [&](std::size_t idx) {
    const std::size_t n_idx = idx / static_cast<std::size_t>(config.replicates);
    const int rep = static_cast<int>(idx % static_cast<std::size_t>(config.replicates));
    const int n = config.n_grid[n_idx];
    const std::uint64_t rec_seed = Rng::derive(config.seed, idx + 1);
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<Eigen::VectorXd> thetas =
        sample_theta(family, rec_seed, n);
    const AffineMap map_n = sample_mean_map(thetas, family);
    const DiscreteMeasure bar_n =
        pushforward_affine(atoms0, map_n, family.omega());
    const double d2 = w2sq_discrete(bar_n, star);
    const auto t1 = std::chrono::steady_clock::now();
    ReplicateRecord& rec = report.records[idx];
    rec.n = n;
    rec.replicate = rep;
    rec.seed = rec_seed;
    rec.d2 = d2;
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
  });
  report.aggregates = aggregate_records(report.records);
  report.checksum = checksum_records(report.records);
  return report;
}

SlopeFit rate_fit(const ExperimentReport& report, int bootstrap,
                  std::uint64_t seed) {
  // group record indices by n
  std::vector<int> ns;
  for (const AggregateRow& row : report.aggregates) ns.push_back(row.n);
  if (static_cast<int>(ns.size()) < 4) {
    throw InsufficientDataError("rate fit: need at least 4 distinct n values");
  }
  std::vector<std::vector<double>> groups(ns.size());
  for (const ReplicateRecord& r : report.records) {
    const auto it = std::find(ns.begin(), ns.end(), r.n);
    groups[static_cast<std::size_t>(it - ns.begin())].push_back(r.d2);
  }
  for (const auto& g : groups) {
    if (static_cast<int>(g.size()) < 50) {
      throw InsufficientDataError("rate fit: need >= 50 replicates per n");
    }
  }
  auto fit_slope = [&](const std::vector<double>& means, double* intercept) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int k = static_cast<int>(means.size());
    for (int i = 0; i < k; ++i) {
      if (!(means[static_cast<std::size_t>(i)] > 0.0)) {
        throw InsufficientDataError("rate fit: nonpositive mean distance");
      }
      const double x = std::log(static_cast<double>(ns[static_cast<std::size_t>(i)]));
      const double y = std::log(means[static_cast<std::size_t>(i)]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    if (intercept != nullptr) *intercept = (sy - slope * sx) / k;
    return slope;
  };

  std::vector<double> means(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    double s = 0.0;
    for (const double v : groups[i]) s += v;
    means[i] = s / static_cast<double>(groups[i].size());
  }
  SlopeFit fit;
  fit.slope = fit_slope(means, &fit.intercept);
  fit.bootstrap = bootstrap;

  std::vector<double> slopes;
  slopes.reserve(static_cast<std::size_t>(bootstrap));
  for (int b = 0; b < bootstrap; ++b) {
    Rng rng(seed, static_cast<std::uint64_t>(b) + 1);
    std::vector<double> bmeans(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const std::vector<double>& g = groups[i];
      double s = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        s += g[static_cast<std::size_t>(rng.below(g.size()))];
      }
      bmeans[i] = s / static_cast<double>(g.size());
    }
    slopes.push_back(fit_slope(bmeans, nullptr));
  }
  std::sort(slopes.begin(), slopes.end());
  fit.ci_lo = quantile_of_sorted(slopes, 0.025);
  fit.ci_hi = quantile_of_sorted(slopes, 0.975);
  return fit;
}

BernsteinConstants bernstein_constants(const DeformableFamily& family,
                                       const ThetaQuadrature& quad) {
  if (family.theta_dim() < 1) throw FamilyError("bernstein: invalid family");
  const AffineMap mean = family_mean_map(family, quad);
  BernsteinConstants c;
  c.dim = family.dim();
  c.eps0_sq = family.template_density().second_moment();
  double mass = 0.0;
  double m1 = 0.0, m2 = 0.0;
  // centered moments by quadrature; maxima over the nodes plus the corners
  for (int r = 0; r < quad.count(); ++r) {
    const Eigen::VectorXd theta = quad.nodes.row(r).transpose();
    const double w = quad.weights[r] * family.g(theta);
    const AffineMap map = family.map_at(theta);
    const double na = operator_norm(map.A() - mean.A());
    const double nb = (map.b() - mean.b()).norm();
    c.b1 = std::max(c.b1, na);
    c.b2 = std::max(c.b2, nb);
    if (w > 0.0) {
      m1 += w * na * na;
      m2 += w * nb * nb;
      mass += w;
    }
  }
  const Box& tb = family.theta_box();
  for (int maskc = 0; maskc < (1 << tb.dim()); ++maskc) {
    Eigen::VectorXd corner(tb.dim());
    for (int a = 0; a < tb.dim(); ++a) {
      corner[a] = (maskc >> a) & 1 ? tb.hi[a] : tb.lo[a];
    }
    const AffineMap map = family.map_at(corner);
    c.b1 = std::max(c.b1, operator_norm(map.A() - mean.A()));
    c.b2 = std::max(c.b2, (map.b() - mean.b()).norm());
  }
  if (!(mass > 0.0)) throw FamilyError("bernstein: g has no quadrature mass");
  c.sigma1_sq = m1 / mass;
  c.sigma2_sq = m2 / mass;
  return c;
}

double bernstein_envelope(const BernsteinConstants& c, double t, int n) {
  if (t < 0.0) throw RangeError("bernstein envelope: t must be nonnegative");
  if (n < 1) throw RangeError("bernstein envelope: n must be positive");
  if (t == 0.0) return 1.0;
  const double sqrt_t = std::sqrt(t);
  const double eps0 = std::sqrt(c.eps0_sq);
  double bound = 0.0;
  if (c.b1 > 0.0 || c.sigma1_sq > 0.0) {
    const double denom =
        8.0 * c.eps0_sq * c.sigma1_sq + (4.0 / 3.0) * c.b1 * eps0 * sqrt_t;
    bound += 2.0 * c.dim * std::exp(-(n * t) / denom);
  }
  if (c.b2 > 0.0 || c.sigma2_sq > 0.0) {
    const double denom = 8.0 * c.sigma2_sq + (4.0 / 3.0) * c.b2 * sqrt_t;
    bound += 2.0 * std::exp(-(n * t) / denom);
  }
  return std::clamp(bound, 0.0, 1.0);
}

double bernstein_envelope(const DeformableFamily& family, double t, int n,
                          const ThetaQuadrature& quad) {
  return bernstein_envelope(bernstein_constants(family, quad), t, n);
}

std::vector<EnvelopeRow> envelope_check(const ExperimentReport& report,
                                        const DeformableFamily& family,
                                        std::span<const double> t_grid,
                                        const ThetaQuadrature& quad) {
  const BernsteinConstants c = bernstein_constants(family, quad);
  std::vector<EnvelopeRow> rows;
  for (const AggregateRow& agg : report.aggregates) {
    for (const double t : t_grid) {
      int exceed = 0, count = 0;
      for (const ReplicateRecord& r : report.records) {
        if (r.n != agg.n) continue;
        ++count;
        if (r.d2 >= t) ++exceed;
      }
      EnvelopeRow row;
      row.n = agg.n;
      row.t = t;
      row.empirical_tail =
          count == 0 ? 0.0 : static_cast<double>(exceed) / count;
      row.bound = bernstein_envelope(c, t, agg.n);
      const double se =
          count == 0 ? 0.0
                     : std::sqrt(row.empirical_tail *
                                 (1.0 - row.empirical_tail) / count);
      row.ok = row.empirical_tail <= row.bound + 3.0 * se;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<double> tail_quantiles(const ExperimentReport& report, int n,
                                   std::span<const double> probs) {
  std::vector<double> d2;
  for (const ReplicateRecord& r : report.records) {
    if (r.n == n) d2.push_back(r.d2);
  }
  if (d2.empty()) throw InsufficientDataError("tail quantiles: no records for n");
  std::sort(d2.begin(), d2.end());
  std::vector<double> out;
  for (const double p : probs) out.push_back(quantile_of_sorted(d2, p));
  return out;
}

MeanComparison euclid_vs_wasserstein(const DeformableFamily& family, int n,
                                     std::uint64_t seed, int grid_cells) {
  if (family.kind() != DeformableFamily::Kind::Shift) {
    throw FamilyError("euclid_vs_wasserstein: needs a shift family");
  }
  if (n < 1) throw RangeError("euclid_vs_wasserstein: n must be positive");
  const GridGeometry grid = family.omega_grid(grid_cells);
  const double vol = grid.cell_volume();

  const std::vector<Eigen::VectorXd> thetas = sample_theta(family, seed, n);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(grid.cell_count());
  Eigen::VectorXd theta_mean = Eigen::VectorXd::Zero(family.theta_dim());
  for (const Eigen::VectorXd& theta : thetas) {
    acc += family.member_grid(theta, grid).values();
    theta_mean += theta;
  }
  theta_mean /= static_cast<double>(n);
  const GridDensity euclid(grid, acc / static_cast<double>(n));

  // q0 * g by direct quadrature over the shifts
  const ThetaQuadrature fine = midpoint_quadrature(
      family.theta_box(),
      std::vector<int>(static_cast<std::size_t>(family.theta_dim()),
                       family.theta_dim() == 1 ? 513 : 65));
  Eigen::VectorXd conv = Eigen::VectorXd::Zero(grid.cell_count());
  double gmass = 0.0;
  for (int r = 0; r < fine.count(); ++r) {
    const Eigen::VectorXd theta = fine.nodes.row(r).transpose();
    const double w = fine.weights[r] * family.g(theta);
    if (w <= 0.0) continue;
    conv += w * family.member_grid(theta, grid).values();
    gmass += w;
  }
  const GridDensity convolution(grid, conv / gmass);

  const GridDensity template_on_grid =
      resample(family.template_density(), grid);

  MeanComparison out;
  out.n = n;
  out.l1_euclid_to_convolution =
      (euclid.values() - convolution.values()).cwiseAbs().sum() * vol;
  out.l1_euclid_to_template =
      (euclid.values() - template_on_grid.values()).cwiseAbs().sum() * vol;
  out.l1_convolution_to_template =
      (convolution.values() - template_on_grid.values()).cwiseAbs().sum() * vol;
  const GridDensity wass = pushforward_affine_to(
      family.template_density(), AffineMap::shift(theta_mean), grid);
  out.w2_wasserstein_to_template = std::sqrt(
      w2sq_1d(Measure(wass), Measure(template_on_grid)));
  out.mean_shift_norm = theta_mean.norm();
  return out;
}

// ---------------------------------------------------------------------------
// Report files.
// ---------------------------------------------------------------------------

void write_report(const ExperimentReport& report,
                  std::span<const EnvelopeRow> envelope,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    // config echo: every record is reproducible from this plus its seed
    std::ofstream out(dir / "config.json");
    out << "{\n  \"family\": \"" << report.config.family_label << "\",\n"
        << "  \"n_grid\": [";
    for (std::size_t i = 0; i < report.config.n_grid.size(); ++i) {
      out << (i ? ", " : "") << report.config.n_grid[i];
    }
    out << "],\n  \"replicates\": " << report.config.replicates << ",\n"
        << "  \"seed\": " << report.config.seed << ",\n"
        << "  \"grid_cells\": " << report.config.grid_cells << ",\n"
        << "  \"mean_map_nodes\": " << report.config.mean_map_nodes << ",\n"
        << "  \"checksum\": \"" << std::hex << report.checksum << std::dec
        << "\"\n}\n";
  }
  {
    std::ofstream out(dir / "records.csv");
    out << "n,replicate,seed,d2_w2,wall_ms\n";
    for (const ReplicateRecord& r : report.records) {
      out << r.n << ',' << r.replicate << ',' << r.seed << ','
          << format_double(r.d2) << ',' << std::fixed << std::setprecision(3)
          << r.wall_ms << "\n";
      out.unsetf(std::ios_base::floatfield);
    }
  }
  {
    std::ofstream out(dir / "aggregates.csv");
    out << "n,count,mean_d2,q10,q25,median,q75,q90\n";
    for (const AggregateRow& a : report.aggregates) {
      out << a.n << ',' << a.count << ',' << format_double(a.mean) << ','
          << format_double(a.q10) << ',' << format_double(a.q25) << ','
          << format_double(a.median) << ',' << format_double(a.q75) << ','
          << format_double(a.q90) << "\n";
    }
  }
  {
    std::ofstream out(dir / "mean_vs_n.dat");
    out << "# n  mean_d2\n";
    for (const AggregateRow& a : report.aggregates) {
      out << a.n << "  " << format_double(a.mean) << "\n";
    }
  }
  if (report.slope.has_value()) {
    std::ofstream out(dir / "slope.json");
    out << "{\n"
        << "  \"slope\": " << format_double(report.slope->slope) << ",\n"
        << "  \"intercept\": " << format_double(report.slope->intercept)
        << ",\n"
        << "  \"ci_lo\": " << format_double(report.slope->ci_lo) << ",\n"
        << "  \"ci_hi\": " << format_double(report.slope->ci_hi) << ",\n"
        << "  \"bootstrap\": " << report.slope->bootstrap << ",\n"
        << "  \"checksum\": \"" << std::hex << report.checksum << std::dec
        << "\"\n}\n";
  }
  if (!envelope.empty()) {
    std::ofstream csv(dir / "envelope.csv");
    std::ofstream dat(dir / "envelope.dat");
    csv << "n,t,empirical_tail,bound,ok\n";
    dat << "# n  t  empirical_tail  bound\n";
    for (const EnvelopeRow& row : envelope) {
      csv << row.n << ',' << format_double(row.t) << ','
          << format_double(row.empirical_tail) << ','
          << format_double(row.bound) << ',' << (row.ok ? 1 : 0) << "\n";
      dat << row.n << "  " << format_double(row.t) << "  "
          << format_double(row.empirical_tail) << "  "
          << format_double(row.bound) << "\n";
    }
  }
}

}  // namespace wbary
