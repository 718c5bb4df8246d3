#include "wbary/transport1d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wbary/errors.hpp"

namespace wbary {

namespace {

void require_1d(const Measure& m, const char* what) {
  if (measure_dim(m) != 1) {
    throw DimensionError(std::string(what) + ": measure must be 1-d");
  }
}

// Value of segment k at y, where y lies in (bp[k-1], bp[k]].
double segment_value(const std::vector<double>& bp,
                     const std::vector<double>& lo,
                     const std::vector<double>& hi, std::size_t k, double y) {
  const double y0 = k == 0 ? 0.0 : bp[k - 1];
  const double y1 = bp[k];
  if (lo[k] == hi[k] || y1 == y0) return hi[k];
  const double t = (y - y0) / (y1 - y0);
  return lo[k] + t * (hi[k] - lo[k]);
}

// Right limit of segment k at y (identical to segment_value except that the
// left endpoint evaluates to lo[k] exactly).
double segment_value_right(const std::vector<double>& bp,
                           const std::vector<double>& lo,
                           const std::vector<double>& hi, std::size_t k,
                           double y) {
  return segment_value(bp, lo, hi, k, y);
}

// Exact integral over an interval of width w of the square of the linear
// function taking values d0 at the left and d1 at the right endpoint.
double integrate_square(double w, double d0, double d1) {
  return w * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
}

}  // namespace

QuantileFn::QuantileFn(std::vector<double> breakpoints, std::vector<double> lo,
                       std::vector<double> hi)
    : bp_(std::move(breakpoints)), lo_(std::move(lo)), hi_(std::move(hi)) {
  if (bp_.empty() || bp_.size() != lo_.size() || bp_.size() != hi_.size()) {
    throw InvariantError("quantile function: inconsistent segment data");
  }
  double prev = 0.0;
  double prev_hi = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < bp_.size(); ++k) {
    if (!(bp_[k] > prev)) {
      throw InvariantError("quantile function: breakpoints must increase");
    }
    // Averages of monotone inputs can dip below monotone by float dust; snap
    // that away, reject anything larger.
    const double tol = 1e-9 * (1.0 + std::abs(prev_hi));
    if (hi_[k] < lo_[k] - tol || lo_[k] < prev_hi - tol) {
      throw InvariantError("quantile function: values must be nondecreasing");
    }
    if (lo_[k] < prev_hi) lo_[k] = prev_hi;
    if (hi_[k] < lo_[k]) hi_[k] = lo_[k];
    prev = bp_[k];
    prev_hi = hi_[k];
  }
  if (bp_.back() != 1.0) {
    if (std::abs(bp_.back() - 1.0) > 1e-9) {
      throw InvariantError("quantile function: last breakpoint must be 1");
    }
    bp_.back() = 1.0;
  }
}

QuantileFn QuantileFn::from(const DiscreteMeasure& m) {
  if (m.dim() != 1) throw DimensionError("quantile: measure must be 1-d");
  const int n = m.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return m.points()(a, 0) < m.points()(b, 0);
  });
  std::vector<double> bp, lo, hi;
  bp.reserve(static_cast<std::size_t>(n));
  double cum = 0.0;
  for (int r = 0; r < n; ++r) {
    const double x = m.points()(order[static_cast<std::size_t>(r)], 0);
    const double w = m.weights()[order[static_cast<std::size_t>(r)]];
    cum += w;
    if (!bp.empty() && hi.back() == x) {
      bp.back() = cum;  // merge equal support points
    } else {
      bp.push_back(cum);
      lo.push_back(x);
      hi.push_back(x);
    }
  }
  bp.back() = 1.0;
  return QuantileFn(std::move(bp), std::move(lo), std::move(hi));
}

QuantileFn QuantileFn::from(const GridDensity& g) {
  if (g.dim() != 1) throw DimensionError("quantile: density must be 1-d");
  const GridGeometry& geom = g.geometry();
  const Eigen::VectorXd mass = g.masses();
  const double total = mass.sum();
  std::vector<double> bp, lo, hi;
  double cum = 0.0;
  for (int k = 0; k < mass.size(); ++k) {
    if (mass[k] <= 0.0) continue;
    const double l = geom.origin[0] + k * geom.cell[0];
    cum += mass[k] / total;
    bp.push_back(cum);
    lo.push_back(l);
    hi.push_back(l + geom.cell[0]);
  }
  if (bp.empty()) throw InvariantError("quantile: density has no mass");
  bp.back() = 1.0;
  return QuantileFn(std::move(bp), std::move(lo), std::move(hi));
}

QuantileFn QuantileFn::from_measure(const Measure& m) {
  return std::visit([](const auto& v) { return QuantileFn::from(v); }, m);
}

double QuantileFn::operator()(double y) const {
  if (!(y > 0.0) || y > 1.0) {
    throw RangeError("quantile argument must lie in (0, 1]");
  }
  const auto it = std::lower_bound(bp_.begin(), bp_.end(), y);
  const std::size_t k = static_cast<std::size_t>(it - bp_.begin());
  return segment_value(bp_, lo_, hi_, std::min(k, bp_.size() - 1), y);
}

double cdf_from_quantile(const QuantileFn& q, double x) {
  const auto& bp = q.breakpoints();
  double acc = 0.0;
  for (std::size_t k = 0; k < bp.size(); ++k) {
    const double lo = q.lo()[k];
    const double hi = q.hi()[k];
    if (x >= hi) {
      acc = bp[k];
      continue;
    }
    if (x >= lo && hi > lo) {
      const double y0 = k == 0 ? 0.0 : bp[k - 1];
      acc = y0 + (bp[k] - y0) * (x - lo) / (hi - lo);
    }
    break;
  }
  return std::min(acc, 1.0);
}

double cdf(const Measure& m, double x) {
  require_1d(m, "cdf");
  // Evaluate through the quantile representation so that the partial sums
  // are accumulated in exactly the same order as the quantile breakpoints;
  // this keeps the Galois inequalities F^{-1}(F(x)) <= x and
  // F(F^{-1}(y)) >= y valid to the last ulp.
  return cdf_from_quantile(QuantileFn::from_measure(m), x);
}

double quantile(const Measure& m, double y) {
  return QuantileFn::from_measure(m)(y);
}

double w2sq_quantiles(const QuantileFn& a, const QuantileFn& b) {
  const auto& abp = a.breakpoints();
  const auto& bbp = b.breakpoints();
  std::size_t i = 0, j = 0;
  double y_prev = 0.0;
  double acc = 0.0;
  while (i < abp.size() && j < bbp.size()) {
    const double y = std::min(abp[i], bbp[j]);
    const double w = y - y_prev;
    if (w > 0.0) {
      const double a0 = segment_value_right(abp, a.lo(), a.hi(), i, y_prev);
      const double a1 = segment_value(abp, a.lo(), a.hi(), i, y);
      const double b0 = segment_value_right(bbp, b.lo(), b.hi(), j, y_prev);
      const double b1 = segment_value(bbp, b.lo(), b.hi(), j, y);
      acc += integrate_square(w, a0 - b0, a1 - b1);
    }
    if (abp[i] == y) ++i;
    if (bbp[j] == y) ++j;
    y_prev = y;
  }
  return acc;
}

double w2sq_1d(const Measure& mu, const Measure& nu) {
  require_1d(mu, "w2sq_1d");
  require_1d(nu, "w2sq_1d");
  if (!measure_domain(mu).approx_equal(measure_domain(nu))) {
    throw DomainError("w2sq_1d: measures declare different domain boxes");
  }
  return w2sq_quantiles(QuantileFn::from_measure(mu),
                        QuantileFn::from_measure(nu));
}

MonotoneMap1D::MonotoneMap1D(const GridDensity& mu0,
                             QuantileFn target_quantile)
    : source_quantile_(QuantileFn::from(mu0)),
      q_(std::move(target_quantile)) {}

double MonotoneMap1D::operator()(double x) const {
  const double y = cdf_from_quantile(source_quantile_, x);
  if (y <= 0.0) return q_.min_value();
  return q_(std::min(y, 1.0));
}

MonotoneMap1D optimal_map_1d(const Measure& mu0, const Measure& nu) {
  require_1d(mu0, "optimal_map_1d");
  require_1d(nu, "optimal_map_1d");
  if (!std::holds_alternative<GridDensity>(mu0)) {
    throw AbsContinuityError(
        "optimal_map_1d: the source must be absolutely continuous (a grid density)");
  }
  return MonotoneMap1D(std::get<GridDensity>(mu0),
                       QuantileFn::from_measure(nu));
}

namespace {

struct MergeState {
  std::vector<double> bp, lo, hi;
};

// Adds `w * q` onto the running sum, re-expressing the sum on the merged
// breakpoint partition.  Both operands are piecewise linear with jumps, which
// is closed under pointwise averaging on the union of partitions.
MergeState merge_add(const MergeState& acc, const QuantileFn& q, double w) {
  MergeState out;
  const auto& abp = acc.bp;
  const auto& qbp = q.breakpoints();
  std::size_t i = 0, j = 0;
  double y_prev = 0.0;
  const bool acc_empty = abp.empty();
  while ((acc_empty || i < abp.size()) && j < qbp.size()) {
    const double ya = acc_empty ? 1.0 : abp[i];
    const double y = std::min(ya, qbp[j]);
    if (y > y_prev) {
      double l = 0.0, h = 0.0;
      if (!acc_empty) {
        l = segment_value_right(abp, acc.lo, acc.hi, i, y_prev);
        h = segment_value(abp, acc.lo, acc.hi, i, y);
      }
      l += w * segment_value_right(qbp, q.lo(), q.hi(), j, y_prev);
      h += w * segment_value(qbp, q.lo(), q.hi(), j, y);
      out.bp.push_back(y);
      out.lo.push_back(l);
      out.hi.push_back(h);
    }
    if (!acc_empty && abp[i] == y) ++i;
    if (qbp[j] == y) ++j;
    y_prev = y;
    if (acc_empty && j >= qbp.size()) break;
  }
  return out;
}

}  // namespace

void QuantileMeanAccumulator::add(const QuantileFn& q, double weight) {
  MergeState acc{std::move(bp_), std::move(lo_), std::move(hi_)};
  if (empty_) acc = MergeState{};
  MergeState out = merge_add(acc, q, weight);
  bp_ = std::move(out.bp);
  lo_ = std::move(out.lo);
  hi_ = std::move(out.hi);
  total_weight_ += weight;
  empty_ = false;
}

QuantileFn QuantileMeanAccumulator::finish() const {
  if (empty_) throw InvariantError("quantile mean: no inputs");
  if (std::abs(total_weight_ - 1.0) > 1e-9) {
    throw InvariantError("quantile mean: weights must sum to 1");
  }
  return QuantileFn(bp_, lo_, hi_);
}

QuantileFn quantile_mean(std::span<const QuantileFn> quantiles,
                         const Eigen::VectorXd& weights) {
  if (quantiles.empty() ||
      static_cast<int>(quantiles.size()) != weights.size()) {
    throw InvariantError("quantile mean: need matching quantiles and weights");
  }
  QuantileMeanAccumulator acc;
  for (std::size_t k = 0; k < quantiles.size(); ++k) {
    acc.add(quantiles[k], weights[static_cast<int>(k)]);
  }
  return acc.finish();
}

DiscreteMeasure measure_from_quantile(const QuantileFn& q, const Box& domain,
                                      int max_atoms) {
  const auto& bp = q.breakpoints();
  std::vector<double> xs, ws;
  // Linear segments share the sub-step budget in proportion to their width.
  double linear_width = 0.0;
  for (std::size_t k = 0; k < bp.size(); ++k) {
    if (q.hi()[k] > q.lo()[k]) {
      linear_width += bp[k] - (k == 0 ? 0.0 : bp[k - 1]);
    }
  }
  const int budget = std::max(1, max_atoms - static_cast<int>(bp.size()));
  for (std::size_t k = 0; k < bp.size(); ++k) {
    const double y0 = k == 0 ? 0.0 : bp[k - 1];
    const double y1 = bp[k];
    const double w = y1 - y0;
    if (w <= 0.0) continue;
    if (q.hi()[k] == q.lo()[k]) {
      xs.push_back(q.hi()[k]);
      ws.push_back(w);
      continue;
    }
    const int pieces = std::max(
        1, static_cast<int>(std::ceil(budget * w / linear_width)));
    for (int p = 0; p < pieces; ++p) {
      const double yl = y0 + w * p / pieces;
      const double yr = y0 + w * (p + 1) / pieces;
      const double ym = 0.5 * (yl + yr);
      const double t = (ym - y0) / w;
      xs.push_back(q.lo()[k] + t * (q.hi()[k] - q.lo()[k]));
      ws.push_back(yr - yl);
    }
  }
  Eigen::MatrixXd pts(static_cast<int>(xs.size()), 1);
  Eigen::VectorXd wv(static_cast<int>(ws.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    pts(static_cast<int>(i), 0) = xs[i];
    wv[static_cast<int>(i)] = ws[i];
  }
  return DiscreteMeasure(std::move(pts), std::move(wv), domain);
}

DiscreteMeasure barycenter_1d(std::span<const Measure> measures,
                              const Eigen::VectorXd& weights, int max_atoms) {
  if (measures.empty() ||
      static_cast<int>(measures.size()) != weights.size()) {
    throw InvariantError("barycenter_1d: need matching measures and weights");
  }
  Box domain = measure_domain(measures.front());
  QuantileMeanAccumulator acc;
  for (std::size_t k = 0; k < measures.size(); ++k) {
    require_1d(measures[k], "barycenter_1d");
    if (!measure_domain(measures[k]).approx_equal(domain)) {
      throw DomainError("barycenter_1d: measures declare different domain boxes");
    }
    acc.add(QuantileFn::from_measure(measures[k]), weights[static_cast<int>(k)]);
  }
  return measure_from_quantile(acc.finish(), domain, max_atoms);
}

}  // namespace wbary
