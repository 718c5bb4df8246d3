#pragma once

#include <span>
#include <vector>

#include "wbary/measures.hpp"

namespace wbary {

/// Generalized inverse CDF on (0, 1], stored as segments over a partition
/// 0 = y_0 < y_1 < ... < y_K = 1.  Segment k covers (y_{k-1}, y_k] and is
/// linear from `lo[k]` (right limit at y_{k-1}) to `hi[k]` (value at y_k).
/// Step functions have lo[k] == hi[k]; jumps between segments are allowed
/// upward, so the function is nondecreasing and left-continuous — exactly the
/// inf{x : F(x) >= y} convention for discrete measures.
class QuantileFn {
 public:
  QuantileFn(std::vector<double> breakpoints, std::vector<double> lo,
             std::vector<double> hi);

  static QuantileFn from(const DiscreteMeasure& m);
  static QuantileFn from(const GridDensity& g);
  static QuantileFn from_measure(const Measure& m);

  /// Evaluation at y in (0, 1]; RangeError outside.
  double operator()(double y) const;

  int segments() const { return static_cast<int>(bp_.size()); }
  const std::vector<double>& breakpoints() const { return bp_; }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }

  double min_value() const { return lo_.front(); }
  double max_value() const { return hi_.back(); }

 private:
  std::vector<double> bp_;  // right endpoints, strictly increasing, back()==1
  std::vector<double> lo_;
  std::vector<double> hi_;
};

/// Right-continuous CDF F(x) of a 1-d measure.
double cdf(const Measure& m, double x);

/// CDF evaluated through a quantile representation (the partial sums match
/// the quantile's breakpoints to the last ulp, keeping the Galois
/// inequalities exact).
double cdf_from_quantile(const QuantileFn& q, double x);

/// Left-continuous generalized inverse F^{-1}(y), y in (0, 1].
double quantile(const Measure& m, double y);

/// Exact L^2 distance between two quantile functions on the merged partition.
double w2sq_quantiles(const QuantileFn& a, const QuantileFn& b);

/// Squared 2-Wasserstein distance between 1-d measures (exact integral of the
/// squared quantile difference).  Requires equal domain boxes.
double w2sq_1d(const Measure& mu, const Measure& nu);

/// Monotone transport map T = F_nu^{-1} o F_mu0 of an absolutely continuous
/// 1-d source onto nu.
class MonotoneMap1D {
 public:
  MonotoneMap1D(const GridDensity& mu0, QuantileFn target_quantile);
  double operator()(double x) const;

 private:
  QuantileFn source_quantile_;
  QuantileFn q_;
};

MonotoneMap1D optimal_map_1d(const Measure& mu0, const Measure& nu);

/// Pointwise weighted average of quantile functions on the merged partition.
QuantileFn quantile_mean(std::span<const QuantileFn> quantiles,
                         const Eigen::VectorXd& weights);

/// Streaming variant of quantile_mean for large collections.
class QuantileMeanAccumulator {
 public:
  void add(const QuantileFn& q, double weight);
  QuantileFn finish() const;  // requires total weight ~ 1

 private:
  bool empty_ = true;
  double total_weight_ = 0.0;
  std::vector<double> bp_, lo_, hi_;
};

/// Discrete measure induced by a quantile function: step segments map to
/// atoms directly, linear segments are split into at most `max_atoms`
/// mass-weighted sub-steps (each atom at the segment's midpoint value).
DiscreteMeasure measure_from_quantile(const QuantileFn& q, const Box& domain,
                                      int max_atoms = 4096);

/// Weighted Wasserstein barycenter of 1-d measures via quantile averaging.
DiscreteMeasure barycenter_1d(std::span<const Measure> measures,
                              const Eigen::VectorXd& weights,
                              int max_atoms = 4096);

}  // namespace wbary
