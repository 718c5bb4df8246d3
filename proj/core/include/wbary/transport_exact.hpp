#pragma once

#include <vector>

#include "wbary/measures.hpp"

namespace wbary {

/// Sparse entry of an optimal coupling.
struct FlowEntry {
  int i;        // source atom
  int j;        // target atom
  double mass;
};

/// Certified solution of the discrete Monge-Kantorovich problem.
///
/// `mu` and `nu` are the solved measures (duplicate support points of the
/// inputs are pre-merged by summing weights, so they may be smaller than the
/// originals).  `u`/`v` are the LP dual potentials; optimality is certified
/// by dual feasibility (c_ij - u_i - v_j >= -1e-9 everywhere) together with
/// complementary slackness on the support of the plan.
struct LpSolution {
  double cost = 0.0;
  DiscreteMeasure mu;
  DiscreteMeasure nu;
  std::vector<FlowEntry> flows;
  Eigen::VectorXd u;
  Eigen::VectorXd v;
  double dual_feasibility = 0.0;   // most negative reduced cost seen
  double slackness = 0.0;          // max |c_ij - u_i - v_j| on the support

  TransportPlan plan() const;      // dense coupling over (mu, nu)
};

/// Exact squared 2-Wasserstein distance between discrete measures via a
/// transportation network simplex.  Requires equal dimensions and equal
/// domain boxes; SizeError above `atom_cap` atoms per side.
LpSolution w2sq_lp(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                   int atom_cap = 2000);

/// Cost-only variant (skips building the solution scaffolding copies).
double w2sq_lp_cost(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                    int atom_cap = 2000);

/// Birkhoff-vertex brute force: minimum over all m! permutations.  Scope:
/// equal atom counts m = n <= 8 with uniform weights exactly 1/m.
double w2sq_permutation_oracle(const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu);

/// Conditional-mean map of a plan: row i maps to sum_j gamma_ij y_j / w_i.
/// Rows with zero weight keep their own location.
Eigen::MatrixXd barycentric_projection(const TransportPlan& plan);

/// Merges exactly-coincident support points by summing their weights (the
/// same pre-merge the LP applies internally).
DiscreteMeasure merge_duplicate_atoms(const DiscreteMeasure& m);

/// Dispatching exact distance: the closed-form quantile integral for 1-d
/// inputs (equal to the LP value within 1e-9), the network simplex otherwise.
double w2sq_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                     int atom_cap = 2000);

}  // namespace wbary
