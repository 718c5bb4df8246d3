#include "wbary/transport_exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "wbary/errors.hpp"
#include "wbary/transport1d.hpp"

namespace wbary {

namespace {

// ---------------------------------------------------------------------------
// Transportation network simplex on the dense bipartite graph.
//
// Basis arcs form a spanning tree over the m + n nodes.  Each pivot brings in
// the (or a) most negative reduced-cost arc found by block search, pushes
// flow around the unique tree cycle and drops a blocking arc.  Potentials and
// the tree structure are recomputed by a rooted DFS after every pivot, which
// is O(m + n) and cheap next to the arc scans at the sizes this library
// targets (cap 2000 atoms per side).  If a run degenerates into stalling the
// pivot rule switches to Bland's rule, which cannot cycle.
// ---------------------------------------------------------------------------

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct BasisArc {
  int src;      // source node index in [0, m)
  int snk;      // sink node index in [0, n)
  double flow;
  bool alive;
};

class NetworkSimplex {
 public:
  NetworkSimplex(const RowMat& cost, const Eigen::VectorXd& a,
                 const Eigen::VectorXd& b)
      : cost_(cost), a_(a), b_(b), m_(static_cast<int>(a.size())),
        n_(static_cast<int>(b.size())), nodes_(m_ + n_) {
    const double scale = std::max(1.0, cost_.cwiseAbs().maxCoeff());
    enter_eps_ = 1e-13 * scale;
    incident_.resize(static_cast<std::size_t>(nodes_));
    parent_.assign(static_cast<std::size_t>(nodes_), -1);
    parent_arc_.assign(static_cast<std::size_t>(nodes_), -1);
    depth_.assign(static_cast<std::size_t>(nodes_), 0);
    pot_.assign(static_cast<std::size_t>(nodes_), 0.0);
    order_.reserve(static_cast<std::size_t>(nodes_));
  }

  void solve() {
    northwest_corner();
    refresh_tree();
    long long pivots = 0;
    const long long bland_after = 64LL * (m_ + n_) + 4096;
    const long long hard_cap = 4000000;
    bool bland = false;
    while (true) {
      const int enter = bland ? find_entering_bland() : find_entering_block();
      if (enter < 0) break;
      pivot(enter / n_, enter % n_);
      refresh_tree();
      if (++pivots == bland_after) bland = true;
      if (pivots > hard_cap) {
        throw Error("network simplex failed to terminate (degeneracy guard)");
      }
    }
  }

  double objective() const {
    double acc = 0.0;
    for (const BasisArc& arc : arcs_) {
      if (arc.alive && arc.flow > 0.0) acc += arc.flow * cost_(arc.src, arc.snk);
    }
    return acc;
  }

  std::vector<FlowEntry> flows() const {
    std::vector<FlowEntry> out;
    for (const BasisArc& arc : arcs_) {
      if (arc.alive && arc.flow > 0.0) out.push_back({arc.src, arc.snk, arc.flow});
    }
    std::sort(out.begin(), out.end(), [](const FlowEntry& x, const FlowEntry& y) {
      return x.i != y.i ? x.i < y.i : x.j < y.j;
    });
    return out;
  }

  Eigen::VectorXd duals_u() const {
    Eigen::VectorXd u(m_);
    for (int i = 0; i < m_; ++i) u[i] = pot_[static_cast<std::size_t>(i)];
    return u;
  }

  Eigen::VectorXd duals_v() const {
    Eigen::VectorXd v(n_);
    for (int j = 0; j < n_; ++j) v[j] = pot_[static_cast<std::size_t>(m_ + j)];
    return v;
  }

  // Certification: dual feasibility everywhere, complementary slackness on
  // the support, marginals reproduced.  Throws if the solve went wrong.
  void certify(double tol, double* dual_feas, double* slackness) const {
    double worst_r = 0.0;
    for (int i = 0; i < m_; ++i) {
      const double ui = pot_[static_cast<std::size_t>(i)];
      for (int j = 0; j < n_; ++j) {
        const double r = cost_(i, j) - ui - pot_[static_cast<std::size_t>(m_ + j)];
        worst_r = std::min(worst_r, r);
      }
    }
    double worst_slack = 0.0;
    Eigen::VectorXd row = Eigen::VectorXd::Zero(m_);
    Eigen::VectorXd col = Eigen::VectorXd::Zero(n_);
    for (const BasisArc& arc : arcs_) {
      if (!arc.alive) continue;
      row[arc.src] += arc.flow;
      col[arc.snk] += arc.flow;
      if (arc.flow > 0.0) {
        const double r = cost_(arc.src, arc.snk) -
                         pot_[static_cast<std::size_t>(arc.src)] -
                         pot_[static_cast<std::size_t>(m_ + arc.snk)];
        worst_slack = std::max(worst_slack, std::abs(r));
      }
    }
    const double marg = std::max((row - a_).cwiseAbs().maxCoeff(),
                                 (col - b_).cwiseAbs().maxCoeff());
    if (worst_r < -tol || worst_slack > tol || marg > tol) {
      throw Error("network simplex: optimality certificate failed");
    }
    if (dual_feas != nullptr) *dual_feas = worst_r;
    if (slackness != nullptr) *slackness = worst_slack;
  }

 private:
  void add_arc(int i, int j, double flow) {
    const int id = static_cast<int>(arcs_.size());
    arcs_.push_back({i, j, flow, true});
    incident_[static_cast<std::size_t>(i)].push_back(id);
    incident_[static_cast<std::size_t>(m_ + j)].push_back(id);
  }

  void drop_arc(int id) {
    BasisArc& arc = arcs_[static_cast<std::size_t>(id)];
    arc.alive = false;
    auto& li = incident_[static_cast<std::size_t>(arc.src)];
    li.erase(std::find(li.begin(), li.end(), id));
    auto& lj = incident_[static_cast<std::size_t>(m_ + arc.snk)];
    lj.erase(std::find(lj.begin(), lj.end(), id));
  }

  void northwest_corner() {
    int i = 0, j = 0;
    double ra = a_[0], rb = b_[0];
    while (true) {
      if (i == m_ - 1 && j == n_ - 1) {
        add_arc(i, j, std::max(0.0, std::max(ra, rb)));
        break;
      }
      const double t = std::max(0.0, std::min(ra, rb));
      add_arc(i, j, t);
      ra -= t;
      rb -= t;
      if ((ra <= rb && i < m_ - 1) || j == n_ - 1) {
        ++i;
        ra = a_[i];
      } else {
        ++j;
        rb = b_[j];
      }
    }
  }

  // Rebuilds parent/depth/potentials from the incident lists (root = node 0).
  void refresh_tree() {
    order_.clear();
    parent_[0] = -1;
    parent_arc_[0] = -1;
    depth_[0] = 0;
    pot_[0] = 0.0;
    order_.push_back(0);
    std::vector<bool> seen(static_cast<std::size_t>(nodes_), false);
    seen[0] = true;
    for (std::size_t head = 0; head < order_.size(); ++head) {
      const int x = order_[head];
      for (const int id : incident_[static_cast<std::size_t>(x)]) {
        const BasisArc& arc = arcs_[static_cast<std::size_t>(id)];
        const int y = (x == arc.src) ? m_ + arc.snk : arc.src;
        if (seen[static_cast<std::size_t>(y)]) continue;
        seen[static_cast<std::size_t>(y)] = true;
        parent_[static_cast<std::size_t>(y)] = x;
        parent_arc_[static_cast<std::size_t>(y)] = id;
        depth_[static_cast<std::size_t>(y)] = depth_[static_cast<std::size_t>(x)] + 1;
        pot_[static_cast<std::size_t>(y)] =
            cost_(arc.src, arc.snk) - pot_[static_cast<std::size_t>(x)];
        order_.push_back(y);
      }
    }
    if (static_cast<int>(order_.size()) != nodes_) {
      throw Error("network simplex: basis lost tree connectivity");
    }
  }

  double reduced_cost(int flat) const {
    const int i = flat / n_;
    const int j = flat % n_;
    return cost_(i, j) - pot_[static_cast<std::size_t>(i)] -
           pot_[static_cast<std::size_t>(m_ + j)];
  }

  int find_entering_block() {
    const long long total = static_cast<long long>(m_) * n_;
    const long long block =
        std::max<long long>(1024, total / 64);
    long long scanned = 0;
    long long idx = scan_start_;
    while (scanned < total) {
      double best = -enter_eps_;
      int best_arc = -1;
      const long long stop = std::min(block, total - scanned);
      for (long long k = 0; k < stop; ++k) {
        const int flat = static_cast<int>(idx);
        const double r = reduced_cost(flat);
        if (r < best) {
          best = r;
          best_arc = flat;
        }
        if (++idx == total) idx = 0;
      }
      scanned += stop;
      if (best_arc >= 0) {
        scan_start_ = idx;
        return best_arc;
      }
    }
    return -1;
  }

  int find_entering_bland() const {
    const long long total = static_cast<long long>(m_) * n_;
    for (long long flat = 0; flat < total; ++flat) {
      if (reduced_cost(static_cast<int>(flat)) < -enter_eps_) {
        return static_cast<int>(flat);
      }
    }
    return -1;
  }

  void pivot(int ei, int ej) {
    // Unique cycle: entering arc plus the tree paths from both endpoints up
    // to their lowest common ancestor.  Walking the cycle starting with the
    // entering arc, flow changes alternate +delta, -delta (bipartite arcs).
    cycle_.clear();
    int x = ei;
    int y = m_ + ej;
    path_a_.clear();
    path_b_.clear();
    while (depth_[static_cast<std::size_t>(x)] > depth_[static_cast<std::size_t>(y)]) {
      path_a_.push_back(parent_arc_[static_cast<std::size_t>(x)]);
      x = parent_[static_cast<std::size_t>(x)];
    }
    while (depth_[static_cast<std::size_t>(y)] > depth_[static_cast<std::size_t>(x)]) {
      path_b_.push_back(parent_arc_[static_cast<std::size_t>(y)]);
      y = parent_[static_cast<std::size_t>(y)];
    }
    while (x != y) {
      path_a_.push_back(parent_arc_[static_cast<std::size_t>(x)]);
      x = parent_[static_cast<std::size_t>(x)];
      path_b_.push_back(parent_arc_[static_cast<std::size_t>(y)]);
      y = parent_[static_cast<std::size_t>(y)];
    }
    // walk order: entering, then up from the sink side, then down to the
    // source side
    cycle_.push_back(-1);  // placeholder for the entering arc
    for (const int id : path_b_) cycle_.push_back(id);
    for (auto it = path_a_.rbegin(); it != path_a_.rend(); ++it) {
      cycle_.push_back(*it);
    }
    // delta = min flow over the minus (odd position) arcs; ties broken by
    // the last blocking arc when the cycle is traversed apex-first in the
    // entering direction (keeps degenerate lattice instances from stalling)
    const std::size_t lb = path_b_.size();
    const std::size_t la = cycle_.size() - 1 - lb;
    double delta = std::numeric_limits<double>::infinity();
    int leaving = -1;
    std::size_t leaving_rank = 0;
    for (std::size_t pos = 1; pos < cycle_.size(); pos += 2) {
      const int id = cycle_[pos];
      const double f = arcs_[static_cast<std::size_t>(id)].flow;
      const std::size_t rank = pos >= lb + 1 ? pos - (lb + 1) : la + pos;
      if (f < delta || (f == delta && rank > leaving_rank)) {
        delta = f;
        leaving = id;
        leaving_rank = rank;
      }
    }
    if (leaving < 0) {
      throw Error("network simplex: cycle without a blocking arc");
    }
    for (std::size_t pos = 1; pos < cycle_.size(); ++pos) {
      const int id = cycle_[pos];
      BasisArc& arc = arcs_[static_cast<std::size_t>(id)];
      arc.flow += (pos % 2 == 0) ? delta : -delta;
      if (arc.flow < 0.0) arc.flow = 0.0;  // round-off guard
    }
    drop_arc(leaving);
    add_arc(ei, ej, delta);
  }

  const RowMat& cost_;
  const Eigen::VectorXd& a_;
  const Eigen::VectorXd& b_;
  int m_, n_, nodes_;
  double enter_eps_;
  long long scan_start_ = 0;

  std::vector<BasisArc> arcs_;
  std::vector<std::vector<int>> incident_;
  std::vector<int> parent_, parent_arc_, depth_, order_;
  std::vector<double> pot_;
  std::vector<int> cycle_, path_a_, path_b_;
};

}  // namespace

DiscreteMeasure merge_duplicate_atoms(const DiscreteMeasure& m) {
  const int n = m.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto less = [&](int a, int b) {
    for (int c = 0; c < m.dim(); ++c) {
      if (m.points()(a, c) != m.points()(b, c))
        return m.points()(a, c) < m.points()(b, c);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  std::vector<int> reps;
  std::vector<double> weights;
  for (int r = 0; r < n; ++r) {
    const int idx = order[static_cast<std::size_t>(r)];
    if (!reps.empty() && !less(reps.back(), idx) && !less(idx, reps.back())) {
      weights.back() += m.weights()[idx];
    } else {
      reps.push_back(idx);
      weights.push_back(m.weights()[idx]);
    }
  }
  if (static_cast<int>(reps.size()) == n) return m;
  Eigen::MatrixXd pts(static_cast<int>(reps.size()), m.dim());
  Eigen::VectorXd w(static_cast<int>(reps.size()));
  for (std::size_t r = 0; r < reps.size(); ++r) {
    pts.row(static_cast<int>(r)) = m.points().row(reps[r]);
    w[static_cast<int>(r)] = weights[r];
  }
  return DiscreteMeasure(std::move(pts), std::move(w), m.domain());
}

namespace {

RowMat cost_matrix(const DiscreteMeasure& mu,
                   const DiscreteMeasure& nu) {
  const int m = mu.size();
  const int n = nu.size();
  RowMat c(m, n);
  for (int i = 0; i < m; ++i) {
    c.row(i) = (nu.points().rowwise() - mu.points().row(i))
                   .rowwise()
                   .squaredNorm()
                   .transpose();
  }
  return c;
}

void check_lp_inputs(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                     int atom_cap) {
  if (mu.dim() != nu.dim()) {
    throw DimensionError("w2sq_lp: measures of different dimension");
  }
  if (!mu.domain().approx_equal(nu.domain())) {
    throw DomainError("w2sq_lp: measures declare different domain boxes");
  }
  if (mu.size() > atom_cap || nu.size() > atom_cap) {
    throw SizeError("w2sq_lp: instance above the atom cap (" +
                    std::to_string(atom_cap) + ")");
  }
}

}  // namespace

TransportPlan LpSolution::plan() const {
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(mu.size(), nu.size());
  for (const FlowEntry& f : flows) gamma(f.i, f.j) = f.mass;
  return TransportPlan(std::move(gamma), mu, nu);
}

LpSolution w2sq_lp(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                   int atom_cap) {
  check_lp_inputs(mu, nu, atom_cap);
  DiscreteMeasure pm = merge_duplicate_atoms(mu);
  DiscreteMeasure pn = merge_duplicate_atoms(nu);
  const RowMat cost = cost_matrix(pm, pn);
  NetworkSimplex solver(cost, pm.weights(), pn.weights());
  solver.solve();
  double dual_feas = 0.0, slack = 0.0;
  solver.certify(1e-9, &dual_feas, &slack);
  return LpSolution{solver.objective(), std::move(pm),      std::move(pn),
                    solver.flows(),     solver.duals_u(),  solver.duals_v(),
                    dual_feas,          slack};
}

double w2sq_lp_cost(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                    int atom_cap) {
  check_lp_inputs(mu, nu, atom_cap);
  const DiscreteMeasure pm = merge_duplicate_atoms(mu);
  const DiscreteMeasure pn = merge_duplicate_atoms(nu);
  const RowMat cost = cost_matrix(pm, pn);
  NetworkSimplex solver(cost, pm.weights(), pn.weights());
  solver.solve();
  solver.certify(1e-9, nullptr, nullptr);
  return solver.objective();
}

double w2sq_permutation_oracle(const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu) {
  const int m = mu.size();
  if (m != nu.size() || m > 8) {
    throw OracleScopeError("permutation oracle: needs equal counts m = n <= 8");
  }
  const double uniform = 1.0 / m;
  for (int i = 0; i < m; ++i) {
    if (std::abs(mu.weights()[i] - uniform) > 1e-12 ||
        std::abs(nu.weights()[i] - uniform) > 1e-12) {
      throw OracleScopeError("permutation oracle: weights must equal 1/m");
    }
  }
  std::vector<int> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
      acc += (mu.points().row(i) - nu.points().row(perm[static_cast<std::size_t>(i)]))
                 .squaredNorm();
    }
    best = std::min(best, acc);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best * uniform;
}

Eigen::MatrixXd barycentric_projection(const TransportPlan& plan) {
  const DiscreteMeasure& src = plan.source();
  const DiscreteMeasure& tgt = plan.target();
  Eigen::MatrixXd out(src.size(), src.dim());
  for (int i = 0; i < src.size(); ++i) {
    const double w = plan.gamma().row(i).sum();
    if (w <= 0.0) {
      out.row(i) = src.points().row(i);
    } else {
      out.row(i) = (plan.gamma().row(i) * tgt.points()) / w;
    }
  }
  return out;
}

double w2sq_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                     int atom_cap) {
  if (mu.dim() == 1 && nu.dim() == 1) {
    return w2sq_1d(Measure(mu), Measure(nu));
  }
  return w2sq_lp_cost(mu, nu, atom_cap);
}

}  // namespace wbary
