// wbary: Wasserstein barycenters of random measures.
//
// Subcommands: w2, barycenter, duality-check, simulate, compare-means,
// family-info.  Every run is a pure function of (flags, input files, seed);
// machine outputs go to files, a human summary to stdout.
// Exit codes: 0 success, 2 validation failure, 1 runtime error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wbary/barycenter.hpp"
#include "wbary/duality.hpp"
#include "wbary/errors.hpp"
#include "wbary/experiments.hpp"
#include "wbary/measures.hpp"
#include "wbary/models.hpp"
#include "wbary/parallel.hpp"
#include "wbary/transport1d.hpp"
#include "wbary/transport_exact.hpp"

namespace fs = std::filesystem;
using namespace wbary;

namespace {

FileFormat format_for(const fs::path& path) {
  return path.extension() == ".csv" ? FileFormat::Csv : FileFormat::Json;
}

Measure load_any(const std::string& path) {
  return load_measure(path, format_for(path));
}

DiscreteMeasure as_discrete(const Measure& m, int grid_atoms) {
  if (std::holds_alternative<DiscreteMeasure>(m)) {
    return std::get<DiscreteMeasure>(m);
  }
  // total atom budget; must be a perfect square for 2-d grids
  return discretize(std::get<GridDensity>(m), grid_atoms);
}

std::vector<int> parse_n_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  if (out.empty()) throw UsageError("--n: empty list");
  return out;
}

int run_w2(const std::string& mu_path, const std::string& nu_path,
           const std::string& plan_path, int grid_atoms) {
  const DiscreteMeasure mu = as_discrete(load_any(mu_path), grid_atoms);
  const DiscreteMeasure nu = as_discrete(load_any(nu_path), grid_atoms);
  const LpSolution sol = w2sq_lp(mu, nu);
  std::printf("%.12g\n", sol.cost);
  std::printf("w2 %.12g  (dual feasibility %.3g, slackness %.3g)\n",
              std::sqrt(std::max(sol.cost, 0.0)), sol.dual_feasibility,
              sol.slackness);
  if (!plan_path.empty()) {
    std::ofstream out(plan_path);
    out << "i,j,mass\n";
    for (const FlowEntry& f : sol.flows) {
      out << f.i << ',' << f.j << ',';
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", f.mass);
      out << buf << "\n";
    }
    std::printf("plan written to %s (%zu entries)\n", plan_path.c_str(),
                sol.flows.size());
  }
  return 0;
}

int run_barycenter(const std::string& inputs_dir, const std::string& method,
                   const std::string& family_path,
                   const std::string& thetas_path, const std::string& out_path,
                   const std::string& trace_path, int max_iter, int threads,
                   int grid_atoms) {
  if (method == "affine") {
    if (family_path.empty() || thetas_path.empty()) {
      throw UsageError("method affine needs --family and --thetas");
    }
    const DeformableFamily family = load_family(family_path);
    std::vector<Eigen::VectorXd> thetas;
    std::ifstream in(thetas_path);
    if (!in) throw ParseError("cannot open " + thetas_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string tok;
      Eigen::VectorXd theta(family.theta_dim());
      int k = 0;
      while (std::getline(ss, tok, ',') && k < family.theta_dim()) {
        theta[k++] = std::stod(tok);
      }
      if (k != family.theta_dim()) throw ParseError("thetas csv: bad row");
      thetas.push_back(std::move(theta));
    }
    const GridDensity bary = empirical_barycenter_affine(thetas, family);
    save_measure(Measure(bary), out_path, FileFormat::Json);
    std::printf("affine barycenter of %zu members written to %s\n",
                thetas.size(), out_path.c_str());
    return 0;
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(inputs_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext == ".json" || ext == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UsageError("no .json/.csv measures in " + inputs_dir);

  if (method == "1d") {
    std::vector<Measure> measures;
    for (const fs::path& f : files) measures.push_back(load_any(f.string()));
    const DiscreteMeasure bary = empirical_barycenter_1d(measures);
    save_measure(Measure(bary), out_path, FileFormat::Json);
    std::printf("1d barycenter of %zu measures written to %s (%d atoms)\n",
                measures.size(), out_path.c_str(), bary.size());
    return 0;
  }
  if (method == "fixed-support") {
    std::vector<DiscreteMeasure> measures;
    for (const fs::path& f : files) {
      measures.push_back(as_discrete(load_any(f.string()), grid_atoms));
    }
    const DiscreteMeasure seed(
        measures.front().points(),
        Eigen::VectorXd::Constant(measures.front().size(),
                                  1.0 / measures.front().size()),
        measures.front().domain());
    FixedSupportOptions opts;
    opts.max_iter = max_iter;
    opts.threads = threads;
    const FixedSupportResult result =
        empirical_barycenter_fixed_support(measures, seed, opts);
    save_measure(Measure(result.barycenter), out_path, FileFormat::Json);
    if (!trace_path.empty()) {
      std::ofstream out(trace_path);
      out << "iteration,objective\n";
      for (std::size_t k = 0; k < result.objective_trace.size(); ++k) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", result.objective_trace[k]);
        out << k << ',' << buf << "\n";
      }
    }
    std::printf("fixed-support barycenter: %d iterations, J_n = %.10g%s\n",
                result.iterations, result.objective_trace.back(),
                result.converged ? "" : "  [max-iter reached]");
    return 0;
  }
  throw UsageError("unknown method '" + method + "'");
}

int run_duality_check(const std::string& family_path, int nodes, int grid,
                      double max_rel_gap, int pushforward_thetas,
                      const std::string& out_path, bool matched,
                      int threads) {
  const DeformableFamily family = load_family(family_path);
  const ThetaQuadrature quad = midpoint_quadrature(family.theta_box(), nodes);
  const GridGeometry geom = family.omega_grid(grid);
  const DualFamily df = make_affine_dual_family(family, quad, geom);
  double primal = 0.0, dual = 0.0;
  DiscreteMeasure nu_star = atoms_on_grid(
      population_barycenter_on(family, quad, geom), geom);
  if (matched) {
    const MatchedMembers mm = matched_members(family, quad, geom);
    nu_star = mm.barycenter_atoms;
    primal = primal_objective_matched(nu_star, family, quad, mm, threads);
    dual = dual_objective_matched(df, family, mm, threads);
  } else {
    primal = primal_objective(nu_star, family, quad, geom, threads);
    dual = dual_objective(df, family, threads);
  }
  const double gap = primal - dual;
  const double rel = std::abs(gap) / std::max(primal, 1e-300);
  std::printf("J_P      = %.10g\n", primal);
  std::printf("J_P*     = %.10g\n", dual);
  std::printf("gap      = %.3g   (relative %.3g)\n", gap, rel);

  std::ostringstream csv;
  csv << "theta,w2_pushforward_error,min_second_difference,convex_ok\n";
  const int step = std::max(1, quad.count() / std::max(pushforward_thetas, 1));
  for (int r = 0; r < quad.count(); r += step) {
    const BrenierRecovery rec = brenier_recover(df, family, r);
    const double err =
        std::sqrt(w2sq_discrete(rec.pushed, nu_star));
    csv << "\"";
    for (int a = 0; a < family.theta_dim(); ++a) {
      csv << (a ? " " : "") << quad.nodes(r, a);
    }
    csv << "\"," << err << ',' << rec.min_second_difference << ','
        << (rec.convexity_ok ? 1 : 0) << "\n";
  }
  if (out_path.empty()) {
    std::fputs(csv.str().c_str(), stdout);
  } else {
    std::ofstream out(out_path);
    out << csv.str();
    std::printf("per-theta table written to %s\n", out_path.c_str());
  }
  if (rel > max_rel_gap) {
    std::printf("FAIL: relative gap %.3g exceeds threshold %.3g\n", rel,
                max_rel_gap);
    return 2;
  }
  std::printf("OK: relative gap below %.3g\n", max_rel_gap);
  return 0;
}

int run_simulate(const std::string& family_path, const std::string& n_list,
                 int reps, std::uint64_t seed, int grid_cells,
                 const std::string& out_dir, const std::string& t_quantiles,
                 double slope_lo, double slope_hi, bool no_slope_check,
                 int threads) {
  if (reps < 50) {
    throw InsufficientDataError(
        "simulate: need >= 50 replicates for the rate fit (got " +
        std::to_string(reps) + ")");
  }
  const DeformableFamily family = load_family(family_path);
  ExperimentConfig config;
  config.n_grid = parse_n_list(n_list);
  if (static_cast<int>(config.n_grid.size()) < 4) {
    throw InsufficientDataError("simulate: need >= 4 distinct n values");
  }
  config.replicates = reps;
  config.seed = seed;
  config.grid_cells = grid_cells;
  config.threads = threads;
  config.family_label = family_path;
  ExperimentReport report = consistency_run(family, config);
  report.slope = rate_fit(report);

  std::vector<double> probs;
  {
    std::stringstream ss(t_quantiles);
    std::string tok;
    while (std::getline(ss, tok, ',')) probs.push_back(std::stod(tok));
  }
  const int n_min =
      *std::min_element(config.n_grid.begin(), config.n_grid.end());
  const std::vector<double> t_grid = tail_quantiles(report, n_min, probs);
  const ThetaQuadrature quad = midpoint_quadrature(
      family.theta_box(), family.theta_dim() <= 2 ? 257 : 17);
  const std::vector<EnvelopeRow> envelope =
      envelope_check(report, family, t_grid, quad);
  write_report(report, envelope, out_dir);

  std::printf("records: %zu, checksum %016llx\n", report.records.size(),
              static_cast<unsigned long long>(report.checksum));
  std::printf("slope  : %.4f  [%.4f, %.4f]\n", report.slope->slope,
              report.slope->ci_lo, report.slope->ci_hi);
  bool ok = true;
  for (const EnvelopeRow& row : envelope) {
    if (!row.ok) {
      std::printf("envelope violation at n=%d t=%.6g: tail %.4f > bound %.4f\n",
                  row.n, row.t, row.empirical_tail, row.bound);
      ok = false;
    }
  }
  if (!no_slope_check &&
      (report.slope->slope < slope_lo || report.slope->slope > slope_hi)) {
    std::printf("FAIL: slope %.4f outside [%.2f, %.2f]\n",
                report.slope->slope, slope_lo, slope_hi);
    ok = false;
  }
  std::printf("%s\n", ok ? "all acceptance flags ok" : "acceptance flags FAILED");
  return ok ? 0 : 2;
}

int run_compare_means(const std::string& family_path, int n,
                      std::uint64_t seed, int grid_cells,
                      const std::string& out_path) {
  const DeformableFamily family = load_family(family_path);
  const MeanComparison cmp =
      euclid_vs_wasserstein(family, n, seed, grid_cells);
  std::printf("n                         = %d\n", cmp.n);
  std::printf("L1(euclid, q0*g)          = %.6g\n",
              cmp.l1_euclid_to_convolution);
  std::printf("L1(euclid, q0)            = %.6g\n", cmp.l1_euclid_to_template);
  std::printf("L1(q0*g, q0)              = %.6g\n",
              cmp.l1_convolution_to_template);
  std::printf("W2(wasserstein bary, q0)  = %.6g\n",
              cmp.w2_wasserstein_to_template);
  std::printf("|mean shift|              = %.6g\n", cmp.mean_shift_norm);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << "{\n"
        << "  \"n\": " << cmp.n << ",\n"
        << "  \"l1_euclid_to_convolution\": " << cmp.l1_euclid_to_convolution
        << ",\n"
        << "  \"l1_euclid_to_template\": " << cmp.l1_euclid_to_template
        << ",\n"
        << "  \"l1_convolution_to_template\": "
        << cmp.l1_convolution_to_template << ",\n"
        << "  \"w2_wasserstein_to_template\": "
        << cmp.w2_wasserstein_to_template << ",\n"
        << "  \"mean_shift_norm\": " << cmp.mean_shift_norm << "\n}\n";
  }
  return 0;
}

int run_family_info(const std::string& family_path) {
  const DeformableFamily family = load_family(family_path);
  const char* kind = family.kind() == DeformableFamily::Kind::Shift
                         ? "shift"
                         : family.kind() == DeformableFamily::Kind::LocationScale
                               ? "location_scale"
                               : "affine";
  std::printf("kind      : %s\n", kind);
  std::printf("theta dim : %d\n", family.theta_dim());
  std::printf("space dim : %d\n", family.dim());
  std::ostringstream tb, om;
  for (int a = 0; a < family.theta_dim(); ++a) {
    tb << (a ? " x " : "") << '[' << family.theta_box().lo[a] << ", "
       << family.theta_box().hi[a] << ']';
  }
  for (int a = 0; a < family.dim(); ++a) {
    om << (a ? " x " : "") << '[' << family.omega().lo[a] << ", "
       << family.omega().hi[a] << ']';
  }
  std::printf("theta box : %s\n", tb.str().c_str());
  std::printf("omega     : %s\n", om.str().c_str());
  const ThetaQuadrature quad = midpoint_quadrature(
      family.theta_box(), family.theta_dim() <= 2 ? 257 : 17);
  const AffineMap mean = family_mean_map(family, quad);
  std::ostringstream am;
  am << mean.A();
  std::printf("mean A    :\n%s\n", am.str().c_str());
  std::ostringstream bm;
  bm << mean.b().transpose();
  std::printf("mean b    : %s\n", bm.str().c_str());
  std::printf("g kind    : %s (bound %.6g)\n",
              family.weight_density().kind().c_str(),
              family.weight_density().bound());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wasserstein barycenters of random measures"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "read flags from an INI/TOML config file");
  int threads = default_thread_count();
  app.add_option("--threads", threads, "worker thread cap")
      ->capture_default_str();

  // w2
  auto* w2 = app.add_subcommand("w2", "exact W2^2 between two measures");
  w2->configurable();
  w2->fallthrough();
  std::string mu_path, nu_path, plan_path;
  int grid_atoms = 256;
  w2->add_option("--mu", mu_path, "first measure (.json/.csv)")->required();
  w2->add_option("--nu", nu_path, "second measure (.json/.csv)")->required();
  w2->add_option("--plan", plan_path, "dump the optimal plan as CSV");
  w2->add_option("--grid-atoms", grid_atoms,
                 "atom budget when discretizing grid inputs "
                 "(perfect square for 2-d)")
      ->capture_default_str();

  // barycenter
  auto* bc = app.add_subcommand("barycenter", "empirical barycenter");
  bc->configurable();
  bc->fallthrough();
  std::string inputs_dir, method = "1d", family_path, thetas_path;
  std::string out_path = "bary.json", trace_path;
  int max_iter = 200;
  bc->add_option("--inputs", inputs_dir, "directory of measure files");
  bc->add_option("--method", method, "1d | affine | fixed-support")
      ->capture_default_str();
  bc->add_option("--family", family_path, "family spec (affine method)");
  bc->add_option("--thetas", thetas_path, "CSV of sampled parameters");
  bc->add_option("--out", out_path, "output measure path")
      ->capture_default_str();
  bc->add_option("--trace", trace_path, "objective trace CSV (fixed-support)");
  bc->add_option("--max-iter", max_iter, "iteration cap (fixed-support)")
      ->capture_default_str();
  bc->add_option("--grid-atoms", grid_atoms,
                 "atom budget when discretizing grid inputs "
                 "(perfect square for 2-d)")
      ->capture_default_str();

  // duality-check
  auto* dc = app.add_subcommand("duality-check",
                                "primal/dual certification of a family");
  dc->configurable();
  dc->fallthrough();
  std::string dc_family;
  int dc_nodes = 33, dc_grid = 256, dc_push = 5;
  double max_rel_gap = 0.05;
  std::string dc_out;
  dc->add_option("--family", dc_family, "family spec (JSON)")->required();
  dc->add_option("--nodes", dc_nodes, "quadrature nodes per theta axis")
      ->capture_default_str();
  dc->add_option("--grid", dc_grid, "Omega grid cells per axis")
      ->capture_default_str();
  dc->add_option("--max-rel-gap", max_rel_gap,
                 "acceptance threshold on |gap|/J_P")
      ->capture_default_str();
  dc->add_option("--pushforward-thetas", dc_push,
                 "number of thetas for the Brenier push-forward table")
      ->capture_default_str();
  dc->add_option("--out", dc_out, "write the per-theta table to a CSV file");
  bool dc_matched = false;
  dc->add_flag("--matched", dc_matched,
               "evaluate both sides on matched member discretizations");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte-Carlo consistency + rate");
  sim->configurable();
  sim->fallthrough();
  std::string sim_family, sim_n = "8,16,32,64,128,256,512,1024";
  std::string sim_out = "report", sim_tq = "0.5,0.9,0.99";
  int sim_reps = 200, sim_grid = 512;
  std::uint64_t sim_seed = 7;
  double slope_lo = -1.2, slope_hi = -0.8;
  bool no_slope_check = false;
  sim->add_option("--family", sim_family, "family spec (JSON)")->required();
  sim->add_option("--n", sim_n, "comma list of sample sizes")
      ->capture_default_str();
  sim->add_option("--reps", sim_reps, "replicates per n")
      ->capture_default_str();
  sim->add_option("--seed", sim_seed, "master seed")->capture_default_str();
  sim->add_option("--grid", sim_grid, "template atoms per axis")
      ->capture_default_str();
  sim->add_option("--out", sim_out, "report directory")->capture_default_str();
  sim->add_option("--t-quantiles", sim_tq,
                  "envelope t grid: quantiles of the smallest-n distribution")
      ->capture_default_str();
  sim->add_option("--slope-lo", slope_lo, "acceptance lower bound")
      ->capture_default_str();
  sim->add_option("--slope-hi", slope_hi, "acceptance upper bound")
      ->capture_default_str();
  sim->add_flag("--no-slope-check", no_slope_check,
                "report the slope without gating the exit code");

  // compare-means
  auto* cm = app.add_subcommand(
      "compare-means", "Euclidean average vs Wasserstein barycenter");
  cm->configurable();
  cm->fallthrough();
  std::string cm_family, cm_out;
  int cm_n = 10000, cm_grid = 512;
  std::uint64_t cm_seed = 5;
  cm->add_option("--family", cm_family, "shift family spec (JSON)")
      ->required();
  cm->add_option("--n", cm_n, "number of sampled members")
      ->capture_default_str();
  cm->add_option("--seed", cm_seed, "sampling seed")->capture_default_str();
  cm->add_option("--grid", cm_grid, "Omega grid cells")->capture_default_str();
  cm->add_option("--out", cm_out, "write the record as JSON");

  // family-info
  auto* fi = app.add_subcommand("family-info", "inspect a family spec");
  fi->configurable();
  fi->fallthrough();
  std::string fi_family;
  fi->add_option("--family", fi_family, "family spec (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (w2->parsed()) return run_w2(mu_path, nu_path, plan_path, grid_atoms);
    if (bc->parsed()) {
      return run_barycenter(inputs_dir, method, family_path, thetas_path,
                            out_path, trace_path, max_iter, threads,
                            grid_atoms);
    }
    if (dc->parsed()) {
      return run_duality_check(dc_family, dc_nodes, dc_grid, max_rel_gap,
                               dc_push, dc_out, dc_matched, threads);
    }
    if (sim->parsed()) {
      return run_simulate(sim_family, sim_n, sim_reps, sim_seed, sim_grid,
                          sim_out, sim_tq, slope_lo, slope_hi, no_slope_check,
                          threads);
    }
    if (cm->parsed()) {
      return run_compare_means(cm_family, cm_n, cm_seed, cm_grid, cm_out);
    }
    if (fi->parsed()) return run_family_info(fi_family);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 1;
  }
  return 0;
}
