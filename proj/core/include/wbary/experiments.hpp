#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wbary/models.hpp"

namespace wbary {

struct ExperimentConfig {
  std::vector<int> n_grid;
  int replicates = 200;
  std::uint64_t seed = 7;
  int grid_cells = 512;        // template discretization per axis
  int mean_map_nodes = 257;    // quadrature per axis for the population mean
  int threads = 1;
  std::string family_label;    // echo only
};

/// One Monte-Carlo draw: the empirical barycenter of n sampled members
/// against the population barycenter.  `wall_ms` is measured and therefore
/// excluded from the determinism contract and the checksum.
struct ReplicateRecord {
  int n = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  double d2 = 0.0;
  double wall_ms = 0.0;
};

struct AggregateRow {
  int n = 0;
  int count = 0;
  double mean = 0.0;
  double q10 = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, q90 = 0.0;
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  int bootstrap = 0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<ReplicateRecord> records;    // ordered by (n index, replicate)
  std::vector<AggregateRow> aggregates;    // recomputable from the records
  std::optional<SlopeFit> slope;
  std::uint64_t checksum = 0;              // over the deterministic fields
};

/// Computes aggregates + checksum from the records (used on construction and
/// by the verification tests).
std::vector<AggregateRow> aggregate_records(
    std::span<const ReplicateRecord> records);
std::uint64_t checksum_records(std::span<const ReplicateRecord> records);

/// Monte-Carlo consistency experiment for an affine family: per (n,
/// replicate) draws n parameters, forms the closed-form empirical barycenter
/// and measures the squared distance to the population barycenter on matched
/// discretizations (the same template atoms pushed through the sample-mean
/// and the population-mean deformation).
ExperimentReport consistency_run(const DeformableFamily& family,
                                 const ExperimentConfig& config);

/// OLS fit of log(mean d2) against log n with a replicate bootstrap CI.
/// Requires >= 4 distinct n values and >= 50 replicates each.
SlopeFit rate_fit(const ExperimentReport& report, int bootstrap = 1000,
                  std::uint64_t seed = 1);

/// Two-term Bernstein tail bound on P(d2 >= t), evaluated with centered
/// moments of the deformation parameters; clipped to [0, 1].
struct BernsteinConstants {
  int dim = 1;
  double eps0_sq = 0.0;     // second moment of the template
  double b1 = 0.0;          // max ||A_theta - Abar||
  double sigma1_sq = 0.0;   // E ||A_theta - Abar||^2
  double b2 = 0.0;          // max |b_theta - bbar|
  double sigma2_sq = 0.0;   // E |b_theta - bbar|^2
};

BernsteinConstants bernstein_constants(const DeformableFamily& family,
                                       const ThetaQuadrature& quad);
double bernstein_envelope(const BernsteinConstants& c, double t, int n);
double bernstein_envelope(const DeformableFamily& family, double t, int n,
                          const ThetaQuadrature& quad);

struct EnvelopeRow {
  int n = 0;
  double t = 0.0;
  double empirical_tail = 0.0;
  double bound = 0.0;
  bool ok = true;
};

/// Empirical tail frequencies against the envelope for every n in the report
/// and every t in the grid; a row fails when the frequency exceeds the bound
/// by more than 3 binomial standard errors.
std::vector<EnvelopeRow> envelope_check(const ExperimentReport& report,
                                        const DeformableFamily& family,
                                        std::span<const double> t_grid,
                                        const ThetaQuadrature& quad);

/// Empirical quantiles of d2 restricted to one n (for choosing the t grid).
std::vector<double> tail_quantiles(const ExperimentReport& report, int n,
                                   std::span<const double> probs);

/// Euclidean average versus Wasserstein barycenter on a shift family.
struct MeanComparison {
  int n = 0;
  double l1_euclid_to_convolution = 0.0;  // || qbar_n - q0 * g ||_L1
  double l1_euclid_to_template = 0.0;     // || qbar_n - q0 ||_L1
  double l1_convolution_to_template = 0.0;
  double w2_wasserstein_to_template = 0.0;
  double mean_shift_norm = 0.0;           // |mean theta_i|
};

MeanComparison euclid_vs_wasserstein(const DeformableFamily& family, int n,
                                     std::uint64_t seed, int grid_cells = 512);

/// Writes records.csv, aggregates.csv, slope.json (if fitted), envelope.csv
/// (if given) and gnuplot-ready .dat files into `dir`.
void write_report(const ExperimentReport& report,
                  std::span<const EnvelopeRow> envelope,
                  const std::filesystem::path& dir);

}  // namespace wbary
