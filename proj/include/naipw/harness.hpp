#pragma once

// Monte Carlo study driver: replications over a DGP x hyperparameter grid,
// bias / MC std / RMSE / mean SE summaries, the positivity stress scenario and
// the numeric orthogonality probe.

#include <naipw/crossfit.hpp>
#include <naipw/dgp.hpp>
#include <naipw/estimators.hpp>
#include <naipw/firststage.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace naipw {

struct McConfig {
  DgpSpec dgp;
  std::vector<NetHyper> hyper_grid{NetHyper{}};
  std::vector<std::string> estimators{"nate", "sr", "ipw", "nipw", "aipw", "naipw", "hybrid"};
  int m = 100;
  std::uint64_t base_seed = 2024;
  bool oracle_mode = false;
  double cap = 10.0;  // <= 0 disables winsorization of reported estimates
  CrossfitOptions crossfit{1, true};
  int workers = 1;

  void validate() const;
};

struct ReplicationResult {
  int cell = 0;
  int rep = 0;
  std::vector<EstimatorResult<double>> results;
  std::optional<FirstStageDiagnostics> diagnostics;
  bool failed = false;
  std::string failure;
};

// Dataset seed of a replication; cells share it so they see identical samples.
std::uint64_t replication_seed(std::uint64_t base_seed, int rep);

ReplicationResult run_replication(const McConfig& config, int cell, int rep);
ReplicationResult run_replication(const McConfig& config, const SyntheticDgp& dgp, int cell, int rep);

struct Metrics {
  double bias = 0.0;     // beta - mean estimate
  double mc_std = 0.0;   // 1/m normalization
  double rmse = 0.0;     // sqrt(mc_std^2 + bias^2)
  std::optional<double> mean_se;
  int count = 0;
};

// Metrics of a set of estimates; estimates are winsorized at +-cap first when
// cap > 0.
Metrics summarize(const std::vector<double>& estimates, const std::vector<double>& standard_errors, double beta_true,
                  double cap = 0.0);

struct SummaryRow {
  int cell = 0;
  std::string estimator;
  std::string scheme;
  Index n = 0;
  Index p = 0;
  double l1_outcome = 0.0;
  double l1_propensity = 0.0;
  std::vector<Index> widths;
  Metrics metrics;
  int failures = 0;
  bool flagged = false;  // more than 10% failed replications
};

struct StudyResult {
  std::vector<ReplicationResult> raw;  // cell-major, replication order
  std::vector<SummaryRow> summary;
  int failures() const;
};

StudyResult run_study(const McConfig& config);

// Aggregation over replications, independent of the order they arrive in.
std::vector<SummaryRow> summarize_study(const McConfig& config, std::vector<ReplicationResult> raw);

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_raw_csv(std::ostream& out, const McConfig& config, const std::vector<ReplicationResult>& raw);

// ---------------------------------------------------------------------------
// Positivity stress

struct StressConfig {
  DgpSpec dgp = default_spec(1000);
  std::vector<double> s_grid{2, 4, 8, 12};
  double second_unit_gap = 2.0;  // t = s + gap for the two-unit scenario
  std::uint64_t seed = 7;
};

struct StressRow {
  int units = 1;
  double s = 0.0;
  double t = 0.0;                // exponent of the second unit; 0 when units == 1
  double aipw_beta = 0.0;
  double naipw_beta = 0.0;
  double aipw_adjustment1 = 0.0;
  double naipw_adjustment1 = 0.0;
  double naipw_arm1 = 0.0;        // adjustment1 + mean(Q1_hat)
  double aipw_arm1 = 0.0;
  double aipw_arm1_closed = 0.0;  // 10^s r_k / n + other treated terms + mean(Q1_hat)
  double naipw_arm1_closed = 0.0; // dominant-term approximation
  double closed_rel_error = 0.0;
  double adjustment_bound = 0.0;  // max |y - Q1_hat| over treated units
  bool within_bound = false;
  double aipw_variance = 0.0;
  double naipw_variance = 0.0;
};

struct StressReport {
  Index n = 0;
  Index k = 0;  // unit pushed to 10^-s
  Index l = 0;  // second unit, pushed to 10^-t
  std::vector<StressRow> rows;
};

// Oracle nuisances on a DGP sample, then g of the treated unit with the
// largest outcome residual (and, for the two-unit rows, the runner-up) is
// replaced by 10^-s (10^-t).
StressReport positivity_stress(const StressConfig& config);

// The same injection on caller-supplied data and nuisances.
StressReport positivity_stress(const Dataset& data, const NuisanceEstimates& nuis, const std::vector<double>& s_grid,
                               double second_unit_gap);

void write_stress_csv(std::ostream& out, const StressReport& report);

// ---------------------------------------------------------------------------
// Orthogonality probe

enum class ProbeDirection { outcome, propensity, joint };

struct ProbeConfig {
  DgpSpec dgp = default_spec(50000);
  std::vector<double> eps_grid{0.0, 0.01, 0.02, 0.03, 0.04};
  std::uint64_t seed = 11;
};

struct ProbeRow {
  std::string estimator;  // naipw, aipw, sr
  ProbeDirection direction = ProbeDirection::outcome;
  double moment_at_zero = 0.0;
  double slope = 0.0;
  double direction_norm = 0.0;
  std::vector<double> moments;
};

struct ProbeReport {
  Index n = 0;
  std::vector<double> eps_grid;
  std::vector<ProbeRow> rows;

  const ProbeRow& find(const std::string& estimator, ProbeDirection direction) const;
};

// Perturbed nuisances eta + eps (eta_tilde - eta) along a fixed direction.
NuisanceEstimates perturb(const Dataset& data, const NuisanceEstimates& truth, ProbeDirection direction, double eps);

// Root mean square size of the perturbation eta_tilde - eta.
double direction_norm(const Dataset& data, const NuisanceEstimates& truth, ProbeDirection direction);

// Empirical moment E[phi(O, beta_true, eta + eps (eta_tilde - eta))] of nAIPW,
// AIPW and SR over the eps grid, with the least-squares slope at eps = 0.
ProbeReport orthogonality_probe(const Dataset& data, const std::vector<double>& eps_grid);
ProbeReport orthogonality_probe(const ProbeConfig& config);

void write_probe_csv(std::ostream& out, const ProbeReport& report);

std::string to_string(ProbeDirection d);

}  // namespace naipw
