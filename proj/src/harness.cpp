#include <naipw/harness.hpp>
#include <naipw/seed.hpp>
#include <naipw/variance.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include <naipw/csv.hpp>

namespace naipw {

namespace {

constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kNetStream = 2;
constexpr std::uint64_t kFoldStream = 3;

const std::vector<std::string> kKnownEstimators{"nate", "sr", "ipw", "nipw", "aipw", "naipw", "hybrid"};

EstimatorResult<double> evaluate(const std::string& name, const Dataset& data, const NuisanceEstimates& nuis) {
  if (name == "nate") return nate(data, nuis);
  if (name == "sr") return sr(data, nuis);
  if (name == "ipw") return ipw(data, nuis);
  if (name == "nipw") return nipw(data, nuis);
  return gdr_with_se(data, nuis, parse_scheme(name));
}

std::string join_widths(const std::vector<Index>& widths) {
  std::string s;
  for (std::size_t k = 0; k < widths.size(); ++k) {
    if (k) s += '-';
    s += std::to_string(widths[k]);
  }
  return s.empty() ? "linear" : s;
}

}  // namespace

void McConfig::validate() const {
  dgp.validate();
  if (m < 1) throw ValidationError("mc.m must be at least 1");
  if (hyper_grid.empty()) throw ValidationError("hyperparameter grid is empty");
  for (const NetHyper& h : hyper_grid) h.validate();
  if (estimators.empty()) throw ValidationError("no estimators selected");
  for (const std::string& e : estimators)
    if (std::find(kKnownEstimators.begin(), kKnownEstimators.end(), e) == kKnownEstimators.end())
      throw ValidationError("unknown estimator: " + e);
  if (crossfit.folds < 1) throw ValidationError("crossfit.folds must be at least 1");
  if (workers < 1) throw ValidationError("workers must be at least 1");
}

std::uint64_t replication_seed(std::uint64_t base_seed, int rep) {
  return splitmix64(base_seed ^ static_cast<std::uint64_t>(rep));
}

ReplicationResult run_replication(const McConfig& config, int cell, int rep) {
  return run_replication(config, make_dgp(config.dgp), cell, rep);
}

ReplicationResult run_replication(const McConfig& config, const SyntheticDgp& dgp, int cell, int rep) {
  ReplicationResult out;
  out.cell = cell;
  out.rep = rep;
  try {
    const std::uint64_t seed = replication_seed(config.base_seed, rep);
    Rng rng(derive_seed(seed, kDataStream));
    const Dataset data = sample_dataset(dgp, rng);

    NuisanceEstimates nuis;
    if (config.oracle_mode) {
      nuis = oracle_nuisances(data);
    } else {
      NetHyper hyper = config.hyper_grid.at(static_cast<std::size_t>(cell));
      hyper.seed = derive_seed(seed, kNetStream);
      const FoldPlan plan = split_folds(data.size(), config.crossfit.folds, derive_seed(seed, kFoldStream),
                                        config.crossfit.stratify ? &data.A : nullptr);
      nuis = crossfit_nuisances(data, hyper, plan);
    }
    out.diagnostics = nuis.diagnostics;
    for (const std::string& name : config.estimators) out.results.push_back(evaluate(name, data, nuis));
    for (const auto& r : out.results) {
      if (!std::isfinite(r.beta_hat)) throw EstimationError(r.estimator + " is not finite");
    }
  } catch (const std::exception& e) {
    out.failed = true;
    out.failure = e.what();
    out.results.clear();
  }
  return out;
}

Metrics summarize(const std::vector<double>& estimates, const std::vector<double>& standard_errors, double beta_true,
                  double cap) {
  Metrics m;
  m.count = static_cast<int>(estimates.size());
  if (estimates.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.bias = m.mc_std = m.rmse = nan;
    return m;
  }
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(estimates.data(), static_cast<Index>(estimates.size()));
  if (cap > 0.0) b = b.cwiseMax(-cap).cwiseMin(cap);
  const double mu = b.mean();
  m.bias = beta_true - mu;
  m.mc_std = std::sqrt((b.array() - mu).square().mean());
  m.rmse = std::sqrt(m.mc_std * m.mc_std + m.bias * m.bias);
  if (!standard_errors.empty()) {
    double s = 0.0;
    for (double se : standard_errors) s += se;
    m.mean_se = s / static_cast<double>(standard_errors.size());
  }
  return m;
}

int StudyResult::failures() const {
  return static_cast<int>(std::count_if(raw.begin(), raw.end(), [](const ReplicationResult& r) { return r.failed; }));
}

std::vector<SummaryRow> summarize_study(const McConfig& config, std::vector<ReplicationResult> raw) {
  std::sort(raw.begin(), raw.end(), [](const ReplicationResult& a, const ReplicationResult& b) {
    return a.cell != b.cell ? a.cell < b.cell : a.rep < b.rep;
  });
  std::vector<SummaryRow> rows;
  for (int cell = 0; cell < static_cast<int>(config.hyper_grid.size()); ++cell) {
    const NetHyper& hyper = config.hyper_grid[static_cast<std::size_t>(cell)];
    int failures = 0, total = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_estimator;
    for (const ReplicationResult& r : raw) {
      if (r.cell != cell) continue;
      ++total;
      if (r.failed) {
        ++failures;
        continue;
      }
      for (const auto& e : r.results) {
        auto& [est, ses] = by_estimator[e.estimator];
        est.push_back(e.beta_hat);
        if (e.sigma_hat) ses.push_back(*e.sigma_hat);
      }
    }
    for (const std::string& name : config.estimators) {
      SummaryRow row;
      row.cell = cell;
      row.estimator = name;
      row.scheme = (name == "aipw" || name == "naipw" || name == "hybrid") ? name : "";
      row.n = config.dgp.n;
      row.p = config.dgp.p();
      row.l1_outcome = hyper.l1_outcome;
      row.l1_propensity = hyper.l1_propensity;
      row.widths = hyper.hidden_widths;
      const auto& [est, ses] = by_estimator[name];
      row.metrics = summarize(est, ses, config.dgp.beta_true, config.cap);
      row.failures = failures;
      row.flagged = total > 0 && 10 * failures > total;
      rows.push_back(std::move(row));
    }
    if (config.oracle_mode) break;  // every cell is the same oracle fit
  }
  return rows;
}

StudyResult run_study(const McConfig& config) {
  config.validate();
  const SyntheticDgp dgp = make_dgp(config.dgp);
  const int cells = config.oracle_mode ? 1 : static_cast<int>(config.hyper_grid.size());
  const int tasks = cells * config.m;

  StudyResult study;
  study.raw.resize(static_cast<std::size_t>(tasks));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int t = next++; t < tasks; t = next++) {
      study.raw[static_cast<std::size_t>(t)] = run_replication(config, dgp, t / config.m, t % config.m);
    }
  };
  const int nthreads = std::min(config.workers, tasks);
  std::vector<std::thread> pool;
  for (int w = 1; w < nthreads; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  study.summary = summarize_study(config, study.raw);
  return study;
}

namespace {

std::string cell_or_empty(const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); }

std::string l1_label(double outcome, double propensity) {
  if (outcome == propensity) return csv::format_double(outcome);
  return csv::format_double(outcome) + "|" + csv::format_double(propensity);
}

}  // namespace

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "cell_id,estimator,scheme,n,p,l1,widths,bias,mc_std,rmse,mean_se,failures\n";
  for (const SummaryRow& r : rows) {
    out << r.cell << ',' << r.estimator << ',' << r.scheme << ',' << r.n << ',' << r.p << ','
        << l1_label(r.l1_outcome, r.l1_propensity) << ',' << join_widths(r.widths) << ','
        << csv::format_double(r.metrics.bias) << ',' << csv::format_double(r.metrics.mc_std) << ','
        << csv::format_double(r.metrics.rmse) << ',' << cell_or_empty(r.metrics.mean_se) << ',' << r.failures << '\n';
  }
}

void write_raw_csv(std::ostream& out, const McConfig& config, const std::vector<ReplicationResult>& raw) {
  out << "cell_id,rep,estimator,scheme,beta_hat,sigma_hat,outcome_r2,propensity_auc,failed,failure\n";
  for (const ReplicationResult& r : raw) {
    const std::string r2 = r.diagnostics ? csv::format_double(r.diagnostics->outcome_r2) : "";
    const std::string auc_s = r.diagnostics ? csv::format_double(r.diagnostics->propensity_auc) : "";
    if (r.failed) {
      std::string msg = r.failure;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      for (const std::string& name : config.estimators)
        out << r.cell << ',' << r.rep << ',' << name << ",,,,,,1," << msg << '\n';
      continue;
    }
    for (const auto& e : r.results) {
      out << r.cell << ',' << r.rep << ',' << e.estimator << ',' << e.scheme << ',' << csv::format_double(e.beta_hat)
          << ',' << cell_or_empty(e.sigma_hat) << ',' << r2 << ',' << auc_s << ",0,\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Positivity stress

StressReport positivity_stress(const StressConfig& config) {
  config.dgp.validate();
  Rng rng(config.seed);
  const Dataset data = gen_dataset(config.dgp, rng);
  return positivity_stress(data, oracle_nuisances(data), config.s_grid, config.second_unit_gap);
}

StressReport positivity_stress(const Dataset& data, const NuisanceEstimates& nuis, const std::vector<double>& s_grid,
                               double second_unit_gap) {
  detail::require_same_length(data, nuis);
  detail::require_both_arms(data);
  const Index n = data.size();
  const Eigen::VectorXd resid1 = data.Y - nuis.q1;

  std::vector<Index> treated;
  for (Index i = 0; i < n; ++i)
    if (data.A[i] > 0.5) treated.push_back(i);
  if (treated.size() < 2) throw EstimationError("positivity stress needs at least two treated units");
  std::sort(treated.begin(), treated.end(),
            [&](Index a, Index b) { return std::abs(resid1[a]) > std::abs(resid1[b]); });

  StressReport report;
  report.n = n;
  report.k = treated[0];
  report.l = treated[1];
  double bound = 0.0;
  for (Index i : treated) bound = std::max(bound, std::abs(resid1[i]));
  const double mean_q1 = nuis.q1.mean();
  const double dn = static_cast<double>(n);

  auto fill = [&](StressRow& row, const NuisanceEstimates& injected) {
    const GdrTerms<double> a = gdr_terms(data, injected, WeightScheme::aipw);
    const GdrTerms<double> b = gdr_terms(data, injected, WeightScheme::naipw);
    row.aipw_beta = a.beta();
    row.naipw_beta = b.beta();
    row.aipw_adjustment1 = a.adjustment1;
    row.naipw_adjustment1 = b.adjustment1;
    row.aipw_arm1 = a.adjustment1 + mean_q1;
    row.naipw_arm1 = b.adjustment1 + mean_q1;
    double other = 0.0;
    for (Index i : treated) other += resid1[i] / injected.g[i];
    row.aipw_arm1_closed = other / dn + mean_q1;
    row.adjustment_bound = bound;
    row.within_bound = std::abs(b.adjustment1) <= bound * (1.0 + 1e-12);
    row.aipw_variance = var_aipw(data, injected, row.aipw_beta);
    row.naipw_variance = var_naipw(data, injected, row.naipw_beta);
  };

  for (double s : s_grid) {
    NuisanceEstimates injected = nuis;
    injected.g[report.k] = std::pow(10.0, -s);
    StressRow row;
    row.units = 1;
    row.s = s;
    fill(row, injected);
    row.naipw_arm1_closed = resid1[report.k] + mean_q1;
    row.closed_rel_error = std::abs(row.naipw_arm1 - row.naipw_arm1_closed) / std::abs(row.naipw_arm1_closed);
    report.rows.push_back(row);
  }

  for (double s : s_grid) {
    const double t = s + second_unit_gap;
    NuisanceEstimates injected = nuis;
    injected.g[report.k] = std::pow(10.0, -s);
    injected.g[report.l] = std::pow(10.0, -t);
    StressRow row;
    row.units = 2;
    row.s = s;
    row.t = t;
    fill(row, injected);
    row.naipw_arm1_closed = resid1[report.k] / (1.0 + std::pow(10.0, t - s) + std::pow(10.0, -s) * (dn - 2.0)) +
                            resid1[report.l] / (1.0 + std::pow(10.0, s - t) + std::pow(10.0, -t) * (dn - 2.0)) +
                            mean_q1;
    row.closed_rel_error = std::abs(row.naipw_arm1 - row.naipw_arm1_closed) / std::abs(row.naipw_arm1_closed);
    report.rows.push_back(row);
  }
  return report;
}

void write_stress_csv(std::ostream& out, const StressReport& report) {
  out << "units,s,t,n,aipw_beta,naipw_beta,aipw_adjustment1,naipw_adjustment1,aipw_arm1,aipw_arm1_closed,"
         "naipw_arm1,naipw_arm1_closed,closed_rel_error,adjustment_bound,within_bound,aipw_variance,naipw_variance\n";
  for (const StressRow& r : report.rows) {
    out << r.units << ',' << csv::format_double(r.s) << ',' << (r.units == 2 ? csv::format_double(r.t) : "") << ','
        << report.n << ',' << csv::format_double(r.aipw_beta) << ',' << csv::format_double(r.naipw_beta) << ','
        << csv::format_double(r.aipw_adjustment1) << ',' << csv::format_double(r.naipw_adjustment1) << ','
        << csv::format_double(r.aipw_arm1) << ',' << csv::format_double(r.aipw_arm1_closed) << ','
        << csv::format_double(r.naipw_arm1) << ',' << csv::format_double(r.naipw_arm1_closed) << ','
        << csv::format_double(r.closed_rel_error) << ',' << csv::format_double(r.adjustment_bound) << ','
        << (r.within_bound ? 1 : 0) << ',' << csv::format_double(r.aipw_variance) << ','
        << csv::format_double(r.naipw_variance) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Orthogonality probe

std::string to_string(ProbeDirection d) {
  switch (d) {
    case ProbeDirection::outcome: return "outcome";
    case ProbeDirection::propensity: return "propensity";
    case ProbeDirection::joint: return "joint";
  }
  return "unknown";
}

namespace {

struct Delta {
  Eigen::VectorXd q1, q0, g;
};

// eta_tilde - eta. The outcome direction has a constant part so that the
// plug-in moment moves visibly; the propensity direction is a logit shift.
Delta direction_delta(const Dataset& data, const NuisanceEstimates& truth, ProbeDirection direction) {
  const Index n = data.size();
  const Index p = data.W.cols();
  if (p < 1) throw ValidationError("orthogonality probe needs covariates");
  const auto w1 = data.W.col(0).array();
  const auto w2 = data.W.col(std::min<Index>(1, p - 1)).array();
  const auto w3 = data.W.col(std::min<Index>(2, p - 1)).array();
  Delta d{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  if (direction != ProbeDirection::propensity) {
    d.q1 = (1.0 + 0.5 * w1.sin()).matrix();
    d.q0 = (-0.5 * w2.cos()).matrix();
  }
  if (direction != ProbeDirection::outcome) {
    const Eigen::ArrayXd g = truth.g.array();
    const Eigen::ArrayXd logit = (g / (1.0 - g)).log() + 0.5 + 0.5 * w3;
    d.g = ((1.0 / (1.0 + (-logit).exp())) - g).matrix();
  }
  return d;
}

double slope_through_zero(const std::vector<double>& eps, const std::vector<double>& moments) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    num += eps[k] * (moments[k] - moments[0]);
    den += eps[k] * eps[k];
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace

NuisanceEstimates perturb(const Dataset& data, const NuisanceEstimates& truth, ProbeDirection direction, double eps) {
  const Delta d = direction_delta(data, truth, direction);
  NuisanceEstimates out = truth;
  out.q1 += eps * d.q1;
  out.q0 += eps * d.q0;
  out.g += eps * d.g;
  return out;
}

double direction_norm(const Dataset& data, const NuisanceEstimates& truth, ProbeDirection direction) {
  const Delta d = direction_delta(data, truth, direction);
  return std::sqrt((d.q1.squaredNorm() + d.q0.squaredNorm() + d.g.squaredNorm()) / static_cast<double>(data.size()));
}

const ProbeRow& ProbeReport::find(const std::string& estimator, ProbeDirection direction) const {
  for (const ProbeRow& r : rows)
    if (r.estimator == estimator && r.direction == direction) return r;
  throw std::out_of_range("no probe row for " + estimator + "/" + to_string(direction));
}

ProbeReport orthogonality_probe(const Dataset& data, const std::vector<double>& eps_grid) {
  if (!data.truth) throw ValidationError("orthogonality probe needs a sample with known truth");
  if (eps_grid.size() < 2 || eps_grid.front() != 0.0)
    throw ValidationError("probe grid must start at 0 and have at least two points");
  const NuisanceEstimates truth = oracle_nuisances(data);
  const double beta = data.truth->beta;

  ProbeReport report;
  report.n = data.size();
  report.eps_grid = eps_grid;
  for (ProbeDirection dir : {ProbeDirection::outcome, ProbeDirection::propensity, ProbeDirection::joint}) {
    const double norm = direction_norm(data, truth, dir);
    ProbeRow rows[3];
    const char* names[3] = {"naipw", "aipw", "sr"};
    for (int e = 0; e < 3; ++e) {
      rows[e].estimator = names[e];
      rows[e].direction = dir;
      rows[e].direction_norm = norm;
    }
    for (double eps : eps_grid) {
      const NuisanceEstimates nuis = perturb(data, truth, dir, eps);
      rows[0].moments.push_back(gdr_terms(data, nuis, WeightScheme::naipw).beta() - beta);
      rows[1].moments.push_back(gdr_terms(data, nuis, WeightScheme::aipw).beta() - beta);
      rows[2].moments.push_back((nuis.q1 - nuis.q0).mean() - beta);
    }
    for (ProbeRow& r : rows) {
      r.moment_at_zero = r.moments.front();
      r.slope = slope_through_zero(eps_grid, r.moments);
      report.rows.push_back(std::move(r));
    }
  }
  return report;
}

ProbeReport orthogonality_probe(const ProbeConfig& config) {
  config.dgp.validate();
  Rng rng(config.seed);
  const Dataset data = gen_dataset(config.dgp, rng);
  return orthogonality_probe(data, config.eps_grid);
}

void write_probe_csv(std::ostream& out, const ProbeReport& report) {
  out << "estimator,direction,n,moment_at_zero,slope,direction_norm,relative_slope\n";
  for (const ProbeRow& r : report.rows) {
    out << r.estimator << ',' << to_string(r.direction) << ',' << report.n << ','
        << csv::format_double(r.moment_at_zero) << ',' << csv::format_double(r.slope) << ','
        << csv::format_double(r.direction_norm) << ',' << csv::format_double(r.slope / r.direction_norm) << '\n';
  }
}

}  // namespace naipw
