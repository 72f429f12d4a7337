#include <naipw/crossfit.hpp>
#include <naipw/seed.hpp>

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

namespace naipw {

std::vector<Index> FoldPlan::rows_in(int fold) const {
  std::vector<Index> rows;
  for (Index i = 0; i < assignment.size(); ++i)
    if (assignment[i] == fold) rows.push_back(i);
  return rows;
}

std::vector<Index> FoldPlan::rows_outside(int fold) const {
  std::vector<Index> rows;
  for (Index i = 0; i < assignment.size(); ++i)
    if (assignment[i] != fold) rows.push_back(i);
  return rows;
}

void to_json(nlohmann::json& j, const CrossfitOptions& o) {
  j = nlohmann::json{{"folds", o.folds}, {"stratify", o.stratify}};
}

void from_json(const nlohmann::json& j, CrossfitOptions& o) {
  const CrossfitOptions d;
  o.folds = j.value("folds", d.folds);
  o.stratify = j.value("stratify", d.stratify);
}

FoldPlan split_folds(Index n, int K, std::uint64_t seed, const Eigen::VectorXd* stratify_by) {
  if (K < 1) throw ValidationError("fold count must be at least 1");
  if (n < K) throw ValidationError("fewer observations than folds");
  if (stratify_by != nullptr && stratify_by->size() != n) throw ValidationError("stratification vector has the wrong length");

  FoldPlan plan;
  plan.K = K;
  plan.seed = seed;
  plan.assignment.resize(n);

  std::mt19937_64 rng(seed);
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(n));
  if (stratify_by == nullptr) {
    order = std::vector<Index>(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    std::vector<Index> treated, control;
    for (Index i = 0; i < n; ++i) ((*stratify_by)[i] > 0.5 ? treated : control).push_back(i);
    std::shuffle(treated.begin(), treated.end(), rng);
    std::shuffle(control.begin(), control.end(), rng);
    order.insert(order.end(), treated.begin(), treated.end());
    order.insert(order.end(), control.begin(), control.end());
  }
  // Continuing the round-robin across the arm boundary keeps overall fold
  // sizes within one of each other.
  for (std::size_t k = 0; k < order.size(); ++k) plan.assignment[order[k]] = static_cast<int>(k % static_cast<std::size_t>(K));
  return plan;
}

NetHyper fold_hyper(const NetHyper& hyper, int fold) {
  NetHyper h = hyper;
  h.seed = derive_seed(hyper.seed, 1000 + static_cast<std::uint64_t>(fold));
  return h;
}

NuisanceEstimates crossfit_nuisances(const Dataset& data, const NetHyper& hyper, const FoldPlan& plan) {
  const Index n = data.size();
  if (plan.assignment.size() != n) throw ValidationError("fold plan does not match the sample size");

  NuisanceEstimates out;
  out.q1.resize(n);
  out.q0.resize(n);
  out.g.resize(n);
  out.fold_id = plan.assignment;

  if (plan.K == 1) {
    const std::vector<Index> rows = all_rows(n);
    const NetHyper h = fold_hyper(hyper, 0);
    const NetworkParams outcome = train_outcome(data, h, rows);
    const NetworkParams propensity = train_propensity(data, h, rows);
    NuisanceEstimates full = predict_nuisances(outcome, propensity, data, rows, hyper.clamp_eps);
    full.fold_id = plan.assignment;
    return full;
  }

  for (int k = 0; k < plan.K; ++k) {
    const std::vector<Index> train = plan.rows_outside(k);
    const std::vector<Index> test = plan.rows_in(k);
    Index treated = 0;
    for (Index i : train) treated += data.A[i] > 0.5;
    if (treated == 0 || treated == static_cast<Index>(train.size()))
      throw EstimationError("training complement of fold " + std::to_string(k) + " contains a single treatment arm");

    const NetHyper h = fold_hyper(hyper, k);
    const NetworkParams outcome = train_outcome(data, h, train);
    const NetworkParams propensity = train_propensity(data, h, train);
    const NuisanceEstimates part = predict_nuisances(outcome, propensity, data, test, hyper.clamp_eps);
    for (std::size_t t = 0; t < test.size(); ++t) {
      const Index i = test[t];
      out.q1[i] = part.q1[static_cast<Index>(t)];
      out.q0[i] = part.q0[static_cast<Index>(t)];
      out.g[i] = part.g[static_cast<Index>(t)];
    }
  }

  const Eigen::VectorXd fitted = (data.A.array() * out.q1.array() + (1.0 - data.A.array()) * out.q0.array()).matrix();
  out.diagnostics = FirstStageDiagnostics{r_squared(data.Y, fitted), auc(data.A, out.g)};
  return out;
}

}  // namespace naipw
