#pragma once

#include <naipw/firststage.hpp>
#include <naipw/types.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace naipw {

struct FoldPlan {
  int K = 1;
  Eigen::VectorXi assignment;
  std::uint64_t seed = 0;

  std::vector<Index> rows_in(int fold) const;
  std::vector<Index> rows_outside(int fold) const;
};

struct CrossfitOptions {
  int folds = 5;  // 1: fit and predict on the full sample
  bool stratify = true;
};

void to_json(nlohmann::json& j, const CrossfitOptions& o);
void from_json(const nlohmann::json& j, CrossfitOptions& o);

// Seeded permutation split into K folds whose sizes differ by at most one.
// With `stratify_by` the two arms are dealt round-robin in turn, so each fold
// also gets its share of treated units to within one.
FoldPlan split_folds(Index n, int K, std::uint64_t seed, const Eigen::VectorXd* stratify_by = nullptr);

// Hyperparameters used for the networks of one fold.
NetHyper fold_hyper(const NetHyper& hyper, int fold);

// Out-of-fold nuisance predictions, in the original row order, tagged with
// fold ids. K = 1 trains once on every row.
NuisanceEstimates crossfit_nuisances(const Dataset& data, const NetHyper& hyper, const FoldPlan& plan);

}  // namespace naipw
