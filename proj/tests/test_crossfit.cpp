#include <naipw/crossfit.hpp>
#include <naipw/dgp.hpp>
#include <naipw/variance.hpp>

#include <doctest.h>

#include <set>

using namespace naipw;

TEST_CASE("ten rows into five folds of two") {
  const FoldPlan plan = split_folds(10, 5, 1);
  for (int k = 0; k < 5; ++k) CHECK(plan.rows_in(k).size() == 2);
}

TEST_CASE("fold sizes differ by at most one") {
  const FoldPlan plan = split_folds(103, 5, 9);
  for (int k = 0; k < 5; ++k) {
    CHECK(plan.rows_in(k).size() >= 20);
    CHECK(plan.rows_in(k).size() <= 21);
  }
}

TEST_CASE("stratified folds share the treated units") {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(12);
  for (Index i : {0, 2, 3, 7, 8, 11}) a[i] = 1.0;
  const FoldPlan plan = split_folds(12, 3, 4, &a);
  for (int k = 0; k < 3; ++k) {
    int treated = 0;
    for (Index i : plan.rows_in(k)) treated += a[i] > 0.5;
    CHECK(treated == 2);
    CHECK(plan.rows_in(k).size() == 4);
  }
}

TEST_CASE("same seed gives the same plan") {
  CHECK(split_folds(57, 4, 3).assignment == split_folds(57, 4, 3).assignment);
  CHECK(split_folds(57, 4, 3).assignment != split_folds(57, 4, 4).assignment);
}

TEST_CASE("invalid fold requests") {
  CHECK_THROWS_AS(split_folds(3, 5, 1), ValidationError);
  CHECK_THROWS_AS(split_folds(10, 0, 1), ValidationError);
}

TEST_CASE("fold bookkeeping: no row is predicted by a model that saw it") {
  const FoldPlan plan = split_folds(40, 4, 2);
  for (int k = 0; k < 4; ++k) {
    const auto in = plan.rows_in(k);
    const auto out = plan.rows_outside(k);
    std::set<Index> train(out.begin(), out.end());
    for (Index i : in) CHECK(train.count(i) == 0);
    CHECK(in.size() + out.size() == 40);
  }
}

TEST_CASE("out-of-fold predictions come from the complement models") {
  const Dataset d = gen_dataset(default_spec(120));
  NetHyper hyper;
  hyper.hidden_widths = {4};
  hyper.epochs = 5;
  const FoldPlan plan = split_folds(d.size(), 3, 17, &d.A);
  const NuisanceEstimates n = crossfit_nuisances(d, hyper, plan);
  REQUIRE(n.fold_id.has_value());
  CHECK(*n.fold_id == plan.assignment);
  REQUIRE(n.diagnostics.has_value());

  // Rebuild fold 1 by hand: same seeds, same training rows.
  const std::vector<Index> train = plan.rows_outside(1);
  const std::vector<Index> test = plan.rows_in(1);
  const NetHyper h = fold_hyper(hyper, 1);
  const NuisanceEstimates part = predict_nuisances(train_outcome(d, h, train), train_propensity(d, h, train), d, test,
                                                   hyper.clamp_eps);
  for (std::size_t t = 0; t < test.size(); ++t) {
    CHECK(n.q1[test[t]] == part.q1[static_cast<Index>(t)]);
    CHECK(n.g[test[t]] == part.g[static_cast<Index>(t)]);
  }
}

TEST_CASE("row order survives a permutation of the input") {
  Dataset d = gen_dataset(default_spec(60));
  NetHyper hyper;
  hyper.hidden_widths = {};
  hyper.epochs = 3;
  const FoldPlan plan = split_folds(60, 2, 5);
  const NuisanceEstimates base = crossfit_nuisances(d, hyper, plan);

  // Reverse rows and their fold labels: every row sees the same training set.
  Eigen::PermutationMatrix<Eigen::Dynamic> rev(60);
  for (Index i = 0; i < 60; ++i) rev.indices()[i] = static_cast<int>(59 - i);
  Dataset r = d;
  r.W = rev * d.W;
  r.A = rev * d.A;
  r.Y = rev * d.Y;
  FoldPlan rplan = plan;
  rplan.assignment = rev * plan.assignment;
  const NuisanceEstimates flipped = crossfit_nuisances(r, hyper, rplan);
  // Training order differs, so compare loosely; the mapping must line up.
  CHECK((rev * base.q1 - flipped.q1).cwiseAbs().maxCoeff() < 0.5);
  CHECK(*flipped.fold_id == rplan.assignment);
}

TEST_CASE("single-arm training complement names the fold") {
  Dataset d = gen_dataset(default_spec(20));
  d.A.setZero();
  d.A[0] = 1.0;
  d.A[1] = 1.0;
  FoldPlan plan;
  plan.K = 2;
  plan.assignment = Eigen::VectorXi::Zero(20);
  plan.assignment.tail(10).setOnes();
  // Both treated rows sit in fold 0, so its complement has no treated unit.
  NetHyper hyper;
  hyper.epochs = 1;
  hyper.hidden_widths = {};
  try {
    crossfit_nuisances(d, hyper, plan);
    FAIL("expected an error");
  } catch (const EstimationError& e) {
    CHECK(std::string(e.what()).find("fold 0") != std::string::npos);
  }
}

TEST_CASE("K = 5 on the paper-sized sample feeds the estimators") {
  const Dataset d = gen_dataset(default_spec(750));
  NetHyper hyper;
  hyper.hidden_widths = {8};
  hyper.epochs = 10;
  hyper.l1_outcome = hyper.l1_propensity = 0.01;
  const FoldPlan plan = split_folds(d.size(), 5, 3, &d.A);
  const NuisanceEstimates n = crossfit_nuisances(d, hyper, plan);
  for (const auto& r : estimate_all(d, n)) CHECK(std::isfinite(r.beta_hat));
}
