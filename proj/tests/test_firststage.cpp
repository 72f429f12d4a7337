#include <naipw/dgp.hpp>
#include <naipw/firststage.hpp>

#include <doctest.h>

#include <random>

using namespace naipw;

namespace {

Eigen::MatrixXd normal_matrix(Index n, Index p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd X(n, p);
  for (Index c = 0; c < p; ++c)
    for (Index r = 0; r < n; ++r) X(r, c) = normal(rng);
  return X;
}

Eigen::VectorXd binary_labels(const Eigen::VectorXd& score, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd y(score.size());
  for (Index i = 0; i < y.size(); ++i) y[i] = unif(rng) < 1.0 / (1.0 + std::exp(-score[i])) ? 1.0 : 0.0;
  return y;
}

double abs_weight_sum(const NetworkParams& net) {
  return (net.theta().array().abs() * net.penalty_mask().array()).sum();
}

// Moves every weight away from zero so the L1 kink is never inside a
// finite-difference step.
void nudge_from_zero(NetworkParams& net) {
  for (Index i = 0; i < net.size(); ++i)
    if (std::abs(net.theta()[i]) < 1e-3) net.theta()[i] = 0.05;
}

}  // namespace

TEST_CASE("gradient check: linear single unit, squared error") {
  const Eigen::MatrixXd X = normal_matrix(40, 3, 1);
  const Eigen::VectorXd y = X * Eigen::Vector3d(1.0, -2.0, 0.5) + Eigen::VectorXd::Constant(40, 0.3);
  NetworkParams net = init_network(3, {}, OutputHead::linear, 7);
  nudge_from_zero(net);
  CHECK(gradient_check(net, LossKind::squared_error, X, y) < 1e-6);
  CHECK(gradient_check(net, LossKind::squared_error, X, y, 0.1) < 1e-6);
}

TEST_CASE("gradient check: two hidden layers, cross-entropy") {
  const Eigen::MatrixXd X = normal_matrix(60, 5, 2);
  const Eigen::VectorXd y = binary_labels(X.col(0) - X.col(1), 3);
  NetworkParams net = init_network(5, {6, 4}, OutputHead::logistic, 11);
  nudge_from_zero(net);
  CHECK(gradient_check(net, LossKind::cross_entropy, X, y) < 1e-4);
  CHECK(gradient_check(net, LossKind::cross_entropy, X, y, 0.01) < 1e-4);
}

TEST_CASE("gradient check: three hidden layers, squared error") {
  const Eigen::MatrixXd X = normal_matrix(50, 4, 4);
  const Eigen::VectorXd y = (X.col(0).array() * X.col(1).array()).matrix();
  NetworkParams net = init_network(4, {4, 4, 4}, OutputHead::linear, 5);
  nudge_from_zero(net);
  CHECK(gradient_check(net, LossKind::squared_error, X, y, 0.01) < 1e-4);
}

TEST_CASE("gradient check skips weights at the L1 kink") {
  const Eigen::MatrixXd X = normal_matrix(30, 3, 6);
  const Eigen::VectorXd y = X.col(2);
  NetworkParams net = init_network(3, {}, OutputHead::linear, 8);
  nudge_from_zero(net);
  net.weight(0)(0, 1) = 0.0;
  CHECK(gradient_check(net, LossKind::squared_error, X, y, 0.5) < 1e-6);
}

TEST_CASE("linear model recovers ordinary least squares") {
  const Index n = 400;
  const Eigen::MatrixXd X = normal_matrix(n, 4, 12);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> noise(0.0, 0.5);
  Eigen::VectorXd y = X * Eigen::Vector4d(1.5, -0.7, 0.0, 2.0);
  for (Index i = 0; i < n; ++i) y[i] += 3.0 + noise(rng);

  Eigen::MatrixXd design(n, 5);
  design << X, Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd ols = design.colPivHouseholderQr().solve(y);

  NetHyper hyper;
  hyper.hidden_widths = {};
  hyper.batch_size = n;
  hyper.epochs = 3000;
  NetworkParams net = init_network(4, {}, OutputHead::linear, 1);
  train_network(net, LossKind::squared_error, X, y, 0.0, hyper, 1);
  const Eigen::VectorXd fitted_w = net.weight(0).row(0).transpose();
  CHECK((fitted_w - ols.head(4)).cwiseAbs().maxCoeff() < 1e-3);
  CHECK(std::abs(net.bias(0)[0] - ols[4]) < 1e-3);
}

TEST_CASE("heavy L1 shrinks weights toward zero") {
  const Dataset d = gen_dataset(default_spec(300));
  NetHyper hyper;
  hyper.hidden_widths = {8, 8};
  hyper.epochs = 40;
  const std::vector<Index> rows = all_rows(d.size());

  std::vector<double> sums;
  for (double c : {0.0, 0.01, 1e6}) {
    hyper.l1_outcome = c;
    sums.push_back(abs_weight_sum(train_outcome(d, hyper, rows)));
  }
  CHECK(sums[2] < sums[0]);
  CHECK(sums[2] < 0.05 * sums[0]);

  // Predictions collapse to a nearly constant value.
  hyper.l1_outcome = 1e6;
  const NetworkParams net = train_outcome(d, hyper, rows);
  const Eigen::VectorXd pred = net.predict(outcome_design(d, rows));
  CHECK(pred.maxCoeff() - pred.minCoeff() < 0.1 * (d.Y.maxCoeff() - d.Y.minCoeff()));
}

TEST_CASE("L1 trend on the weight sum") {
  const Dataset d = gen_dataset(default_spec(300));
  NetHyper hyper;
  hyper.hidden_widths = {8, 8};
  hyper.epochs = 40;
  const std::vector<Index> rows = all_rows(d.size());
  std::vector<double> sums;
  for (double c : {0.0, 0.01, 0.1}) {
    hyper.l1_propensity = c;
    sums.push_back(abs_weight_sum(train_propensity(d, hyper, rows)));
  }
  int inversions = (sums[1] > sums[0]) + (sums[2] > sums[1]);
  CHECK(inversions <= 1);
  CHECK(sums[2] < sums[0]);
}

TEST_CASE("training is deterministic") {
  const Dataset d = gen_dataset(default_spec(200));
  NetHyper hyper;
  hyper.hidden_widths = {16, 16};
  hyper.epochs = 10;
  const std::vector<Index> rows = all_rows(d.size());
  CHECK(train_outcome(d, hyper, rows).theta() == train_outcome(d, hyper, rows).theta());
  CHECK(train_propensity(d, hyper, rows).theta() == train_propensity(d, hyper, rows).theta());
  NetHyper other = hyper;
  other.seed = 2;
  CHECK(train_outcome(d, other, rows).theta() != train_outcome(d, hyper, rows).theta());
}

TEST_CASE("propensity with no signal is close to the treated share") {
  const Index n = 2000;
  Dataset d;
  d.W = normal_matrix(n, 6, 21);
  d.A = binary_labels(Eigen::VectorXd::Constant(n, 0.4), 22);
  d.Y = Eigen::VectorXd::Zero(n);
  NetHyper hyper;
  hyper.hidden_widths = {6};
  hyper.l1_propensity = 0.05;
  hyper.epochs = 30;
  const std::vector<Index> rows = all_rows(n);
  const NetworkParams net = train_propensity(d, hyper, rows);
  const Eigen::VectorXd g = net.predict(d.W);
  CHECK((g.array() - d.A.mean()).abs().maxCoeff() < 0.05);
}

TEST_CASE("separable assignment drives g to the boundary") {
  const Index n = 400;
  Dataset d;
  d.W = normal_matrix(n, 3, 31);
  d.A = (d.W.col(0).array() > 0.0).cast<double>().matrix();
  d.Y = Eigen::VectorXd::Zero(n);
  NetHyper hyper;
  hyper.hidden_widths = {};
  hyper.epochs = 400;
  const std::vector<Index> rows = all_rows(n);
  const NetworkParams net = train_propensity(d, hyper, rows);
  const Eigen::VectorXd g = net.predict(d.W);
  CHECK(g.minCoeff() < 1e-3);
  CHECK(g.maxCoeff() > 1.0 - 1e-3);
}

TEST_CASE("prediction contract") {
  const Dataset d = gen_dataset(default_spec(150));
  NetHyper hyper;
  hyper.hidden_widths = {};
  hyper.epochs = 5;
  const std::vector<Index> rows = all_rows(d.size());
  NetworkParams outcome = train_outcome(d, hyper, rows);
  NetworkParams propensity = train_propensity(d, hyper, rows);

  // A propensity so extreme it must be clamped.
  propensity.bias(0)[0] = 80.0;
  const NuisanceEstimates n = predict_nuisances(outcome, propensity, d, rows, 1e-6);
  CHECK(n.g.maxCoeff() <= 1.0 - 1e-6);
  CHECK(n.g.minCoeff() >= 1e-6);
  REQUIRE(n.diagnostics.has_value());

  // No weight on the treatment column: q1 = q0.
  outcome.weight(0)(0, 0) = 0.0;
  const NuisanceEstimates same = predict_nuisances(outcome, propensity, d, rows, 1e-6);
  CHECK(same.q1 == same.q0);
}

TEST_CASE("oracle nuisances are the truth") {
  const Dataset d = gen_dataset(default_spec(100));
  const NuisanceEstimates n = oracle_nuisances(d);
  CHECK(n.g == d.truth->g);
  CHECK(n.q1 == d.truth->q1);
  CHECK(n.q0 == d.truth->q0);
}

TEST_CASE("diagnostics") {
  CHECK(auc(Eigen::Vector4d(0, 0, 1, 1), Eigen::Vector4d(0.1, 0.2, 0.3, 0.4)) == 1.0);
  CHECK(auc(Eigen::Vector4d(0, 1, 0, 1), Eigen::Vector4d(0.5, 0.5, 0.5, 0.5)) == 0.5);
  const Eigen::Vector3d y(1, 2, 3);
  CHECK(r_squared(y, y) == 1.0);
  CHECK(r_squared(y, Eigen::Vector3d::Constant(2.0)) == 0.0);
}

TEST_CASE("network json round trip") {
  const NetworkParams net = init_network(5, {4, 3}, OutputHead::logistic, 3);
  const NetworkParams back = nlohmann::json(net).get<NetworkParams>();
  CHECK(back.theta() == net.theta());
  CHECK(back.hidden_widths() == net.hidden_widths());
  CHECK(back.head() == OutputHead::logistic);
}

TEST_CASE("hyperparameter validation") {
  NetHyper h;
  h.learning_rate = 0.0;
  CHECK_THROWS_AS(h.validate(), ValidationError);
  h = NetHyper{};
  h.l1_outcome = -1.0;
  CHECK_THROWS_AS(h.validate(), ValidationError);
  CHECK(NetHyper{}.effective_batch(32) == 96);
}

TEST_CASE("a huge learning rate is reported as divergence") {
  const Eigen::MatrixXd X = 1e200 * normal_matrix(20, 2, 41);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 1e200);
  NetHyper hyper;
  hyper.learning_rate = 1e3;
  hyper.epochs = 5;
  NetworkParams net = init_network(2, {3}, OutputHead::linear, 1);
  CHECK_THROWS_AS(train_network(net, LossKind::squared_error, X, y, 0.0, hyper, 1), TrainingDiverged);
}
