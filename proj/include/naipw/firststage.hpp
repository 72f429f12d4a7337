#pragma once

// First-stage nuisance models: two independent ReLU multilayer perceptrons,
// one for the outcome (inputs A and W, linear head) and one for the
// propensity score (inputs W, logistic head). Both carry a linear skip term
// from the inputs to the output, trained with an L1 penalty on every
// connection weight by mini-batch Adam.

#include <naipw/types.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace naipw {

struct NetHyper {
  std::vector<Index> hidden_widths;  // empty: linear model
  double l1_outcome = 0.0;
  double l1_propensity = 0.0;
  double learning_rate = 0.01;
  double momentum_beta1 = 0.95;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 200;
  Index batch_size = 0;  // 0: three times the covariate count
  double clamp_eps = 1e-6;
  std::uint64_t seed = 1;

  void validate() const;
  Index effective_batch(Index p) const { return batch_size > 0 ? batch_size : 3 * p; }
};

void to_json(nlohmann::json& j, const NetHyper& h);
void from_json(const nlohmann::json& j, NetHyper& h);

enum class OutputHead { linear, logistic };
enum class LossKind { squared_error, cross_entropy };

// Non-finite loss during training.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One perceptron. All parameters live in a single flat vector `theta`:
// for every hidden layer its weight matrix (out x in, column-major) then its
// bias, then the output weights, the output bias and (with hidden layers)
// the input-to-output skip weights.
class NetworkParams {
 public:
  NetworkParams() = default;
  NetworkParams(Index input_dim, std::vector<Index> hidden_widths, OutputHead head);

  Index input_dim() const { return input_dim_; }
  const std::vector<Index>& hidden_widths() const { return hidden_; }
  OutputHead head() const { return head_; }
  bool has_skip() const { return !hidden_.empty(); }
  Index layer_count() const { return static_cast<Index>(hidden_.size()) + 1; }

  Eigen::VectorXd& theta() { return theta_; }
  const Eigen::VectorXd& theta() const { return theta_; }
  Index size() const { return theta_.size(); }

  // Layer l in [0, layer_count()); the last one is the scalar output layer.
  Eigen::Map<const Eigen::MatrixXd> weight(Index l) const;
  Eigen::Map<Eigen::MatrixXd> weight(Index l);
  Eigen::Map<const Eigen::VectorXd> bias(Index l) const;
  Eigen::Map<Eigen::VectorXd> bias(Index l);
  Eigen::Map<const Eigen::RowVectorXd> skip() const;
  Eigen::Map<Eigen::RowVectorXd> skip();

  // 1 for entries of theta that are connection weights (penalized), 0 for biases.
  const Eigen::VectorXd& penalty_mask() const { return mask_; }

  // Raw output before the head's link function, one entry per row of X.
  Eigen::VectorXd forward(const Eigen::MatrixXd& X) const;
  // Output on the response scale (probability for the logistic head).
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;

 private:
  Index layer_in(Index l) const;
  Index layer_out(Index l) const;

  Index input_dim_ = 0;
  std::vector<Index> hidden_;
  OutputHead head_ = OutputHead::linear;
  Eigen::VectorXd theta_;
  Eigen::VectorXd mask_;
  std::vector<Index> w_off_, b_off_;
  Index skip_off_ = 0;
};

void to_json(nlohmann::json& j, const NetworkParams& p);
void from_json(const nlohmann::json& j, NetworkParams& p);

// He-style uniform initialization, U(-sqrt(6/fan_in), sqrt(6/fan_in)); biases
// and skip weights start at zero.
NetworkParams init_network(Index input_dim, const std::vector<Index>& hidden_widths, OutputHead head,
                           std::uint64_t seed);

// Mean batch loss plus l1 * sum|w| over connection weights. Fills `grad`
// (same layout as theta) when non-null; the L1 part contributes l1 * sign(w).
double loss_and_gradient(const NetworkParams& net, LossKind kind, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& y, double l1, Eigen::VectorXd* grad);

// Trains `net` in place over `epochs` shuffled passes.
void train_network(NetworkParams& net, LossKind kind, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   double l1, const NetHyper& hyper, std::uint64_t seed);

// Input matrix of the outcome net: column 0 is the treatment.
Eigen::MatrixXd outcome_design(const Dataset& data, std::span<const Index> rows);
Eigen::MatrixXd outcome_design(const Eigen::MatrixXd& W, double treatment);

NetworkParams train_outcome(const Dataset& data, const NetHyper& hyper, std::span<const Index> rows);
NetworkParams train_propensity(const Dataset& data, const NetHyper& hyper, std::span<const Index> rows);

// q1/q0 by forcing the treatment input to 1/0; g clamped to
// [clamp_eps, 1 - clamp_eps]. Output vectors follow the order of `rows`.
NuisanceEstimates predict_nuisances(const NetworkParams& outcome, const NetworkParams& propensity,
                                    const Dataset& data, std::span<const Index> rows, double clamp_eps);

// Truth vectors substituted verbatim.
NuisanceEstimates oracle_nuisances(const Dataset& data);

std::vector<Index> all_rows(Index n);

double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& fitted);
// Rank-based AUC with average ranks for ties.
double auc(const Eigen::VectorXd& labels, const Eigen::VectorXd& scores);

// Largest relative difference between the back-propagated gradient and
// central differences with step 1e-5. With l1 > 0, weights within one step of
// zero are skipped (the subgradient is not unique there).
double gradient_check(const NetworkParams& net, LossKind kind, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      double l1 = 0.0);

}  // namespace naipw
