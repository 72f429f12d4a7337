#include <naipw/firststage.hpp>
#include <naipw/seed.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace naipw {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kOutcomeStream = 11;
constexpr std::uint64_t kPropensityStream = 12;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

const char* head_name(OutputHead h) { return h == OutputHead::linear ? "linear" : "logistic"; }

}  // namespace

void NetHyper::validate() const {
  for (Index w : hidden_widths)
    if (w < 1) throw ValidationError("hidden layer widths must be at least 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(momentum_beta1 >= 0.0 && momentum_beta1 < 1.0)) throw ValidationError("momentum_beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("beta2 must lie in [0, 1)");
  if (epochs < 1) throw ValidationError("epochs must be at least 1");
  if (batch_size < 0) throw ValidationError("batch_size must be non-negative");
  if (!(l1_outcome >= 0.0) || !(l1_propensity >= 0.0)) throw ValidationError("L1 penalties must be non-negative");
  if (!(clamp_eps >= 0.0 && clamp_eps < 0.5)) throw ValidationError("clamp_eps must lie in [0, 0.5)");
}

void to_json(nlohmann::json& j, const NetHyper& h) {
  j = nlohmann::json{{"hidden_widths", h.hidden_widths},
                     {"l1_outcome", h.l1_outcome},
                     {"l1_propensity", h.l1_propensity},
                     {"learning_rate", h.learning_rate},
                     {"momentum_beta1", h.momentum_beta1},
                     {"beta2", h.beta2},
                     {"adam_eps", h.adam_eps},
                     {"epochs", h.epochs},
                     {"batch_size", h.batch_size},
                     {"clamp_eps", h.clamp_eps},
                     {"seed", h.seed}};
}

void from_json(const nlohmann::json& j, NetHyper& h) {
  const NetHyper d;
  h.hidden_widths = j.value("hidden_widths", d.hidden_widths);
  h.l1_outcome = j.value("l1_outcome", d.l1_outcome);
  h.l1_propensity = j.value("l1_propensity", d.l1_propensity);
  h.learning_rate = j.value("learning_rate", d.learning_rate);
  h.momentum_beta1 = j.value("momentum_beta1", d.momentum_beta1);
  h.beta2 = j.value("beta2", d.beta2);
  h.adam_eps = j.value("adam_eps", d.adam_eps);
  h.epochs = j.value("epochs", d.epochs);
  h.batch_size = j.value("batch_size", d.batch_size);
  h.clamp_eps = j.value("clamp_eps", d.clamp_eps);
  h.seed = j.value("seed", d.seed);
}

// ---------------------------------------------------------------------------
// NetworkParams

NetworkParams::NetworkParams(Index input_dim, std::vector<Index> hidden_widths, OutputHead head)
    : input_dim_(input_dim), hidden_(std::move(hidden_widths)), head_(head) {
  if (input_dim_ < 1) throw ValidationError("network needs at least one input");
  Index off = 0;
  for (Index l = 0; l < layer_count(); ++l) {
    w_off_.push_back(off);
    off += layer_out(l) * layer_in(l);
    b_off_.push_back(off);
    off += layer_out(l);
  }
  skip_off_ = off;
  if (has_skip()) off += input_dim_;
  theta_ = Eigen::VectorXd::Zero(off);
  mask_ = Eigen::VectorXd::Zero(off);
  for (Index l = 0; l < layer_count(); ++l) mask_.segment(w_off_[l], layer_out(l) * layer_in(l)).setOnes();
  if (has_skip()) mask_.segment(skip_off_, input_dim_).setOnes();
}

Index NetworkParams::layer_in(Index l) const { return l == 0 ? input_dim_ : hidden_[static_cast<std::size_t>(l - 1)]; }

Index NetworkParams::layer_out(Index l) const {
  return l == static_cast<Index>(hidden_.size()) ? 1 : hidden_[static_cast<std::size_t>(l)];
}

Eigen::Map<const Eigen::MatrixXd> NetworkParams::weight(Index l) const {
  return {theta_.data() + w_off_[l], layer_out(l), layer_in(l)};
}
Eigen::Map<Eigen::MatrixXd> NetworkParams::weight(Index l) {
  return {theta_.data() + w_off_[l], layer_out(l), layer_in(l)};
}
Eigen::Map<const Eigen::VectorXd> NetworkParams::bias(Index l) const {
  return {theta_.data() + b_off_[l], layer_out(l)};
}
Eigen::Map<Eigen::VectorXd> NetworkParams::bias(Index l) { return {theta_.data() + b_off_[l], layer_out(l)}; }
Eigen::Map<const Eigen::RowVectorXd> NetworkParams::skip() const {
  return {theta_.data() + skip_off_, has_skip() ? input_dim_ : 0};
}
Eigen::Map<Eigen::RowVectorXd> NetworkParams::skip() {
  return {theta_.data() + skip_off_, has_skip() ? input_dim_ : 0};
}

Eigen::VectorXd NetworkParams::forward(const Eigen::MatrixXd& X) const {
  if (X.cols() != input_dim_) throw ValidationError("network input has the wrong number of columns");
  Eigen::MatrixXd H = X;
  for (Index l = 0; l + 1 < layer_count(); ++l) {
    Eigen::MatrixXd Z = H * weight(l).transpose();
    Z.rowwise() += bias(l).transpose();
    H = Z.cwiseMax(0.0);
  }
  const Index out = layer_count() - 1;
  Eigen::VectorXd r = H * weight(out).transpose();
  r.array() += bias(out)[0];
  if (has_skip()) r += X * skip().transpose();
  return r;
}

Eigen::VectorXd NetworkParams::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd r = forward(X);
  if (head_ == OutputHead::logistic) r = r.unaryExpr([](double x) { return sigmoid(x); });
  return r;
}

void to_json(nlohmann::json& j, const NetworkParams& p) {
  j = nlohmann::json{{"format", "naipw.mlp"},
                     {"version", 1},
                     {"input_dim", p.input_dim()},
                     {"hidden_widths", p.hidden_widths()},
                     {"head", head_name(p.head())},
                     {"theta", std::vector<double>(p.theta().data(), p.theta().data() + p.size())}};
}

void from_json(const nlohmann::json& j, NetworkParams& p) {
  if (j.value("format", std::string()) != "naipw.mlp" || j.value("version", 0) != 1)
    throw ValidationError("unsupported network dump (expected format naipw.mlp, version 1)");
  const std::string head = j.at("head").get<std::string>();
  if (head != "linear" && head != "logistic") throw ValidationError("unknown output head: " + head);
  p = NetworkParams(j.at("input_dim").get<Index>(), j.at("hidden_widths").get<std::vector<Index>>(),
                    head == "linear" ? OutputHead::linear : OutputHead::logistic);
  const auto theta = j.at("theta").get<std::vector<double>>();
  if (static_cast<Index>(theta.size()) != p.size()) throw ValidationError("network dump has the wrong parameter count");
  p.theta() = Eigen::Map<const Eigen::VectorXd>(theta.data(), p.size());
}

NetworkParams init_network(Index input_dim, const std::vector<Index>& hidden_widths, OutputHead head,
                           std::uint64_t seed) {
  NetworkParams net(input_dim, hidden_widths, head);
  std::mt19937_64 rng(derive_seed(seed, kInitStream));
  for (Index l = 0; l < net.layer_count(); ++l) {
    auto W = net.weight(l);
    const double bound = std::sqrt(6.0 / static_cast<double>(W.cols()));
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (Index c = 0; c < W.cols(); ++c)
      for (Index r = 0; r < W.rows(); ++r) W(r, c) = unif(rng);
  }
  return net;
}

// ---------------------------------------------------------------------------
// Loss and back-propagation

double loss_and_gradient(const NetworkParams& net, LossKind kind, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         double l1, Eigen::VectorXd* grad) {
  const Index B = X.rows();
  const Index L = net.layer_count();
  std::vector<Eigen::MatrixXd> acts;  // acts[l] is the input of layer l
  std::vector<Eigen::MatrixXd> pre;   // pre-activations of hidden layers
  acts.reserve(static_cast<std::size_t>(L));
  acts.push_back(X);
  for (Index l = 0; l + 1 < L; ++l) {
    Eigen::MatrixXd Z = acts.back() * net.weight(l).transpose();
    Z.rowwise() += net.bias(l).transpose();
    acts.push_back(Z.cwiseMax(0.0));
    pre.push_back(std::move(Z));
  }
  Eigen::VectorXd r = acts.back() * net.weight(L - 1).transpose();
  r.array() += net.bias(L - 1)[0];
  if (net.has_skip()) r += X * net.skip().transpose();

  const double inv_b = 1.0 / static_cast<double>(B);
  double data_loss = 0.0;
  Eigen::VectorXd dr(B);
  if (kind == LossKind::squared_error) {
    const Eigen::VectorXd e = r - y;
    data_loss = e.squaredNorm() * inv_b;
    dr = 2.0 * inv_b * e;
  } else {
    for (Index i = 0; i < B; ++i) {
      data_loss += softplus(r[i]) - y[i] * r[i];
      dr[i] = (sigmoid(r[i]) - y[i]) * inv_b;
    }
    data_loss *= inv_b;
  }
  const Eigen::VectorXd& mask = net.penalty_mask();
  const double penalty = l1 * mask.cwiseProduct(net.theta()).cwiseAbs().sum();

  if (grad != nullptr) {
    NetworkParams g(net.input_dim(), net.hidden_widths(), net.head());
    g.weight(L - 1) = dr.transpose() * acts.back();
    g.bias(L - 1)[0] = dr.sum();
    if (net.has_skip()) g.skip() = dr.transpose() * X;
    Eigen::MatrixXd dH = dr * net.weight(L - 1);
    for (Index l = L - 2; l >= 0; --l) {
      const Eigen::MatrixXd dZ = dH.cwiseProduct((pre[static_cast<std::size_t>(l)].array() > 0.0).cast<double>().matrix());
      g.weight(l) = dZ.transpose() * acts[static_cast<std::size_t>(l)];
      g.bias(l) = dZ.colwise().sum().transpose();
      if (l > 0) dH = dZ * net.weight(l);
    }
    *grad = std::move(g.theta());
    if (l1 > 0.0) *grad += l1 * mask.cwiseProduct(net.theta().unaryExpr([](double w) {
      return static_cast<double>((w > 0.0) - (w < 0.0));
    }));
  }
  return data_loss + penalty;
}

void train_network(NetworkParams& net, LossKind kind, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double l1,
                   const NetHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  const Index n = X.rows();
  if (n == 0) throw ValidationError("cannot train on an empty row set");
  const Index batch = std::min(hyper.effective_batch(X.cols()), n);

  std::mt19937_64 rng(derive_seed(seed, kShuffleStream));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  Eigen::VectorXd m = Eigen::VectorXd::Zero(net.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(net.size());
  Eigen::VectorXd grad;
  Eigen::MatrixXd Xb;
  Eigen::VectorXd yb;
  const double b1 = hyper.momentum_beta1;
  const double b2 = hyper.beta2;
  double b1t = 1.0, b2t = 1.0;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < n; start += batch) {
      const Index len = std::min(batch, n - start);
      Xb.resize(len, X.cols());
      yb.resize(len);
      for (Index k = 0; k < len; ++k) {
        const Index row = order[static_cast<std::size_t>(start + k)];
        Xb.row(k) = X.row(row);
        yb[k] = y[row];
      }
      const double loss = loss_and_gradient(net, kind, Xb, yb, l1, &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch) +
                               "; the learning rate is probably too high");
      b1t *= b1;
      b2t *= b2;
      m = b1 * m + (1.0 - b1) * grad;
      v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
      net.theta().array() -= hyper.learning_rate * (m.array() / (1.0 - b1t)) /
                             ((v.array() / (1.0 - b2t)).sqrt() + hyper.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Nuisance models

Eigen::MatrixXd outcome_design(const Dataset& data, std::span<const Index> rows) {
  Eigen::MatrixXd X(static_cast<Index>(rows.size()), data.W.cols() + 1);
  for (Index k = 0; k < X.rows(); ++k) {
    const Index i = rows[static_cast<std::size_t>(k)];
    X(k, 0) = data.A[i];
    X.row(k).tail(data.W.cols()) = data.W.row(i);
  }
  return X;
}

Eigen::MatrixXd outcome_design(const Eigen::MatrixXd& W, double treatment) {
  Eigen::MatrixXd X(W.rows(), W.cols() + 1);
  X.col(0).setConstant(treatment);
  X.rightCols(W.cols()) = W;
  return X;
}

namespace {

void require_rows(const Dataset& data, std::span<const Index> rows, bool need_both_arms) {
  if (rows.empty()) throw ValidationError("training row set is empty");
  Index treated = 0;
  for (Index i : rows) {
    if (i < 0 || i >= data.size()) throw ValidationError("training row index out of range");
    treated += data.A[i] > 0.5;
  }
  if (need_both_arms && (treated == 0 || treated == static_cast<Index>(rows.size())))
    throw EstimationError("training rows contain a single treatment arm");
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& W, std::span<const Index> rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), W.cols());
  for (Index k = 0; k < out.rows(); ++k) out.row(k) = W.row(rows[static_cast<std::size_t>(k)]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, std::span<const Index> rows) {
  Eigen::VectorXd out(static_cast<Index>(rows.size()));
  for (Index k = 0; k < out.size(); ++k) out[k] = v[rows[static_cast<std::size_t>(k)]];
  return out;
}

}  // namespace

NetworkParams train_outcome(const Dataset& data, const NetHyper& hyper, std::span<const Index> rows) {
  require_rows(data, rows, true);
  const Eigen::MatrixXd X = outcome_design(data, rows);
  const Eigen::VectorXd y = gather(data.Y, rows);
  const std::uint64_t seed = derive_seed(hyper.seed, kOutcomeStream);
  NetHyper h = hyper;
  h.batch_size = hyper.effective_batch(data.W.cols());
  NetworkParams net = init_network(X.cols(), hyper.hidden_widths, OutputHead::linear, seed);
  net.bias(net.layer_count() - 1)[0] = y.mean();
  train_network(net, LossKind::squared_error, X, y, hyper.l1_outcome, h, seed);
  return net;
}

NetworkParams train_propensity(const Dataset& data, const NetHyper& hyper, std::span<const Index> rows) {
  require_rows(data, rows, true);
  const Eigen::MatrixXd X = gather_rows(data.W, rows);
  const Eigen::VectorXd y = gather(data.A, rows);
  const std::uint64_t seed = derive_seed(hyper.seed, kPropensityStream);
  NetworkParams net = init_network(X.cols(), hyper.hidden_widths, OutputHead::logistic, seed);
  const double share = y.mean();
  net.bias(net.layer_count() - 1)[0] = std::log(share / (1.0 - share));
  train_network(net, LossKind::cross_entropy, X, y, hyper.l1_propensity, hyper, seed);
  return net;
}

NuisanceEstimates predict_nuisances(const NetworkParams& outcome, const NetworkParams& propensity,
                                    const Dataset& data, std::span<const Index> rows, double clamp_eps) {
  const Eigen::MatrixXd W = gather_rows(data.W, rows);
  NuisanceEstimates nuis;
  nuis.q1 = outcome.predict(outcome_design(W, 1.0));
  nuis.q0 = outcome.predict(outcome_design(W, 0.0));
  nuis.g = propensity.predict(W).cwiseMax(clamp_eps).cwiseMin(1.0 - clamp_eps);

  const Eigen::VectorXd a = gather(data.A, rows);
  const Eigen::VectorXd y = gather(data.Y, rows);
  const Eigen::VectorXd fitted = (a.array() * nuis.q1.array() + (1.0 - a.array()) * nuis.q0.array()).matrix();
  nuis.diagnostics = FirstStageDiagnostics{r_squared(y, fitted), auc(a, nuis.g)};
  return nuis;
}

NuisanceEstimates oracle_nuisances(const Dataset& data) {
  if (!data.truth) throw ValidationError("oracle nuisances need a sample with known truth");
  NuisanceEstimates nuis;
  nuis.q1 = data.truth->q1;
  nuis.q0 = data.truth->q0;
  nuis.g = data.truth->g;
  return nuis;
}

std::vector<Index> all_rows(Index n) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  return rows;
}

double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& fitted) {
  const double ss_tot = (y.array() - y.mean()).square().sum();
  if (ss_tot <= 0.0) return 0.0;
  return 1.0 - (y - fitted).squaredNorm() / ss_tot;
}

double auc(const Eigen::VectorXd& labels, const Eigen::VectorXd& scores) {
  const Index n = scores.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  Index pos = 0;
  for (Index k = 0; k < n;) {
    Index j = k;
    while (j + 1 < n && scores[order[static_cast<std::size_t>(j + 1)]] == scores[order[static_cast<std::size_t>(k)]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(k + j) + 1.0;
    for (Index t = k; t <= j; ++t)
      if (labels[order[static_cast<std::size_t>(t)]] > 0.5) {
        rank_sum += avg_rank;
        ++pos;
      }
    k = j + 1;
  }
  const Index neg = n - pos;
  if (pos == 0 || neg == 0) return 0.5;
  return (rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1)) /
         (static_cast<double>(pos) * static_cast<double>(neg));
}

double gradient_check(const NetworkParams& net, LossKind kind, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      double l1) {
  constexpr double step = 1e-5;
  Eigen::VectorXd analytic;
  loss_and_gradient(net, kind, X, y, l1, &analytic);
  NetworkParams probe = net;
  double worst = 0.0;
  for (Index k = 0; k < net.size(); ++k) {
    const double w = net.theta()[k];
    if (l1 > 0.0 && net.penalty_mask()[k] > 0.0 && std::abs(w) <= step) continue;
    probe.theta()[k] = w + step;
    const double up = loss_and_gradient(probe, kind, X, y, l1, nullptr);
    probe.theta()[k] = w - step;
    const double down = loss_and_gradient(probe, kind, X, y, l1, nullptr);
    probe.theta()[k] = w;
    const double numeric = (up - down) / (2.0 * step);
    const double scale = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-5});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / scale);
  }
  return worst;
}

}  // namespace naipw
