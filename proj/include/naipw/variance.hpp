#pragma once

// Influence-function variance estimators for AIPW and nAIPW, the stacked
// estimating-equation (sandwich) variance used to cross-check them, and the
// product-of-errors remainder diagnostic.

#include <naipw/estimators.hpp>
#include <naipw/types.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <utility>
#include <vector>

namespace naipw {

// Per-observation pieces of the stacked score psi = (phi, eta, omega) for
// theta = (beta, gamma, lambda), where gamma = sum(A/g), lambda = sum((1-A)/(1-g)).
template <typename Scalar>
struct ScoreComponents {
  Vector<Scalar> v;  // A / g
  Vector<Scalar> u;  // (1 - A) / (1 - g)
  Vector<Scalar> f;  // y - Q1
  Vector<Scalar> h;  // y - Q0
  Vector<Scalar> q;  // Q1 - Q0
  Scalar gamma = Scalar(0);
  Scalar lambda = Scalar(0);
  Scalar beta = Scalar(0);
  Vector<Scalar> phi;
  Vector<Scalar> eta;
  Vector<Scalar> omega;
};

template <typename Scalar>
ScoreComponents<Scalar> score_components(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis, Scalar beta) {
  detail::require_same_length(data, nuis);
  detail::require_open_unit(nuis.g);
  const Scalar n = static_cast<Scalar>(data.size());
  const auto a = data.A.array();
  ScoreComponents<Scalar> s;
  s.v = (a / nuis.g.array()).matrix();
  s.u = ((Scalar(1) - a) / (Scalar(1) - nuis.g.array())).matrix();
  s.f = data.Y - nuis.q1;
  s.h = data.Y - nuis.q0;
  s.q = nuis.q1 - nuis.q0;
  s.gamma = s.v.sum();
  s.lambda = s.u.sum();
  s.beta = beta;
  const auto centered = s.q.array() - beta;
  s.phi = (s.lambda * s.v.array() * s.f.array() - s.gamma * s.u.array() * s.h.array() +
           (s.gamma * s.lambda / n) * centered)
              .matrix();
  s.eta = (s.v.array() - s.gamma / n).matrix();
  s.omega = (s.u.array() - s.lambda / n).matrix();
  return s;
}

// Score components at the nAIPW solution (beta_hat, gamma_hat, lambda_hat).
template <typename Scalar>
ScoreComponents<Scalar> fitted_score_components(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis) {
  const Scalar beta = gdr_terms(data, nuis, WeightScheme::naipw).beta();
  return score_components(data, nuis, beta);
}

// (1/n^2) sum (A f / g - (1-A) h / (1-g) + q_i - beta)^2.
template <typename Scalar>
Scalar var_aipw(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis, Scalar beta_aipw) {
  detail::require_same_length(data, nuis);
  detail::require_open_unit(nuis.g);
  const Scalar n = static_cast<Scalar>(data.size());
  const auto a = data.A.array();
  const auto g = nuis.g.array();
  const auto term = a * (data.Y - nuis.q1).array() / g -
                    (Scalar(1) - a) * (data.Y - nuis.q0).array() / (Scalar(1) - g) +
                    (nuis.q1 - nuis.q0).array() - beta_aipw;
  return term.square().sum() / (n * n);
}

// sum (v f / gamma - u h / lambda + (q_i - beta) / n)^2; the normalizing sums
// take the place of the 1/n factors of the AIPW formula.
template <typename Scalar>
Scalar var_naipw(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis, Scalar beta_naipw) {
  detail::require_same_length(data, nuis);
  detail::require_both_arms(data);
  const ScoreComponents<Scalar> s = score_components(data, nuis, beta_naipw);
  const Scalar n = static_cast<Scalar>(data.size());
  const auto term = s.v.array() * s.f.array() / s.gamma - s.u.array() * s.h.array() / s.lambda +
                    (s.q.array() - beta_naipw) / n;
  return term.square().sum();
}

template <typename Scalar>
struct SandwichParts {
  Eigen::Matrix<Scalar, 3, 3> information;  // I(theta), scaled as -(1/n^2) sum d psi / d theta
  Eigen::Matrix<Scalar, 3, 3> meat;         // B(theta) = (1/n) sum psi psi^T
  Scalar full = Scalar(0);                  // Var(beta_hat) with every cross term
  Scalar truncated = Scalar(0);             // phi^2 term only
};

// Sample-average sandwich for the stacked nAIPW equations. Only a test oracle
// for var_naipw; the shipped estimator is the truncated form.
template <typename Scalar>
SandwichParts<Scalar> sandwich_parts(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis) {
  detail::require_both_arms(data);
  const ScoreComponents<Scalar> s = fitted_score_components(data, nuis);
  const Scalar n = static_cast<Scalar>(data.size());
  const Scalar gl = s.gamma * s.lambda;
  if (!(std::abs(gl) > Scalar(0))) throw EstimationError("singular information matrix");

  const auto centered = s.q.array() - s.beta;
  // Summed Jacobian of psi with respect to (beta, gamma, lambda).
  Eigen::Matrix<Scalar, 3, 3> jac = Eigen::Matrix<Scalar, 3, 3>::Zero();
  jac(0, 0) = -gl;
  jac(0, 1) = (-s.u.array() * s.h.array() + (s.lambda / n) * centered).sum();
  jac(0, 2) = (s.v.array() * s.f.array() + (s.gamma / n) * centered).sum();
  jac(1, 1) = Scalar(-1);
  jac(2, 2) = Scalar(-1);

  Eigen::Matrix<Scalar, Eigen::Dynamic, 3> psi(data.size(), 3);
  psi.col(0) = s.phi;
  psi.col(1) = s.eta;
  psi.col(2) = s.omega;
  const Eigen::Matrix<Scalar, 3, 3> meat_sum = psi.transpose() * psi;

  SandwichParts<Scalar> out;
  out.information = -jac / (n * n);
  out.meat = meat_sum / n;
  const Eigen::Matrix<Scalar, 3, 3> jac_inv = jac.inverse();
  out.full = (jac_inv * meat_sum * jac_inv.transpose())(0, 0);
  out.truncated = meat_sum(0, 0) / (gl * gl);
  return out;
}

template <typename Scalar>
Scalar sandwich_oracle(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis) {
  return sandwich_parts(data, nuis).full;
}

// Holder bound on the remainder, per arm:
// sqrt(E(g/h1 - 1)^2) * sqrt(E(Q1 - Q1_hat)^2) and the arm-0 analogue.
template <typename Scalar>
std::pair<Scalar, Scalar> remainder_diagnostic(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis,
                                               const Truth<Scalar>& truth, WeightScheme scheme) {
  detail::require_same_length(data, nuis);
  const ArmWeights<Scalar> w = arm_weights(scheme, data.A, nuis.g);
  const Scalar ratio1 = std::sqrt((truth.g.array() / w.h1.array() - Scalar(1)).square().mean());
  const Scalar ratio0 = std::sqrt(((Scalar(1) - truth.g.array()) / w.h0.array() - Scalar(1)).square().mean());
  const Scalar err1 = std::sqrt((truth.q1 - nuis.q1).array().square().mean());
  const Scalar err0 = std::sqrt((truth.q0 - nuis.q0).array().square().mean());
  return {ratio1 * err1, ratio0 * err0};
}

// GDR point estimate with its influence-function standard error where one is
// defined (aipw, naipw).
template <typename Scalar>
EstimatorResult<Scalar> gdr_with_se(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis,
                                    WeightScheme scheme) {
  EstimatorResult<Scalar> r = gdr(data, nuis, scheme);
  if (scheme == WeightScheme::aipw) r.sigma_hat = std::sqrt(var_aipw(data, nuis, r.beta_hat));
  if (scheme == WeightScheme::naipw) r.sigma_hat = std::sqrt(var_naipw(data, nuis, r.beta_hat));
  return r;
}

// Every estimator, in a fixed order: nate, sr, ipw, nipw, aipw, naipw, hybrid.
template <typename Scalar>
std::vector<EstimatorResult<Scalar>> estimate_all(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis) {
  std::vector<EstimatorResult<Scalar>> out;
  out.push_back(nate(data, nuis));
  out.push_back(sr(data, nuis));
  out.push_back(ipw(data, nuis));
  out.push_back(nipw(data, nuis));
  out.push_back(gdr_with_se(data, nuis, WeightScheme::aipw));
  out.push_back(gdr_with_se(data, nuis, WeightScheme::naipw));
  out.push_back(gdr_with_se(data, nuis, WeightScheme::hybrid));
  return out;
}

}  // namespace naipw
