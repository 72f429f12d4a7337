#pragma once

// Point estimators of the average treatment effect built from first-stage
// predictions: nATE, SR, IPW, nIPW and the GDR family (AIPW, nAIPW, hybrid).
//
// All functions take the propensity predictions as given. Nothing here clamps
// g; extreme values are the caller's experimental variable.

#include <naipw/types.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace naipw {

enum class WeightScheme { aipw, naipw, hybrid };

inline std::string_view to_string(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::aipw: return "aipw";
    case WeightScheme::naipw: return "naipw";
    case WeightScheme::hybrid: return "hybrid";
  }
  return "unknown";
}

inline WeightScheme parse_scheme(std::string_view name) {
  if (name == "aipw") return WeightScheme::aipw;
  if (name == "naipw") return WeightScheme::naipw;
  if (name == "hybrid") return WeightScheme::hybrid;
  throw ValidationError("unknown weight scheme: " + std::string(name));
}

template <typename Scalar>
struct EstimatorResult {
  std::string estimator;
  Scalar beta_hat = Scalar(0);
  std::optional<Scalar> sigma_hat;
  Index n_used = 0;
  std::string scheme;
  bool experimental = false;
};

// Per-arm adjustments of a GDR estimator: beta = sr + adjustment1 - adjustment0.
template <typename Scalar>
struct GdrTerms {
  Scalar sr = Scalar(0);
  Scalar adjustment1 = Scalar(0);
  Scalar adjustment0 = Scalar(0);

  Scalar beta() const { return sr + adjustment1 - adjustment0; }
};

template <typename Scalar>
struct ArmWeights {
  Vector<Scalar> h1;
  Vector<Scalar> h0;
};

namespace detail {

template <typename Scalar>
void require_same_length(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis) {
  const Index n = data.size();
  if (nuis.q1.size() != n || nuis.q0.size() != n || nuis.g.size() != n)
    throw ValidationError("nuisance vectors must match the sample length");
}

template <typename Scalar>
void require_both_arms(const Sample<Scalar>& data) {
  if (data.size() == 0) throw EstimationError("empty sample");
  if (data.treated() == 0) throw EstimationError("treated arm is empty");
  if (data.controls() == 0) throw EstimationError("control arm is empty");
}

template <typename Scalar>
void require_open_unit(const Vector<Scalar>& g) {
  for (Index i = 0; i < g.size(); ++i) {
    if (!(g[i] > Scalar(0) && g[i] < Scalar(1)))
      throw EstimationError("propensity prediction outside (0,1) at row " + std::to_string(i));
  }
}

template <typename Scalar>
EstimatorResult<Scalar> make_result(std::string name, Scalar beta, Index n, std::string scheme = {}) {
  EstimatorResult<Scalar> r;
  r.estimator = std::move(name);
  r.beta_hat = beta;
  r.n_used = n;
  r.scheme = std::move(scheme);
  return r;
}

}  // namespace detail

// Empirical normalizers E[A/g] and E[(1-A)/(1-g)].
template <typename Scalar>
std::pair<Scalar, Scalar> normalizers(const Vector<Scalar>& A, const Vector<Scalar>& g) {
  const auto a = A.array();
  const Scalar w1 = (a / g.array()).mean();
  const Scalar w0 = ((Scalar(1) - a) / (Scalar(1) - g.array())).mean();
  return {w1, w0};
}

// h^1, h^0 for a scheme. The hybrid rule switches to the normalized weight
// only where g is within 1/n of the boundary.
template <typename Scalar>
ArmWeights<Scalar> arm_weights(WeightScheme scheme, const Vector<Scalar>& A, const Vector<Scalar>& g) {
  detail::require_open_unit(g);
  const Index n = g.size();
  ArmWeights<Scalar> w;
  w.h1 = g;
  w.h0 = (Scalar(1) - g.array()).matrix();
  if (scheme == WeightScheme::aipw) return w;

  const auto [e1, e0] = normalizers<Scalar>(A, g);
  if (scheme == WeightScheme::naipw) {
    w.h1 *= e1;
    w.h0 *= e0;
    return w;
  }

  const Scalar eps = Scalar(1) / static_cast<Scalar>(n);
  for (Index i = 0; i < n; ++i) {
    if (g[i] < eps) w.h1[i] *= e1;
    if (g[i] > Scalar(1) - eps) w.h0[i] *= e0;
  }
  return w;
}

template <typename Scalar>
EstimatorResult<Scalar> nate(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis) {
  detail::require_same_length(data, nuis);
  detail::require_both_arms(data);
  const auto a = data.A.array();
  const Scalar m1 = (a * nuis.q1.array()).sum() / a.sum();
  const Scalar m0 = ((Scalar(1) - a) * nuis.q0.array()).sum() / (Scalar(1) - a).sum();
  return detail::make_result<Scalar>("nate", m1 - m0, data.size());
}

template <typename Scalar>
EstimatorResult<Scalar> sr(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis) {
  detail::require_same_length(data, nuis);
  if (data.size() == 0) throw EstimationError("empty sample");
  return detail::make_result<Scalar>("sr", (nuis.q1 - nuis.q0).mean(), data.size());
}

template <typename Scalar>
EstimatorResult<Scalar> ipw(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis) {
  detail::require_same_length(data, nuis);
  detail::require_both_arms(data);
  detail::require_open_unit(nuis.g);
  const auto a = data.A.array();
  const auto y = data.Y.array();
  const auto g = nuis.g.array();
  const Scalar beta = (a * y / g - (Scalar(1) - a) * y / (Scalar(1) - g)).mean();
  return detail::make_result<Scalar>("ipw", beta, data.size());
}

// Self-normalized IPW with arbitrary positive arm weights w1 (treated rows)
// and w0 (control rows); entries on the other arm are ignored.
template <typename Scalar>
EstimatorResult<Scalar> nipw(const Sample<Scalar>& data, const Vector<Scalar>& w1, const Vector<Scalar>& w0) {
  detail::require_both_arms(data);
  if (w1.size() != data.size() || w0.size() != data.size()) throw ValidationError("weights must match the sample length");
  const auto a = data.A.array();
  const Vector<Scalar> t1 = (a * w1.array()).matrix();
  const Vector<Scalar> t0 = ((Scalar(1) - a) * w0.array()).matrix();
  const Scalar s1 = t1.sum();
  const Scalar s0 = t0.sum();
  if (!(s1 > Scalar(0)) || !(s0 > Scalar(0))) throw EstimationError("an arm has zero total weight");
  const Scalar beta = t1.dot(data.Y) / s1 - t0.dot(data.Y) / s0;
  return detail::make_result<Scalar>("nipw", beta, data.size());
}

// w1 = 1/g, w0 = 1/(1-g).
template <typename Scalar>
EstimatorResult<Scalar> nipw(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis) {
  detail::require_same_length(data, nuis);
  detail::require_both_arms(data);
  detail::require_open_unit(nuis.g);
  const Vector<Scalar> w1 = nuis.g.cwiseInverse();
  const Vector<Scalar> w0 = (Scalar(1) - nuis.g.array()).inverse().matrix();
  return nipw(data, w1, w0);
}

// SR plus residual adjustments weighted by 1/h^1 and 1/h^0.
template <typename Scalar>
GdrTerms<Scalar> gdr_terms(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis, const ArmWeights<Scalar>& w) {
  detail::require_same_length(data, nuis);
  detail::require_both_arms(data);
  if (w.h1.size() != data.size() || w.h0.size() != data.size())
    throw ValidationError("arm weights must match the sample length");
  if (!(w.h1.array() > Scalar(0)).all() || !(w.h0.array() > Scalar(0)).all())
    throw EstimationError("arm weights must be strictly positive");

  const auto a = data.A.array();
  const Scalar n = static_cast<Scalar>(data.size());
  GdrTerms<Scalar> t;
  t.sr = (nuis.q1 - nuis.q0).mean();
  t.adjustment1 = (a * (data.Y - nuis.q1).array() / w.h1.array()).sum() / n;
  t.adjustment0 = ((Scalar(1) - a) * (data.Y - nuis.q0).array() / w.h0.array()).sum() / n;
  return t;
}

template <typename Scalar>
GdrTerms<Scalar> gdr_terms(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis, WeightScheme scheme) {
  detail::require_same_length(data, nuis);
  return gdr_terms(data, nuis, arm_weights(scheme, data.A, nuis.g));
}

template <typename Scalar>
EstimatorResult<Scalar> gdr(const Sample<Scalar>& data, const Nuisances<Scalar>& nuis, WeightScheme scheme) {
  const GdrTerms<Scalar> t = gdr_terms(data, nuis, scheme);
  auto r = detail::make_result<Scalar>(std::string(to_string(scheme)), t.beta(), data.size(),
                                       std::string(to_string(scheme)));
  r.experimental = scheme == WeightScheme::hybrid;
  return r;
}

template <typename Scalar>
struct UnbiasednessReport {
  Scalar mean_a_minus_h1 = Scalar(0);         // E[A - h^1]
  Scalar mean_control_minus_h0 = Scalar(0);   // E[1 - A - h^0]
  Scalar mean_a_over_h1 = Scalar(0);          // E[A / h^1]
  Scalar mean_control_over_h0 = Scalar(0);    // E[(1 - A) / h^0]
};

// Empirical moments behind the GDR unbiasedness condition. For naipw the
// ratios E[A/h^1] and E[(1-A)/h^0] equal one identically.
template <typename Scalar>
UnbiasednessReport<Scalar> unbiasedness_check(WeightScheme scheme, const Sample<Scalar>& data,
                                              const Nuisances<Scalar>& nuis) {
  detail::require_same_length(data, nuis);
  const ArmWeights<Scalar> w = arm_weights(scheme, data.A, nuis.g);
  const auto a = data.A.array();
  UnbiasednessReport<Scalar> r;
  r.mean_a_minus_h1 = (a - w.h1.array()).mean();
  r.mean_control_minus_h0 = (Scalar(1) - a - w.h0.array()).mean();
  r.mean_a_over_h1 = (a / w.h1.array()).mean();
  r.mean_control_over_h0 = ((Scalar(1) - a) / w.h0.array()).mean();
  return r;
}

}  // namespace naipw
