#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>

namespace naipw {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

// Input that fails a documented precondition (bad spec, bad config value).
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input data (missing columns, non-binary treatment, unparsable cells).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Data that cannot be estimated on (empty arm, non-positive weights, ...).
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Known nuisance functions of a synthetic sample.
template <typename Scalar>
struct Truth {
  Vector<Scalar> g;
  Vector<Scalar> q1;
  Vector<Scalar> q0;
  Scalar beta = Scalar(1);
};

// One observed sample O = (Y, A, W). A holds exact 0/1 values.
template <typename Scalar>
struct Sample {
  Matrix<Scalar> W;
  Vector<Scalar> A;
  Vector<Scalar> Y;
  std::optional<Truth<Scalar>> truth;

  Index size() const { return Y.size(); }
  Index treated() const { return static_cast<Index>((A.array() > Scalar(0.5)).count()); }
  Index controls() const { return size() - treated(); }
};

struct FirstStageDiagnostics {
  double outcome_r2 = 0.0;
  double propensity_auc = 0.5;
};

// Per-observation predictions Q^1, Q^0 and g.
template <typename Scalar>
struct Nuisances {
  Vector<Scalar> q1;
  Vector<Scalar> q0;
  Vector<Scalar> g;
  std::optional<Eigen::VectorXi> fold_id;
  std::optional<FirstStageDiagnostics> diagnostics;

  Index size() const { return g.size(); }
};

using Dataset = Sample<double>;
using NuisanceEstimates = Nuisances<double>;

// Throws DataError unless A is binary, lengths agree and values are finite.
template <typename Scalar>
void validate_sample(const Sample<Scalar>& data) {
  const Index n = data.Y.size();
  if (data.A.size() != n) throw DataError("treatment and outcome lengths differ");
  if (data.W.size() != 0 && data.W.rows() != n) throw DataError("covariate rows differ from outcome length");
  for (Index i = 0; i < n; ++i) {
    if (data.A[i] != Scalar(0) && data.A[i] != Scalar(1)) throw DataError("treatment must be 0/1");
  }
  if (!data.Y.allFinite()) throw DataError("outcome has missing or non-finite values");
  if (data.W.size() != 0 && !data.W.allFinite()) throw DataError("covariates have missing or non-finite values");
}

}  // namespace naipw
