#pragma once

#include <naipw/types.hpp>

#include <initializer_list>
#include <random>

namespace naipw::test {

inline Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline Eigen::VectorXd constant(Index n, double c) { return Eigen::VectorXd::Constant(n, c); }

// A=(1,1,0,0), Y=(2,0,1,-1), g = 0.5, Q1 = 1, Q0 = 0.
inline Dataset d4_data() {
  Dataset d;
  d.A = vec({1, 1, 0, 0});
  d.Y = vec({2, 0, 1, -1});
  d.W = Eigen::MatrixXd::Zero(4, 1);
  return d;
}

inline NuisanceEstimates d4_nuisances() {
  return NuisanceEstimates{constant(4, 1.0), constant(4, 0.0), constant(4, 0.5), {}, {}};
}

// A=(1,0,0), Y=(1,0,0), Q = 0, g = (1e-6, 0.5, 0.5).
inline Dataset dx_data() {
  Dataset d;
  d.A = vec({1, 0, 0});
  d.Y = vec({1, 0, 0});
  d.W = Eigen::MatrixXd::Zero(3, 1);
  return d;
}

inline NuisanceEstimates dx_nuisances() {
  return NuisanceEstimates{constant(3, 0.0), constant(3, 0.0), vec({1e-6, 0.5, 0.5}), {}, {}};
}

// Arbitrary inputs: both arms present, g uniform on (0.05, 0.95).
struct RandomCase {
  Dataset data;
  NuisanceEstimates nuis;
};

inline RandomCase random_case(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  RandomCase c;
  c.data.W = Eigen::MatrixXd::Zero(n, 1);
  c.data.A.resize(n);
  c.data.Y.resize(n);
  c.nuis.q1.resize(n);
  c.nuis.q0.resize(n);
  c.nuis.g.resize(n);
  for (Index i = 0; i < n; ++i) {
    c.data.A[i] = (i % 3 == 0 || unif(rng) < 0.4) ? 1.0 : 0.0;
    c.data.Y[i] = 2.0 * normal(rng);
    c.nuis.q1[i] = normal(rng);
    c.nuis.q0[i] = normal(rng);
    c.nuis.g[i] = 0.05 + 0.9 * unif(rng);
  }
  c.data.A[1] = 0.0;
  return c;
}

}  // namespace naipw::test
