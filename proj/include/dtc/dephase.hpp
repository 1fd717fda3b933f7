#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "dtc/model.hpp"
#include "dtc/spinops.hpp"

namespace dtc {

struct DensityMatrix {
  Mat matrix;
};

// Checks Hermiticity, unit trace and positive semidefiniteness.
inline bool is_valid_density(const DensityMatrix& rho, double tol = 1e-12) {
  const Mat& m = rho.matrix;
  if ((m - m.adjoint()).cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(m.trace() - cplx(1.0)) > tol) return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() > -tol;
}

// Classical population-transfer matrix R_{mu nu} = |U_{mu nu}|^2; doubly
// stochastic since U is unitary.
struct RateMatrix {
  Eigen::MatrixXd R;
};

// Single-site rotation applied once per Floquet cycle, rotation angle
// theta = pi + epsilon on each driven transition.
inline Mat rotation_matrix(Protocol protocol, double epsilon) {
  if (!(std::abs(epsilon) < M_PI))
    throw std::invalid_argument("rotation_matrix: |epsilon| must be below pi");
  const double theta = M_PI + epsilon;
  const double c = std::cos(theta / 2.0);
  const double s = std::sin(theta / 2.0);
  switch (protocol) {
    case Protocol::Z2: {
      Mat u(2, 2);
      u << c, -kI * s, -kI * s, c;
      return u;
    }
    case Protocol::Z3: {
      // Lower transition |0><->|-1> (indices 1,2) first, then upper
      // |0><->|+1> (indices 0,1); basis index 0 = |+1>, 1 = |0>, 2 = |-1>.
      Mat lower = Mat::Identity(3, 3);
      lower(1, 1) = c;
      lower(2, 2) = c;
      lower(1, 2) = -kI * s;
      lower(2, 1) = -kI * s;
      Mat upper = Mat::Identity(3, 3);
      upper(0, 0) = c;
      upper(1, 1) = c;
      upper(0, 1) = -kI * s;
      upper(1, 0) = -kI * s;
      return upper * lower;
    }
    default:
      throw std::invalid_argument("rotation_matrix: protocol must be Z2 or Z3");
  }
}

// Deletes all off-diagonal elements; populations are untouched.
inline DensityMatrix dephasing_channel(const DensityMatrix& rho) {
  return {Mat(rho.matrix.diagonal().asDiagonal())};
}

inline RateMatrix rate_matrix(Protocol protocol, double epsilon) {
  const Mat u = rotation_matrix(protocol, epsilon);
  return {u.cwiseAbs2()};
}

// Population-imbalance direction probed by the experiment: up-down
// difference for Z2, the |0> vs |-1> difference for Z3 (initial state |0>).
inline Eigen::VectorXd imbalance_vector(Protocol protocol) {
  if (protocol == Protocol::Z2) {
    Eigen::VectorXd v(2);
    v << 1.0, -1.0;
    return v / std::sqrt(2.0);
  }
  if (protocol == Protocol::Z3) {
    Eigen::VectorXd v(3);
    v << 0.0, 1.0, -1.0;
    return v / std::sqrt(2.0);
  }
  throw std::invalid_argument("imbalance_vector: protocol must be Z2 or Z3");
}

// Long-time decay rate per cycle of the subharmonic response: the
// eigenvalue of R^m (m the subharmonic order) carried by the
// polarization-like eigenvector, returned as gamma with exp(-m gamma) =
// |lambda|. The eigenvector is selected by maximal overlap with the
// imbalance direction; the unit eigenvalue of the stationary state is
// excluded.
inline double subharmonic_decay_rate(Protocol protocol, double epsilon) {
  if (!(std::abs(epsilon) > 0.0 && std::abs(epsilon) < M_PI / 2.0))
    throw std::invalid_argument("subharmonic_decay_rate: need 0 < |epsilon| < pi/2");
  const int m = protocol_order(protocol);
  const Eigen::MatrixXd R = rate_matrix(protocol, epsilon).R;
  Eigen::MatrixXd Rm = R;
  for (int k = 1; k < m; ++k) Rm = Rm * R;

  Eigen::EigenSolver<Eigen::MatrixXd> es(Rm);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("subharmonic_decay_rate: eigensolver failed");
  const Eigen::VectorXd probe = imbalance_vector(protocol);

  int best = -1;
  double bestOverlap = -1.0;
  for (int k = 0; k < Rm.rows(); ++k) {
    const double mod = std::abs(es.eigenvalues()(k));
    if (mod > 1.0 - 1e-12) continue;
    Vec v = es.eigenvectors().col(k);
    const double overlap = std::abs((probe.cast<cplx>().adjoint() * v)(0)) / v.norm();
    if (overlap > bestOverlap) {
      bestOverlap = overlap;
      best = k;
    }
  }
  if (best < 0) throw std::runtime_error("subharmonic_decay_rate: no decaying eigenvector");
  return -std::log(std::abs(es.eigenvalues()(best))) / m;
}

// Applies R once per cycle and records the population imbalance; index 0
// holds the initial imbalance.
inline std::vector<double> iterate_population_dynamics(Protocol protocol, double epsilon,
                                                       const Eigen::VectorXd& p0, int nCycles) {
  const Eigen::MatrixXd R = rate_matrix(protocol, epsilon).R;
  if (p0.size() != R.rows())
    throw std::invalid_argument("iterate_population_dynamics: population size mismatch");
  if (std::abs(p0.sum() - 1.0) > 1e-9 || p0.minCoeff() < -1e-12)
    throw std::invalid_argument("iterate_population_dynamics: p0 is not a probability vector");
  Eigen::VectorXd imb(p0.size());
  if (protocol == Protocol::Z2)
    imb << 1.0, -1.0;
  else
    imb << 0.0, 1.0, -1.0;

  std::vector<double> trace;
  trace.reserve(nCycles + 1);
  Eigen::VectorXd p = p0;
  trace.push_back(imb.dot(p));
  for (int k = 0; k < nCycles; ++k) {
    p = R * p;
    trace.push_back(imb.dot(p));
  }
  return trace;
}

}  // namespace dtc
