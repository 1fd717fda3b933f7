#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dtc/model.hpp"
#include "dtc/spinops.hpp"

namespace dtc {

// Coefficient vector of the single-particle density matrix,
// rho = I/d * (1/norm) + sum_mu rho_mu B^mu with B the Pauli-like (d=2) or
// Gell-Mann (d=3) operator basis.
struct BlochVector {
  Eigen::VectorXd components;
};

enum class MeanFieldBranch { Ordered, Trivial };

struct MeanFieldSolution {
  Eigen::VectorXd rho;
  double residual = 0.0;
  bool exists = false;
  double orderParameter = 0.0;
  // Critical (eps/T)/J_MF; populated by existence_boundary scans, NaN here.
  double boundaryRatio = std::numeric_limits<double>::quiet_NaN();
};

namespace mf_detail {

// Operator basis matrices for the given coefficient dimension.
inline std::vector<Mat> basis(int basisDim) {
  if (basisDim == 3) {
    auto ops = spin_half_ops();
    return {ops[0].matrix, ops[1].matrix, ops[2].matrix};
  }
  if (basisDim == 8) return gell_mann_basis().matrices;
  throw std::invalid_argument("meanfield: basisDim must be 3 or 8");
}

// <B^mu> as a function of rho_mu: rho_mu/2 for spin-1/2 (tr[S^mu S^nu] =
// delta/2), 2 rho_mu for spin-1 (tr[l^mu l^nu] = 2 delta).
inline double expectation_factor(int basisDim) { return basisDim == 3 ? 0.5 : 2.0; }

// Norm cap sum rho_mu^2 from tr[rho^2] <= 1.
inline double norm_cap(int basisDim) { return basisDim == 3 ? 1.0 : 1.0 / 3.0; }

inline Mat density_from(const Eigen::VectorXd& rho, const std::vector<Mat>& B) {
  const int d = B.front().rows();
  Mat m = Mat::Identity(d, d) / static_cast<double>(d);
  for (int mu = 0; mu < rho.size(); ++mu) m += rho(mu) * B[mu];
  return m;
}

// Indices of the free longitudinal components (population imbalance
// directions): z for spin-1/2, the two diagonal generators for spin-1.
inline std::vector<int> longitudinal_indices(int basisDim) {
  if (basisDim == 3) return {2};
  return {6, 7};
}

// Unit longitudinal direction of the initial state: fully polarized |up>
// for spin-1/2; |0> for spin-1, whose diagonal-generator coefficients are
// (-1/2, 1/(2 sqrt 3)) before normalization.
inline Eigen::VectorXd initial_imbalance_direction(int basisDim) {
  if (basisDim == 3) {
    Eigen::VectorXd u(1);
    u << 1.0;
    return u;
  }
  Eigen::VectorXd u(2);
  u << -0.5, 0.5 / std::sqrt(3.0);
  return u / u.norm();
}

}  // namespace mf_detail

// Field coefficients b_mu = jmf C_mumu <B^mu> + h_mu at the given rho.
inline Eigen::VectorXd mf_field(const MeanFieldSpec& spec, const Eigen::VectorXd& rho) {
  if (rho.size() != spec.basisDim)
    throw std::invalid_argument("mf_field: coefficient dimension mismatch");
  const double f = mf_detail::expectation_factor(spec.basisDim);
  return (spec.jmf * f) * spec.C.cwiseProduct(rho) + spec.h;
}

// Self-consistent single-particle Hamiltonian H_MF = sum_mu b_mu B^mu.
inline SpinOperator mf_hamiltonian(const MeanFieldSpec& spec, const BlochVector& rho) {
  const auto B = mf_detail::basis(spec.basisDim);
  const Eigen::VectorXd b = mf_field(spec, rho.components);
  const int d = B.front().rows();
  Mat m = Mat::Zero(d, d);
  for (int mu = 0; mu < spec.basisDim; ++mu) m += b(mu) * B[mu];
  return {d, m, "H_MF"};
}

// Coefficients of i[rho, H_MF(rho)] in the operator basis; zero iff rho is
// stationary.
inline Eigen::VectorXd stationarity_residual(const MeanFieldSpec& spec,
                                             const Eigen::VectorXd& rho) {
  const auto B = mf_detail::basis(spec.basisDim);
  const Mat rhoM = mf_detail::density_from(rho, B);
  const Mat hM = mf_hamiltonian(spec, {rho}).matrix;
  const Mat comm = kI * (rhoM * hM - hM * rhoM);
  Eigen::VectorXd out(spec.basisDim);
  const double invNorm = spec.basisDim == 3 ? 2.0 : 0.5;
  for (int mu = 0; mu < spec.basisDim; ++mu)
    out(mu) = invNorm * (B[mu].adjoint() * comm).trace().real();
  return out;
}

namespace mf_detail {

// Assembles the full coefficient vector from transverse unknowns t, with
// the longitudinal part pinned along the initial-imbalance direction and
// scaled to saturate the norm cap (the polarized initial condition).
inline Eigen::VectorXd assemble(const MeanFieldSpec& spec, const Eigen::VectorXd& t) {
  const auto lon = longitudinal_indices(spec.basisDim);
  const Eigen::VectorXd u = initial_imbalance_direction(spec.basisDim);
  const double cap = norm_cap(spec.basisDim);
  const double s2 = cap - t.squaredNorm();
  const double s = s2 > 0.0 ? std::sqrt(s2) : 0.0;

  Eigen::VectorXd rho = Eigen::VectorXd::Zero(spec.basisDim);
  int it = 0;
  for (int mu = 0; mu < spec.basisDim; ++mu) {
    if (it < static_cast<int>(lon.size()) && lon[it] == mu) {
      rho(mu) = s * u(it);
      ++it;
    } else {
      rho(mu) = t(mu - it);
    }
  }
  return rho;
}

// Closed-form ansatz for the transverse components of the ordered branch,
// used as the Newton starting point.
inline Eigen::VectorXd ordered_guess(const MeanFieldSpec& spec) {
  // Identify the protocol family from the C diagonal.
  if (spec.basisDim == 3) {
    const double x = spec.h.cwiseAbs().maxCoeff() / spec.jmf;
    Eigen::VectorXd t(2);
    if (spec.C(0) == 0.0)
      t << 2.0 * x, 0.0;  // Ising-only family
    else
      t << 0.0, x;  // Ising + spin-exchange family
    return t;
  }
  const double x = 3.0 * spec.h.cwiseAbs().maxCoeff() / spec.jmf;
  Eigen::VectorXd t(6);
  t << x / 4.0, x / 4.0, 0.0, 0.0, 0.0, -x / 4.0;
  return t;
}

}  // namespace mf_detail

// Stationary self-consistent solution. The ordered branch carries nonzero
// population imbalance: its free longitudinal components are pinned along
// the initial-state imbalance direction and saturate the purity cap, and
// the transverse components are found by damped Gauss-Newton on the
// commutator residual. The trivial branch is the saturated state aligned
// with the applied field. exists reports whether the converged root
// satisfies the norm constraint; non-convergence throws instead.
inline MeanFieldSolution solve_stationary(const MeanFieldSpec& spec, MeanFieldBranch branch,
                                          double tol = 1e-12) {
  if (!(spec.jmf > 0)) throw std::invalid_argument("solve_stationary: jmf must be positive");
  const double cap = mf_detail::norm_cap(spec.basisDim);

  if (branch == MeanFieldBranch::Trivial) {
    // The saturated state aligned with the applied field is stationary for
    // every protocol here: the C diagonal is uniform on the support of h,
    // so the self-consistent field stays parallel to rho.
    MeanFieldSolution sol;
    const double hN = spec.h.norm();
    Eigen::VectorXd rho = Eigen::VectorXd::Zero(spec.basisDim);
    if (hN > 0.0) rho = std::sqrt(cap) * spec.h / hN;
    sol.rho = rho;
    sol.residual = stationarity_residual(spec, rho).cwiseAbs().maxCoeff();
    sol.exists = sol.residual < tol && rho.squaredNorm() <= cap + 1e-12;
    sol.orderParameter = 0.0;
    return sol;
  }

  const int nT = spec.basisDim - static_cast<int>(mf_detail::longitudinal_indices(spec.basisDim).size());
  Eigen::VectorXd t = mf_detail::ordered_guess(spec);

  auto residual = [&](const Eigen::VectorXd& tv) {
    return stationarity_residual(spec, mf_detail::assemble(spec, tv));
  };

  Rng restartRng(0x6D66736F6C76ULL);
  bool converged = false;
  for (int attempt = 0; attempt < 20 && !converged; ++attempt) {
    if (attempt > 0) {
      t = mf_detail::ordered_guess(spec);
      for (int k = 0; k < t.size(); ++k)
        t(k) += 0.1 * std::sqrt(cap) * restartRng.uniform(-1.0, 1.0);
    }
    for (int iter = 0; iter < 200; ++iter) {
      const Eigen::VectorXd r = residual(t);
      if (r.cwiseAbs().maxCoeff() < tol) {
        converged = true;
        break;
      }
      // Forward-difference Jacobian.
      Eigen::MatrixXd Jm(r.size(), nT);
      const double hstep = 1e-7;
      for (int k = 0; k < nT; ++k) {
        Eigen::VectorXd tp = t;
        tp(k) += hstep;
        Jm.col(k) = (residual(tp) - r) / hstep;
      }
      Eigen::VectorXd step = Jm.colPivHouseholderQr().solve(-r);
      // Damped line search on the residual norm.
      double lambda = 1.0;
      const double r0 = r.norm();
      for (int ls = 0; ls < 30; ++ls) {
        if (residual(t + lambda * step).norm() < r0) break;
        lambda *= 0.5;
      }
      t += lambda * step;
    }
  }
  if (!converged) throw std::runtime_error("solve_stationary: Newton did not converge");

  MeanFieldSolution sol;
  sol.rho = mf_detail::assemble(spec, t);
  sol.residual = residual(t).cwiseAbs().maxCoeff();
  sol.exists = t.squaredNorm() <= cap * (1.0 + 1e-10);

  if (spec.basisDim == 3) {
    sol.orderParameter = sol.rho(2) / 2.0;  // <Sz> = rho_z / 2
  } else {
    // Population difference between |0> and |-1>:
    // tr[rho (E11 - E22)] = -rho_7 + sqrt(3) rho_8 in the basis ordering.
    sol.orderParameter = -sol.rho(6) + std::sqrt(3.0) * sol.rho(7);
  }
  return sol;
}

// Critical (eps/T)/J_MF above which the ordered branch stops being
// normalizable, located by bisection on solve_stationary acceptance.
inline double existence_boundary(Protocol protocol, double resolution = 1e-8) {
  if (!(resolution > 0)) throw std::invalid_argument("existence_boundary: resolution must be positive");
  auto exists_at = [&](double ratio) {
    const MeanFieldSpec spec = meanfield_spec(protocol, ratio, 1.0);
    return solve_stationary(spec, MeanFieldBranch::Ordered).exists;
  };
  double lo = 0.0;
  double hi = 2.0;
  if (!exists_at(1e-12)) throw std::runtime_error("existence_boundary: no ordered phase at origin");
  if (exists_at(hi)) throw std::runtime_error("existence_boundary: bracket failure");
  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    (exists_at(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Integrates rho_dot = coefficients of i[rho, H_MF(rho)] with classical
// RK4 at fixed step; returns the trajectory sampled at every step,
// trajectory.front() = rho0.
inline std::vector<Eigen::VectorXd> integrate_mf_dynamics(const MeanFieldSpec& spec,
                                                          const Eigen::VectorXd& rho0,
                                                          double duration, double step) {
  if (!(step > 0)) throw std::invalid_argument("integrate_mf_dynamics: step must be positive");
  if (!(duration >= 0)) throw std::invalid_argument("integrate_mf_dynamics: bad duration");
  const int nSteps = static_cast<int>(std::ceil(duration / step));
  auto deriv = [&](const Eigen::VectorXd& rho) { return stationarity_residual(spec, rho); };

  std::vector<Eigen::VectorXd> traj;
  traj.reserve(nSteps + 1);
  Eigen::VectorXd rho = rho0;
  traj.push_back(rho);
  for (int k = 0; k < nSteps; ++k) {
    const double h = std::min(step, duration - k * step);
    const Eigen::VectorXd k1 = deriv(rho);
    const Eigen::VectorXd k2 = deriv(rho + 0.5 * h * k1);
    const Eigen::VectorXd k3 = deriv(rho + 0.5 * h * k2);
    const Eigen::VectorXd k4 = deriv(rho + h * k3);
    rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    traj.push_back(rho);
  }
  return traj;
}

}  // namespace dtc
