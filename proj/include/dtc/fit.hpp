#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dtc/rng.hpp"

namespace dtc {

// Outcome of a nonlinear least-squares fit. Parameters are addressed by
// name; standard errors come from the residual-scaled inverse normal
// matrix.
struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd params;
  Eigen::VectorXd stderrs;
  Eigen::MatrixXd covariance;
  double residualNorm = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;

  int index(const std::string& name) const {
    for (size_t k = 0; k < names.size(); ++k)
      if (names[k] == name) return static_cast<int>(k);
    throw std::invalid_argument("FitResult: unknown parameter \"" + name + "\"");
  }
  double param(const std::string& name) const { return params(index(name)); }
  double error(const std::string& name) const { return stderrs(index(name)); }
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct LMOptions {
  int maxIterations = 300;
  double ftol = 1e-14;  // relative decrease of the cost
  double xtol = 1e-14;  // relative step size
  double lambda0 = 1e-3;
  // Box used to clamp steps and to draw multi-start candidates.
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  int restarts = 12;
  uint64_t restartSeed = 0x6C6D666974ULL;
};

inline JacobianFn numeric_jacobian(const ResidualFn& f) {
  return [f](const Eigen::VectorXd& p) {
    const Eigen::VectorXd r0 = f(p);
    Eigen::MatrixXd J(r0.size(), p.size());
    for (int k = 0; k < p.size(); ++k) {
      const double h = 1e-7 * std::max(1.0, std::abs(p(k)));
      Eigen::VectorXd pp = p, pm = p;
      pp(k) += h;
      pm(k) -= h;
      J.col(k) = (f(pp) - f(pm)) / (2.0 * h);
    }
    return J;
  };
}

namespace fit_detail {

inline Eigen::VectorXd clamp_box(Eigen::VectorXd p, const LMOptions& opts) {
  if (opts.lower.size() == p.size())
    for (int k = 0; k < p.size(); ++k) p(k) = std::max(p(k), opts.lower(k));
  if (opts.upper.size() == p.size())
    for (int k = 0; k < p.size(); ++k) p(k) = std::min(p(k), opts.upper(k));
  return p;
}

// One damped-least-squares descent from p0. Returns converged=false when
// the iteration stalls without meeting the tolerances.
inline FitResult lm_single(const ResidualFn& f, const JacobianFn& jac,
                           const Eigen::VectorXd& p0, const std::vector<std::string>& names,
                           const LMOptions& opts) {
  FitResult out;
  out.names = names;

  Eigen::VectorXd p = clamp_box(p0, opts);
  Eigen::VectorXd r = f(p);
  double cost = r.squaredNorm();
  double lambda = opts.lambda0;
  bool converged = false;

  for (int iter = 0; iter < opts.maxIterations; ++iter) {
    const Eigen::MatrixXd J = jac(p);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    if (g.cwiseAbs().maxCoeff() < 1e-16) {
      converged = true;
      break;
    }

    bool stepped = false;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      const Eigen::VectorXd pNew = clamp_box(p + step, opts);
      const Eigen::VectorXd rNew = f(pNew);
      const double costNew = rNew.squaredNorm();
      if (std::isfinite(costNew) && costNew < cost) {
        const double relStep = (pNew - p).norm() / std::max(1e-300, p.norm());
        const double relDecrease = (cost - costNew) / std::max(1e-300, cost);
        p = pNew;
        r = rNew;
        cost = costNew;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        if (relDecrease < opts.ftol || relStep < opts.xtol) converged = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
    if (!stepped) {
      // No downhill step found; accept the current point as a stall.
      converged = cost < 1e-24 || g.cwiseAbs().maxCoeff() < 1e-10 * std::sqrt(cost + 1e-300);
      break;
    }
    if (converged) break;
  }

  out.params = p;
  out.residualNorm = std::sqrt(cost);
  out.converged = converged;

  // Covariance: s^2 (J^T J)^-1 with s^2 the reduced chi-square.
  const Eigen::MatrixXd J = jac(p);
  const int dof = std::max<int>(1, static_cast<int>(r.size()) - static_cast<int>(p.size()));
  const double s2 = cost / dof;
  const Eigen::MatrixXd JtJ = J.transpose() * J;
  const Eigen::MatrixXd cov = s2 * JtJ.completeOrthogonalDecomposition().pseudoInverse();
  out.covariance = cov;
  out.stderrs = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

}  // namespace fit_detail

// Damped least squares with box clamping and uniform multi-start fallback
// inside the box when the first descent fails to converge or a restart
// finds a lower residual.
inline FitResult lm_fit(const ResidualFn& f, const JacobianFn& jacIn, const Eigen::VectorXd& p0,
                        const std::vector<std::string>& names, const LMOptions& opts = {}) {
  if (static_cast<int>(names.size()) != p0.size())
    throw std::invalid_argument("lm_fit: parameter/name count mismatch");
  const JacobianFn jac = jacIn ? jacIn : numeric_jacobian(f);

  FitResult best = fit_detail::lm_single(f, jac, p0, names, opts);
  const bool canRestart = opts.lower.size() == p0.size() && opts.upper.size() == p0.size();
  if (best.converged || !canRestart) return best;

  Rng rng(opts.restartSeed);
  for (int attempt = 0; attempt < opts.restarts; ++attempt) {
    Eigen::VectorXd p(p0.size());
    for (int k = 0; k < p.size(); ++k) p(k) = rng.uniform(opts.lower(k), opts.upper(k));
    FitResult cand = fit_detail::lm_single(f, jac, p, names, opts);
    const bool better = (cand.converged && !best.converged) ||
                        (cand.converged == best.converged && cand.residualNorm < best.residualNorm);
    if (better) best = cand;
    if (best.converged) break;
  }
  return best;
}

// Convenience overload for plain (x, y) curve fits with an analytic model
// derivative: model(x, p) and dmodel(x, p) returning the parameter
// gradient at one sample.
inline FitResult curve_fit(const std::function<double(double, const Eigen::VectorXd&)>& model,
                           const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& dmodel,
                           const std::vector<double>& x, const std::vector<double>& y,
                           const Eigen::VectorXd& p0, const std::vector<std::string>& names,
                           const LMOptions& opts = {}) {
  if (x.size() != y.size()) throw std::invalid_argument("curve_fit: x/y size mismatch");
  const int m = static_cast<int>(x.size());
  ResidualFn f = [&, m](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(m);
    for (int i = 0; i < m; ++i) r(i) = model(x[i], p) - y[i];
    return r;
  };
  JacobianFn jac;
  if (dmodel) {
    jac = [&, m](const Eigen::VectorXd& p) {
      Eigen::MatrixXd J(m, p.size());
      for (int i = 0; i < m; ++i) J.row(i) = dmodel(x[i], p).transpose();
      return J;
    };
  }
  return lm_fit(f, jac, p0, names, opts);
}

// Ordinary linear least squares y ~ X beta; returns estimates, standard
// errors and covariance in a FitResult.
inline FitResult linear_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const std::vector<std::string>& names) {
  if (X.rows() != y.size()) throw std::invalid_argument("linear_fit: dimension mismatch");
  if (X.rows() < X.cols()) throw std::invalid_argument("linear_fit: underdetermined system");
  const Eigen::MatrixXd XtX = X.transpose() * X;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(XtX);
  if (!lu.isInvertible()) throw std::invalid_argument("linear_fit: rank-deficient design matrix");

  FitResult out;
  out.names = names;
  out.params = lu.solve(X.transpose() * y);
  const Eigen::VectorXd r = X * out.params - y;
  const int dof = std::max<int>(1, static_cast<int>(X.rows()) - static_cast<int>(X.cols()));
  const double s2 = r.squaredNorm() / dof;
  out.covariance = s2 * lu.inverse();
  out.stderrs = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.residualNorm = r.norm();
  out.converged = true;
  return out;
}

}  // namespace dtc
