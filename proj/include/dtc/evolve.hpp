#pragma once

#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <lapacke.h>

#include "dtc/dephase.hpp"
#include "dtc/errors.hpp"
#include "dtc/model.hpp"
#include "dtc/rng.hpp"
#include "dtc/spinops.hpp"
#include "dtc/trace.hpp"

namespace dtc {

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

struct QuantumState {
  Vec amplitudes;

  double norm() const { return amplitudes.norm(); }
};

// All sites in the top level: |up...up> (spin-1/2) or |+1...+1> (spin-1).
inline QuantumState polarized_state(int n, int localDim = 2) {
  Vec psi = Vec::Zero(ipow(localDim, n));
  psi(0) = 1.0;
  return {std::move(psi)};
}

// |up> on site 0, tensored with a normalized i.i.d. complex Gaussian vector
// on the remaining n-1 sites.
inline QuantumState random_environment_state(int n, uint64_t seed) {
  if (n < 2) throw std::invalid_argument("random_environment_state: need n >= 2");
  const int64_t D = int64_t{1} << n;
  const int64_t half = D / 2;
  Rng rng(mix_seed(seed, 0x656E76ULL));
  Vec psi = Vec::Zero(D);
  for (int64_t k = 0; k < half; ++k) psi(k) = cplx(rng.gaussian(), rng.gaussian());
  psi /= psi.norm();
  return {std::move(psi)};
}

// ---------------------------------------------------------------------------
// Single-site operator application
// ---------------------------------------------------------------------------

namespace evolve_detail {

// psi <- (I x..x g x..x I) psi with the d x d matrix g acting on the given
// site. Site 0 is the most significant base-d digit.
inline void apply_site_gate(Vec& psi, const Mat& g, int site, int n, int d) {
  const int64_t stride = ipow(d, n - 1 - site);
  const int64_t block = stride * d;
  const int64_t D = psi.size();
  cplx in[3], out[3];
  for (int64_t base = 0; base < D; base += block)
    for (int64_t lo = 0; lo < stride; ++lo) {
      const int64_t off = base + lo;
      for (int a = 0; a < d; ++a) in[a] = psi(off + a * stride);
      for (int a = 0; a < d; ++a) {
        cplx acc = 0.0;
        for (int b = 0; b < d; ++b) acc += g(a, b) * in[b];
        out[a] = acc;
      }
      for (int a = 0; a < d; ++a) psi(off + a * stride) = out[a];
    }
}

// <psi| op_site |psi> for a Hermitian single-site operator.
inline double site_expectation(const Vec& psi, const Mat& op, int site, int n, int d) {
  Vec y = psi;
  apply_site_gate(y, op, site, n, d);
  return psi.dot(y).real();
}

inline Mat local_z_operator(int d) {
  Mat z;
  if (d == 2) {
    z = spin_half_op("Sz").matrix;
  } else {
    z = Mat::Zero(3, 3);
    z(0, 0) = 1.0;
    z(2, 2) = -1.0;
  }
  return z;
}

inline Mat local_x_operator(int d) {
  Mat x;
  if (d == 2) {
    x = spin_half_op("Sx").matrix;
  } else {
    x = Mat::Zero(3, 3);
    const double v = 1.0 / std::sqrt(2.0);
    x(0, 1) = x(1, 0) = x(1, 2) = x(2, 1) = v;
  }
  return x;
}

}  // namespace evolve_detail

// Expectation value of the recorded observable in the given state.
inline double measure(const QuantumState& state, const Observable& obs, int n, int d) {
  using namespace evolve_detail;
  switch (obs.kind) {
    case ObservableKind::GlobalZ: {
      const Mat z = local_z_operator(d);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += site_expectation(state.amplitudes, z, i, n, d);
      return acc / n;
    }
    case ObservableKind::LocalZ: {
      if (obs.site < 0 || obs.site >= n)
        throw std::invalid_argument("measure: observable site out of range");
      return site_expectation(state.amplitudes, local_z_operator(d), obs.site, n, d);
    }
    case ObservableKind::GlobalX: {
      const Mat x = local_x_operator(d);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += site_expectation(state.amplitudes, x, i, n, d);
      return acc / n;
    }
  }
  throw std::invalid_argument("measure: bad observable kind");
}

// ---------------------------------------------------------------------------
// Propagators
// ---------------------------------------------------------------------------

enum class PropagatorMethod { Auto, DenseSpectral, Krylov };

struct KrylovOptions {
  int subspace = 30;
  double tolerance = 1e-10;
  int maxSubsteps = 100000;
};

// Exceeding this dimension with the dense-spectral method raises a
// resource-cap error; larger problems must opt into the Krylov path.
constexpr int64_t kDenseSpectralCap = int64_t{1} << 13;

namespace evolve_detail {

inline bool is_diagonal(const SpMat& m) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      if (it.row() != it.col() && it.value() != 0.0) return false;
  return true;
}

inline bool is_real(const SpMat& m) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      if (it.value().imag() != 0.0) return false;
  return true;
}

// Full real-symmetric eigendecomposition, eigenvectors overwriting a.
inline void dsyevd_inplace(Eigen::MatrixXd& a, Eigen::VectorXd& w) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  w.resize(n);
  const lapack_int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, a.data(), n, w.data());
  if (info != 0)
    throw std::runtime_error("interaction_propagator: dsyevd failed with info " +
                             std::to_string(info));
}

inline void zheevd_inplace(Mat& a, Eigen::VectorXd& w) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  w.resize(n);
  const lapack_int info =
      LAPACKE_zheevd(LAPACK_COL_MAJOR, 'V', 'U', n,
                     reinterpret_cast<lapack_complex_double*>(a.data()), n, w.data());
  if (info != 0)
    throw std::runtime_error("interaction_propagator: zheevd failed with info " +
                             std::to_string(info));
}

// exp(-i H tau) |psi> by the Lanczos method with full reorthogonalization
// and adaptive substepping against the tridiagonal residual estimate.
inline Vec krylov_expv(const SpMat& H, Vec psi, double tau, const KrylovOptions& opts) {
  const Eigen::Index D = psi.size();
  const int m = static_cast<int>(std::min<Eigen::Index>(opts.subspace, D));
  if (tau == 0.0) return psi;

  double remaining = std::abs(tau);
  const double sign = tau >= 0 ? 1.0 : -1.0;
  double dt = remaining;
  int steps = 0;

  Mat V(D, m);
  Eigen::VectorXd alpha(m), beta(m);

  while (remaining > 0.0) {
    if (++steps > opts.maxSubsteps)
      throw std::runtime_error("interaction_propagator: krylov did not converge "
                               "within the substep budget");
    const double psiNorm = psi.norm();
    if (psiNorm == 0.0) return psi;

    V.col(0) = psi / psiNorm;
    int mEff = m;
    bool happy = false;
    double residBeta = 0.0;
    for (int j = 0; j < m; ++j) {
      Vec w = H * V.col(j);
      alpha(j) = V.col(j).dot(w).real();
      w -= alpha(j) * V.col(j);
      if (j > 0) w -= beta(j - 1) * V.col(j - 1);
      // Two-pass reorthogonalization against the full basis built so far.
      for (int pass = 0; pass < 2; ++pass)
        w -= V.leftCols(j + 1) * (V.leftCols(j + 1).adjoint() * w).eval();
      const double b = w.norm();
      if (j + 1 < m) beta(j) = b;
      if (b < 1e-14) {
        mEff = j + 1;
        happy = true;
        break;
      }
      if (j + 1 < m) V.col(j + 1) = w / b;
      residBeta = b;
    }

    dt = std::min(dt, remaining);
    for (;;) {
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(mEff, mEff);
      for (int j = 0; j < mEff; ++j) {
        T(j, j) = alpha(j);
        if (j + 1 < mEff) T(j, j + 1) = T(j + 1, j) = beta(j);
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
      const Eigen::VectorXd& ev = es.eigenvalues();
      const Eigen::MatrixXd& u = es.eigenvectors();
      Vec phases(mEff);
      for (int j = 0; j < mEff; ++j)
        phases(j) = std::exp(-kI * sign * ev(j) * dt);
      Vec small = u.cast<cplx>() *
                  (phases.cwiseProduct(u.row(0).transpose().cast<cplx>()));
      const double resid = happy ? 0.0 : residBeta * std::abs(small(mEff - 1)) * dt;
      if (resid <= opts.tolerance) {
        psi = V.leftCols(mEff) * (psiNorm * small);
        remaining -= dt;
        if (resid < 0.1 * opts.tolerance) dt *= 1.5;
        break;
      }
      if (dt <= std::abs(tau) * 1e-12)
        throw std::runtime_error("interaction_propagator: krylov substep collapsed "
                                 "without meeting the tolerance");
      dt *= 0.5;
    }
  }
  return psi;
}

}  // namespace evolve_detail

// One fixed-duration evolution step, in whichever representation the
// construction chose: elementwise phases for diagonal generators, a spectral
// pair for dense Hermitian ones, a per-site gate for global pulses, or an
// implicit Krylov evaluation.
class Propagator {
 public:
  enum class Kind { DiagonalPhase, SpectralReal, SpectralComplex, LocalGate, Krylov };

  static Propagator diagonal_phase(Vec phases) {
    Propagator p;
    p.kind_ = Kind::DiagonalPhase;
    p.dim_ = phases.size();
    p.phases_ = std::move(phases);
    return p;
  }

  static Propagator spectral_real(Eigen::MatrixXd vectors, const Eigen::VectorXd& energies,
                                  double tau) {
    Propagator p;
    p.kind_ = Kind::SpectralReal;
    p.dim_ = vectors.rows();
    p.realVectors_ = std::move(vectors);
    p.cosPhase_ = (-tau * energies.array()).cos().matrix();
    p.sinPhase_ = (-tau * energies.array()).sin().matrix();
    return p;
  }

  static Propagator spectral_complex(Mat vectors, const Eigen::VectorXd& energies, double tau) {
    Propagator p;
    p.kind_ = Kind::SpectralComplex;
    p.dim_ = vectors.rows();
    p.vectors_ = std::move(vectors);
    p.phases_.resize(energies.size());
    for (Eigen::Index k = 0; k < energies.size(); ++k)
      p.phases_(k) = std::exp(-kI * energies(k) * tau);
    return p;
  }

  static Propagator local_gate(Mat gate, int nSites) {
    Propagator p;
    p.kind_ = Kind::LocalGate;
    p.gate_ = std::move(gate);
    p.nSites_ = nSites;
    p.localDim_ = static_cast<int>(p.gate_.rows());
    p.dim_ = ipow(p.localDim_, nSites);
    return p;
  }

  static Propagator krylov(std::shared_ptr<const SpMat> h, double tau, KrylovOptions opts) {
    Propagator p;
    p.kind_ = Kind::Krylov;
    p.dim_ = h->rows();
    p.hamiltonian_ = std::move(h);
    p.tau_ = tau;
    p.krylovOpts_ = opts;
    return p;
  }

  Kind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }

  Vec apply(const Vec& psi) const {
    if (psi.size() != dim_) throw std::invalid_argument("Propagator: dimension mismatch");
    switch (kind_) {
      case Kind::DiagonalPhase:
        return phases_.cwiseProduct(psi);
      case Kind::SpectralReal: {
        const Eigen::VectorXd yr = realVectors_.transpose() * psi.real();
        const Eigen::VectorXd yi = realVectors_.transpose() * psi.imag();
        const Eigen::VectorXd zr = cosPhase_.cwiseProduct(yr) - sinPhase_.cwiseProduct(yi);
        const Eigen::VectorXd zi = sinPhase_.cwiseProduct(yr) + cosPhase_.cwiseProduct(yi);
        Vec out(dim_);
        out.real() = realVectors_ * zr;
        out.imag() = realVectors_ * zi;
        return out;
      }
      case Kind::SpectralComplex:
        return vectors_ * phases_.cwiseProduct(vectors_.adjoint() * psi);
      case Kind::LocalGate: {
        Vec out = psi;
        for (int i = 0; i < nSites_; ++i)
          evolve_detail::apply_site_gate(out, gate_, i, nSites_, localDim_);
        return out;
      }
      case Kind::Krylov:
        return evolve_detail::krylov_expv(*hamiltonian_, psi, tau_, krylovOpts_);
    }
    throw std::logic_error("Propagator: bad kind");
  }

  void apply_inplace(Vec& psi) const { psi = apply(psi); }

  // Explicit matrix, assembled column by column; intended for validation at
  // small dimensions.
  Mat dense() const {
    Mat u(dim_, dim_);
    Vec e = Vec::Zero(dim_);
    for (Eigen::Index c = 0; c < dim_; ++c) {
      e(c) = 1.0;
      u.col(c) = apply(e);
      e(c) = 0.0;
    }
    return u;
  }

 private:
  Kind kind_ = Kind::DiagonalPhase;
  Eigen::Index dim_ = 0;
  Vec phases_;
  Eigen::MatrixXd realVectors_;
  Eigen::VectorXd cosPhase_, sinPhase_;
  Mat vectors_;
  Mat gate_;
  int nSites_ = 0;
  int localDim_ = 0;
  std::shared_ptr<const SpMat> hamiltonian_;
  double tau_ = 0.0;
  KrylovOptions krylovOpts_;
};

// exp(-i H tau). Auto picks the elementwise-phase form for diagonal H, the
// dense spectral form up to the cap and Krylov beyond it; requesting
// dense-spectral above the cap is an error rather than a silent fallback.
inline Propagator interaction_propagator(const ManyBodyOperator& H, double tau,
                                         PropagatorMethod method = PropagatorMethod::Auto,
                                         const KrylovOptions& krylovOpts = {}) {
  const Eigen::Index D = H.dim();
  using namespace evolve_detail;

  if (method != PropagatorMethod::Krylov && is_diagonal(H.storage)) {
    Vec phases(D);
    Vec diag = H.storage.diagonal();
    for (Eigen::Index k = 0; k < D; ++k) phases(k) = std::exp(-kI * diag(k).real() * tau);
    return Propagator::diagonal_phase(std::move(phases));
  }

  if (method == PropagatorMethod::Auto)
    method = D <= kDenseSpectralCap ? PropagatorMethod::DenseSpectral : PropagatorMethod::Krylov;

  if (method == PropagatorMethod::DenseSpectral) {
    if (D > kDenseSpectralCap)
      throw ResourceCapError("interaction_propagator: dimension " + std::to_string(D) +
                             " exceeds the dense-spectral cap " +
                             std::to_string(kDenseSpectralCap));
    Eigen::VectorXd energies;
    if (is_real(H.storage)) {
      Eigen::MatrixXd a = H.dense().real();
      dsyevd_inplace(a, energies);
      return Propagator::spectral_real(std::move(a), energies, tau);
    }
    Mat a = H.dense();
    zheevd_inplace(a, energies);
    return Propagator::spectral_complex(std::move(a), energies, tau);
  }

  auto h = std::make_shared<SpMat>(H.storage);
  return Propagator::krylov(std::move(h), tau, krylovOpts);
}

// Global rotation pulse: every site rotated by theta = pi + epsilon. For
// spin-1/2 the rotation axis is y; for spin-1 it is the two-pulse
// composition on the lower then upper transition.
inline Propagator pulse_unitary(const ModelSpec& spec) {
  validate(spec);
  if (spec.localDim == 2) {
    const double half = (M_PI + spec.epsilon) / 2.0;
    Mat g(2, 2);
    g << std::cos(half), -std::sin(half), std::sin(half), std::cos(half);
    return Propagator::local_gate(std::move(g), spec.n);
  }
  return Propagator::local_gate(rotation_matrix(Protocol::Z3, spec.epsilon), spec.n);
}

// ---------------------------------------------------------------------------
// Floquet runner
// ---------------------------------------------------------------------------

// One disorder realization: repeats (interaction propagator over one period,
// then pulse) nCycles times, recording the observable after each pulse.
// values[0] is the initial value and the whole trace is normalized by it.
inline TimeTrace run_floquet(const ModelSpec& spec, const QuantumState& initial, int nCycles,
                             const Observable& observable,
                             PropagatorMethod method = PropagatorMethod::Auto,
                             const KrylovOptions& krylovOpts = {}) {
  validate(spec);
  if (nCycles < 1) throw std::invalid_argument("run_floquet: nCycles must be >= 1");

  const ManyBodyOperator H = spec.protocol == Protocol::ToyModel
                                 ? build_toy_hamiltonian(spec)
                                 : build_lab_hamiltonian(spec, HamiltonianPhase::Interaction);
  if (initial.amplitudes.size() != H.dim())
    throw std::invalid_argument("run_floquet: initial state dimension mismatch");

  const Propagator uInt = interaction_propagator(H, spec.period, method, krylovOpts);
  const Propagator uPulse = pulse_unitary(spec);

  QuantumState state{initial.amplitudes / initial.amplitudes.norm()};
  const double v0 = measure(state, observable, spec.n, spec.localDim);
  if (std::abs(v0) < 1e-12)
    throw std::invalid_argument("run_floquet: initial observable vanishes; "
                                "trace cannot be normalized");

  TimeTrace trace;
  trace.protocol = spec.protocol;
  trace.epsilon = spec.epsilon;
  trace.period = spec.period;
  trace.seed = spec.seed;
  trace.observable = observable;
  trace.values.reserve(nCycles + 1);
  trace.values.push_back(1.0);

  for (int cycle = 1; cycle <= nCycles; ++cycle) {
    state.amplitudes = uInt.apply(state.amplitudes);
    state.amplitudes = uPulse.apply(state.amplitudes);
    const double drift = std::abs(state.norm() - 1.0);
    if (drift > 1e-8)
      throw std::runtime_error("run_floquet: state norm drifted by " + std::to_string(drift) +
                               " at cycle " + std::to_string(cycle));
    trace.values.push_back(measure(state, observable, spec.n, spec.localDim) / v0);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Disorder ensembles
// ---------------------------------------------------------------------------

// Independent seeds derived from a base seed by index mixing.
inline std::vector<uint64_t> derive_seeds(uint64_t base, int count) {
  std::vector<uint64_t> seeds(count);
  for (int k = 0; k < count; ++k) seeds[k] = mix_seed(base, static_cast<uint64_t>(k) + 1);
  return seeds;
}

// Recipe for one ensemble: how to realize a spec and an initial state from
// a seed, and what to record.
struct EnsembleSpec {
  std::function<ModelSpec(uint64_t)> makeSpec;
  std::function<QuantumState(const ModelSpec&)> makeState;
  Observable observable;
  int nCycles = 100;
  PropagatorMethod method = PropagatorMethod::Auto;
  KrylovOptions krylovOpts;
};

// Runs one realization per seed across a worker pool. Output order matches
// the seed order regardless of scheduling; workers share nothing mutable.
inline std::vector<TimeTrace> run_ensemble(const EnsembleSpec& ensemble,
                                           const std::vector<uint64_t>& seeds,
                                           int nWorkers = 1) {
  if (seeds.empty()) throw std::invalid_argument("run_ensemble: need at least one seed");
  if (!ensemble.makeSpec || !ensemble.makeState)
    throw std::invalid_argument("run_ensemble: spec and state factories are required");
  nWorkers = std::max(1, std::min<int>(nWorkers, static_cast<int>(seeds.size())));

  std::vector<TimeTrace> traces(seeds.size());
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(nWorkers);

  auto worker = [&](int w) {
    try {
      for (;;) {
        const size_t k = next.fetch_add(1);
        if (k >= seeds.size()) return;
        ModelSpec spec = ensemble.makeSpec(seeds[k]);
        QuantumState state = ensemble.makeState(spec);
        traces[k] = run_floquet(spec, state, ensemble.nCycles, ensemble.observable,
                                ensemble.method, ensemble.krylovOpts);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };

  if (nWorkers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nWorkers);
    for (int w = 0; w < nWorkers; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return traces;
}

// Cycle-by-cycle mean of an ensemble of equal-length traces.
inline std::vector<double> mean_trace(const std::vector<TimeTrace>& traces) {
  if (traces.empty()) throw std::invalid_argument("mean_trace: empty ensemble");
  const size_t len = traces.front().values.size();
  std::vector<double> mean(len, 0.0);
  for (const auto& t : traces) {
    if (t.values.size() != len) throw std::invalid_argument("mean_trace: ragged ensemble");
    for (size_t k = 0; k < len; ++k) mean[k] += t.values[k];
  }
  for (auto& v : mean) v /= static_cast<double>(traces.size());
  return mean;
}

}  // namespace dtc
