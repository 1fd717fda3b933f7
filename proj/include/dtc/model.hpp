#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dtc/errors.hpp"
#include "dtc/rng.hpp"
#include "dtc/spinops.hpp"

namespace dtc {

enum class Protocol { Z2Ising, Z2, Z3, ToyModel };

inline std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::Z2Ising: return "Z2Ising";
    case Protocol::Z2: return "Z2";
    case Protocol::Z3: return "Z3";
    case Protocol::ToyModel: return "ToyModel";
  }
  throw std::invalid_argument("to_string: bad protocol");
}

inline Protocol protocol_from_string(const std::string& s) {
  if (s == "Z2Ising") return Protocol::Z2Ising;
  if (s == "Z2") return Protocol::Z2;
  if (s == "Z3") return Protocol::Z3;
  if (s == "ToyModel") return Protocol::ToyModel;
  throw std::invalid_argument("protocol_from_string: unknown protocol \"" + s + "\"");
}

inline int protocol_local_dim(Protocol p) { return p == Protocol::Z3 ? 3 : 2; }

// Subharmonic order m of the protocol: observables are probed for period-m
// response.
inline int protocol_order(Protocol p) { return p == Protocol::Z3 ? 3 : 2; }

// Pairwise coupling strengths, stored once per unordered pair i<j.
struct CouplingTable {
  struct Entry {
    int i = 0;
    int j = 0;
    double strength = 0.0;
  };
  int n = 0;
  std::vector<Entry> entries;
  // Per-site mean-field sums sum_j J_ij; filled by the positional sampler.
  std::vector<double> meanFieldSums;
};

// Per-site detuning fields. For spin-1/2 protocols only `values` is used
// (detuning along z). For the spin-1 protocol `values` detunes the lower
// transition and `valuesUpper` the upper one, drawn independently. sigma
// records the generating Gaussian std; 0 means identically zero field.
struct DisorderField {
  std::vector<double> values;
  std::vector<double> valuesUpper;
  double sigma = 0.0;

  static DisorderField zero(int n) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0.0};
  }

  static DisorderField gaussian(int n, double sigma, uint64_t seed) {
    Rng rng(mix_seed(seed, 0x64697364ULL));
    DisorderField f;
    f.sigma = sigma;
    f.values.resize(n);
    f.valuesUpper.resize(n);
    for (auto& x : f.values) x = sigma * rng.gaussian();
    for (auto& x : f.valuesUpper) x = sigma * rng.gaussian();
    return f;
  }

  bool is_zero() const { return sigma == 0.0; }
};

struct ModelSpec {
  Protocol protocol = Protocol::ToyModel;
  int n = 0;
  int localDim = 2;
  CouplingTable couplings;
  DisorderField disorder;
  double alpha = 1.0;    // spin-exchange coefficient, ToyModel only
  double epsilon = 0.0;  // rotation-angle perturbation (radians)
  double period = 1.0;   // Floquet period T
  uint64_t seed = 0;
};

inline void validate(const ModelSpec& spec) {
  if (spec.n < 1) throw std::invalid_argument("ModelSpec: n must be positive");
  if (spec.localDim != protocol_local_dim(spec.protocol))
    throw std::invalid_argument("ModelSpec: localDim inconsistent with protocol");
  if (!(spec.epsilon > -M_PI && spec.epsilon < M_PI))
    throw std::invalid_argument("ModelSpec: epsilon must lie in (-pi, pi)");
  if (!(spec.period > 0)) throw std::invalid_argument("ModelSpec: period must be positive");
  if (spec.couplings.n != 0 && spec.couplings.n != spec.n)
    throw std::invalid_argument("ModelSpec: coupling table size mismatch");
  if (!spec.disorder.values.empty() && static_cast<int>(spec.disorder.values.size()) != spec.n)
    throw std::invalid_argument("ModelSpec: disorder field size mismatch");
}

// Diagonal mean-field coefficient matrix C and field vector h for
// H_MF = sum_mu (jmf * C_mumu <B^mu> + h_mu) B^mu in the Pauli-like
// (basisDim 3) or Gell-Mann (basisDim 8) basis.
struct MeanFieldSpec {
  int basisDim = 3;
  Eigen::VectorXd C;
  Eigen::VectorXd h;
  double jmf = 1.0;
};

// ---------------------------------------------------------------------------
// Toy model
// ---------------------------------------------------------------------------

// J_ij ~ U[-1,1]/sqrt(n) for each unordered pair, drawn row-major from the
// seed.
inline CouplingTable sample_toy_couplings(int n, uint64_t seed) {
  if (n < 2) throw std::invalid_argument("sample_toy_couplings: need n >= 2");
  Rng rng(mix_seed(seed, 0x746F79ULL));
  CouplingTable table;
  table.n = n;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      table.entries.push_back({i, j, rng.uniform(-1.0, 1.0) * scale});
  return table;
}

// Normalization scale J = max_ij |J_ij| / sqrt(n), defined on the
// single-pair strengths.
inline double toy_coupling_scale(const CouplingTable& table) {
  double j = 0.0;
  for (const auto& e : table.entries) j = std::max(j, std::abs(e.strength));
  return j;
}

// Complete toy-model spec at a given dimensionless J*T: samples couplings
// from the seed and fixes the period so that toy_coupling_scale * period
// equals jt for this realization.
inline ModelSpec make_toy_spec(int n, double alpha, double epsilon, double jt, uint64_t seed) {
  ModelSpec spec;
  spec.protocol = Protocol::ToyModel;
  spec.n = n;
  spec.localDim = 2;
  spec.couplings = sample_toy_couplings(n, seed);
  spec.disorder = DisorderField::zero(n);
  spec.alpha = alpha;
  spec.epsilon = epsilon;
  spec.period = jt / toy_coupling_scale(spec.couplings);
  spec.seed = seed;
  validate(spec);
  return spec;
}

// H = sum_{i<j} J_ij/sqrt(n) [alpha (SxSx + SySy) - SzSz], each unordered
// pair counted once, assembled directly over basis states: the Ising part
// is diagonal, the spin-exchange part flips anti-aligned pairs with
// amplitude alpha*J/2 (from (S+S- + S-S+)/2).
inline ManyBodyOperator build_toy_hamiltonian(const ModelSpec& spec) {
  if (spec.protocol != Protocol::ToyModel)
    throw std::invalid_argument("build_toy_hamiltonian: spec is not a toy model");
  validate(spec);
  const int n = spec.n;
  const int64_t D = int64_t{1} << n;

  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(static_cast<size_t>(D) * (spec.alpha != 0.0 ? n : 1));

  std::vector<double> diag(D, 0.0);
  for (const auto& e : spec.couplings.entries) {
    const double w = e.strength;
    const int64_t maskI = int64_t{1} << (n - 1 - e.i);
    const int64_t maskJ = int64_t{1} << (n - 1 - e.j);
    for (int64_t k = 0; k < D; ++k) {
      const double szi = (k & maskI) ? -0.5 : 0.5;
      const double szj = (k & maskJ) ? -0.5 : 0.5;
      diag[k] -= w * szi * szj;
      if (spec.alpha != 0.0 && ((k & maskI) != 0) != ((k & maskJ) != 0))
        trip.emplace_back(k ^ maskI ^ maskJ, k, spec.alpha * w * 0.5);
    }
  }
  for (int64_t k = 0; k < D; ++k)
    if (diag[k] != 0.0) trip.emplace_back(k, k, diag[k]);

  SpMat m(D, D);
  m.setFromTriplets(trip.begin(), trip.end());
  return {n, 2, std::move(m)};
}

// ---------------------------------------------------------------------------
// Laboratory protocols
// ---------------------------------------------------------------------------

enum class HamiltonianPhase { Interaction, Pulse };

namespace detail {

inline ManyBodyOperator accumulate_terms(int n, int localDim,
                                         const std::vector<ManyBodyOperator>& terms) {
  const int64_t D = ipow(localDim, n);
  SpMat sum(D, D);
  for (const auto& t : terms) sum += t.storage;
  return {n, localDim, std::move(sum)};
}

// sigma^{+1,+1} - sigma^{-1,-1} as a single-site spin-1 operator.
inline SpinOperator spin_one_imbalance() {
  SpinOperator op = spin_one_sigma(1, 1);
  op.matrix -= spin_one_sigma(-1, -1).matrix;
  op.label = "sigma(+1,+1)-sigma(-1,-1)";
  return op;
}

}  // namespace detail

// Interaction-phase Hamiltonian (drive off, disorder on) or, for the
// spin-1/2 protocols, the pulse-phase rotation generator G (the rotation is
// exp[-i theta G], theta = pi + epsilon). The spin-1 pulse phase is a
// two-pulse composition with no single generator; request it from the
// evolution module instead.
inline ManyBodyOperator build_lab_hamiltonian(const ModelSpec& spec, HamiltonianPhase phase) {
  if (spec.protocol == Protocol::ToyModel)
    throw std::invalid_argument("build_lab_hamiltonian: toy model has no lab form");
  validate(spec);
  const int n = spec.n;
  const int d = spec.localDim;
  std::vector<ManyBodyOperator> terms;

  if (phase == HamiltonianPhase::Pulse) {
    if (d != 2)
      throw std::invalid_argument(
          "build_lab_hamiltonian: spin-1 pulse phase is a two-pulse composition, "
          "not a single generator");
    for (int i = 0; i < n; ++i) terms.push_back(embed(spin_half_op("Sy"), i, n));
    return detail::accumulate_terms(n, d, terms);
  }

  const auto& dis = spec.disorder;
  switch (spec.protocol) {
    case Protocol::Z2Ising:
      for (const auto& e : spec.couplings.entries)
        terms.push_back(e.strength *
                        two_site_term(spin_half_op("Sx"), e.i, spin_half_op("Sx"), e.j, n));
      if (!dis.is_zero())
        for (int i = 0; i < n; ++i)
          terms.push_back(dis.values[i] * embed(spin_half_op("Sz"), i, n));
      break;
    case Protocol::Z2:
      for (const auto& e : spec.couplings.entries) {
        auto xx = two_site_term(spin_half_op("Sx"), e.i, spin_half_op("Sx"), e.j, n);
        auto yy = two_site_term(spin_half_op("Sy"), e.i, spin_half_op("Sy"), e.j, n);
        auto zz = two_site_term(spin_half_op("Sz"), e.i, spin_half_op("Sz"), e.j, n);
        terms.push_back(e.strength * (xx + yy + (-1.0 * zz)));
      }
      if (!dis.is_zero())
        for (int i = 0; i < n; ++i)
          terms.push_back(dis.values[i] * embed(spin_half_op("Sz"), i, n));
      break;
    case Protocol::Z3: {
      const SpinOperator imb = detail::spin_one_imbalance();
      for (const auto& e : spec.couplings.entries) {
        auto ising = two_site_term(imb, e.i, imb, e.j, n);
        auto up = two_site_term(spin_one_sigma(1, 0), e.i, spin_one_sigma(0, 1), e.j, n);
        auto dn = two_site_term(spin_one_sigma(-1, 0), e.i, spin_one_sigma(0, -1), e.j, n);
        auto upT = two_site_term(spin_one_sigma(0, 1), e.i, spin_one_sigma(1, 0), e.j, n);
        auto dnT = two_site_term(spin_one_sigma(0, -1), e.i, spin_one_sigma(-1, 0), e.j, n);
        terms.push_back(e.strength * (ising + (-0.5) * (up + dn + upT + dnT)));
      }
      if (!dis.is_zero())
        for (int i = 0; i < n; ++i) {
          terms.push_back(dis.valuesUpper[i] * embed(spin_one_sigma(1, 1), i, n));
          terms.push_back(dis.values[i] * embed(spin_one_sigma(-1, -1), i, n));
        }
      break;
    }
    default:
      throw std::invalid_argument("build_lab_hamiltonian: unsupported protocol");
  }
  return detail::accumulate_terms(n, d, terms);
}

// Toggling-frame average Hamiltonian over one subharmonic period: the
// echoed interaction plus the residual rotation field proportional to
// epsilon/(m T) with m the subharmonic order. On-site disorder is echoed
// out at this order and does not appear.
inline ManyBodyOperator build_average_hamiltonian(const ModelSpec& spec) {
  if (spec.protocol == Protocol::ToyModel)
    throw std::invalid_argument(
        "build_average_hamiltonian: toy-model drive is already stroboscopic");
  validate(spec);
  const int n = spec.n;
  const int d = spec.localDim;
  std::vector<ManyBodyOperator> terms;

  switch (spec.protocol) {
    case Protocol::Z2Ising: {
      for (const auto& e : spec.couplings.entries)
        terms.push_back(e.strength *
                        two_site_term(spin_half_op("Sx"), e.i, spin_half_op("Sx"), e.j, n));
      const double field = spec.epsilon / spec.period;
      if (field != 0.0)
        for (int i = 0; i < n; ++i) terms.push_back(field * embed(spin_half_op("Sy"), i, n));
      break;
    }
    case Protocol::Z2: {
      for (const auto& e : spec.couplings.entries) {
        auto xx = two_site_term(spin_half_op("Sx"), e.i, spin_half_op("Sx"), e.j, n);
        auto yy = two_site_term(spin_half_op("Sy"), e.i, spin_half_op("Sy"), e.j, n);
        auto zz = two_site_term(spin_half_op("Sz"), e.i, spin_half_op("Sz"), e.j, n);
        terms.push_back(e.strength * (xx + yy + (-1.0 * zz)));
      }
      const double field = spec.epsilon / spec.period;
      if (field != 0.0)
        for (int i = 0; i < n; ++i) terms.push_back(field * embed(spin_half_op("Sy"), i, n));
      break;
    }
    case Protocol::Z3: {
      // Interaction: sum_ab (delta_ab - delta_{a+-1,b}/3) sigma^ab sigma^ba,
      // the level-shift delta read cyclically so every a != b pair appears.
      for (const auto& e : spec.couplings.entries) {
        std::vector<ManyBodyOperator> pair;
        for (int a : {1, 0, -1})
          for (int b : {1, 0, -1}) {
            auto term = two_site_term(spin_one_sigma(a, b), e.i, spin_one_sigma(b, a), e.j, n);
            pair.push_back((a == b ? 1.0 : -1.0 / 3.0) * term);
          }
        terms.push_back(e.strength * detail::accumulate_terms(n, d, pair));
      }
      // Residual field (epsilon/3T) (sigma^{+1,0} + sigma^{-1,0} +
      // i sigma^{+1,-1} + h.c.)
      const double field = spec.epsilon / (3.0 * spec.period);
      if (field != 0.0) {
        Mat local = spin_one_sigma(1, 0).matrix + spin_one_sigma(-1, 0).matrix +
                    kI * spin_one_sigma(1, -1).matrix;
        local += local.adjoint().eval();
        for (int i = 0; i < n; ++i)
          terms.push_back(field * embed({3, local, "R"}, i, n));
      }
      break;
    }
    default:
      throw std::invalid_argument("build_average_hamiltonian: unsupported protocol");
  }
  return detail::accumulate_terms(n, d, terms);
}

// ---------------------------------------------------------------------------
// Positional sampling
// ---------------------------------------------------------------------------

// Secular dipolar coupling for a displacement (dx, dy, dz), with theta
// measured from the z quantization axis: J0 (1 - 3 cos^2 theta) / r^3.
inline double dipolar_coupling(double dx, double dy, double dz, double j0 = 1.0) {
  const double r2 = dx * dx + dy * dy + dz * dz;
  if (!(r2 > 0)) throw std::invalid_argument("dipolar_coupling: displacement must be nonzero");
  const double cos2 = (dz * dz) / r2;
  return j0 * (1.0 - 3.0 * cos2) / (r2 * std::sqrt(r2));
}

// Places n points uniformly in a cube at the given number density and
// returns dipolar couplings J0 (1 - 3 cos^2 theta_ij) / r_ij^3 relative to
// the z quantization axis, resampling configurations where any pair falls
// inside the exclusion radius. Also fills the per-site sums sum_j J_ij.
inline CouplingTable sample_dipolar_couplings(int n, double density, uint64_t seed,
                                              double j0 = 1.0, double exclusion = 1e-3) {
  if (n < 2) throw std::invalid_argument("sample_dipolar_couplings: need n >= 2");
  if (!(density > 0)) throw std::invalid_argument("sample_dipolar_couplings: density must be positive");
  const double side = std::cbrt(static_cast<double>(n) / density);
  Rng rng(mix_seed(seed, 0x646970ULL));

  std::vector<double> px(n), py(n), pz(n);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (int i = 0; i < n; ++i) {
      px[i] = rng.uniform(0.0, side);
      py[i] = rng.uniform(0.0, side);
      pz[i] = rng.uniform(0.0, side);
    }
    double rmin = side;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double dx = px[i] - px[j], dy = py[i] - py[j], dz = pz[i] - pz[j];
        rmin = std::min(rmin, std::sqrt(dx * dx + dy * dy + dz * dz));
      }
    if (rmin > exclusion * side) {
      CouplingTable table;
      table.n = n;
      table.meanFieldSums.assign(n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          const double strength =
              dipolar_coupling(px[i] - px[j], py[i] - py[j], pz[i] - pz[j], j0);
          table.entries.push_back({i, j, strength});
          table.meanFieldSums[i] += strength;
          table.meanFieldSums[j] += strength;
        }
      return table;
    }
  }
  throw std::runtime_error("sample_dipolar_couplings: could not satisfy exclusion radius");
}

// ---------------------------------------------------------------------------
// Mean-field coefficients
// ---------------------------------------------------------------------------

// Mean-field reduction coefficients per protocol at a given epsilon/T and
// total interaction strength. Basis ordering for the spin-1 case follows
// gell_mann_basis(): six off-diagonal generators, then the two diagonal
// ones.
inline MeanFieldSpec meanfield_spec(Protocol protocol, double epsOverT, double jmf) {
  MeanFieldSpec spec;
  spec.jmf = jmf;
  switch (protocol) {
    case Protocol::Z2Ising:
      spec.basisDim = 3;
      spec.C = Eigen::Vector3d(0.0, 0.0, 1.0);
      spec.h = Eigen::Vector3d(epsOverT, 0.0, 0.0);
      break;
    case Protocol::Z2:
      spec.basisDim = 3;
      spec.C = Eigen::Vector3d(-1.0, -1.0, 1.0);
      spec.h = Eigen::Vector3d(0.0, epsOverT, 0.0);
      break;
    case Protocol::Z3: {
      spec.basisDim = 8;
      spec.C.resize(8);
      spec.C << -1.0 / 6, -1.0 / 6, -1.0 / 6, -1.0 / 6, -1.0 / 6, -1.0 / 6, 0.5, 0.5;
      spec.h.resize(8);
      spec.h << epsOverT / 3, epsOverT / 3, 0.0, 0.0, 0.0, -epsOverT / 3, 0.0, 0.0;
      break;
    }
    default:
      throw std::invalid_argument("meanfield_spec: toy model has no mean-field form");
  }
  return spec;
}

}  // namespace dtc
