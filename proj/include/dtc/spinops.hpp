#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace dtc {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using SpMat = Eigen::SparseMatrix<cplx>;

constexpr cplx kI{0.0, 1.0};

// Single-site operator on a 2- or 3-dimensional local space.
struct SpinOperator {
  int dim = 0;
  Mat matrix;
  std::string label;
};

// The eight su(3) generators, trace-orthonormal (tr[l^mu l^nu] = 2 delta).
// Ordering: six off-diagonal generators first, the two diagonal
// (population-imbalance) generators last.
struct GellMannBasis {
  std::vector<Mat> matrices;
};

inline int64_t ipow(int64_t base, int exp) {
  int64_t r = 1;
  for (int k = 0; k < exp; ++k) r *= base;
  return r;
}

// Operator on the localDim^nSites-dimensional product space. Site 0 is the
// most significant digit of the base-localDim basis index.
struct ManyBodyOperator {
  int nSites = 0;
  int localDim = 0;
  SpMat storage;

  Eigen::Index dim() const { return storage.rows(); }
  Mat dense() const { return Mat(storage); }
};

// Spin-1/2 operators {Sx, Sy, Sz, S+, S-} in the {|up>, |down>} basis,
// index 0 = |up> (Sz eigenvalue +1/2). S+- = Sx +- i Sy.
inline std::vector<SpinOperator> spin_half_ops() {
  Mat sx(2, 2), sy(2, 2), sz(2, 2), sp(2, 2), sm(2, 2);
  sx << 0.0, 0.5, 0.5, 0.0;
  sy << 0.0, -0.5 * kI, 0.5 * kI, 0.0;
  sz << 0.5, 0.0, 0.0, -0.5;
  sp << 0.0, 1.0, 0.0, 0.0;
  sm << 0.0, 0.0, 1.0, 0.0;
  return {{2, sx, "Sx"}, {2, sy, "Sy"}, {2, sz, "Sz"}, {2, sp, "S+"}, {2, sm, "S-"}};
}

inline SpinOperator spin_half_op(const std::string& label) {
  for (auto& op : spin_half_ops())
    if (op.label == label) return op;
  throw std::invalid_argument("spin_half_op: unknown label " + label);
}

// Spin-1 transition operator |a><b| with levels a, b in {+1, 0, -1};
// basis index 0 = |+1>, 1 = |0>, 2 = |-1>.
inline SpinOperator spin_one_sigma(int a, int b) {
  auto idx = [](int m) {
    if (m != 1 && m != 0 && m != -1)
      throw std::invalid_argument("spin_one_sigma: level must be +1, 0 or -1");
    return 1 - m;
  };
  Mat m = Mat::Zero(3, 3);
  m(idx(a), idx(b)) = 1.0;
  return {3, m, "sigma(" + std::to_string(a) + "," + std::to_string(b) + ")"};
}

inline GellMannBasis gell_mann_basis() {
  auto E = [](int r, int c) {
    Mat m = Mat::Zero(3, 3);
    m(r, c) = 1.0;
    return m;
  };
  // Standard generators, reordered so the two diagonal ones come last.
  const Mat l1 = E(0, 1) + E(1, 0);
  const Mat l2 = -kI * E(0, 1) + kI * E(1, 0);
  const Mat l4 = E(0, 2) + E(2, 0);
  const Mat l5 = -kI * E(0, 2) + kI * E(2, 0);
  const Mat l6 = E(1, 2) + E(2, 1);
  const Mat l7 = -kI * E(1, 2) + kI * E(2, 1);
  const Mat l3 = E(0, 0) - E(1, 1);
  const Mat l8 = (E(0, 0) + E(1, 1) - 2.0 * E(2, 2)) / std::sqrt(3.0);
  return {{l1, l6, l2, l7, l4, l5, l3, l8}};
}

// I x..x op x..x I with the operator at the given site, sparse.
inline ManyBodyOperator embed(const SpinOperator& op, int site, int n) {
  if (site < 0 || site >= n) throw std::invalid_argument("embed: site out of range");
  const int d = op.dim;
  const int64_t D = ipow(d, n);
  const int64_t stride = ipow(d, n - 1 - site);

  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(static_cast<size_t>(D) * d);
  for (int64_t c = 0; c < D; ++c) {
    const int dc = static_cast<int>((c / stride) % d);
    for (int dr = 0; dr < d; ++dr) {
      const cplx v = op.matrix(dr, dc);
      if (v == 0.0) continue;
      trip.emplace_back(c + (dr - dc) * stride, c, v);
    }
  }
  SpMat m(D, D);
  m.setFromTriplets(trip.begin(), trip.end());
  return {n, d, std::move(m)};
}

// embed(opA, siteA) * embed(opB, siteB) for distinct sites.
inline ManyBodyOperator two_site_term(const SpinOperator& opA, int siteA,
                                      const SpinOperator& opB, int siteB, int n) {
  if (siteA == siteB) throw std::invalid_argument("two_site_term: coincident sites");
  if (opA.dim != opB.dim) throw std::invalid_argument("two_site_term: mixed local dims");
  const int d = opA.dim;
  const int64_t D = ipow(d, n);
  const int64_t strideA = ipow(d, n - 1 - siteA);
  const int64_t strideB = ipow(d, n - 1 - siteB);

  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(static_cast<size_t>(D));
  for (int64_t c = 0; c < D; ++c) {
    const int dA = static_cast<int>((c / strideA) % d);
    const int dB = static_cast<int>((c / strideB) % d);
    for (int rA = 0; rA < d; ++rA) {
      const cplx vA = opA.matrix(rA, dA);
      if (vA == 0.0) continue;
      for (int rB = 0; rB < d; ++rB) {
        const cplx vB = opB.matrix(rB, dB);
        if (vB == 0.0) continue;
        trip.emplace_back(c + (rA - dA) * strideA + (rB - dB) * strideB, c, vA * vB);
      }
    }
  }
  SpMat m(D, D);
  m.setFromTriplets(trip.begin(), trip.end());
  return {n, d, std::move(m)};
}

inline ManyBodyOperator operator+(const ManyBodyOperator& a, const ManyBodyOperator& b) {
  if (a.nSites != b.nSites || a.localDim != b.localDim)
    throw std::invalid_argument("ManyBodyOperator: incompatible operands");
  return {a.nSites, a.localDim, SpMat(a.storage + b.storage)};
}

inline ManyBodyOperator operator*(double s, const ManyBodyOperator& a) {
  return {a.nSites, a.localDim, SpMat(s * a.storage)};
}

}  // namespace dtc
