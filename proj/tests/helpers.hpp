#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dtc/spinops.hpp"

namespace dtc::test {

// Kronecker product, kept as an independent cross-check for the sparse
// embeddings that are built by index arithmetic instead.
inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
  return out;
}

inline Mat kron_chain(const std::vector<Mat>& factors) {
  Mat out = Mat::Identity(1, 1);
  for (const auto& f : factors) out = kron(out, f);
  return out;
}

// I x..x op x..x I with the operator on one site, by explicit products.
inline Mat kron_embed(const Mat& op, int site, int n, int d) {
  std::vector<Mat> factors(static_cast<size_t>(n), Mat::Identity(d, d));
  factors[static_cast<size_t>(site)] = op;
  return kron_chain(factors);
}

inline double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

inline double max_abs_diff(const Mat& a, const Mat& b) { return max_abs(a - b); }

}  // namespace dtc::test
