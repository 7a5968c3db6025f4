#pragma once

#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

// Thin SVD A = U * diag(sigma) * V^T for an m x n matrix, r = min(m, n).
struct SvdResult {
  std::vector<double> sigma;  // length r, non-increasing, non-negative
  Tensor u;                   // m x r
  Tensor v;                   // n x r
};

// One-sided Jacobi SVD. Deterministic: fixed sweep order, fixed thresholds.
// Columns whose singular value is exactly zero get zero vectors in U.
SvdResult jacobi_svd(const Tensor& a);

}  // namespace cxr
