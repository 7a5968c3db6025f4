#include "cxr/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cxr/error.hpp"

namespace cxr {

namespace {

// One-sided Jacobi on a tall matrix (m >= n): plane rotations applied to
// column pairs of B until all columns are mutually orthogonal. The rotated
// matrix is U * diag(sigma); the accumulated rotations form V.
struct TallSvd {
  std::vector<double> sigma;
  Tensor u;  // m x n, columns normalized (zero for sigma == 0)
  Tensor v;  // n x n
};

TallSvd jacobi_svd_tall(const Tensor& a) {
  const std::size_t m = a.extent(0), n = a.extent(1);
  Tensor b = a;        // rotated in place
  Tensor v({n, n});
  for (std::size_t i = 0; i < n; ++i) v.at2(i, i) = 1.0;

  constexpr double kOrthTol = 1e-15;
  constexpr int kMaxSweeps = 64;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double bp = b.at2(i, p), bq = b.at2(i, q);
          app += bp * bp;
          aqq += bq * bq;
          apq += bp * bq;
        }
        const double norms = std::sqrt(app * aqq);
        if (norms == 0.0 || std::fabs(apq) <= kOrthTol * norms) continue;

        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double bp = b.at2(i, p), bq = b.at2(i, q);
          b.at2(i, p) = cs * bp - sn * bq;
          b.at2(i, q) = sn * bp + cs * bq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v.at2(i, p), vq = v.at2(i, q);
          v.at2(i, p) = cs * vp - sn * vq;
          v.at2(i, q) = sn * vp + cs * vq;
        }
        rotated = true;
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += b.at2(i, j) * b.at2(i, j);
    sigma[j] = std::sqrt(s);
  }

  // Sort singular values non-increasing, permuting the factors along.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  TallSvd out;
  out.sigma.resize(n);
  out.u = Tensor({m, n});
  out.v = Tensor({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = perm[j];
    out.sigma[j] = sigma[src];
    const double inv = sigma[src] > 0.0 ? 1.0 / sigma[src] : 0.0;
    for (std::size_t i = 0; i < m; ++i) out.u.at2(i, j) = b.at2(i, src) * inv;
    for (std::size_t i = 0; i < n; ++i) out.v.at2(i, j) = v.at2(i, src);
  }
  return out;
}

}  // namespace

SvdResult jacobi_svd(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("jacobi_svd expects a matrix, got " + a.shape_string());
  const std::size_t m = a.extent(0), n = a.extent(1);

  if (m >= n) {
    TallSvd t = jacobi_svd_tall(a);
    return SvdResult{std::move(t.sigma), std::move(t.u), std::move(t.v)};
  }

  // Wide matrix: decompose the transpose and swap the factors.
  Tensor at({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) at.at2(j, i) = a.at2(i, j);
  }
  TallSvd t = jacobi_svd_tall(at);
  return SvdResult{std::move(t.sigma), std::move(t.v), std::move(t.u)};
}

}  // namespace cxr
