#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "vitmimo/errors.hpp"
#include "vitmimo/rng.hpp"

namespace vitmimo {

template <typename Real>
using CMatrixT = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using RVectorT = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

using CMatrix = CMatrixT<double>;
using RVector = RVectorT<double>;

template <typename Real>
struct SvdFactorsT {
  CMatrixT<Real> u;
  RVectorT<Real> singular;  // descending, non-negative
  CMatrixT<Real> v;
};

using SvdFactors = SvdFactorsT<double>;

inline constexpr double kDefaultSingularFloor = 1e-6;

namespace detail {

// Completes the zero columns of q (flagged in `missing`) to an orthonormal basis.
template <typename Real>
void complete_basis(CMatrixT<Real>& q, const std::vector<bool>& missing) {
  using C = std::complex<Real>;
  const Eigen::Index n = q.rows();
  Eigen::Index candidate = 0;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (!missing[static_cast<std::size_t>(j)]) continue;
    while (candidate < n) {
      Eigen::Matrix<C, Eigen::Dynamic, 1> e = Eigen::Matrix<C, Eigen::Dynamic, 1>::Zero(n);
      e[candidate++] = C(1);
      for (Eigen::Index k = 0; k < q.cols(); ++k) {
        if (k == j || (missing[static_cast<std::size_t>(k)] && k > j)) continue;
        e -= q.col(k).dot(e) * q.col(k);
      }
      // Second pass for orthogonality at rounding level.
      for (Eigen::Index k = 0; k < q.cols(); ++k) {
        if (k == j || (missing[static_cast<std::size_t>(k)] && k > j)) continue;
        e -= q.col(k).dot(e) * q.col(k);
      }
      const Real norm = e.norm();
      if (norm > Real(0.5)) {
        q.col(j) = e / norm;
        break;
      }
    }
  }
}

}  // namespace detail

// One-sided (Hestenes) Jacobi SVD of a square complex matrix.
// Convention: the first non-negligible entry of every column of V is real
// and positive; U columns carry the matching phase.
template <typename Real>
SvdFactorsT<Real> svd(const CMatrixT<Real>& h, int max_sweeps = 60) {
  using C = std::complex<Real>;
  const Eigen::Index m = h.rows();
  if (m < 1 || h.cols() != m) {
    throw DimensionError("svd: expected a square matrix, got " + std::to_string(h.rows()) + "x" +
                         std::to_string(h.cols()));
  }
  if (!h.allFinite()) throw NumericError("svd: matrix has non-finite entries");

  CMatrixT<Real> a = h;
  CMatrixT<Real> v = CMatrixT<Real>::Identity(m, m);
  const Real tol = std::numeric_limits<Real>::epsilon() * static_cast<Real>(m);

  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (Eigen::Index p = 0; p + 1 < m; ++p) {
      for (Eigen::Index q = p + 1; q < m; ++q) {
        const Real alpha = a.col(p).squaredNorm();
        const Real beta = a.col(q).squaredNorm();
        const C gamma = a.col(p).dot(a.col(q));  // a_p^H a_q
        const Real g = std::abs(gamma);
        if (g == Real(0) || g <= tol * std::sqrt(alpha * beta)) continue;
        converged = false;
        const C phase = gamma / g;
        const Real zeta = (beta - alpha) / (Real(2) * g);
        const Real t = (zeta >= Real(0) ? Real(1) : Real(-1)) /
                       (std::abs(zeta) + std::sqrt(Real(1) + zeta * zeta));
        const Real c = Real(1) / std::sqrt(Real(1) + t * t);
        const Real s = c * t;
        for (auto* mat : {&a, &v}) {
          const Eigen::Matrix<C, Eigen::Dynamic, 1> cp = mat->col(p);
          const Eigen::Matrix<C, Eigen::Dynamic, 1> cq = std::conj(phase) * mat->col(q);
          mat->col(p) = c * cp - s * cq;
          mat->col(q) = s * cp + c * cq;
        }
      }
    }
  }
  if (!converged) {
    throw NumericError("svd: Jacobi sweeps did not converge after " + std::to_string(max_sweeps));
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  RVectorT<Real> norms(m);
  for (Eigen::Index j = 0; j < m; ++j) norms[j] = a.col(j).norm();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return norms[x] > norms[y]; });

  SvdFactorsT<Real> out;
  out.u = CMatrixT<Real>::Zero(m, m);
  out.v = CMatrixT<Real>(m, m);
  out.singular = RVectorT<Real>(m);
  const Real scale = std::max(norms.maxCoeff(), std::numeric_limits<Real>::min());
  const Real zero_cut = std::numeric_limits<Real>::epsilon() * scale * static_cast<Real>(m);
  std::vector<bool> missing(static_cast<std::size_t>(m), false);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.v.col(j) = v.col(src);
    if (norms[src] > zero_cut) {
      out.singular[j] = norms[src];
      out.u.col(j) = a.col(src) / norms[src];
    } else {
      out.singular[j] = Real(0);
      missing[static_cast<std::size_t>(j)] = true;
    }
  }
  detail::complete_basis<Real>(out.u, missing);

  for (Eigen::Index j = 0; j < m; ++j) {
    const Real cut = Real(1e-12);
    for (Eigen::Index i = 0; i < m; ++i) {
      const C z = out.v(i, j);
      if (std::abs(z) > cut) {
        const C fix = std::conj(z) / std::abs(z);
        out.v.col(j) *= fix;
        out.u.col(j) *= fix;
        out.v(i, j) = C(std::abs(out.v(i, j)), Real(0));
        break;
      }
    }
  }
  return out;
}

// Moore-Penrose inverse of a diagonal, zeroing entries below `floor`.
template <typename Real>
RVectorT<Real> pinv_diag(const RVectorT<Real>& singular, Real floor = Real(kDefaultSingularFloor)) {
  if (!(floor > Real(0))) throw ConfigError("pinv_diag: floor must be positive");
  RVectorT<Real> out(singular.size());
  for (Eigen::Index i = 0; i < singular.size(); ++i) {
    out[i] = singular[i] >= floor ? Real(1) / singular[i] : Real(0);
  }
  return out;
}

// i.i.d. CN(0, sigma_h2) entries: real and imaginary parts N(0, sigma_h2 / 2).
template <typename Real = double>
CMatrixT<Real> sample_channel(Rng& rng, int m, Real sigma_h2) {
  if (m < 1) throw ConfigError("sample_channel: antenna count must be >= 1");
  if (!(sigma_h2 > Real(0))) throw ConfigError("sample_channel: sigma_h2 must be positive");
  const Real sd = std::sqrt(sigma_h2 / Real(2));
  CMatrixT<Real> h(m, m);
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const Real re = static_cast<Real>(rng.normal()) * sd;
    const Real im = static_cast<Real>(rng.normal()) * sd;
    h.data()[i] = std::complex<Real>(re, im);
  }
  return h;
}

template <typename Real>
CMatrixT<Real> reconstruct(const SvdFactorsT<Real>& f) {
  return f.u * f.singular.template cast<std::complex<Real>>().asDiagonal() * f.v.adjoint();
}

// ||Q^H Q - I||_F
template <typename Real>
Real unitarity_error(const CMatrixT<Real>& q) {
  return (q.adjoint() * q - CMatrixT<Real>::Identity(q.cols(), q.cols())).norm();
}

}  // namespace vitmimo
