#pragma once

// Lanczos approximation of exp(-i t H) v for Hermitian H given only through
// its action. Full reorthogonalization keeps the basis orthonormal to working
// precision, which matters for the small effective problems of TDVP where the
// Krylov space often exhausts the whole space.

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Eigenvalues>

#include "tfdgqme/common.hpp"

namespace tfdgqme {

struct KrylovOptions {
  double tol = 1e-12;  // relative error target on the propagated vector
  int max_dim = 40;    // largest Krylov space before falling back to substeps
  int max_substeps = 64;
};

struct KrylovStats {
  int matvecs = 0;
  int substeps = 0;
};

namespace detail {

// One attempt at exp(-i t H) v with at most max_dim Lanczos vectors. Returns
// false if the error estimate never dropped below tol.
template <class Apply>
bool lanczos_expm_once(Apply& apply, const Eigen::VectorXcd& v, double t, const KrylovOptions& opt,
                       Eigen::VectorXcd& out, KrylovStats& stats) {
  const Index n = v.size();
  const double beta0 = v.norm();
  if (beta0 == 0.0 || t == 0.0) {
    out = v;
    return true;
  }
  const int m_max = static_cast<int>(std::min<Index>(opt.max_dim, n));
  Eigen::MatrixXcd basis(n, m_max);
  std::vector<double> alpha, beta;
  basis.col(0) = v / beta0;
  Eigen::VectorXcd w(n);

  auto small_expm = [&](int m) {
    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) tri(i, i) = alpha[i];
    for (int i = 0; i + 1 < m; ++i) tri(i, i + 1) = tri(i + 1, i) = beta[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
    const Eigen::VectorXcd phase =
        (es.eigenvalues().cast<cplx>() * cplx(0.0, -t)).array().exp().matrix();
    Eigen::VectorXcd first_row = es.eigenvectors().row(0).transpose().cast<cplx>();
    return Eigen::VectorXcd(es.eigenvectors().cast<cplx>() * phase.cwiseProduct(first_row));
  };

  for (int j = 0; j < m_max; ++j) {
    w = apply(basis.col(j));
    ++stats.matvecs;
    const double a = basis.col(j).dot(w).real();
    alpha.push_back(a);
    // Two passes of classical Gram-Schmidt against the whole basis.
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::VectorXcd coeff = basis.leftCols(j + 1).adjoint() * w;
      w.noalias() -= basis.leftCols(j + 1) * coeff;
    }
    const double b = w.norm();
    const int m = j + 1;
    const bool breakdown = b <= 1e-14 * std::max(1.0, std::abs(a));
    if (breakdown || m == n) {
      out = beta0 * (basis.leftCols(m) * small_expm(m));
      return true;
    }
    Eigen::VectorXcd y = small_expm(m);
    const double err = b * std::abs(y[m - 1]);
    if (err <= opt.tol) {
      out = beta0 * (basis.leftCols(m) * y);
      return true;
    }
    beta.push_back(b);
    if (m < m_max) basis.col(m) = w / b;
  }
  return false;
}

}  // namespace detail

/// exp(-i t H) v. `apply` maps a vector to H times it and must be Hermitian.
template <class Apply>
Eigen::VectorXcd expm_action(Apply&& apply, const Eigen::VectorXcd& v, double t,
                             const KrylovOptions& opt = {}, KrylovStats* stats = nullptr) {
  KrylovStats local;
  KrylovStats& st = stats ? *stats : local;
  Eigen::VectorXcd out;
  if (detail::lanczos_expm_once(apply, v, t, opt, out, st)) return out;
  for (int pieces = 2; pieces <= opt.max_substeps; pieces *= 2) {
    Eigen::VectorXcd cur = v;
    bool ok = true;
    for (int p = 0; p < pieces && ok; ++p) {
      ok = detail::lanczos_expm_once(apply, cur, t / pieces, opt, out, st);
      cur = out;
    }
    st.substeps = pieces;
    if (ok) return cur;
  }
  throw NumericalError("Krylov exponential did not converge");
}

}  // namespace tfdgqme
