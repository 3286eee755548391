#pragma once

// Memory kernels and inhomogeneous terms of the four GQME variants from the
// projection-free inputs, by fixed-point iteration on Volterra equations of
// the second kind discretized with the trapezoidal rule.

#include <map>
#include <optional>
#include <string>

#include <unsupported/Eigen/FFT>

#include "tfdgqme/model.hpp"
#include "tfdgqme/pfi.hpp"

namespace tfdgqme {

enum class GqmeKind { kFull, kPopulations, kDonor, kAcceptor };

struct GqmeType {
  GqmeKind kind = GqmeKind::kFull;
  std::vector<int> subset;  // Liouville indices retained by the projection

  static GqmeType make(GqmeKind k) {
    switch (k) {
      case GqmeKind::kFull: return {k, {kDD, kDA, kAD, kAA}};
      case GqmeKind::kPopulations: return {k, {kDD, kAA}};
      case GqmeKind::kDonor: return {k, {kDD}};
      case GqmeKind::kAcceptor: return {k, {kAA}};
    }
    throw InputError("unknown GQME kind");
  }

  static GqmeType parse(const std::string& s) {
    if (s == "full") return make(GqmeKind::kFull);
    if (s == "pop" || s == "populations") return make(GqmeKind::kPopulations);
    if (s == "donor") return make(GqmeKind::kDonor);
    if (s == "acceptor") return make(GqmeKind::kAcceptor);
    throw InputError("unknown GQME type '" + s + "' (expected full, pop, donor or acceptor)");
  }

  std::string name() const {
    switch (kind) {
      case GqmeKind::kFull: return "full";
      case GqmeKind::kPopulations: return "pop";
      case GqmeKind::kDonor: return "donor";
      case GqmeKind::kAcceptor: return "acceptor";
    }
    return "?";
  }

  int size() const { return static_cast<int>(subset.size()); }

  /// An inhomogeneous term is needed when the initial state lies outside the set.
  bool needs_inhom(int gamma = kDD) const {
    for (int s : subset)
      if (s == gamma) return false;
    return true;
  }

  /// Whether the projected Liouvillian enters (it vanishes on the population block).
  bool uses_liouvillian() const { return kind == GqmeKind::kFull; }

  bool operator==(const GqmeType& o) const { return kind == o.kind; }
};

inline std::vector<GqmeType> all_gqme_types() {
  return {GqmeType::make(GqmeKind::kFull), GqmeType::make(GqmeKind::kPopulations), GqmeType::make(GqmeKind::kDonor),
          GqmeType::make(GqmeKind::kAcceptor)};
}

struct KernelSeries {
  double dt = 0.0;
  GqmeType type;
  std::vector<Eigen::MatrixXcd> entries;
  int iterations_used = 0;
  double residual = 0.0;  // sup-norm change of the last sweep
  std::string fingerprint;

  std::size_t size() const { return entries.size(); }
};

struct InhomSeries {
  double dt = 0.0;
  GqmeType type;
  std::vector<Eigen::VectorXcd> entries;
  int iterations_used = 0;
  double residual = 0.0;
  std::string fingerprint;

  std::size_t size() const { return entries.size(); }
};

struct VolterraOptions {
  double tol = 1e-10;
  int max_iter = 50;
  std::optional<std::size_t> n_points;  // grid points to solve on; default all
};

namespace detail {

inline Eigen::MatrixXcd restrict(const Eigen::Matrix4cd& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  Eigen::MatrixXcd out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

// Online causal convolution hist_k = sum_{m<k} f_{k-m} x_m for a sequence x
// that is produced one element at a time, each element needing its own
// history. Divide and conquer: the left half of every power-of-two block is
// finished before its contribution to the right half is added with one FFT
// product, so a full pass costs O(n log^2 n) instead of O(n^2).
template <int N, int M>
class OnlineConvolution {
 public:
  using MatF = Eigen::Matrix<cplx, N, N>;
  using MatX = Eigen::Matrix<cplx, N, M>;

  OnlineConvolution(const std::vector<MatF>& f, std::size_t n) : f_(f), n_(n) {
    while (p_ < n_) p_ *= 2;
  }

  /// Fills x[0..n) with x_k = produce(k, hist_k).
  template <class Produce>
  void run(std::vector<MatX>& x, Produce&& produce) {
    hist_.assign(n_, MatX::Zero());
    x.resize(n_);
    recurse(0, p_, x, produce);
  }

 private:
  static constexpr std::size_t kLeaf = 32;
  using Spectrum = std::vector<cplx>;

  template <class Produce>
  void recurse(std::size_t l, std::size_t r, std::vector<MatX>& x, Produce& produce) {
    if (l >= n_) return;
    if (r - l <= kLeaf) {
      const std::size_t end = std::min(r, n_);
      for (std::size_t k = l; k < end; ++k) {
        for (std::size_t m = l; m < k; ++m) hist_[k].noalias() += f_[k - m] * x[m];
        x[k] = produce(k, hist_[k]);
      }
      return;
    }
    const std::size_t mid = l + (r - l) / 2;
    recurse(l, mid, x, produce);
    if (mid < n_) spread(l, mid, r, x);
    recurse(mid, r, x, produce);
  }

  // Adds sum_{m in [l, mid)} f_{k-m} x_m to hist_k for k in [mid, r). A
  // cyclic product of length r - l leaves those outputs free of wrap-around.
  void spread(std::size_t l, std::size_t mid, std::size_t r, const std::vector<MatX>& x) {
    const std::size_t len = r - l;
    const auto& fh = f_spectrum(len);
    std::vector<Spectrum> xh(N * M);
    Spectrum in(len);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < M; ++j) {
        for (std::size_t t = 0; t < len; ++t) in[t] = t < mid - l ? x[l + t](i, j) : cplx(0.0);
        fft_.fwd(xh[i * M + j], in);
      }
    Spectrum prod(len), out;
    const std::size_t end = std::min(r, n_);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < M; ++j) {
        std::fill(prod.begin(), prod.end(), cplx(0.0));
        for (int p = 0; p < N; ++p) {
          const Spectrum& a = fh[i * N + p];
          const Spectrum& b = xh[p * M + j];
          for (std::size_t w = 0; w < len; ++w) prod[w] += a[w] * b[w];
        }
        fft_.inv(out, prod);
        for (std::size_t k = mid; k < end; ++k) hist_[k](i, j) += out[k - l];
      }
  }

  const std::vector<Spectrum>& f_spectrum(std::size_t len) {
    auto it = f_cache_.find(len);
    if (it != f_cache_.end()) return it->second;
    std::vector<Spectrum> fh(N * N);
    Spectrum in(len);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        for (std::size_t t = 0; t < len; ++t) in[t] = t < n_ ? f_[t](i, j) : cplx(0.0);
        fft_.fwd(fh[i * N + j], in);
      }
    return f_cache_.emplace(len, std::move(fh)).first->second;
  }

  const std::vector<MatF>& f_;
  std::size_t n_;
  std::size_t p_ = 1;
  std::vector<MatX> hist_;
  std::map<std::size_t, std::vector<Spectrum>> f_cache_;
  Eigen::FFT<double> fft_;
};

// X_n = B_n + i h [F_n X_0 / 2 + sum_{m=1}^{n-1} F_{n-m} X_m + F_0 X_n / 2].
// Each sweep runs forward in n using the freshly updated history; only the
// endpoint term F_0 X_n / 2 takes the previous sweep's value.
template <int N, int M>
std::vector<Eigen::Matrix<cplx, N, M>> volterra_sweeps(const std::vector<Eigen::Matrix<cplx, N, N>>& f,
                                                       const std::vector<Eigen::Matrix<cplx, N, M>>& base, double h,
                                                       const VolterraOptions& opt, int& iterations, double& change) {
  using Mat = Eigen::Matrix<cplx, N, M>;
  const std::size_t n = base.size();
  std::vector<Mat> prev = base, cur(n);
  const cplx ih = kI * h;
  OnlineConvolution<N, M> conv(f, n);
  for (int it = 1; it <= opt.max_iter; ++it) {
    // hist includes the m = 0 term at full weight; the trapezoid wants half.
    conv.run(cur, [&](std::size_t k, const Mat& hist) -> Mat {
      if (k == 0) return base[0];
      return base[k] + ih * (hist - 0.5 * (f[k] * cur[0]) + 0.5 * (f[0] * prev[k]));
    });
    change = 0.0;
    for (std::size_t k = 0; k < n; ++k) change = std::max(change, (cur[k] - prev[k]).cwiseAbs().maxCoeff());
    if (!std::isfinite(change)) throw NumericalError("Volterra iteration produced non-finite values");
    prev.swap(cur);
    if (change < opt.tol) {
      iterations = it;
      return prev;
    }
  }
  throw NumericalError("Volterra iteration did not converge within " + std::to_string(opt.max_iter) +
                       " iterations (last change " + std::to_string(change) + ")");
}

template <int N, int M>
std::vector<Eigen::MatrixXcd> solve_fixed(const std::vector<Eigen::MatrixXcd>& f, const std::vector<Eigen::MatrixXcd>& b,
                                          double h, const VolterraOptions& opt, int& iterations, double& change) {
  std::vector<Eigen::Matrix<cplx, N, N>> ff(f.begin(), f.end());
  std::vector<Eigen::Matrix<cplx, N, M>> bb(b.begin(), b.end());
  auto x = volterra_sweeps<N, M>(ff, bb, h, opt, iterations, change);
  return std::vector<Eigen::MatrixXcd>(x.begin(), x.end());
}

inline std::vector<Eigen::MatrixXcd> solve_dispatch(const std::vector<Eigen::MatrixXcd>& f,
                                                    const std::vector<Eigen::MatrixXcd>& b, double h,
                                                    const VolterraOptions& opt, int& iterations, double& change) {
  const Index n = f.front().rows(), m = b.front().cols();
  if (n == 1 && m == 1) return solve_fixed<1, 1>(f, b, h, opt, iterations, change);
  if (n == 2 && m == 2) return solve_fixed<2, 2>(f, b, h, opt, iterations, change);
  if (n == 2 && m == 1) return solve_fixed<2, 1>(f, b, h, opt, iterations, change);
  if (n == 4 && m == 4) return solve_fixed<4, 4>(f, b, h, opt, iterations, change);
  if (n == 4 && m == 1) return solve_fixed<4, 1>(f, b, h, opt, iterations, change);
  throw InputError("unsupported Volterra block size");
}

inline std::size_t grid_points(const PfiSeries& pfi, const VolterraOptions& opt) {
  if (pfi.size() < 2) throw InputError("Volterra solve needs at least 2 grid points");
  const std::size_t n = opt.n_points.value_or(pfi.size());
  if (n > pfi.size())
    throw InputError("requested kernel grid (" + std::to_string(n) + " points) exceeds the PFI grid (" +
                     std::to_string(pfi.size()) + " points)");
  if (n < 2) throw InputError("Volterra solve needs at least 2 grid points");
  return n;
}

}  // namespace detail

/// Driving term i Fdot - F <L> restricted to the set (the <L> part only for
/// the full kernel).
inline std::vector<Eigen::MatrixXcd> kernel_source(const PfiSeries& pfi, const GqmeType& type,
                                                   const ElectronicLiouvillian& lv, std::size_t n) {
  const auto& s = type.subset;
  const Eigen::MatrixXcd l = detail::restrict(lv.matrix, s, s);
  std::vector<Eigen::MatrixXcd> base(n);
  for (std::size_t i = 0; i < n; ++i) {
    base[i] = kI * detail::restrict(pfi.Fdot[i], s, s);
    if (type.uses_liouvillian()) base[i] -= detail::restrict(pfi.F[i], s, s) * l;
  }
  return base;
}

inline KernelSeries solve_kernel(const PfiSeries& pfi, const GqmeType& type, const ElectronicLiouvillian& lv,
                                 const VolterraOptions& opt = {}) {
  const std::size_t n = detail::grid_points(pfi, opt);
  const auto& s = type.subset;
  std::vector<Eigen::MatrixXcd> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = detail::restrict(pfi.F[i], s, s);
  KernelSeries out;
  out.dt = pfi.dt;
  out.type = type;
  out.fingerprint = pfi.fingerprint;
  out.entries = detail::solve_dispatch(f, kernel_source(pfi, type, lv, n), pfi.dt, opt, out.iterations_used,
                                       out.residual);
  return out;
}

/// Source term Z_S + i F_{S,S} sigma_S(0) of the inhomogeneous equation.
inline std::vector<Eigen::MatrixXcd> inhom_source(const PfiSeries& pfi, const GqmeType& type,
                                                  const Eigen::Matrix2cd& sigma0, std::size_t n) {
  const auto& s = type.subset;
  Eigen::VectorXcd sig(s.size());
  for (std::size_t a = 0; a < s.size(); ++a) sig[a] = sigma0(s[a] / 2, s[a] % 2);
  std::vector<Eigen::MatrixXcd> base(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXcd z(s.size());
    for (std::size_t a = 0; a < s.size(); ++a) z[a] = pfi.Z[i][s[a]];
    base[i] = z + kI * detail::restrict(pfi.F[i], s, s) * sig;
  }
  return base;
}

/// Inhomogeneous term for a set that excludes the initial state. sigma0 is
/// the initial reduced density matrix the PFIs were generated for.
inline InhomSeries solve_inhomogeneous(const PfiSeries& pfi, const GqmeType& type, const VolterraOptions& opt = {},
                                       std::optional<Eigen::Matrix2cd> sigma0 = std::nullopt) {
  Eigen::Matrix2cd s0 = Eigen::Matrix2cd::Zero();
  if (sigma0) {
    s0 = *sigma0;
  } else {
    s0(pfi.gamma / 2, pfi.gamma % 2) = 1.0;
  }
  if (!type.needs_inhom(pfi.gamma))
    throw InputError("GQME type '" + type.name() + "' contains the initial state and has no inhomogeneous term");
  const std::size_t n = detail::grid_points(pfi, opt);
  const auto& s = type.subset;
  std::vector<Eigen::MatrixXcd> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = detail::restrict(pfi.F[i], s, s);
  InhomSeries out;
  out.dt = pfi.dt;
  out.type = type;
  out.fingerprint = pfi.fingerprint;
  auto x = detail::solve_dispatch(f, inhom_source(pfi, type, s0, n), pfi.dt, opt, out.iterations_used, out.residual);
  for (auto& v : x) out.entries.push_back(v.col(0));
  return out;
}

/// c_k = sum_{m=0}^{k} f_{k-m} x_m for all k, by one zero-padded FFT product.
inline std::vector<Eigen::MatrixXcd> causal_convolution(const std::vector<Eigen::MatrixXcd>& f,
                                                        const std::vector<Eigen::MatrixXcd>& x) {
  const std::size_t n = x.size();
  const Index rows = f.front().rows(), inner = f.front().cols(), cols = x.front().cols();
  std::size_t len = 1;
  while (len < 2 * n) len *= 2;
  Eigen::FFT<double> fft;
  auto spectrum = [&](const std::vector<Eigen::MatrixXcd>& s, Index i, Index j) {
    std::vector<cplx> in(len, cplx(0.0)), out;
    for (std::size_t t = 0; t < n; ++t) in[t] = s[t](i, j);
    fft.fwd(out, in);
    return out;
  };
  std::vector<std::vector<cplx>> fh(rows * inner), xh(inner * cols);
  for (Index i = 0; i < rows; ++i)
    for (Index p = 0; p < inner; ++p) fh[i * inner + p] = spectrum(f, i, p);
  for (Index p = 0; p < inner; ++p)
    for (Index j = 0; j < cols; ++j) xh[p * cols + j] = spectrum(x, p, j);
  std::vector<Eigen::MatrixXcd> c(n, Eigen::MatrixXcd::Zero(rows, cols));
  std::vector<cplx> prod(len), out;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      std::fill(prod.begin(), prod.end(), cplx(0.0));
      for (Index p = 0; p < inner; ++p)
        for (std::size_t w = 0; w < len; ++w) prod[w] += fh[i * inner + p][w] * xh[p * cols + j][w];
      fft.inv(out, prod);
      for (std::size_t k = 0; k < n; ++k) c[k](i, j) = out[k];
    }
  return c;
}

/// Sup-norm of X - (B + i F * X) with the trapezoidal convolution evaluated
/// in a single pass, for a candidate solution X.
inline double volterra_residual(const std::vector<Eigen::MatrixXcd>& f, const std::vector<Eigen::MatrixXcd>& base,
                                const std::vector<Eigen::MatrixXcd>& x, double h) {
  const auto full = causal_convolution(f, x);
  double res = (x[0] - base[0]).cwiseAbs().maxCoeff();
  for (std::size_t k = 1; k < x.size(); ++k) {
    const Eigen::MatrixXcd conv = full[k] - 0.5 * (f[k] * x[0] + f[0] * x[k]);
    res = std::max(res, (x[k] - base[k] - kI * h * conv).cwiseAbs().maxCoeff());
  }
  return res;
}

inline double kernel_residual(const PfiSeries& pfi, const KernelSeries& k, const ElectronicLiouvillian& lv) {
  const auto& s = k.type.subset;
  std::vector<Eigen::MatrixXcd> f(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) f[i] = detail::restrict(pfi.F[i], s, s);
  return volterra_residual(f, kernel_source(pfi, k.type, lv, k.size()), k.entries, pfi.dt);
}

inline double inhom_residual(const PfiSeries& pfi, const InhomSeries& in) {
  const auto& s = in.type.subset;
  Eigen::Matrix2cd s0 = Eigen::Matrix2cd::Zero();
  s0(pfi.gamma / 2, pfi.gamma % 2) = 1.0;
  std::vector<Eigen::MatrixXcd> f(in.size()), x(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    f[i] = detail::restrict(pfi.F[i], s, s);
    x[i] = in.entries[i];
  }
  return volterra_residual(f, inhom_source(pfi, in.type, s0, in.size()), x, pfi.dt);
}

struct ErrorCancellationReport {
  double delta = 0.0;
  double populations_change = 0.0;  // max_t |dK^pop_{DD,DD}|
  double donor_change = 0.0;        // max_t |dK^donor_{DD,DD}|
};

/// Scale F_{DD,DD} by (1 + delta) and F_{DD,AA} by (1 - delta), re-solve the
/// populations-only and donor kernels and report how much K_{DD,DD} moves.
inline ErrorCancellationReport error_cancellation_report(const PfiSeries& pfi, double delta,
                                                         const VolterraOptions& opt = {}) {
  const ElectronicLiouvillian none;
  const GqmeType pop = GqmeType::make(GqmeKind::kPopulations);
  const GqmeType donor = GqmeType::make(GqmeKind::kDonor);
  PfiSeries perturbed = pfi;
  for (auto& f : perturbed.F) {
    f(kDD, kDD) *= (1.0 + delta);
    f(kDD, kAA) *= (1.0 - delta);
  }
  const auto kp0 = solve_kernel(pfi, pop, none, opt), kp1 = solve_kernel(perturbed, pop, none, opt);
  const auto kd0 = solve_kernel(pfi, donor, none, opt), kd1 = solve_kernel(perturbed, donor, none, opt);
  ErrorCancellationReport r;
  r.delta = delta;
  for (std::size_t i = 0; i < kp0.size(); ++i) {
    r.populations_change = std::max(r.populations_change, std::abs(kp1.entries[i](0, 0) - kp0.entries[i](0, 0)));
    r.donor_change = std::max(r.donor_change, std::abs(kd1.entries[i](0, 0) - kd0.entries[i](0, 0)));
  }
  return r;
}

}  // namespace tfdgqme
