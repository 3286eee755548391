#pragma once

// RK4 integration of the GQMEs
//   d sigma_S/dt = -i <L>_SS sigma_S - int_0^min(t, t_mem) K(tau) sigma_S(t - tau) dtau + I(t)
// on the kernel grid, and the backward memory-time convergence search.
//
// Stage handling: the convolution at stage time t_n + c h uses the stored
// grid history with the stage value at the newest point. For c = 1/2 the
// history is taken at half-grid points by linear interpolation, and the
// final half interval uses K midway between its grid neighbours. The
// inhomogeneous term is linearly interpolated at half steps and is dropped
// beyond the memory time together with the kernel.

#include <cmath>
#include <optional>

#include "tfdgqme/volterra.hpp"

namespace tfdgqme {

struct GqmeResult {
  double dt = 0.0;
  GqmeType type;
  std::vector<Eigen::VectorXcd> sigma;
  std::vector<double> sigma_z;  // empty when the set lacks a population
  double memory_time = 0.0;
  std::string fingerprint;

  std::size_t size() const { return sigma.size(); }
};

struct GqmeOptions {
  double t_final = 10.0;
  double memory_time = -1.0;  // negative: use the whole kernel
};

namespace detail {

inline int grid_index(double t, double dt) { return static_cast<int>(std::lround(t / dt)); }

inline Eigen::VectorXcd restrict_vec(const Eigen::Matrix2cd& sigma, const std::vector<int>& subset) {
  Eigen::VectorXcd v(subset.size());
  for (std::size_t a = 0; a < subset.size(); ++a) v[a] = sigma(subset[a] / 2, subset[a] % 2);
  return v;
}

inline int position(const std::vector<int>& subset, int idx) {
  for (std::size_t a = 0; a < subset.size(); ++a)
    if (subset[a] == idx) return static_cast<int>(a);
  return -1;
}

}  // namespace detail

inline std::vector<double> sigma_z_of(const GqmeType& type, const std::vector<Eigen::VectorXcd>& sigma) {
  const int d = detail::position(type.subset, kDD), a = detail::position(type.subset, kAA);
  std::vector<double> out;
  if (d < 0 && a < 0) return out;
  for (const auto& s : sigma) {
    if (d >= 0 && a >= 0) {
      out.push_back((s[d] - s[a]).real());
    } else if (d >= 0) {
      out.push_back(2.0 * s[d].real() - 1.0);
    } else {
      out.push_back(1.0 - 2.0 * s[a].real());
    }
  }
  return out;
}

/// Population difference from separate donor-only and acceptor-only runs.
inline std::vector<double> combined_sigma_z(const GqmeResult& donor, const GqmeResult& acceptor) {
  if (donor.size() != acceptor.size()) throw InputError("donor and acceptor results have different lengths");
  std::vector<double> out(donor.size());
  for (std::size_t i = 0; i < donor.size(); ++i) out[i] = (donor.sigma[i][0] - acceptor.sigma[i][0]).real();
  return out;
}

namespace detail {

template <int N>
std::vector<Eigen::VectorXcd> rk4_memory(const std::vector<Eigen::MatrixXcd>& kernel, const InhomSeries* inhom,
                                         const Eigen::MatrixXcd& lmat, const Eigen::VectorXcd& sigma0, double h,
                                         int n_steps, int mem) {
  using Vec = Eigen::Matrix<cplx, N, 1>;
  using Mat = Eigen::Matrix<cplx, N, N>;
  const Mat gen = -kI * Mat(lmat);
  std::vector<Mat> K(kernel.begin(), kernel.begin() + mem + 1);
  const Vec zero = Vec::Zero();

  auto inhom_at = [&](int twice_index) -> Vec {
    // value at t = (twice_index / 2) h
    if (!inhom) return zero;
    if (twice_index > 2 * mem) return zero;
    if (twice_index % 2 == 0) return inhom->entries[twice_index / 2];
    const int k = twice_index / 2;
    return Vec(0.5 * (inhom->entries[k] + inhom->entries[k + 1]));
  };

  // Interior sums S(k) = sum_{m=1}^{min(k,mem)-1} K_m sigma_{k-m}, built online
  // from the kernel with the m = 0 and m >= mem entries removed.
  std::vector<Mat> inner(n_steps + 1, Mat::Zero());
  for (int m = 1; m < mem && m <= n_steps; ++m) inner[m] = K[m];
  OnlineConvolution<N, 1> conv(inner, n_steps + 1);

  // Memory integral at grid time k h with newest value y, given S(k).
  auto memory_grid = [&](int k, const Vec& y, const Vec& s_int, const std::vector<Vec>& sig) -> Vec {
    const int L = std::min(k, mem);
    if (L == 0) return zero;
    return h * (0.5 * (K[0] * y) + s_int + 0.5 * (K[L] * sig[k - L]));
  };

  Vec s_now = zero;
  std::vector<Vec> sig;
  conv.run(sig, [&](std::size_t kk, const Vec& hist) -> Vec {
    if (kk == 0) return sigma0;
    const int n = static_cast<int>(kk) - 1;
    const Vec s_next = hist - inner[kk] * sig[0];
    const Vec& yn = sig[n];

    auto mem_half = [&](const Vec& y) -> Vec {
      if (mem == 0) return zero;
      if (n < mem) {
        Vec acc = zero;
        if (n >= 1) {
          acc += 0.5 * (K[0] * y);
          acc += 0.5 * (s_now + s_next - K[n] * sig[1]);
          acc += 0.25 * (K[n] * (sig[0] + sig[1]));
        }
        Vec out = h * acc;
        // final half interval [n h, (n + 1/2) h]
        const Vec s_half = n >= 1 ? Vec(0.5 * (sig[0] + sig[1])) : y;
        const Mat k_mid = 0.5 * (K[n] + K[n + 1]);
        out += 0.25 * h * (K[n] * s_half + k_mid * sig[0]);
        return out;
      }
      Vec acc = 0.5 * (K[0] * y) + 0.5 * (s_now + s_next);
      acc += 0.25 * (K[mem] * (sig[n - mem] + sig[n - mem + 1]));
      return h * acc;
    };

    const Vec k1 = gen * yn - memory_grid(n, yn, s_now, sig) + inhom_at(2 * n);
    const Vec y2 = yn + 0.5 * h * k1;
    const Vec k2 = gen * y2 - mem_half(y2) + inhom_at(2 * n + 1);
    const Vec y3 = yn + 0.5 * h * k2;
    const Vec k3 = gen * y3 - mem_half(y3) + inhom_at(2 * n + 1);
    const Vec y4 = yn + h * k3;
    const Vec k4 = gen * y4 - memory_grid(n + 1, y4, s_next, sig) + inhom_at(2 * n + 2);
    const Vec next = yn + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite()) throw NumericalError("GQME propagation produced non-finite values");
    s_now = s_next;
    return next;
  });
  return std::vector<Eigen::VectorXcd>(sig.begin(), sig.end());
}

}  // namespace detail

inline GqmeResult propagate_gqme(const KernelSeries& kernel, const InhomSeries* inhom, const ElectronicLiouvillian& lv,
                                 const Eigen::Matrix2cd& sigma0_full, const GqmeOptions& opt) {
  const GqmeType& type = kernel.type;
  const double h = kernel.dt;
  if (!(h > 0.0)) throw InputError("kernel grid spacing must be positive");
  if (kernel.size() < 2) throw InputError("kernel series is too short");
  const int n_steps = detail::grid_index(opt.t_final, h);
  const int kernel_last = static_cast<int>(kernel.size()) - 1;
  const int mem = opt.memory_time < 0.0 ? kernel_last : detail::grid_index(opt.memory_time, h);
  if (mem > kernel_last)
    throw InputError("kernel grid (" + std::to_string(kernel_last * h) + ") is shorter than the memory time (" +
                     std::to_string(mem * h) + ")");
  bool use_inhom = false;
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k)
      if (sigma0_full(j, k) != cplx(0.0) && detail::position(type.subset, liouville_index(j, k)) < 0) use_inhom = true;
  if (use_inhom && !inhom) throw InputError("GQME type '" + type.name() + "' needs an inhomogeneous term");
  if (inhom && inhom->size() < static_cast<std::size_t>(std::min(mem, n_steps) + 1))
    throw InputError("inhomogeneous term does not cover the memory time");

  const auto& sub = type.subset;
  const Eigen::MatrixXcd lmat = detail::restrict(lv.matrix, sub, sub);
  const Eigen::VectorXcd s0 = detail::restrict_vec(sigma0_full, sub);
  GqmeResult r;
  switch (sub.size()) {
    case 1: r.sigma = detail::rk4_memory<1>(kernel.entries, inhom, lmat, s0, h, n_steps, mem); break;
    case 2: r.sigma = detail::rk4_memory<2>(kernel.entries, inhom, lmat, s0, h, n_steps, mem); break;
    case 4: r.sigma = detail::rk4_memory<4>(kernel.entries, inhom, lmat, s0, h, n_steps, mem); break;
    default: throw InputError("unsupported GQME subset size");
  }
  r.dt = h;
  r.type = type;
  r.memory_time = mem * h;
  r.fingerprint = kernel.fingerprint;
  r.sigma_z = sigma_z_of(type, r.sigma);
  return r;
}

/// Largest elementwise deviation between two results on the same grid.
inline double max_deviation(const GqmeResult& a, const GqmeResult& b) {
  if (a.size() != b.size()) throw InputError("results have different lengths");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a.sigma[i] - b.sigma[i]).cwiseAbs().maxCoeff());
  return m;
}

struct MemoryTimeCandidate {
  double memory_time = 0.0;
  double deviation = 0.0;
};

struct MemoryTimeSearch {
  double memory_time = 0.0;
  GqmeResult result;
  GqmeResult reference;
  std::vector<MemoryTimeCandidate> scanned;  // in scan order, from t_mem_max down
};

/// Scan t_mem backward from t_mem_max in steps of scan_step (rounded to the
/// grid) and return the shortest memory time reached before the first
/// candidate whose dynamics deviate from the t_mem_max reference by at least
/// conv_param in some element at some time.
inline MemoryTimeSearch memory_time_search(const KernelSeries& kernel, const InhomSeries* inhom,
                                           const ElectronicLiouvillian& lv, const Eigen::Matrix2cd& sigma0,
                                           double conv_param, double t_mem_max, double t_final,
                                           double scan_step = 0.25) {
  if (!(conv_param > 0.0)) throw InputError("convergence parameter must be positive");
  if (!(scan_step > 0.0)) throw InputError("memory-time scan step must be positive");
  const double h = kernel.dt;
  const int top = detail::grid_index(t_mem_max, h);
  if (top > static_cast<int>(kernel.size()) - 1) throw InputError("kernel grid is shorter than t_mem_max");
  GqmeOptions opt;
  opt.t_final = t_final;
  opt.memory_time = top * h;
  MemoryTimeSearch out;
  out.reference = propagate_gqme(kernel, inhom, lv, sigma0, opt);
  out.result = out.reference;
  out.memory_time = top * h;
  out.scanned.push_back({top * h, 0.0});
  const int stride = std::max(1, detail::grid_index(scan_step, h));
  for (int m = top - stride; m >= 0; m -= stride) {
    opt.memory_time = m * h;
    GqmeResult trial = propagate_gqme(kernel, inhom, lv, sigma0, opt);
    const double dev = max_deviation(trial, out.reference);
    out.scanned.push_back({m * h, dev});
    if (!(dev < conv_param)) break;
    out.memory_time = m * h;
    out.result = std::move(trial);
  }
  return out;
}

/// True when the deviations never decrease while scanning away from t_mem_max.
inline bool deviations_monotone(const MemoryTimeSearch& s, double slack = 0.0) {
  for (std::size_t i = 1; i < s.scanned.size(); ++i)
    if (s.scanned[i].deviation + slack < s.scanned[i - 1].deviation) return false;
  return true;
}

}  // namespace tfdgqme
