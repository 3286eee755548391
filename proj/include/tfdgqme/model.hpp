#pragma once

// Spin-boson model: parameters, Ohmic bath discretization, thermal
// Bogoliubov angles and the bath-averaged electronic Liouvillian.

#include <cmath>
#include <vector>

#include "tfdgqme/common.hpp"

namespace tfdgqme {

/// Physical and numerical parameters of a spin-boson model instance.
/// Energies in units of the electronic coupling, times in its inverse, hbar = 1.
struct SpinBosonParams {
  double epsilon = 1.0;    // energy bias (2*epsilon is the D-A gap)
  double gamma_c = 1.0;    // electronic coupling
  double beta = 5.0;       // inverse temperature
  double xi = 0.1;         // Kondo parameter
  double omega_c = 1.0;    // cutoff frequency
  double omega_max = 5.0;  // sampling cutoff
  int n_modes = 60;
  double dt = 1.50083e-3;
  double t_final = 15.0;
  int n_fock = 10;  // harmonic levels kept per physical and per tilde mode

  void validate() const {
    if (!(beta > 0.0)) throw InputError("beta must be positive");
    if (!(xi >= 0.0)) throw InputError("xi must be non-negative");
    if (!(omega_c > 0.0)) throw InputError("omega_c must be positive");
    if (!(omega_max > 0.0)) throw InputError("omega_max must be positive");
    if (n_modes < 1) throw InputError("n_modes must be at least 1");
    if (!(dt > 0.0)) throw InputError("dt must be positive");
    if (!(t_final >= 0.0)) throw InputError("t_final must be non-negative");
    if (n_fock < 2) throw InputError("n_fock must be at least 2");
  }

  /// Number of grid points t_i = i*dt covering [0, t_final].
  int n_steps() const { return static_cast<int>(std::lround(t_final / dt)) + 1; }
};

struct DiscretizedBath {
  std::vector<double> omegas;
  std::vector<double> couplings;
  std::vector<double> thetas;

  std::size_t size() const { return omegas.size(); }
};

/// Ohmic spectral density J(w) = (pi/2) xi w exp(-w/wc).
inline double ohmic_spectral_density(double omega, double xi, double omega_c) {
  return 0.5 * M_PI * xi * omega * std::exp(-omega / omega_c);
}

/// theta_k = artanh(exp(-beta w_k / 2)).
inline std::vector<double> bogoliubov_angles(const std::vector<double>& omegas, double beta) {
  if (!(beta > 0.0)) throw InputError("bogoliubov_angles: beta must be positive");
  std::vector<double> thetas;
  thetas.reserve(omegas.size());
  for (double w : omegas) {
    if (!(w > 0.0)) throw InputError("bogoliubov_angles: mode frequencies must be positive");
    thetas.push_back(std::atanh(std::exp(-0.5 * beta * w)));
  }
  return thetas;
}

/// Density-of-frequencies discretization: mode density proportional to
/// exp(-w/wc) on (0, w_max], frequencies at the (k - 1/2)/N quantiles of its
/// cumulative distribution and c_k^2 = (2/pi) J(w_k) w_k / rho(w_k).
inline DiscretizedBath discretize_bath(const SpinBosonParams& p) {
  if (p.n_modes < 1) throw InputError("discretize_bath: n_modes must be at least 1");
  if (!(p.omega_max > 0.0)) throw InputError("discretize_bath: omega_max must be positive");
  p.validate();

  const double n = static_cast<double>(p.n_modes);
  const double mass = -std::expm1(-p.omega_max / p.omega_c);  // 1 - exp(-w_max/wc)
  DiscretizedBath bath;
  bath.omegas.reserve(p.n_modes);
  bath.couplings.reserve(p.n_modes);
  for (int k = 1; k <= p.n_modes; ++k) {
    const double q = (k - 0.5) / n;
    const double w = -p.omega_c * std::log1p(-q * mass);
    bath.omegas.push_back(w);
    bath.couplings.push_back(w * std::sqrt(p.xi * p.omega_c * mass / n));
  }
  bath.thetas = bogoliubov_angles(bath.omegas, p.beta);
  return bath;
}

/// Electronic Hamiltonian eps*sigma_z + Gamma*sigma_x in the (D, A) basis.
inline Eigen::Matrix2cd electronic_hamiltonian(double epsilon, double gamma_c) {
  Eigen::Matrix2cd h;
  h << epsilon, gamma_c, gamma_c, -epsilon;
  return h;
}

/// Commutator superoperator [H, .] of a 2x2 matrix in Liouville ordering:
/// L_{jk,lm} = H_{jl} delta_{mk} - delta_{jl} H_{mk}.
inline Eigen::Matrix4cd commutator_superoperator(const Eigen::Matrix2cd& h) {
  Eigen::Matrix4cd out = Eigen::Matrix4cd::Zero();
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k)
      for (int l = 0; l < 2; ++l)
        for (int m = 0; m < 2; ++m) {
          cplx v = 0.0;
          if (m == k) v += h(j, l);
          if (j == l) v -= h(m, k);
          out(liouville_index(j, k), liouville_index(l, m)) = v;
        }
  return out;
}

struct ElectronicLiouvillian {
  Eigen::Matrix4cd matrix = Eigen::Matrix4cd::Zero();
};

/// <L> averaged over the initial free-bath thermal state. The bath-linear
/// coupling averages to zero, so only the electronic commutator survives.
inline ElectronicLiouvillian projected_liouvillian(const SpinBosonParams& p) {
  return {commutator_superoperator(electronic_hamiltonian(p.epsilon, p.gamma_c))};
}

}  // namespace tfdgqme
