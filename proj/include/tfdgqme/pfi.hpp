#pragma once

// Propagator series and the projection-free inputs derived from it.

#include <map>
#include <string>
#include <vector>

#include "tfdgqme/model.hpp"

namespace tfdgqme {

/// Reduced electronic density matrices sigma(t_i) on a uniform grid.
struct ReducedSeries {
  double dt = 0.0;
  std::vector<Eigen::Matrix2cd> sigma;
};

/// U_{jk,lm}(t_i) on a uniform grid, (DD, DA, AD, AA) ordering.
struct PropagatorSeries {
  double dt = 0.0;
  std::vector<Eigen::Matrix4cd> entries;
  std::string fingerprint;  // model fingerprint
  std::string backend;      // "tt" or "dense"
  Index rank = 0;
  int n_fock = 0;

  std::size_t size() const { return entries.size(); }

  /// sigma(t_i) for a given initial reduced density matrix.
  Eigen::Matrix2cd apply(std::size_t i, const Eigen::Matrix2cd& sigma0) const {
    Eigen::Vector4cd v;
    for (int l = 0; l < 2; ++l)
      for (int m = 0; m < 2; ++m) v[liouville_index(l, m)] = sigma0(l, m);
    const Eigen::Vector4cd out = entries[i] * v;
    Eigen::Matrix2cd s;
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) s(j, k) = out[liouville_index(j, k)];
    return s;
  }
};

/// Pure initial electronic states used to build the four U columns.
enum class PureState { kDonor, kAcceptor, kPlus, kPlusY };

inline Eigen::Vector2cd pure_state_vector(PureState s) {
  const double r = 1.0 / std::sqrt(2.0);
  switch (s) {
    case PureState::kDonor: return {1.0, 0.0};
    case PureState::kAcceptor: return {0.0, 1.0};
    case PureState::kPlus: return {r, r};
    case PureState::kPlusY: return {cplx(r), cplx(0.0, r)};
  }
  throw InputError("unknown pure state");
}

inline const char* pure_state_name(PureState s) {
  switch (s) {
    case PureState::kDonor: return "D";
    case PureState::kAcceptor: return "A";
    case PureState::kPlus: return "+";
    case PureState::kPlusY: return "y";
  }
  return "?";
}

/// Full U series from reduced densities of pure-state propagations. The
/// coherence columns use
///   |D><A| = |+><+| + i|y><y| - (1+i)/2 (|D><D| + |A><A|)
/// and the mirror combination with i -> -i for |A><D|.
inline PropagatorSeries assemble_offdiagonal_initial(const std::map<PureState, ReducedSeries>& runs) {
  for (PureState s : {PureState::kDonor, PureState::kAcceptor, PureState::kPlus, PureState::kPlusY})
    if (!runs.count(s)) throw InputError(std::string("missing propagation for initial state ") + pure_state_name(s));
  const auto& d = runs.at(PureState::kDonor);
  const auto& a = runs.at(PureState::kAcceptor);
  const auto& p = runs.at(PureState::kPlus);
  const auto& y = runs.at(PureState::kPlusY);
  const std::size_t n = d.sigma.size();
  if (a.sigma.size() != n || p.sigma.size() != n || y.sigma.size() != n)
    throw InputError("pure-state propagations have different lengths");

  PropagatorSeries out;
  out.dt = d.dt;
  out.entries.resize(n);
  const cplx cda = 0.5 * cplx(1.0, 1.0), cad = 0.5 * cplx(1.0, -1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Matrix2cd pops = d.sigma[i] + a.sigma[i];
    const Eigen::Matrix2cd cols[4] = {
        d.sigma[i],
        p.sigma[i] + kI * y.sigma[i] - cda * pops,
        p.sigma[i] - kI * y.sigma[i] - cad * pops,
        a.sigma[i],
    };
    for (int c = 0; c < 4; ++c)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) out.entries[i](liouville_index(j, k), c) = cols[c](j, k);
  }
  return out;
}

struct PfiSeries {
  double dt = 0.0;
  std::vector<Eigen::Matrix4cd> F;
  std::vector<Eigen::Matrix4cd> Fdot;
  std::vector<Eigen::Vector4cd> Z;
  int gamma = kDD;  // Liouville index of the initial electronic state
  std::string fingerprint;

  std::size_t size() const { return F.size(); }
};

/// How the second derivative is formed at t = 0.
///  kOneSided: second-order one-sided stencil on U(0..3h).
///  kTimeReversal: central stencil with the ghost value U(-h) = conj(U(h)),
///    exact when the Hamiltonian and the initial electronic matrices are real.
enum class StartStencil { kOneSided, kTimeReversal };

struct PfiOptions {
  StartStencil start = StartStencil::kTimeReversal;
};

/// F = i dU/dt and Fdot = i d2U/dt2 by second-order finite differences, with
/// second-order one-sided stencils at the far end. If `liouvillian` is given,
/// F(0) is replaced by that analytic value. Z_jk = -i F_{jk,gamma}.
inline PfiSeries differentiate(const PropagatorSeries& u, const Eigen::Matrix4cd* liouvillian = nullptr,
                               int gamma = kDD, const PfiOptions& opt = {}) {
  const std::size_t n = u.size();
  if (n < 4) throw InputError("differentiate: need at least 4 grid points");
  if (!(u.dt > 0.0)) throw InputError("differentiate: grid spacing must be positive");
  const double h = u.dt;
  const auto& U = u.entries;
  PfiSeries out;
  out.dt = h;
  out.gamma = gamma;
  out.fingerprint = u.fingerprint;
  out.F.resize(n);
  out.Fdot.resize(n);
  out.Z.resize(n);

  for (std::size_t i = 1; i + 1 < n; ++i) {
    out.F[i] = kI * (U[i + 1] - U[i - 1]) / (2.0 * h);
    out.Fdot[i] = kI * (U[i + 1] - 2.0 * U[i] + U[i - 1]) / (h * h);
  }
  const std::size_t e = n - 1;
  if (opt.start == StartStencil::kTimeReversal) {
    out.F[0] = -U[1].imag().cast<cplx>() / h;
  } else {
    out.F[0] = kI * (-3.0 * U[0] + 4.0 * U[1] - U[2]) / (2.0 * h);
  }
  out.F[e] = kI * (3.0 * U[e] - 4.0 * U[e - 1] + U[e - 2]) / (2.0 * h);
  if (opt.start == StartStencil::kTimeReversal) {
    out.Fdot[0] = kI * (2.0 * U[1].real().cast<cplx>() - 2.0 * U[0]) / (h * h);
  } else {
    out.Fdot[0] = kI * (2.0 * U[0] - 5.0 * U[1] + 4.0 * U[2] - U[3]) / (h * h);
  }
  out.Fdot[e] = kI * (2.0 * U[e] - 5.0 * U[e - 1] + 4.0 * U[e - 2] - U[e - 3]) / (h * h);
  if (liouvillian) out.F[0] = *liouvillian;

  for (std::size_t i = 0; i < n; ++i) {
    if (!out.F[i].allFinite() || !out.Fdot[i].allFinite()) throw NumericalError("differentiate: non-finite values");
    out.Z[i] = -kI * out.F[i].col(gamma);
  }
  return out;
}

}  // namespace tfdgqme
