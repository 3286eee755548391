#pragma once

// Exact reference backend: the double-space Schrodinger equation on the full
// (untruncated-rank) state vector, plus closed-form two-level limits.
//
// Vector layout is row-major over (electronic, p1, t1, p2, t2, ...), the
// electronic index slowest. Because sigma_z is diagonal in the electronic
// basis, the bath part of the Hamiltonian splits into one operator acting on
// the donor half and one on the acceptor half.

#include <functional>

#include "tfdgqme/krylov.hpp"
#include "tfdgqme/model.hpp"
#include "tfdgqme/pfi.hpp"

namespace tfdgqme {

inline constexpr double kDefaultDenseLimit = 2e6;

/// Truncated ladder operators on n levels.
inline Eigen::MatrixXd annihilation(int n) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int m = 1; m < n; ++m) a(m - 1, m) = std::sqrt(static_cast<double>(m));
  return a;
}

inline Eigen::MatrixXd number_operator(int n) {
  return Eigen::VectorXd::LinSpaced(n, 0.0, n - 1.0).asDiagonal();
}

/// One bath site of the rotated Hamiltonian. The site contributes h + sigma_z g,
/// with the coupling sign folded into g.
struct BathSiteTerms {
  Eigen::MatrixXd h;
  Eigen::MatrixXd g;
};

/// Site terms in chain order p1, t1, p2, t2, ...
inline std::vector<BathSiteTerms> bath_site_terms(const DiscretizedBath& bath, int n_fock) {
  const Eigen::MatrixXd a = annihilation(n_fock);
  const Eigen::MatrixXd x = a + a.transpose();
  const Eigen::MatrixXd num = number_operator(n_fock);
  std::vector<BathSiteTerms> out;
  for (std::size_t k = 0; k < bath.size(); ++k) {
    const double w = bath.omegas[k];
    const double lam = bath.couplings[k] / std::sqrt(2.0 * w);
    out.push_back({w * num, -lam * std::cosh(bath.thetas[k]) * x});
    out.push_back({-w * num, -lam * std::sinh(bath.thetas[k]) * x});
  }
  return out;
}

struct DenseState {
  Eigen::VectorXcd vector;
  std::vector<Index> dims;
};

class DenseTfdSystem {
 public:
  explicit DenseTfdSystem(const SpinBosonParams& p, double limit = kDefaultDenseLimit)
      : params_(p), bath_(discretize_bath(p)) {
    p.validate();
    const double total = 2.0 * std::pow(static_cast<double>(p.n_fock), 2.0 * p.n_modes);
    if (total > limit)
      throw InputError("dense backend: state dimension " + std::to_string(static_cast<long long>(total)) +
                       " exceeds the dense limit " + std::to_string(static_cast<long long>(limit)));
    half_ = static_cast<Index>(std::llround(total / 2.0));
    for (const auto& t : bath_site_terms(bath_, p.n_fock)) {
      donor_ops_.push_back((t.h + t.g).cast<cplx>());
      acceptor_ops_.push_back((t.h - t.g).cast<cplx>());
    }
    dims_.push_back(2);
    for (std::size_t i = 0; i < donor_ops_.size(); ++i) dims_.push_back(p.n_fock);
  }

  Index dimension() const { return 2 * half_; }
  const std::vector<Index>& dims() const { return dims_; }
  const DiscretizedBath& bath() const { return bath_; }

  /// |phi> (x) |0, 0~, ...>.
  DenseState initial_state(const Eigen::Vector2cd& phi) const {
    DenseState s{Eigen::VectorXcd::Zero(dimension()), dims_};
    s.vector[0] = phi[0];
    s.vector[half_] = phi[1];
    return s;
  }

  Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const {
    Eigen::VectorXcd out(v.size());
    apply_bath(v.head(half_), donor_ops_, out.head(half_));
    apply_bath(v.tail(half_), acceptor_ops_, out.tail(half_));
    const double eps = params_.epsilon, gam = params_.gamma_c;
    out.head(half_) += eps * v.head(half_) + gam * v.tail(half_);
    out.tail(half_) += gam * v.head(half_) - eps * v.tail(half_);
    return out;
  }

  /// Full Hamiltonian as a dense matrix (small systems only).
  Eigen::MatrixXcd matrix() const {
    const Index n = dimension();
    Eigen::MatrixXcd m(n, n);
    for (Index j = 0; j < n; ++j) m.col(j) = apply(Eigen::VectorXcd::Unit(n, j));
    return m;
  }

  void step(DenseState& s, double dt, const KrylovOptions& opt = {}) const {
    auto op = [this](const Eigen::VectorXcd& x) { return apply(x); };
    s.vector = expm_action(op, s.vector, dt, opt);
  }

  /// Reduced density of <j| ... |k> coupling of two states: sum over the bath
  /// of a(j, rest) conj(b(k, rest)).
  Eigen::Matrix2cd cross_density(const DenseState& a, const DenseState& b) const {
    Eigen::Matrix2cd s;
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) s(j, k) = b.vector.segment(k * half_, half_).dot(a.vector.segment(j * half_, half_));
    return s;
  }

 private:
  // out = sum over sites of the local operators acting on v (bath part only).
  template <class Out>
  void apply_bath(const Eigen::Ref<const Eigen::VectorXcd>& v, const std::vector<Eigen::MatrixXcd>& ops,
                  Out&& out) const {
    out.setZero();
    Index inner = half_;
    for (std::size_t site = 0; site < ops.size(); ++site) {
      const Index n = ops[site].rows();
      inner /= n;
      const Index outer = half_ / (inner * n);
      // Row-major block (outer, n, inner) viewed as outer column-major
      // matrices of shape (inner x n).
      const Eigen::MatrixXcd opt = ops[site].transpose();
      for (Index p = 0; p < outer; ++p) {
        Eigen::Map<const Eigen::MatrixXcd> src(v.data() + p * n * inner, inner, n);
        Eigen::Map<Eigen::MatrixXcd> dst(out.data() + p * n * inner, inner, n);
        dst.noalias() += src * opt;
      }
    }
  }

  SpinBosonParams params_;
  DiscretizedBath bath_;
  Index half_ = 1;
  std::vector<Eigen::MatrixXcd> donor_ops_;
  std::vector<Eigen::MatrixXcd> acceptor_ops_;
  std::vector<Index> dims_;
};

/// Dense propagation from |D> and |A>; the full U follows from cross terms,
/// U_{jk,lm}(t) = sum_rest psi_l(j, rest) conj(psi_m(k, rest)).
inline PropagatorSeries propagate_dense(const SpinBosonParams& p, double limit = kDefaultDenseLimit,
                                        const std::function<void(int)>& progress = {}) {
  DenseTfdSystem sys(p, limit);
  const int n = p.n_steps();
  DenseState sd = sys.initial_state({1.0, 0.0});
  DenseState sa = sys.initial_state({0.0, 1.0});
  PropagatorSeries out;
  out.dt = p.dt;
  out.backend = "dense";
  out.n_fock = p.n_fock;
  out.entries.resize(n);
  auto record = [&](int i) {
    const DenseState* s[2] = {&sd, &sa};
    for (int l = 0; l < 2; ++l)
      for (int m = 0; m < 2; ++m) {
        const Eigen::Matrix2cd c = sys.cross_density(*s[l], *s[m]);
        for (int j = 0; j < 2; ++j)
          for (int k = 0; k < 2; ++k) out.entries[i](liouville_index(j, k), liouville_index(l, m)) = c(j, k);
      }
  };
  record(0);
  for (int i = 1; i < n; ++i) {
    sys.step(sd, p.dt);
    sys.step(sa, p.dt);
    record(i);
    if (progress) progress(i);
  }
  return out;
}

/// Reduced density series for an arbitrary (possibly non-Hermitian) initial
/// electronic matrix sigma0, using linearity over the basis propagations.
inline ReducedSeries dense_reduced_series(const SpinBosonParams& p, const Eigen::Matrix2cd& sigma0,
                                          double limit = kDefaultDenseLimit) {
  const PropagatorSeries u = propagate_dense(p, limit);
  ReducedSeries out;
  out.dt = p.dt;
  for (std::size_t i = 0; i < u.size(); ++i) out.sigma.push_back(u.apply(i, sigma0));
  return out;
}

/// sigma_z(t) of the isolated two-level system started in |D>.
inline std::vector<double> rabi_series(double epsilon, double gamma_c, double dt, int n_steps) {
  const double w2 = epsilon * epsilon + gamma_c * gamma_c;
  if (!(w2 > 0.0)) return std::vector<double>(n_steps, 1.0);
  const double w = std::sqrt(w2);
  std::vector<double> out(n_steps);
  for (int i = 0; i < n_steps; ++i) {
    const double t = i * dt;
    out[i] = (epsilon * epsilon + gamma_c * gamma_c * std::cos(2.0 * w * t)) / w2;
  }
  return out;
}

/// Exact two-level propagator U(t) = exp(-i <L> t) of the isolated system.
inline Eigen::Matrix4cd two_level_propagator(double epsilon, double gamma_c, double t) {
  const Eigen::Matrix2cd h = electronic_hamiltonian(epsilon, gamma_c);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(h);
  const Eigen::Vector2cd ph = (es.eigenvalues().cast<cplx>() * cplx(0.0, -t)).array().exp().matrix();
  const Eigen::Matrix2cd u = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
  Eigen::Matrix4cd out;
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k)
      for (int l = 0; l < 2; ++l)
        for (int m = 0; m < 2; ++m) out(liouville_index(j, k), liouville_index(l, m)) = u(j, l) * std::conj(u(k, m));
  return out;
}

/// Independent-boson limit (Gamma = 0) started from |+><+|: populations stay
/// at 1/2 and the coherence decays. Computed by dense propagation.
inline ReducedSeries dephasing_reference(const SpinBosonParams& p, double limit = kDefaultDenseLimit) {
  if (p.gamma_c != 0.0) throw InputError("dephasing_reference requires gamma = 0");
  const Eigen::Vector2cd plus = pure_state_vector(PureState::kPlus);
  return dense_reduced_series(p, plus * plus.adjoint(), limit);
}

}  // namespace tfdgqme
