#pragma once

// Thermo-field double-space problem for the spin-boson model in tensor-train
// form, and extraction of the electronic propagator series U(t).

#include <atomic>
#include <future>
#include <thread>

#include "tfdgqme/dense.hpp"
#include "tfdgqme/ksl.hpp"
#include "tfdgqme/pfi.hpp"

namespace tfdgqme {

/// Matrix product operator of the rotated double-space Hamiltonian with bond
/// dimension 3. Bond states: 0 = all terms closed, 1 = sigma_z placed and
/// waiting for a bath factor, 2 = nothing placed yet.
inline TensorTrainOperator build_theta_hamiltonian(const SpinBosonParams& p) {
  p.validate();
  const DiscretizedBath bath = discretize_bath(p);
  const auto sites = bath_site_terms(bath, p.n_fock);
  const Index nf = p.n_fock;
  Eigen::Matrix2cd sz;
  sz << 1.0, 0.0, 0.0, -1.0;

  std::vector<TtOperatorCore> cores;
  TtOperatorCore e(1, 2, 3);
  e.add(0, 0, electronic_hamiltonian(p.epsilon, p.gamma_c));
  e.add(0, 1, sz);
  e.add(0, 2, Eigen::Matrix2cd::Identity());
  cores.push_back(std::move(e));

  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(nf, nf);
  for (std::size_t s = 0; s < sites.size(); ++s) {
    const bool last = (s + 1 == sites.size());
    TtOperatorCore c(3, nf, last ? 1 : 3);
    const Eigen::MatrixXcd h = sites[s].h.cast<cplx>();
    const Eigen::MatrixXcd g = sites[s].g.cast<cplx>();
    c.add(0, 0, id);
    if (g.cwiseAbs().maxCoeff() > 0.0) c.add(1, 0, g);
    c.add(2, 0, h);
    if (!last) {
      c.add(1, 1, id);
      c.add(2, 2, id);
    }
    cores.push_back(std::move(c));
  }
  return TensorTrainOperator(std::move(cores));
}

/// phi (x) |0, 0~> for all modes, as a rank-1 train with 1 + 2 N_n cores.
inline TensorTrainVector initial_state(const SpinBosonParams& p, const Eigen::Vector2cd& phi) {
  p.validate();
  if (phi.norm() == 0.0) throw InputError("initial_state: zero electronic vector");
  std::vector<Eigen::VectorXcd> factors{phi};
  for (int k = 0; k < 2 * p.n_modes; ++k) factors.push_back(Eigen::VectorXcd::Unit(p.n_fock, 0));
  return tt_from_product(factors);
}

inline TensorTrainVector initial_state(const SpinBosonParams& p, int gamma) {
  if (gamma != kDonor && gamma != kAcceptor) throw InputError("initial_state: gamma must be D (0) or A (1)");
  return initial_state(p, Eigen::Vector2cd::Unit(gamma).eval());
}

/// sigma_jk = sum over bath indices of psi(j, rest) conj(psi(k, rest)).
inline Eigen::Matrix2cd electronic_reduced_density(const TensorTrainVector& psi) {
  Eigen::MatrixXcd env = Eigen::MatrixXcd::Ones(1, 1);
  for (std::size_t i = psi.size() - 1; i >= 1; --i) {
    const TtCore& c = psi.core(i);
    Eigen::MatrixXcd next = Eigen::MatrixXcd::Zero(c.rl, c.rl);
    for (Index s = 0; s < c.n; ++s) next.noalias() += c.slice(s) * env * c.slice(s).adjoint();
    env = std::move(next);
  }
  const TtCore& c0 = psi.core(0);
  Eigen::Matrix2cd out;
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k) out(j, k) = (c0.slice(j) * env * c0.slice(k).adjoint())(0, 0);
  return out;
}

struct TtRunOptions {
  Index rank = 20;
  int order = 2;
  double krylov_tol = 1e-12;
};

/// Reduced density series of one TT trajectory from phi (x) vacuum.
inline ReducedSeries tt_reduced_series(const SpinBosonParams& p, const Eigen::Vector2cd& phi,
                                       const TtRunOptions& opt = {}, const std::function<void(int)>& progress = {}) {
  KslConfig cfg;
  cfg.dt = p.dt;
  cfg.rank = opt.rank;
  cfg.order = opt.order;
  cfg.krylov_tol = opt.krylov_tol;
  KslPropagator prop(build_theta_hamiltonian(p), cfg);
  const int n = p.n_steps();
  const TensorTrainVector psi0 = initial_state(p, phi);
  ReducedSeries out;
  out.dt = p.dt;
  out.sigma.reserve(n);
  out.sigma.push_back(electronic_reduced_density(psi0));
  prop.propagate(psi0, n - 1, [&](int k, const TensorTrainVector& psi) {
    out.sigma.push_back(electronic_reduced_density(psi));
    if (progress) progress(k);
  });
  return out;
}

enum class Backend { kTt, kDense };

inline Backend parse_backend(const std::string& s) {
  if (s == "tt") return Backend::kTt;
  if (s == "dense") return Backend::kDense;
  throw InputError("unknown backend '" + s + "' (expected tt or dense)");
}

inline const char* backend_name(Backend b) { return b == Backend::kTt ? "tt" : "dense"; }

/// Run `tasks` with at most `jobs` running at once; results in input order.
template <class T>
std::vector<T> run_parallel(std::vector<std::function<T()>> tasks, int jobs) {
  std::vector<T> results(tasks.size());
  if (jobs <= 1 || tasks.size() <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) results[i] = tasks[i]();
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> workers;
  const int n_workers = std::min<int>(jobs, static_cast<int>(tasks.size()));
  for (int w = 0; w < n_workers; ++w)
    workers.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) results[i] = tasks[i]();
    }));
  for (auto& w : workers) w.get();
  return results;
}

/// U series for the model. The TT backend runs four pure-state trajectories
/// (D, A, +, y) and assembles the coherence columns; the dense backend uses
/// cross terms of two exact propagations.
inline PropagatorSeries compute_U_series(const SpinBosonParams& p, Backend backend, const TtRunOptions& opt = {},
                                         int jobs = 1, double dense_limit = kDefaultDenseLimit) {
  PropagatorSeries u;
  if (backend == Backend::kDense) {
    u = propagate_dense(p, dense_limit);
  } else {
    const PureState states[4] = {PureState::kDonor, PureState::kAcceptor, PureState::kPlus, PureState::kPlusY};
    std::vector<std::function<ReducedSeries()>> tasks;
    for (PureState s : states)
      tasks.push_back([&p, &opt, s] { return tt_reduced_series(p, pure_state_vector(s), opt); });
    auto runs = run_parallel(std::move(tasks), jobs);
    std::map<PureState, ReducedSeries> by_state;
    for (int i = 0; i < 4; ++i) by_state[states[i]] = std::move(runs[i]);
    u = assemble_offdiagonal_initial(by_state);
    u.rank = opt.rank;
    u.backend = "tt";
  }
  u.dt = p.dt;
  u.n_fock = p.n_fock;
  for (const auto& m : u.entries)
    if (!m.allFinite()) throw NumericalError("propagator series contains non-finite entries");
  return u;
}

}  // namespace tfdgqme
