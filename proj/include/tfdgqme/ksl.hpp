#pragma once

// Fixed-rank time stepping of i d/dt psi = H psi on the tensor-train
// manifold with the one-site projector-splitting integrator.
//
// Gauge convention: between steps the orthogonality center sits on core 0 and
// cores 1..d-1 are right-orthonormal. A left-to-right half sweep evolves each
// core forward, splits off its left-orthonormal factor and evolves the bond
// matrix backward before absorbing it into the next core; the right-to-left
// sweep mirrors this. Order 2 composes the two sweeps with dt/2 each.

#include <cstdint>
#include <functional>
#include <random>

#include "tfdgqme/krylov.hpp"
#include "tfdgqme/tensor_train.hpp"

namespace tfdgqme {

struct KslConfig {
  double dt = 1e-3;
  Index rank = 20;
  int order = 2;
  double krylov_tol = 1e-12;

  void validate() const {
    if (!(dt > 0.0)) throw InputError("KSL dt must be positive");
    if (rank < 1) throw InputError("KSL rank must be at least 1");
    if (order != 1 && order != 2) throw InputError("KSL order must be 1 or 2");
    if (!(krylov_tol > 0.0)) throw InputError("KSL Krylov tolerance must be positive");
  }
};

/// Largest admissible bond ranks min(rank, prod of dims on each side).
inline std::vector<Index> manifold_ranks(const std::vector<Index>& dims, Index rank) {
  const std::size_t d = dims.size();
  std::vector<Index> r(d + 1, 1);
  for (std::size_t i = 1; i < d; ++i) {
    double left = 1.0, right = 1.0;
    for (std::size_t k = 0; k < i; ++k) left *= static_cast<double>(dims[k]);
    for (std::size_t k = i; k < d; ++k) right *= static_cast<double>(dims[k]);
    r[i] = static_cast<Index>(std::min<double>({static_cast<double>(rank), left, right}));
  }
  return r;
}

/// Embed v into the fixed-rank manifold: each core is zero-padded to the
/// target ranks, the padding filled with noise of relative size 1e-12 from a
/// fixed seed, and the result right-orthonormalized. Ranks already above the
/// target are rounded down.
inline TensorTrainVector inflate_rank(const TensorTrainVector& v, Index rank, std::uint64_t seed = 20240611) {
  const auto dims = v.mode_dims();
  const auto target = manifold_ranks(dims, rank);
  TensorTrainVector src = v;
  const auto cur = v.ranks();
  for (std::size_t i = 0; i < cur.size(); ++i)
    if (cur[i] > target[i]) {
      src = tt_round(v, 0.0, rank);
      break;
    }
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double scale = 1e-12 * std::max(1.0, tt_norm(src));
  std::vector<TtCore> cores;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const TtCore& c = src.core(i);
    TtCore out(target[i], c.n, target[i + 1]);
    for (Index b = 0; b < out.rr; ++b)
      for (Index s = 0; s < out.n; ++s)
        for (Index a = 0; a < out.rl; ++a) {
          if (a < c.rl && b < c.rr) {
            out(a, s, b) = c(a, s, b);
          } else {
            const double re = gauss(gen), im = gauss(gen);
            out(a, s, b) = scale * cplx(re, im);
          }
        }
    cores.push_back(std::move(out));
  }
  TensorTrainVector result(std::move(cores));
  tt_right_orthonormalize(result);
  return result;
}

namespace detail {

// out(a, s', b) += sum_s op(s', s) in(a, s, b) for one operator block.
inline void mix_into(const OperatorBlock& blk, const TtCore& in, TtCore& out) {
  if (blk.identity) {
    out.data += in.data;
    return;
  }
  const Index rl = in.rl, n = in.n;
  for (Index b = 0; b < in.rr; ++b)
    for (const auto& e : blk.entries)
      out.data.segment(rl * (e.out + n * b), rl) += e.value * in.data.segment(rl * (e.in + n * b), rl);
}

}  // namespace detail

class KslPropagator {
 public:
  KslPropagator(TensorTrainOperator h, KslConfig cfg) : h_(std::move(h)), cfg_(cfg) { cfg_.validate(); }

  const KslConfig& config() const { return cfg_; }
  const KrylovStats& stats() const { return stats_; }

  /// Prepare a state for stepping: rank inflation plus gauge fixing.
  TensorTrainVector prepare(const TensorTrainVector& psi) const {
    detail::require_same_dims(h_.mode_dims(), psi.mode_dims(), "KSL prepare");
    return inflate_rank(psi, cfg_.rank);
  }

  /// One step of size cfg.dt. psi must come from prepare() or a previous step.
  TensorTrainVector step(TensorTrainVector psi) {
    check_state(psi);
    const std::size_t d = psi.size();
    left_env_.assign(d, {});
    right_env_.assign(d, {});
    left_env_[0] = {Eigen::MatrixXcd::Ones(1, 1)};
    right_env_[d - 1] = {Eigen::MatrixXcd::Ones(1, 1)};
    for (std::size_t i = d - 1; i >= 1; --i) right_env_[i - 1] = update_right(right_env_[i], psi.core(i), i);

    if (cfg_.order == 2) {
      sweep_right(psi, 0.5 * cfg_.dt, cfg_.dt);
      sweep_left(psi, 0.5 * cfg_.dt);
    } else {
      sweep_right(psi, cfg_.dt, cfg_.dt);
      // Move the center back to core 0 without further evolution.
      for (std::size_t i = d - 1; i >= 1; --i) shift_center_left(psi, i, 0.0);
    }
    for (const auto& c : psi.cores())
      if (!c.data.allFinite()) throw NumericalError("KSL step produced non-finite values");
    return psi;
  }

  /// Run n_steps steps from an unprepared initial state, calling observer(k,
  /// psi) after step k = 1..n_steps.
  TensorTrainVector propagate(const TensorTrainVector& psi0, int n_steps,
                              const std::function<void(int, const TensorTrainVector&)>& observer = {}) {
    if (n_steps < 0) throw InputError("propagate: n_steps must be non-negative");
    if (n_steps == 0) return psi0;
    TensorTrainVector psi = prepare(psi0);
    for (int k = 1; k <= n_steps; ++k) {
      psi = step(std::move(psi));
      if (observer) observer(k, psi);
    }
    return psi;
  }

 private:
  using Env = std::vector<Eigen::MatrixXcd>;

  void check_state(const TensorTrainVector& psi) const {
    detail::require_same_dims(h_.mode_dims(), psi.mode_dims(), "KSL step");
    const auto target = manifold_ranks(psi.mode_dims(), cfg_.rank);
    if (psi.ranks() != target) throw InputError("KSL step: state ranks do not match the configured manifold rank");
  }

  // Left environment after site i: L_new[b] (bra x ket).
  Env update_left(const Env& left, const TtCore& x, std::size_t i) const {
    const TtOperatorCore& w = h_.core(i);
    std::vector<TtCore> t(w.Rl);
    std::vector<bool> have(w.Rl, false);
    std::vector<TtCore> v(w.Rr, TtCore(x.rl, x.n, x.rr));
    for (const auto& blk : w.blocks) {
      if (!have[blk.left]) {
        t[blk.left] = TtCore(x.rl, x.n, x.rr);
        t[blk.left].right().noalias() = left[blk.left] * x.right();
        have[blk.left] = true;
      }
      detail::mix_into(blk, t[blk.left], v[blk.right]);
    }
    Env out(w.Rr);
    for (Index b = 0; b < w.Rr; ++b) out[b].noalias() = x.left().adjoint() * v[b].left();
    return out;
  }

  // Right environment before site i: R[a] (ket x bra).
  Env update_right(const Env& right, const TtCore& x, std::size_t i) const {
    const TtOperatorCore& w = h_.core(i);
    std::vector<TtCore> t(w.Rr);
    std::vector<bool> have(w.Rr, false);
    std::vector<TtCore> v(w.Rl, TtCore(x.rl, x.n, x.rr));
    for (const auto& blk : w.blocks) {
      if (!have[blk.right]) {
        t[blk.right] = TtCore(x.rl, x.n, x.rr);
        t[blk.right].left().noalias() = x.left() * right[blk.right];
        have[blk.right] = true;
      }
      detail::mix_into(blk, t[blk.right], v[blk.left]);
    }
    Env out(w.Rl);
    for (Index a = 0; a < w.Rl; ++a) out[a].noalias() = v[a].right() * x.right().adjoint();
    return out;
  }

  Eigen::VectorXcd apply_site(const Eigen::VectorXcd& vec, std::size_t i, Index rl, Index n, Index rr) const {
    const TtOperatorCore& w = h_.core(i);
    const Env& left = left_env_[i];
    const Env& right = right_env_[i];
    TtCore x(rl, n, rr);
    x.data = vec;
    std::vector<TtCore> t(w.Rl);
    std::vector<bool> have(w.Rl, false);
    std::vector<TtCore> v(w.Rr, TtCore(rl, n, rr));
    for (const auto& blk : w.blocks) {
      if (!have[blk.left]) {
        t[blk.left] = TtCore(rl, n, rr);
        t[blk.left].right().noalias() = left[blk.left] * x.right();
        have[blk.left] = true;
      }
      detail::mix_into(blk, t[blk.left], v[blk.right]);
    }
    TtCore y(rl, n, rr);
    for (Index b = 0; b < w.Rr; ++b) y.left().noalias() += v[b].left() * right[b];
    return y.data;
  }

  // Bond matrix between site i and i+1.
  Eigen::VectorXcd apply_bond(const Eigen::VectorXcd& vec, std::size_t i, Index r) const {
    const Env& left = left_env_[i + 1];
    const Env& right = right_env_[i];
    Eigen::Map<const Eigen::MatrixXcd> c(vec.data(), r, r);
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(r, r);
    for (std::size_t a = 0; a < left.size(); ++a) y.noalias() += left[a] * (c * right[a]);
    return Eigen::Map<Eigen::VectorXcd>(y.data(), r * r);
  }

  void evolve_site(TensorTrainVector& psi, std::size_t i, double t) {
    TtCore& c = psi.core(i);
    const Index rl = c.rl, n = c.n, rr = c.rr;
    auto op = [&](const Eigen::VectorXcd& x) { return apply_site(x, i, rl, n, rr); };
    c.data = expm_action(op, c.data, t, krylov_opts(), &stats_);
  }

  Eigen::MatrixXcd evolve_bond(const Eigen::MatrixXcd& bond, std::size_t i, double t) {
    const Index r = bond.rows();
    auto op = [&](const Eigen::VectorXcd& x) { return apply_bond(x, i, r); };
    Eigen::VectorXcd flat = Eigen::Map<const Eigen::VectorXcd>(bond.data(), r * r);
    flat = expm_action(op, flat, t, krylov_opts(), &stats_);
    return Eigen::Map<Eigen::MatrixXcd>(flat.data(), r, r);
  }

  KrylovOptions krylov_opts() const {
    KrylovOptions o;
    o.tol = cfg_.krylov_tol;
    return o;
  }

  void sweep_right(TensorTrainVector& psi, double h, double h_last) {
    const std::size_t d = psi.size();
    for (std::size_t i = 0; i + 1 < d; ++i) {
      evolve_site(psi, i, h);
      TtCore& c = psi.core(i);
      const Index rr = c.rr;
      Eigen::HouseholderQR<Eigen::MatrixXcd> qr(c.left());
      Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(c.rl * c.n, rr);
      Eigen::MatrixXcd r = qr.matrixQR().topRows(rr).triangularView<Eigen::Upper>();
      c.left() = q;
      left_env_[i + 1] = update_left(left_env_[i], c, i);
      r = evolve_bond(r, i, -h);
      TtCore& next = psi.core(i + 1);
      Eigen::MatrixXcd nr = r * next.right();
      next.right() = nr;
    }
    evolve_site(psi, d - 1, h_last);
  }

  // Split core i into (bond) x (right-orthonormal core), optionally evolve the
  // bond backward by h, and absorb it into core i-1.
  void shift_center_left(TensorTrainVector& psi, std::size_t i, double h) {
    TtCore& c = psi.core(i);
    const Index rl = c.rl;
    Eigen::MatrixXcd mt = c.right().adjoint();
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(mt);
    Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(mt.rows(), rl);
    Eigen::MatrixXcd l = qr.matrixQR().topRows(rl).triangularView<Eigen::Upper>();
    l.adjointInPlace();
    c.right() = q.adjoint();
    right_env_[i - 1] = update_right(right_env_[i], c, i);
    if (h != 0.0) l = evolve_bond(l, i - 1, -h);
    TtCore& prev = psi.core(i - 1);
    Eigen::MatrixXcd pl = prev.left() * l;
    prev.left() = pl;
  }

  void sweep_left(TensorTrainVector& psi, double h) {
    const std::size_t d = psi.size();
    for (std::size_t i = d - 1; i >= 1; --i) {
      shift_center_left(psi, i, h);
      evolve_site(psi, i - 1, h);
    }
  }

  TensorTrainOperator h_;
  KslConfig cfg_;
  std::vector<Env> left_env_;
  std::vector<Env> right_env_;
  KrylovStats stats_;
};

/// Single step from a prepared state (see KslPropagator::prepare).
inline TensorTrainVector ksl_step(const TensorTrainVector& psi, const TensorTrainOperator& h, const KslConfig& cfg) {
  KslPropagator prop(h, cfg);
  return prop.step(psi);
}

/// Convenience wrapper: rank inflation then n_steps KSL steps.
inline TensorTrainVector propagate(const TensorTrainVector& psi0, const TensorTrainOperator& h, const KslConfig& cfg,
                                   int n_steps,
                                   const std::function<void(int, const TensorTrainVector&)>& observer = {}) {
  KslPropagator prop(h, cfg);
  return prop.propagate(psi0, n_steps, observer);
}

}  // namespace tfdgqme
