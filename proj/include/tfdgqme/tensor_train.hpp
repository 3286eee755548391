#pragma once

// Tensor-train vectors and operators over a chain of sites.
//
// A vector core holds X(a, s, b) with shape (r_left, n, r_right) stored at
// offset a + r_left*(s + n*b), so that both the left unfolding
// (r_left*n x r_right) and the right unfolding (r_left x n*r_right) are plain
// column-major views of the same buffer.
//
// Dense reconstructions use row-major multi-indices: the first site is the
// slowest-varying index.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "tfdgqme/common.hpp"

namespace tfdgqme {

using MatrixMap = Eigen::Map<Eigen::MatrixXcd>;
using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXcd>;
using SliceMap = Eigen::Map<Eigen::MatrixXcd, 0, Eigen::OuterStride<>>;
using ConstSliceMap = Eigen::Map<const Eigen::MatrixXcd, 0, Eigen::OuterStride<>>;

struct TtCore {
  Index rl = 1;
  Index n = 1;
  Index rr = 1;
  Eigen::VectorXcd data;

  TtCore() : data(Eigen::VectorXcd::Zero(1)) {}
  TtCore(Index rl_, Index n_, Index rr_)
      : rl(rl_), n(n_), rr(rr_), data(Eigen::VectorXcd::Zero(rl_ * n_ * rr_)) {}

  cplx& operator()(Index a, Index s, Index b) { return data[a + rl * (s + n * b)]; }
  const cplx& operator()(Index a, Index s, Index b) const { return data[a + rl * (s + n * b)]; }

  MatrixMap left() { return {data.data(), rl * n, rr}; }
  ConstMatrixMap left() const { return {data.data(), rl * n, rr}; }
  MatrixMap right() { return {data.data(), rl, n * rr}; }
  ConstMatrixMap right() const { return {data.data(), rl, n * rr}; }

  SliceMap slice(Index s) { return {data.data() + rl * s, rl, rr, Eigen::OuterStride<>(rl * n)}; }
  ConstSliceMap slice(Index s) const {
    return {data.data() + rl * s, rl, rr, Eigen::OuterStride<>(rl * n)};
  }

  /// Build a core from a left unfolding (rl*n x rr).
  static TtCore from_left(const Eigen::MatrixXcd& m, Index rl, Index n) {
    TtCore c(rl, n, m.cols());
    c.left() = m;
    return c;
  }
  /// Build a core from a right unfolding (rl x n*rr).
  static TtCore from_right(const Eigen::MatrixXcd& m, Index n, Index rr) {
    TtCore c(m.rows(), n, rr);
    c.right() = m;
    return c;
  }
};

class TensorTrainVector {
 public:
  TensorTrainVector() = default;
  explicit TensorTrainVector(std::vector<TtCore> cores) : cores_(std::move(cores)) { validate(); }

  std::size_t size() const { return cores_.size(); }
  const TtCore& core(std::size_t i) const { return cores_[i]; }
  TtCore& core(std::size_t i) { return cores_[i]; }
  const std::vector<TtCore>& cores() const { return cores_; }
  std::vector<TtCore>& cores() { return cores_; }

  std::vector<Index> mode_dims() const {
    std::vector<Index> dims;
    for (const auto& c : cores_) dims.push_back(c.n);
    return dims;
  }

  /// Bond ranks r_0..r_d (r_0 = r_d = 1).
  std::vector<Index> ranks() const {
    std::vector<Index> r;
    if (cores_.empty()) return r;
    r.push_back(cores_.front().rl);
    for (const auto& c : cores_) r.push_back(c.rr);
    return r;
  }

  cplx element(std::span<const Index> idx) const {
    if (idx.size() != cores_.size()) throw InputError("element: index length mismatch");
    Eigen::RowVectorXcd acc = Eigen::RowVectorXcd::Ones(1);
    for (std::size_t i = 0; i < cores_.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= cores_[i].n) throw InputError("element: index out of range");
      acc = acc * cores_[i].slice(idx[i]);
    }
    return acc(0);
  }

  void validate() const {
    if (cores_.empty()) throw InputError("tensor train needs at least one core");
    if (cores_.front().rl != 1 || cores_.back().rr != 1)
      throw InputError("tensor train boundary ranks must be 1");
    for (std::size_t i = 0; i + 1 < cores_.size(); ++i)
      if (cores_[i].rr != cores_[i + 1].rl) throw InputError("tensor train rank mismatch between cores");
    for (const auto& c : cores_)
      if (c.data.size() != c.rl * c.n * c.rr) throw InputError("tensor train core has wrong storage size");
  }

 private:
  std::vector<TtCore> cores_;
};

/// One nonzero element of a local operator.
struct LocalEntry {
  Index out;
  Index in;
  cplx value;
};

/// A nonzero (left bond, right bond) block of an operator core.
struct OperatorBlock {
  Index left = 0;
  Index right = 0;
  Eigen::MatrixXcd op;
  bool identity = false;
  std::vector<LocalEntry> entries;  // sparse view of op
};

struct TtOperatorCore {
  Index Rl = 1;
  Index n = 1;
  Index Rr = 1;
  std::vector<OperatorBlock> blocks;

  TtOperatorCore() = default;
  TtOperatorCore(Index Rl_, Index n_, Index Rr_) : Rl(Rl_), n(n_), Rr(Rr_) {}

  void add(Index a, Index b, const Eigen::MatrixXcd& op) {
    if (a < 0 || a >= Rl || b < 0 || b >= Rr) throw InputError("operator block index out of range");
    if (op.rows() != n || op.cols() != n) throw InputError("operator block has wrong local dimension");
    OperatorBlock blk;
    blk.left = a;
    blk.right = b;
    blk.op = op;
    blk.identity = op.isApprox(Eigen::MatrixXcd::Identity(n, n), 0.0);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i)
        if (op(i, j) != cplx(0.0)) blk.entries.push_back({i, j, op(i, j)});
    blocks.push_back(std::move(blk));
  }

  /// Dense element W(a, s_out, s_in, b).
  cplx operator()(Index a, Index s_out, Index s_in, Index b) const {
    cplx v = 0.0;
    for (const auto& blk : blocks)
      if (blk.left == a && blk.right == b) v += blk.op(s_out, s_in);
    return v;
  }
};

class TensorTrainOperator {
 public:
  TensorTrainOperator() = default;
  explicit TensorTrainOperator(std::vector<TtOperatorCore> cores) : cores_(std::move(cores)) { validate(); }

  std::size_t size() const { return cores_.size(); }
  const TtOperatorCore& core(std::size_t i) const { return cores_[i]; }
  const std::vector<TtOperatorCore>& cores() const { return cores_; }

  std::vector<Index> mode_dims() const {
    std::vector<Index> dims;
    for (const auto& c : cores_) dims.push_back(c.n);
    return dims;
  }

  void validate() const {
    if (cores_.empty()) throw InputError("tensor train operator needs at least one core");
    if (cores_.front().Rl != 1 || cores_.back().Rr != 1)
      throw InputError("tensor train operator boundary ranks must be 1");
    for (std::size_t i = 0; i + 1 < cores_.size(); ++i)
      if (cores_[i].Rr != cores_[i + 1].Rl) throw InputError("tensor train operator rank mismatch");
  }

 private:
  std::vector<TtOperatorCore> cores_;
};

namespace detail {

inline void require_same_dims(const std::vector<Index>& a, const std::vector<Index>& b, const char* what) {
  if (a != b) throw InputError(std::string(what) + ": mode dimension mismatch");
}

}  // namespace detail

/// Rank-1 tensor train from per-site vectors.
inline TensorTrainVector tt_from_product(const std::vector<Eigen::VectorXcd>& factors) {
  if (factors.empty()) throw InputError("tt_from_product: no factors");
  std::vector<TtCore> cores;
  for (const auto& f : factors) {
    if (f.size() == 0) throw InputError("tt_from_product: empty factor");
    if (f.norm() == 0.0) throw InputError("tt_from_product: zero factor");
    TtCore c(1, f.size(), 1);
    c.data = f;
    cores.push_back(std::move(c));
  }
  return TensorTrainVector(std::move(cores));
}

/// <a|b>, conjugating a.
inline cplx tt_inner(const TensorTrainVector& a, const TensorTrainVector& b) {
  detail::require_same_dims(a.mode_dims(), b.mode_dims(), "tt_inner");
  Eigen::MatrixXcd env = Eigen::MatrixXcd::Ones(1, 1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const TtCore& ca = a.core(i);
    const TtCore& cb = b.core(i);
    TtCore tmp(ca.rl, cb.n, cb.rr);
    tmp.right().noalias() = env * cb.right();
    env.noalias() = ca.left().adjoint() * tmp.left();
  }
  return env(0, 0);
}

inline double tt_norm(const TensorTrainVector& v) { return std::sqrt(std::max(0.0, tt_inner(v, v).real())); }

inline TensorTrainVector tt_scale(TensorTrainVector v, cplx s) {
  v.core(0).data *= s;
  return v;
}

/// Exact sum; ranks add on interior bonds.
inline TensorTrainVector tt_add(const TensorTrainVector& a, const TensorTrainVector& b) {
  detail::require_same_dims(a.mode_dims(), b.mode_dims(), "tt_add");
  const std::size_t d = a.size();
  if (d == 1) {
    TtCore c = a.core(0);
    c.data += b.core(0).data;
    return TensorTrainVector({c});
  }
  std::vector<TtCore> cores;
  for (std::size_t i = 0; i < d; ++i) {
    const TtCore& x = a.core(i);
    const TtCore& y = b.core(i);
    const bool first = (i == 0), last = (i + 1 == d);
    const Index rl = first ? 1 : x.rl + y.rl;
    const Index rr = last ? 1 : x.rr + y.rr;
    TtCore c(rl, x.n, rr);
    const Index yl = first ? 0 : x.rl;
    const Index yr = last ? 0 : x.rr;
    for (Index s = 0; s < x.n; ++s) {
      c.slice(s).block(0, 0, x.rl, x.rr) = x.slice(s);
      c.slice(s).block(yl, yr, y.rl, y.rr) += y.slice(s);
    }
    cores.push_back(std::move(c));
  }
  return TensorTrainVector(std::move(cores));
}

/// Exact operator action; output ranks are r_i * R_i.
inline TensorTrainVector tt_apply(const TensorTrainOperator& op, const TensorTrainVector& v) {
  detail::require_same_dims(op.mode_dims(), v.mode_dims(), "tt_apply");
  std::vector<TtCore> cores;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const TtCore& x = v.core(i);
    const TtOperatorCore& w = op.core(i);
    TtCore y(x.rl * w.Rl, x.n, x.rr * w.Rr);
    for (const auto& blk : w.blocks) {
      for (Index b = 0; b < x.rr; ++b)
        for (const auto& e : blk.entries)
          for (Index a = 0; a < x.rl; ++a)
            y(a + x.rl * blk.left, e.out, b + x.rr * blk.right) += e.value * x(a, e.in, b);
    }
    cores.push_back(std::move(y));
  }
  return TensorTrainVector(std::move(cores));
}

/// Bring cores 1..d-1 into right-orthonormal form (rows of each right unfolding
/// orthonormal); the norm ends up in core 0. Ranks may shrink to the
/// unfolding dimension.
inline void tt_right_orthonormalize(TensorTrainVector& v) {
  for (std::size_t i = v.size() - 1; i >= 1; --i) {
    TtCore& c = v.core(i);
    Eigen::MatrixXcd mt = c.right().adjoint();  // (n*rr) x rl
    const Index k = std::min(mt.rows(), mt.cols());
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(mt);
    Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(mt.rows(), k);
    Eigen::MatrixXcd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    TtCore& prev = v.core(i - 1);
    Eigen::MatrixXcd prev_left = prev.left() * r.adjoint();
    prev = TtCore::from_left(prev_left, prev.rl, prev.n);
    c = TtCore::from_right(q.adjoint(), c.n, c.rr);
  }
}

/// Bring cores 0..d-2 into left-orthonormal form; the norm ends up in the last core.
inline void tt_left_orthonormalize(TensorTrainVector& v) {
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    TtCore& c = v.core(i);
    Eigen::MatrixXcd m = c.left();
    const Index k = std::min(m.rows(), m.cols());
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(m);
    Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(m.rows(), k);
    Eigen::MatrixXcd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    TtCore& next = v.core(i + 1);
    Eigen::MatrixXcd next_right = r * next.right();
    next = TtCore::from_right(next_right, next.n, next.rr);
    c = TtCore::from_left(q, c.rl, c.n);
  }
}

/// SVD-based rounding. Each of the d-1 bonds discards singular values with
/// Frobenius tail at most tol*||v||/sqrt(d-1), so the global error is at most
/// tol*||v||. On return cores 0..d-2 are left-orthonormal.
inline TensorTrainVector tt_round(TensorTrainVector v, double tol, std::optional<Index> max_rank = std::nullopt) {
  if (tol < 0.0) throw InputError("tt_round: tol must be non-negative");
  const std::size_t d = v.size();
  if (d == 1) return v;
  tt_right_orthonormalize(v);
  const double nrm = v.core(0).data.norm();
  const double delta = tol * nrm / std::sqrt(static_cast<double>(d - 1));
  for (std::size_t i = 0; i + 1 < d; ++i) {
    TtCore& c = v.core(i);
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(c.left(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    Index k = s.size();
    double tail2 = 0.0;
    while (k > 1 && tail2 + s[k - 1] * s[k - 1] <= delta * delta) {
      tail2 += s[k - 1] * s[k - 1];
      --k;
    }
    if (max_rank) k = std::min(k, std::max<Index>(1, *max_rank));
    Eigen::MatrixXcd u = svd.matrixU().leftCols(k);
    Eigen::MatrixXcd sv = s.head(k).asDiagonal() * svd.matrixV().leftCols(k).adjoint();
    TtCore& next = v.core(i + 1);
    Eigen::MatrixXcd next_right = sv * next.right();
    next = TtCore::from_right(next_right, next.n, next.rr);
    c = TtCore::from_left(u, c.rl, c.n);
  }
  return v;
}

/// Dense reconstruction (row-major, first site slowest).
inline Eigen::VectorXcd tt_to_dense(const TensorTrainVector& v) {
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Ones(1, 1);  // rows: fused leading indices, cols: bond
  for (std::size_t i = 0; i < v.size(); ++i) {
    const TtCore& c = v.core(i);
    Eigen::MatrixXcd next(acc.rows() * c.n, c.rr);
    for (Index s = 0; s < c.n; ++s) {
      Eigen::MatrixXcd part = acc * c.slice(s);
      for (Index p = 0; p < acc.rows(); ++p) next.row(p * c.n + s) = part.row(p);
    }
    acc = std::move(next);
  }
  return acc.col(0);
}

/// Dense matrix of an operator train (row-major Kronecker convention).
inline Eigen::MatrixXcd tt_operator_to_dense(const TensorTrainOperator& op) {
  std::vector<Eigen::MatrixXcd> acc(1, Eigen::MatrixXcd::Ones(1, 1));
  for (std::size_t i = 0; i < op.size(); ++i) {
    const TtOperatorCore& w = op.core(i);
    const Index dim = acc[0].rows();
    std::vector<Eigen::MatrixXcd> next(w.Rr, Eigen::MatrixXcd::Zero(dim * w.n, dim * w.n));
    for (const auto& blk : w.blocks) {
      const Eigen::MatrixXcd& a = acc[blk.left];
      Eigen::MatrixXcd& out = next[blk.right];
      for (Index r = 0; r < dim; ++r)
        for (Index c = 0; c < dim; ++c)
          if (a(r, c) != cplx(0.0)) out.block(r * w.n, c * w.n, w.n, w.n) += a(r, c) * blk.op;
    }
    acc = std::move(next);
  }
  return acc[0];
}

}  // namespace tfdgqme
