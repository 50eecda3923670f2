#pragma once

#include "cpfs3d/tape.hpp"

#include <memory>
#include <vector>

namespace cpfs3d {

namespace detail {
inline void require(bool cond, const char* what) {
  if (!cond) throw NumericError(std::string("tape op: ") + what);
}
}  // namespace detail

// ---- arithmetic -----------------------------------------------------------

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  detail::require(a.value().cols() == b.value().rows(), "matmul inner dims");
  Tape<S>& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const bool ng = t.needs_grad(ia) || t.needs_grad(ib);
  const int id = t.add(t.value(ia) * t.value(ib), ng);
  if (ng)
    t.set_backward(id, [id, ia, ib](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      if (tp.needs_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
      if (tp.needs_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
    });
  return {&t, id};
}

// A * B^T
template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  detail::require(a.value().cols() == b.value().cols(), "matmul_nt inner dims");
  Tape<S>& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const bool ng = t.needs_grad(ia) || t.needs_grad(ib);
  const int id = t.add(t.value(ia) * t.value(ib).transpose(), ng);
  if (ng)
    t.set_backward(id, [id, ia, ib](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      if (tp.needs_grad(ia)) tp.accumulate(ia, g * tp.value(ib));
      if (tp.needs_grad(ib)) tp.accumulate(ib, g.transpose() * tp.value(ia));
    });
  return {&t, id};
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::require(a.value().rows() == b.value().rows() && a.value().cols() == b.value().cols(),
                  "add shape");
  Tape<S>& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const bool ng = t.needs_grad(ia) || t.needs_grad(ib);
  const int id = t.add(t.value(ia) + t.value(ib), ng);
  if (ng)
    t.set_backward(id, [id, ia, ib](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      tp.accumulate(ia, g);
      tp.accumulate(ib, g);
    });
  return {&t, id};
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::require(a.value().rows() == b.value().rows() && a.value().cols() == b.value().cols(),
                  "sub shape");
  Tape<S>& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const bool ng = t.needs_grad(ia) || t.needs_grad(ib);
  const int id = t.add(t.value(ia) - t.value(ib), ng);
  if (ng)
    t.set_backward(id, [id, ia, ib](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      tp.accumulate(ia, g);
      if (tp.needs_grad(ib)) tp.accumulate(ib, (-g).eval());
    });
  return {&t, id};
}

// Broadcast a 1 x d bias over every row.
template <typename S>
Var<S> add_rowvec(Var<S> a, Var<S> bias) {
  detail::require(bias.value().rows() == 1 && bias.value().cols() == a.value().cols(),
                  "add_rowvec bias shape");
  Tape<S>& t = *a.tape;
  const int ia = a.id, ib = bias.id;
  const bool ng = t.needs_grad(ia) || t.needs_grad(ib);
  MatX<S> v = t.value(ia);
  v.rowwise() += t.value(ib).row(0);
  const int id = t.add(std::move(v), ng);
  if (ng)
    t.set_backward(id, [id, ia, ib](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      tp.accumulate(ia, g);
      if (tp.needs_grad(ib)) tp.accumulate(ib, g.colwise().sum());
    });
  return {&t, id};
}

template <typename S>
Var<S> hadamard(Var<S> a, Var<S> b) {
  detail::require(a.value().rows() == b.value().rows() && a.value().cols() == b.value().cols(),
                  "hadamard shape");
  Tape<S>& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const bool ng = t.needs_grad(ia) || t.needs_grad(ib);
  const int id = t.add(t.value(ia).cwiseProduct(t.value(ib)), ng);
  if (ng)
    t.set_backward(id, [id, ia, ib](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      if (tp.needs_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
      if (tp.needs_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
    });
  return {&t, id};
}

template <typename S>
Var<S> scale(Var<S> a, S s) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  const int id = t.add(t.value(ia) * s, ng);
  if (ng)
    t.set_backward(id, [id, ia, s](Tape<S>& tp) { tp.accumulate(ia, tp.grad(id) * s); });
  return {&t, id};
}

// a + s * b; the workhorse for weighted loss sums.
template <typename S>
Var<S> add_scaled(Var<S> a, Var<S> b, S s) {
  return add(a, scale(b, s));
}

// ---- elementwise nonlinearities -------------------------------------------

template <typename S>
Var<S> relu(Var<S> a) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  const int id = t.add(t.value(ia).cwiseMax(S(0)), ng);
  if (ng)
    t.set_backward(id, [id, ia](Tape<S>& tp) {
      const MatX<S> mask = (tp.value(ia).array() > S(0)).template cast<S>();
      tp.accumulate(ia, tp.grad(id).cwiseProduct(mask));
    });
  return {&t, id};
}

template <typename S>
Var<S> tanh_op(Var<S> a) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  const int id = t.add(t.value(ia).array().tanh().matrix(), ng);
  if (ng)
    t.set_backward(id, [id, ia](Tape<S>& tp) {
      const auto& y = tp.value(id);
      tp.accumulate(ia, tp.grad(id).cwiseProduct((MatX<S>::Ones(y.rows(), y.cols()) - y.cwiseProduct(y))));
    });
  return {&t, id};
}

template <typename S>
Var<S> exp_op(Var<S> a) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  const int id = t.add(t.value(ia).array().exp().matrix(), ng);
  if (ng)
    t.set_backward(id, [id, ia](Tape<S>& tp) {
      tp.accumulate(ia, tp.grad(id).cwiseProduct(tp.value(id)));
    });
  return {&t, id};
}

template <typename S>
Var<S> square(Var<S> a) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  const int id = t.add(t.value(ia).cwiseProduct(t.value(ia)), ng);
  if (ng)
    t.set_backward(id, [id, ia](Tape<S>& tp) {
      tp.accumulate(ia, S(2) * tp.grad(id).cwiseProduct(tp.value(ia)));
    });
  return {&t, id};
}

// ---- row reductions / shapes ----------------------------------------------

template <typename S>
Var<S> gather_rows(Var<S> a, const std::vector<int>& idx) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  MatX<S> v(static_cast<Eigen::Index>(idx.size()), t.value(ia).cols());
  for (size_t i = 0; i < idx.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = t.value(ia).row(idx[i]);
  const int id = t.add(std::move(v), ng);
  if (ng) {
    auto keep = std::make_shared<std::vector<int>>(idx);
    t.set_backward(id, [id, ia, keep](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      MatX<S> acc = MatX<S>::Zero(tp.value(ia).rows(), tp.value(ia).cols());
      for (size_t i = 0; i < keep->size(); ++i)
        acc.row((*keep)[i]) += g.row(static_cast<Eigen::Index>(i));
      tp.accumulate(ia, acc);
    });
  }
  return {&t, id};
}

template <typename S>
Var<S> concat_cols(Var<S> a, Var<S> b) {
  detail::require(a.value().rows() == b.value().rows(), "concat_cols rows");
  Tape<S>& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const bool ng = t.needs_grad(ia) || t.needs_grad(ib);
  MatX<S> v(t.value(ia).rows(), t.value(ia).cols() + t.value(ib).cols());
  v << t.value(ia), t.value(ib);
  const int id = t.add(std::move(v), ng);
  if (ng)
    t.set_backward(id, [id, ia, ib](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      const Eigen::Index ca = tp.value(ia).cols();
      if (tp.needs_grad(ia)) tp.accumulate(ia, g.leftCols(ca));
      if (tp.needs_grad(ib)) tp.accumulate(ib, g.rightCols(g.cols() - ca));
    });
  return {&t, id};
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  detail::require(!parts.empty(), "concat_rows empty");
  Tape<S>& t = *parts[0].tape;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].value().cols();
  bool ng = false;
  for (const auto& p : parts) {
    detail::require(p.value().cols() == cols, "concat_rows cols");
    rows += p.value().rows();
    ng = ng || t.needs_grad(p.id);
  }
  MatX<S> v(rows, cols);
  Eigen::Index r = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const auto& p : parts) {
    v.middleRows(r, p.value().rows()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(r);
    r += p.value().rows();
  }
  const int id = t.add(std::move(v), ng);
  if (ng) {
    auto keep_ids = std::make_shared<std::vector<int>>(std::move(ids));
    auto keep_off = std::make_shared<std::vector<Eigen::Index>>(std::move(offsets));
    t.set_backward(id, [id, keep_ids, keep_off](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      for (size_t i = 0; i < keep_ids->size(); ++i) {
        const int pid = (*keep_ids)[i];
        if (!tp.needs_grad(pid)) continue;
        tp.accumulate(pid, g.middleRows((*keep_off)[i], tp.value(pid).rows()));
      }
    });
  }
  return {&t, id};
}

template <typename S>
Var<S> slice_cols(Var<S> a, int from, int n) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  const int id = t.add(t.value(ia).middleCols(from, n), ng);
  if (ng)
    t.set_backward(id, [id, ia, from, n](Tape<S>& tp) {
      MatX<S> acc = MatX<S>::Zero(tp.value(ia).rows(), tp.value(ia).cols());
      acc.middleCols(from, n) = tp.grad(id);
      tp.accumulate(ia, acc);
    });
  return {&t, id};
}

// R x d -> 1 x d column means.
template <typename S>
Var<S> mean_rows(Var<S> a) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  const Eigen::Index r = t.value(ia).rows();
  detail::require(r > 0, "mean_rows on empty matrix");
  const int id = t.add(t.value(ia).colwise().mean(), ng);
  if (ng)
    t.set_backward(id, [id, ia, r](Tape<S>& tp) {
      tp.accumulate(ia, (tp.grad(id) / S(r)).replicate(r, 1));
    });
  return {&t, id};
}

// R x d -> R x 1 row sums.
template <typename S>
Var<S> rows_sum(Var<S> a) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  const int id = t.add(t.value(ia).rowwise().sum(), ng);
  if (ng)
    t.set_backward(id, [id, ia](Tape<S>& tp) {
      tp.accumulate(ia, tp.grad(id).replicate(1, tp.value(ia).cols()));
    });
  return {&t, id};
}

template <typename S>
Var<S> mean_all(Var<S> a) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  const Eigen::Index n = t.value(ia).size();
  detail::require(n > 0, "mean_all on empty matrix");
  MatX<S> v(1, 1);
  v(0, 0) = t.value(ia).mean();
  const int id = t.add(std::move(v), ng);
  if (ng)
    t.set_backward(id, [id, ia, n](Tape<S>& tp) {
      const S g = tp.grad(id)(0, 0) / S(n);
      tp.accumulate(ia, MatX<S>::Constant(tp.value(ia).rows(), tp.value(ia).cols(), g));
    });
  return {&t, id};
}

template <typename S>
Var<S> sum_all(Var<S> a) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  MatX<S> v(1, 1);
  v(0, 0) = t.value(ia).sum();
  const int id = t.add(std::move(v), ng);
  if (ng)
    t.set_backward(id, [id, ia](Tape<S>& tp) {
      const S g = tp.grad(id)(0, 0);
      tp.accumulate(ia, MatX<S>::Constant(tp.value(ia).rows(), tp.value(ia).cols(), g));
    });
  return {&t, id};
}

// Per-group arithmetic mean of member rows; every group must be non-empty.
template <typename S>
Var<S> group_mean_rows(Var<S> a, const std::vector<std::vector<int>>& groups) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  MatX<S> v(static_cast<Eigen::Index>(groups.size()), t.value(ia).cols());
  for (size_t g = 0; g < groups.size(); ++g) {
    detail::require(!groups[g].empty(), "group_mean_rows empty group");
    MatX<S> acc = MatX<S>::Zero(1, t.value(ia).cols());
    for (int m : groups[g]) acc += t.value(ia).row(m);
    v.row(static_cast<Eigen::Index>(g)) = acc / S(groups[g].size());
  }
  const int id = t.add(std::move(v), ng);
  if (ng) {
    auto keep = std::make_shared<std::vector<std::vector<int>>>(groups);
    t.set_backward(id, [id, ia, keep](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      MatX<S> acc = MatX<S>::Zero(tp.value(ia).rows(), tp.value(ia).cols());
      for (size_t gi = 0; gi < keep->size(); ++gi) {
        const auto& members = (*keep)[gi];
        const S inv = S(1) / S(members.size());
        for (int m : members) acc.row(m) += g.row(static_cast<Eigen::Index>(gi)) * inv;
      }
      tp.accumulate(ia, acc);
    });
  }
  return {&t, id};
}

// Per-group, per-column max over member rows. Ties break toward the
// earliest member in group order, which keeps backward deterministic.
template <typename S>
Var<S> group_max_rows(Var<S> a, const std::vector<std::vector<int>>& groups) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  const Eigen::Index cols = t.value(ia).cols();
  MatX<S> v(static_cast<Eigen::Index>(groups.size()), cols);
  auto argmax = std::make_shared<std::vector<std::vector<int>>>(
      groups.size(), std::vector<int>(static_cast<size_t>(cols)));
  for (size_t g = 0; g < groups.size(); ++g) {
    detail::require(!groups[g].empty(), "group_max_rows empty group");
    for (Eigen::Index c = 0; c < cols; ++c) {
      int best = groups[g][0];
      S bv = t.value(ia)(best, c);
      for (size_t mi = 1; mi < groups[g].size(); ++mi) {
        const int m = groups[g][mi];
        const S mv = t.value(ia)(m, c);
        if (mv > bv) {
          bv = mv;
          best = m;
        }
      }
      v(static_cast<Eigen::Index>(g), c) = bv;
      (*argmax)[g][static_cast<size_t>(c)] = best;
    }
  }
  const int id = t.add(std::move(v), ng);
  if (ng)
    t.set_backward(id, [id, ia, argmax](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      MatX<S> acc = MatX<S>::Zero(tp.value(ia).rows(), tp.value(ia).cols());
      for (size_t gi = 0; gi < argmax->size(); ++gi)
        for (Eigen::Index c = 0; c < g.cols(); ++c)
          acc((*argmax)[gi][static_cast<size_t>(c)], c) += g(static_cast<Eigen::Index>(gi), c);
      tp.accumulate(ia, acc);
    });
  return {&t, id};
}

// ---- normalization / softmax ----------------------------------------------

template <typename S>
Var<S> softmax_rows(Var<S> a) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  MatX<S> v = t.value(ia);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const S m = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - m).exp();
    v.row(i) /= v.row(i).sum();
  }
  const int id = t.add(std::move(v), ng);
  if (ng)
    t.set_backward(id, [id, ia](Tape<S>& tp) {
      const auto& y = tp.value(id);
      const auto& g = tp.grad(id);
      const VecX<S> dot = (g.cwiseProduct(y)).rowwise().sum();
      MatX<S> acc = g;
      acc.colwise() -= dot;
      tp.accumulate(ia, acc.cwiseProduct(y));
    });
  return {&t, id};
}

// Rows scaled to unit L2 norm. Rows with norm below eps become zero rows
// and propagate no gradient.
template <typename S>
Var<S> l2_normalize_rows(Var<S> a, S eps = S(1e-12)) {
  Tape<S>& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  const Eigen::Index r = t.value(ia).rows();
  MatX<S> v(r, t.value(ia).cols());
  auto norms = std::make_shared<VecX<S>>(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const S n = t.value(ia).row(i).norm();
    (*norms)(i) = n;
    if (n < eps)
      v.row(i).setZero();
    else
      v.row(i) = t.value(ia).row(i) / n;
  }
  const int id = t.add(std::move(v), ng);
  if (ng)
    t.set_backward(id, [id, ia, norms, eps](Tape<S>& tp) {
      const auto& y = tp.value(id);
      const auto& g = tp.grad(id);
      MatX<S> acc(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const S n = (*norms)(i);
        if (n < eps) {
          acc.row(i).setZero();
          continue;
        }
        const S d = g.row(i).dot(y.row(i));
        acc.row(i) = (g.row(i) - d * y.row(i)) / n;
      }
      tp.accumulate(ia, acc);
    });
  return {&t, id};
}

// Per-column statistics over the rows of the current input (the "batch" is
// whatever cloud is being encoded). Same behaviour in training and
// inference, so encodes stay pure functions of their input.
template <typename S>
Var<S> batchnorm_cols(Var<S> x, Var<S> gamma, Var<S> beta, S eps = S(1e-5)) {
  Tape<S>& t = *x.tape;
  detail::require(gamma.value().rows() == 1 && gamma.value().cols() == x.value().cols(),
                  "batchnorm gamma shape");
  detail::require(beta.value().rows() == 1 && beta.value().cols() == x.value().cols(),
                  "batchnorm beta shape");
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  const bool ng = t.needs_grad(ix) || t.needs_grad(ig) || t.needs_grad(ib);
  const Eigen::Index r = t.value(ix).rows();
  detail::require(r > 0, "batchnorm on empty matrix");

  const MatX<S>& xv = t.value(ix);
  Eigen::Matrix<S, 1, Eigen::Dynamic> mu = xv.colwise().mean();
  MatX<S> centered = xv.rowwise() - mu;
  Eigen::Matrix<S, 1, Eigen::Dynamic> var = centered.array().square().colwise().mean();
  auto invstd = std::make_shared<Eigen::Matrix<S, 1, Eigen::Dynamic>>(
      (var.array() + eps).rsqrt().matrix());
  auto xhat = std::make_shared<MatX<S>>(centered.array().rowwise() * invstd->row(0).array());
  MatX<S> v = (xhat->array().rowwise() * t.value(ig).row(0).array()).matrix();
  v.rowwise() += t.value(ib).row(0);

  const int id = t.add(std::move(v), ng);
  if (ng)
    t.set_backward(id, [id, ix, ig, ib, xhat, invstd, r](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      if (tp.needs_grad(ig)) tp.accumulate(ig, (g.cwiseProduct(*xhat)).colwise().sum());
      if (tp.needs_grad(ib)) tp.accumulate(ib, g.colwise().sum());
      if (tp.needs_grad(ix)) {
        const MatX<S> dxhat = g.array().rowwise() * tp.value(ig).row(0).array();
        const Eigen::Matrix<S, 1, Eigen::Dynamic> sum_d = dxhat.colwise().sum();
        const Eigen::Matrix<S, 1, Eigen::Dynamic> sum_dx =
            (dxhat.cwiseProduct(*xhat)).colwise().sum();
        MatX<S> acc = S(r) * dxhat;
        acc.rowwise() -= sum_d;
        acc -= xhat->array().rowwise() * sum_dx.row(0).array();
        acc.array().rowwise() *= (invstd->row(0).array() / S(r));
        tp.accumulate(ix, acc);
      }
    });
  return {&t, id};
}

// ---- losses ----------------------------------------------------------------

// Mean over rows of -log softmax(logits)[target]; max-shifted for stability.
template <typename S>
Var<S> cross_entropy_rows(Var<S> logits, const std::vector<int>& targets) {
  Tape<S>& t = *logits.tape;
  const int il = logits.id;
  const Eigen::Index r = t.value(il).rows();
  detail::require(static_cast<size_t>(r) == targets.size(), "cross_entropy targets length");
  detail::require(r > 0, "cross_entropy on empty logits");
  const bool ng = t.needs_grad(il);

  auto probs = std::make_shared<MatX<S>>(t.value(il));
  S loss = S(0);
  for (Eigen::Index i = 0; i < r; ++i) {
    const S m = probs->row(i).maxCoeff();
    probs->row(i) = (probs->row(i).array() - m).exp();
    const S z = probs->row(i).sum();
    probs->row(i) /= z;
    loss -= std::log((*probs)(i, targets[static_cast<size_t>(i)]) + std::numeric_limits<S>::min());
  }
  MatX<S> v(1, 1);
  v(0, 0) = loss / S(r);
  const int id = t.add(std::move(v), ng);
  if (ng) {
    auto keep = std::make_shared<std::vector<int>>(targets);
    t.set_backward(id, [id, il, probs, keep, r](Tape<S>& tp) {
      const S g = tp.grad(id)(0, 0) / S(r);
      MatX<S> acc = *probs;
      for (Eigen::Index i = 0; i < r; ++i) acc(i, (*keep)[static_cast<size_t>(i)]) -= S(1);
      tp.accumulate(il, acc * g);
    });
  }
  return {&t, id};
}

// Elementwise Huber against a constant target.
template <typename S>
Var<S> huber_each(Var<S> a, const MatX<S>& target, S delta = S(1)) {
  Tape<S>& t = *a.tape;
  detail::require(target.rows() == a.value().rows() && target.cols() == a.value().cols(),
                  "huber target shape");
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  auto diff = std::make_shared<MatX<S>>(t.value(ia) - target);
  MatX<S> v(diff->rows(), diff->cols());
  for (Eigen::Index i = 0; i < diff->size(); ++i) {
    const S d = (*diff)(i);
    const S ad = std::abs(d);
    v(i) = ad <= delta ? S(0.5) * d * d : delta * (ad - S(0.5) * delta);
  }
  const int id = t.add(std::move(v), ng);
  if (ng)
    t.set_backward(id, [id, ia, diff, delta](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      MatX<S> acc(diff->rows(), diff->cols());
      for (Eigen::Index i = 0; i < diff->size(); ++i) {
        const S d = (*diff)(i);
        acc(i) = std::abs(d) <= delta ? d : (d > S(0) ? delta : -delta);
      }
      tp.accumulate(ia, acc.cwiseProduct(g));
    });
  return {&t, id};
}

// Elementwise |a - target| against a constant target.
template <typename S>
Var<S> abs_each(Var<S> a, const MatX<S>& target) {
  Tape<S>& t = *a.tape;
  detail::require(target.rows() == a.value().rows() && target.cols() == a.value().cols(),
                  "abs target shape");
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  auto diff = std::make_shared<MatX<S>>(t.value(ia) - target);
  const int id = t.add(diff->cwiseAbs(), ng);
  if (ng)
    t.set_backward(id, [id, ia, diff](Tape<S>& tp) {
      MatX<S> sign(diff->rows(), diff->cols());
      for (Eigen::Index i = 0; i < diff->size(); ++i)
        sign(i) = (*diff)(i) > S(0) ? S(1) : ((*diff)(i) < S(0) ? S(-1) : S(0));
      tp.accumulate(ia, sign.cwiseProduct(tp.grad(id)));
    });
  return {&t, id};
}

// Episode-similarity reduction: T is the (B*N) x (B*N) Gram matrix of
// prototype rows ordered (episode-major). Output row b*N+n, column m holds
//   n != m : (1/B)     * sum_i     T(b*N+n, i*N+m)
//   n == m : (1/(B-1)) * sum_{i!=b} T(b*N+n, i*N+n)
template <typename S>
Var<S> episode_sim_reduce(Var<S> gram, int b_count, int n_count) {
  Tape<S>& t = *gram.tape;
  const int it = gram.id;
  detail::require(b_count >= 2, "episode_sim_reduce needs B >= 2");
  detail::require(t.value(it).rows() == Eigen::Index(b_count) * n_count &&
                      t.value(it).cols() == Eigen::Index(b_count) * n_count,
                  "episode_sim_reduce gram shape");
  const bool ng = t.needs_grad(it);
  MatX<S> v(Eigen::Index(b_count) * n_count, n_count);
  const auto& T = t.value(it);
  for (int b = 0; b < b_count; ++b)
    for (int n = 0; n < n_count; ++n)
      for (int m = 0; m < n_count; ++m) {
        S acc = S(0);
        if (n != m) {
          for (int i = 0; i < b_count; ++i) acc += T(b * n_count + n, i * n_count + m);
          acc /= S(b_count);
        } else {
          for (int i = 0; i < b_count; ++i)
            if (i != b) acc += T(b * n_count + n, i * n_count + n);
          acc /= S(b_count - 1);
        }
        v(b * n_count + n, m) = acc;
      }
  const int id = t.add(std::move(v), ng);
  if (ng)
    t.set_backward(id, [id, it, b_count, n_count](Tape<S>& tp) {
      const auto& g = tp.grad(id);
      MatX<S> acc = MatX<S>::Zero(tp.value(it).rows(), tp.value(it).cols());
      for (int b = 0; b < b_count; ++b)
        for (int n = 0; n < n_count; ++n)
          for (int m = 0; m < n_count; ++m) {
            const S gv = g(b * n_count + n, m);
            if (gv == S(0)) continue;
            if (n != m) {
              const S w = gv / S(b_count);
              for (int i = 0; i < b_count; ++i) acc(b * n_count + n, i * n_count + m) += w;
            } else {
              const S w = gv / S(b_count - 1);
              for (int i = 0; i < b_count; ++i)
                if (i != b) acc(b * n_count + n, i * n_count + n) += w;
            }
          }
      tp.accumulate(it, acc);
    });
  return {&t, id};
}

// Copy with the gradient path severed.
template <typename S>
Var<S> stop_grad(Var<S> a) {
  return leaf(*a.tape, a.value(), false);
}

}  // namespace cpfs3d
