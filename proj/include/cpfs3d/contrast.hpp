#pragma once

#include "cpfs3d/nn.hpp"
#include "cpfs3d/protobank.hpp"

#include <string>
#include <vector>

namespace cpfs3d {

struct ContrastConfig {
  float tau = 0.2f;
  bool normalize_sim = true;    // L2-normalize projected vectors before dots
  bool share_projection = false;
  // "mean": denominator varies the group means M_j against a fixed bank row
  // (the printed form). "proto": varies the bank rows instead.
  std::string pcl_denominator = "mean";

  std::string proj_s() const { return "proj_s"; }
  std::string proj_p() const { return share_projection ? "proj_s" : "proj_p"; }
};

inline void init_projections(ParamStore& store, int d, Rng& rng,
                             const ContrastConfig& cfg) {
  init_projection(store, "proj_s", d, rng);
  if (!cfg.share_projection) init_projection(store, "proj_p", d, rng);
}

// Projected class prototypes for one batch: P has B*N rows (episode-major),
// row b*N + n = normalize(proj_s(mean_k support feature)). Support features
// arrive as one (B*N*K) x d stack, episode-major then class-major then shot.
template <typename S>
Var<S> build_semantic_grid(ParamTape<S>& pt, Var<S> support_features, int B, int N,
                           int K, const ContrastConfig& cfg) {
  detail::require(B >= 2, "build_semantic_grid: B must be >= 2");
  detail::require(N >= 2 && K >= 1, "build_semantic_grid: need N >= 2, K >= 1");
  detail::require(support_features.value().rows() == Eigen::Index(B) * N * K,
                  "build_semantic_grid: support stack shape");
  std::vector<std::vector<int>> groups(static_cast<size_t>(B) * N);
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k)
        groups[static_cast<size_t>(b * N + n)].push_back((b * N + n) * K + k);
  Var<S> means = group_mean_rows(support_features, groups);
  Var<S> proj = apply_projection(pt, cfg.proj_s(), means);
  if (cfg.normalize_sim) proj = l2_normalize_rows(proj);
  return proj;
}

// Similarity of Eq. (2) evaluated on plain values, used by tests and
// reports. grid holds B*N rows (episode-major).
template <typename S>
S semantic_similarity(const MatX<S>& grid, int B, int N, int b, int n, int m) {
  S acc = S(0);
  if (n != m) {
    for (int i = 0; i < B; ++i) acc += grid.row(b * N + n).dot(grid.row(i * N + m));
    return acc / S(B);
  }
  for (int i = 0; i < B; ++i)
    if (i != b) acc += grid.row(b * N + n).dot(grid.row(i * N + n));
  return acc / S(B - 1);
}

// InfoNCE over the batch-averaged similarities: for every (b, n) the
// positive is class n itself, the negatives are the other N-1 classes.
template <typename S>
Var<S> semantic_loss(Var<S> grid, int B, int N, S tau) {
  detail::require(tau > S(0), "semantic_loss: tau must be positive");
  Var<S> gram = matmul_nt(grid, grid);
  Var<S> sim = episode_sim_reduce(gram, B, N);
  std::vector<int> targets(static_cast<size_t>(B) * N);
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n) targets[static_cast<size_t>(b * N + n)] = n;
  return cross_entropy_rows(scale(sim, S(1) / tau), targets);
}

struct PrimitiveLossResult {
  bool active = false;  // false when fewer than two prototypes had members
  int W_prime = 0;
};

// InfoNCE core of the primitive loss, on already-projected vectors: one row
// per non-empty prototype, positive on the diagonal. In the printed form
// row w fixes the detached bank vector and the columns sweep the means; the
// "proto" variant swaps the roles.
template <typename S>
Var<S> primitive_infonce(Var<S> m_proj, Var<S> g_hat, S tau,
                         const std::string& denominator = "mean") {
  detail::require(m_proj.value().rows() == g_hat.value().rows(),
                  "primitive_infonce: row counts differ");
  const int Wp = static_cast<int>(m_proj.value().rows());
  Var<S> logits = denominator == "proto" ? matmul_nt(m_proj, g_hat)
                                         : matmul_nt(g_hat, m_proj);
  std::vector<int> targets(static_cast<size_t>(Wp));
  for (int j = 0; j < Wp; ++j) targets[static_cast<size_t>(j)] = j;
  return cross_entropy_rows(scale(logits, S(1) / tau), targets);
}

// Primitive contrastive loss. seed_features is the pooled (all scenes of the
// batch) seed feature stack on the tape; assignment groups index its rows.
// The bank side is projected and normalized outside the gradient path.
template <typename S>
Var<S> primitive_loss(ParamTape<S>& pt, Var<S> seed_features,
                      const AssignmentResult& assignment, const PrototypeBank& bank,
                      const ContrastConfig& cfg, S tau, PrimitiveLossResult* info = nullptr) {
  const int Wp = static_cast<int>(assignment.nonempty.size());
  if (info) {
    info->active = Wp >= 2;
    info->W_prime = Wp;
  }
  if (Wp < 2) return scalar_leaf(*pt.tape, S(0));
  detail::require(tau > S(0), "primitive_loss: tau must be positive");

  std::vector<std::vector<int>> groups;
  groups.reserve(static_cast<size_t>(Wp));
  MatX<S> bank_rows(Wp, bank.d());
  for (int j = 0; j < Wp; ++j) {
    const int w = assignment.nonempty[static_cast<size_t>(j)];
    groups.push_back(assignment.groups[static_cast<size_t>(w)]);
    bank_rows.row(j) = bank.g.row(w).template cast<S>();
  }

  Var<S> means = group_mean_rows(seed_features, groups);
  Var<S> m_proj = apply_projection(pt, cfg.proj_p(), means);
  if (cfg.normalize_sim) m_proj = l2_normalize_rows(m_proj);

  // Detached bank view: projected with current weights, then cut from the
  // graph so neither the bank nor the projection receives gradient through
  // this side.
  Var<S> g_proj = apply_projection(pt, cfg.proj_p(), leaf(*pt.tape, bank_rows, false));
  if (cfg.normalize_sim) g_proj = l2_normalize_rows(g_proj);
  Var<S> g_hat = stop_grad(g_proj);
  return primitive_infonce(m_proj, g_hat, tau, cfg.pcl_denominator);
}

}  // namespace cpfs3d
