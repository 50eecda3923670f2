#pragma once

#include "cpfs3d/backbone.hpp"

#include <iostream>
#include <vector>

namespace cpfs3d {

// Momentum-updated memory of W geometric prototypes. Plain float storage,
// never on the tape: gradients cannot reach it, the momentum rule is the
// only writer.
struct PrototypeBank {
  MatX<float> g;                  // W x d
  float gamma = 0.999f;
  std::vector<long> usage_count;  // diagnostics: momentum writes per row

  int W() const { return static_cast<int>(g.rows()); }
  int d() const { return static_cast<int>(g.cols()); }
};

struct AssignmentResult {
  std::vector<int> labels;               // per seed, prototype index or -1
  std::vector<std::vector<int>> groups;  // per prototype, assigned seed rows
  MatX<float> means;                     // W x d, zero rows for empty groups
  std::vector<int> nonempty;             // prototype ids with >= 1 member
};

inline PrototypeBank init_bank(Rng& rng, int W, int d, float gamma = 0.999f) {
  if (W < 1) throw ConfigError("init_bank: W must be >= 1");
  PrototypeBank bank;
  bank.g.resize(W, d);
  for (int w = 0; w < W; ++w) {
    for (int c = 0; c < d; ++c) bank.g(w, c) = static_cast<float>(rng.normal());
    const float n = bank.g.row(w).norm();
    if (n > 0.0f) bank.g.row(w) /= n;
  }
  bank.gamma = gamma;
  bank.usage_count.assign(static_cast<size_t>(W), 0);
  return bank;
}

// Nearest-prototype assignment of foreground seed features by cosine
// similarity; ties and zero-norm features resolve to the lowest index.
// Works on raw feature values, never on the tape.
inline AssignmentResult assign(const MatX<float>& features,
                               const std::vector<char>& foreground,
                               const PrototypeBank& bank, std::ostream* warn = nullptr) {
  const int m = static_cast<int>(features.rows());
  AssignmentResult res;
  res.labels.assign(static_cast<size_t>(m), -1);
  res.groups.assign(static_cast<size_t>(bank.W()), {});

  VecX<float> bank_norm(bank.W());
  for (int w = 0; w < bank.W(); ++w) bank_norm(w) = bank.g.row(w).norm();

  for (int i = 0; i < m; ++i) {
    if (!foreground[static_cast<size_t>(i)]) continue;
    const float fnorm = features.row(i).norm();
    int best = 0;
    if (fnorm == 0.0f) {
      if (warn) *warn << "assign: zero-norm seed feature at row " << i
                      << ", assigned to prototype 0\n";
    } else {
      float best_sim = -std::numeric_limits<float>::max();
      for (int w = 0; w < bank.W(); ++w) {
        const float denom = fnorm * bank_norm(w);
        const float sim = denom > 0.0f ? features.row(i).dot(bank.g.row(w)) / denom : 0.0f;
        if (sim > best_sim) {
          best_sim = sim;
          best = w;
        }
      }
    }
    res.labels[static_cast<size_t>(i)] = best;
    res.groups[static_cast<size_t>(best)].push_back(i);
  }

  res.means = MatX<float>::Zero(bank.W(), features.cols());
  for (int w = 0; w < bank.W(); ++w) {
    const auto& grp = res.groups[static_cast<size_t>(w)];
    if (grp.empty()) continue;
    for (int i : grp) res.means.row(w) += features.row(i);
    res.means.row(w) /= static_cast<float>(grp.size());
    res.nonempty.push_back(w);
  }
  return res;
}

// g_w <- gamma * g_w + (1 - gamma) * f_w for prototypes with assignments
// this step; others untouched. Optional re-normalization keeps rows on the
// unit sphere so cosine assignment stays well conditioned.
inline void momentum_update(PrototypeBank& bank, const AssignmentResult& assignment,
                            bool renormalize = true) {
  for (int w : assignment.nonempty) {
    bank.g.row(w) = bank.gamma * bank.g.row(w) +
                    (1.0f - bank.gamma) * assignment.means.row(w);
    if (renormalize) {
      const float n = bank.g.row(w).norm();
      if (n > 0.0f) bank.g.row(w) /= n;
    }
    bank.usage_count[static_cast<size_t>(w)] += 1;
  }
}

// Residual cross-attention of seeds against the bank. The bank enters as a
// constant leaf, so refinement consumes it without creating a gradient path.
template <typename S>
SeedFeatureSet<S> refine_seeds(ParamTape<S>& pt, SeedFeatureSet<S> seeds,
                               const PrototypeBank& bank) {
  Var<S> bank_const = leaf(*pt.tape, bank.g.template cast<S>().eval(), false);
  seeds.features = cross_attention(pt, "refine_seed", seeds.features, bank_const);
  return seeds;
}

inline void init_refine_seeds(ParamStore& store, int d, Rng& rng) {
  init_attention(store, "refine_seed", d, rng);
}

}  // namespace cpfs3d
