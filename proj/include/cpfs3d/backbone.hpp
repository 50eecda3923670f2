#pragma once

#include "cpfs3d/geometry.hpp"
#include "cpfs3d/nn.hpp"
#include "cpfs3d/scene.hpp"

#include <string>
#include <vector>

namespace cpfs3d {

// Two-level sample-group-pool encoder. Level widths derive from the final
// feature width d: [d/4, d/4, d/2] then [d/2, d/2, d], which at the default
// d=256 gives the canonical [64,64,128] / [128,128,256] stacks. Level point
// counts derive from the seed count m: the raw cloud is subsampled to 4m,
// abstracted to 2m, then to m.
struct BackboneConfig {
  int seeds = 256;         // m: output seed count
  int d = 256;             // output feature width
  float radius1 = 0.2f;
  float radius2 = 0.4f;
  int nsample1 = 32;
  int nsample2 = 16;

  std::vector<int> widths1() const { return {d / 4, d / 4, d / 2}; }
  std::vector<int> widths2() const { return {d / 2, d / 2, d}; }
};

template <typename S>
struct SeedFeatureSet {
  Var<S> features;                  // m x d, on tape
  Mat3X positions;                  // m x 3, constant
  std::vector<char> foreground;     // m, all false until mark_foreground
  std::vector<int> primitive_label; // m, -1 until protobank assignment

  int count() const { return static_cast<int>(positions.rows()); }
};

inline void init_backbone(ParamStore& store, const std::string& prefix,
                          const BackboneConfig& cfg, Rng& rng) {
  init_mlp(store, prefix + ".sa1", 3, cfg.widths1(), rng);
  init_mlp(store, prefix + ".sa2", 3 + cfg.d / 2, cfg.widths2(), rng);
}

namespace detail {

// One set-abstraction level: FPS centers, group neighbors in a ball, run the
// shared per-point stack on [relative coords, neighbor feature], max-pool
// per group. Relative coordinates are scaled by 1/radius; no absolute
// positions enter the features, which keeps the encoder translation
// invariant.
template <typename S>
std::pair<Var<S>, Mat3X> sa_level(ParamTape<S>& pt, const std::string& prefix,
                                  const Mat3X& positions, Var<S> features,
                                  bool has_features, int n_centers, float radius,
                                  int nsample, int n_layers) {
  Tape<S>& tape = *pt.tape;
  const std::vector<int> center_idx = farthest_point_sample(positions, n_centers);
  Mat3X centers(n_centers, 3);
  for (int c = 0; c < n_centers; ++c) centers.row(c) = positions.row(center_idx[c]);

  std::vector<std::vector<int>> groups(static_cast<size_t>(n_centers));
  std::vector<int> flat;
  for (int c = 0; c < n_centers; ++c) {
    const std::vector<int> members =
        ball_query(positions, centers.row(c).transpose(), radius, nsample);
    groups[static_cast<size_t>(c)].reserve(members.size());
    for (int m : members) {
      groups[static_cast<size_t>(c)].push_back(static_cast<int>(flat.size()));
      flat.push_back(m);
    }
  }

  MatX<S> rel(static_cast<Eigen::Index>(flat.size()), 3);
  {
    size_t row = 0;
    for (int c = 0; c < n_centers; ++c)
      for (size_t j = 0; j < groups[static_cast<size_t>(c)].size(); ++j) {
        const int src = flat[row];
        rel.row(static_cast<Eigen::Index>(row)) =
            ((positions.row(src) - centers.row(c)) / radius).template cast<S>();
        ++row;
      }
  }

  Var<S> stacked = leaf(tape, std::move(rel), false);
  if (has_features) stacked = concat_cols(stacked, gather_rows(features, flat));
  Var<S> h = apply_mlp(pt, prefix, stacked, n_layers);
  return {group_max_rows(h, groups), centers};
}

}  // namespace detail

// Core encoder shared by scene and support paths: subsample to level0
// points, then two abstraction levels down to level2 seeds.
template <typename S>
SeedFeatureSet<S> encode_cloud(ParamTape<S>& pt, const std::string& prefix,
                               const Mat3X& points, const BackboneConfig& cfg,
                               int level0, int level1, int level2) {
  const int n = static_cast<int>(points.rows());
  detail::require(level0 >= level1 && level1 >= level2 && level2 >= 1,
                  "encode_cloud level sizes must be non-increasing");
  if (n < level2)
    throw NumericError("encode_cloud: cloud has fewer points than requested seeds; "
                       "resample the input upstream");
  const int l0 = std::min(level0, n);
  const int l1 = std::min(level1, l0);
  const int l2 = std::min(level2, l1);

  const std::vector<int> base_idx = farthest_point_sample(points, l0);
  Mat3X p0(l0, 3);
  for (int i = 0; i < l0; ++i) p0.row(i) = points.row(base_idx[i]);

  auto [f1, p1] = detail::sa_level(pt, prefix + ".sa1", p0, Var<S>{}, false, l1,
                                   cfg.radius1, cfg.nsample1, 3);
  auto [f2, p2] = detail::sa_level(pt, prefix + ".sa2", p1, f1, true, l2,
                                   cfg.radius2, cfg.nsample2, 3);

  SeedFeatureSet<S> out;
  out.features = f2;
  out.positions = p2;
  out.foreground.assign(static_cast<size_t>(l2), 0);
  out.primitive_label.assign(static_cast<size_t>(l2), -1);
  return out;
}

// Scene encoder: m seeds with d-wide features plus positions. Requires at
// least m input points.
template <typename S>
SeedFeatureSet<S> encode_scene(ParamTape<S>& pt, const Mat3X& points,
                               const BackboneConfig& cfg) {
  return encode_cloud(pt, "backbone", points, cfg, 4 * cfg.seeds, 2 * cfg.seeds,
                      cfg.seeds);
}

// Support encoder: same weights, smaller pyramid, mean-pooled to a single
// instance feature (1 x d).
template <typename S>
Var<S> encode_support(ParamTape<S>& pt, const Mat3X& points, const BackboneConfig& cfg,
                      int support_seeds) {
  if (points.rows() < 1) throw NumericError("encode_support: empty instance");
  const int m = std::min(support_seeds, static_cast<int>(points.rows()));
  SeedFeatureSet<S> seeds =
      encode_cloud(pt, "backbone", points, cfg, 4 * m, 2 * m, m);
  return mean_rows(seeds.features);
}

// Training-only: flags every seed whose position lies inside some box
// (closed containment).
template <typename S>
void mark_foreground(SeedFeatureSet<S>& seeds, const std::vector<Box3D>& boxes) {
  for (int i = 0; i < seeds.count(); ++i) {
    const Vec3f p = seeds.positions.row(i).transpose();
    bool fg = false;
    for (const auto& b : boxes)
      if (b.contains(p)) {
        fg = true;
        break;
      }
    seeds.foreground[static_cast<size_t>(i)] = fg ? 1 : 0;
  }
}

}  // namespace cpfs3d
