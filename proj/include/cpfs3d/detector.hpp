#pragma once

#include "cpfs3d/backbone.hpp"
#include "cpfs3d/eval3d.hpp"

#include <string>
#include <vector>

namespace cpfs3d {

struct DetectorConfig {
  int proposals = 64;
  float cluster_radius = 0.3f;
  int cluster_nsample = 16;
  float max_vote_offset = 1.0f;  // meters; tanh-bounded
  int head_hidden = 128;
  int num_classes = 12;          // global class vocabulary
  std::string cls_head = "affine";  // or "metric"
  float cls_tau = 0.1f;
  float pos_radius = 0.3f;
  float neg_radius = 0.6f;
  float w_obj = 0.5f;
  float w_box = 1.0f;
  float w_cls = 1.0f;
};

inline void init_detector(ParamStore& store, int d, const DetectorConfig& cfg, Rng& rng) {
  init_mlp(store, "vote.mlp", d, {cfg.head_hidden}, rng);
  store.init_linear("vote.out", cfg.head_hidden, 3, rng);
  init_attention(store, "refine_prop", d, rng);
  init_mlp(store, "head.mlp", d, {cfg.head_hidden}, rng);
  store.init_linear("head.box", cfg.head_hidden, 8, rng);  // 3 center, 3 log-size, 2 objectness
  store.init_linear("head.cls", cfg.head_hidden, cfg.num_classes, rng);
}

template <typename S>
struct VoteSet {
  Var<S> positions;       // m x 3 on tape: seed position + bounded offset
  Var<S> features;        // m x d (the refined seed features)
  Mat3X positions_value;  // float snapshot used for clustering
};

// Each seed votes a displacement toward its object center, bounded by
// max_vote_offset through a tanh.
template <typename S>
VoteSet<S> vote(ParamTape<S>& pt, const SeedFeatureSet<S>& seeds,
                const DetectorConfig& cfg) {
  Var<S> h = apply_mlp(pt, "vote.mlp", seeds.features, 1);
  Var<S> offset = scale(tanh_op(linear(pt, "vote.out", h)), S(cfg.max_vote_offset));
  Var<S> pos = add(leaf(*pt.tape, seeds.positions.template cast<S>().eval(), false), offset);

  VoteSet<S> out;
  out.positions = pos;
  out.features = seeds.features;
  out.positions_value = pos.value().template cast<float>();
  return out;
}

template <typename S>
struct ProposalSet {
  Var<S> features;  // P x d
  Mat3X centers;    // P x 3, constant (vote positions of the FPS picks)
  std::vector<std::vector<int>> groups;  // vote rows pooled per proposal
};

// Vote clustering: FPS over vote positions picks P centers; each proposal
// max-pools the features of votes within cluster_radius (first
// cluster_nsample in index order; nearest vote if the ball is empty).
// Grouping can be injected so a finite-difference harness can hold the
// discrete structure fixed while perturbing inputs.
template <typename S>
ProposalSet<S> cluster(const VoteSet<S>& votes, const DetectorConfig& cfg,
                       const std::vector<std::vector<int>>* fixed_groups = nullptr,
                       const Mat3X* fixed_centers = nullptr) {
  ProposalSet<S> out;
  if (fixed_groups) {
    out.groups = *fixed_groups;
    out.centers = *fixed_centers;
  } else {
    const int m = static_cast<int>(votes.positions_value.rows());
    detail::require(m >= cfg.proposals, "cluster: fewer votes than proposals");
    const std::vector<int> picks = farthest_point_sample(votes.positions_value, cfg.proposals);
    out.centers.resize(cfg.proposals, 3);
    out.groups.resize(static_cast<size_t>(cfg.proposals));
    for (int p = 0; p < cfg.proposals; ++p) {
      out.centers.row(p) = votes.positions_value.row(picks[static_cast<size_t>(p)]);
      out.groups[static_cast<size_t>(p)] =
          ball_query(votes.positions_value, out.centers.row(p).transpose(),
                     cfg.cluster_radius, cfg.cluster_nsample);
    }
  }
  out.features = group_max_rows(votes.features, out.groups);
  return out;
}

// Class prototypes for the detection path: unprojected means over the K
// support features of each class. support_stack is (N*K) x d, class-major.
template <typename S>
Var<S> build_semantic_prototypes(Var<S> support_stack, int N, int K) {
  detail::require(support_stack.value().rows() == Eigen::Index(N) * K,
                  "build_semantic_prototypes: stack shape");
  std::vector<std::vector<int>> groups(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) groups[static_cast<size_t>(n)].push_back(n * K + k);
  return group_mean_rows(support_stack, groups);
}

// Residual cross-attention of proposal features against the semantic
// prototypes; same contract as the seed refinement.
template <typename S>
ProposalSet<S> refine_proposals(ParamTape<S>& pt, ProposalSet<S> props,
                                Var<S> semantic_prototypes) {
  props.features = cross_attention(pt, "refine_prop", props.features, semantic_prototypes);
  return props;
}

template <typename S>
struct Prediction {
  Var<S> center;     // P x 3: proposal center + predicted offset
  Var<S> log_size;   // P x 3 raw head output
  Var<S> size;       // P x 3 decoded: prior * exp(log_size)
  Var<S> obj_logits; // P x 2 (index 1 = object)
  Var<S> cls_logits; // P x |active_classes|
  std::vector<int> active_classes;  // global class id per logit column
  Mat3X proposal_centers;           // constants the center head offsets
};

// Prediction heads. The affine class head always scores the full global
// vocabulary; the metric head scores cosine similarity to the episode's
// semantic prototypes, whose classes are given by active_classes.
template <typename S>
Prediction<S> predict(ParamTape<S>& pt, const ProposalSet<S>& props,
                      Var<S> semantic_prototypes, const std::vector<int>& active_classes,
                      const Vec3f& size_prior, const DetectorConfig& cfg) {
  Tape<S>& tape = *pt.tape;
  const int P = static_cast<int>(props.features.value().rows());
  Var<S> h = apply_mlp(pt, "head.mlp", props.features, 1);
  Var<S> box = linear(pt, "head.box", h);

  Prediction<S> out;
  out.proposal_centers = props.centers;
  Var<S> centers_const = leaf(tape, props.centers.template cast<S>().eval(), false);
  out.center = add(centers_const, slice_cols(box, 0, 3));
  out.log_size = slice_cols(box, 3, 3);
  MatX<S> prior_rep = size_prior.transpose().template cast<S>().replicate(P, 1);
  out.size = hadamard(exp_op(out.log_size), leaf(tape, std::move(prior_rep), false));
  out.obj_logits = slice_cols(box, 6, 2);

  if (cfg.cls_head == "metric") {
    detail::require(static_cast<int>(active_classes.size()) ==
                        static_cast<int>(semantic_prototypes.value().rows()),
                    "predict: active class list must match prototype rows");
    Var<S> q = l2_normalize_rows(props.features);
    Var<S> p = l2_normalize_rows(semantic_prototypes);
    out.cls_logits = scale(matmul_nt(q, p), S(1) / S(cfg.cls_tau));
    out.active_classes = active_classes;
  } else {
    out.cls_logits = linear(pt, "head.cls", h);
    out.active_classes.resize(static_cast<size_t>(cfg.num_classes));
    for (int c = 0; c < cfg.num_classes; ++c) out.active_classes[static_cast<size_t>(c)] = c;
  }
  return out;
}

template <typename S>
struct DetLossParts {
  Var<S> vote;
  Var<S> objectness;
  Var<S> box;
  Var<S> cls;
  Var<S> det;  // vote + w_obj*objectness + w_box*box + w_cls*cls
  int positives = 0;
  int negatives = 0;
};

// Proposal-to-ground-truth assignment by center distance: positive under
// pos_radius, negative beyond neg_radius, ignored between. A scene with no
// boxes makes every proposal negative.
inline std::vector<int> assign_proposals(const Mat3X& centers,
                                         const std::vector<Box3D>& gt,
                                         float pos_radius, float neg_radius,
                                         std::vector<int>* matched_gt = nullptr) {
  const int P = static_cast<int>(centers.rows());
  std::vector<int> label(static_cast<size_t>(P), 0);  // 1 pos, 0 neg, -1 ignore
  if (matched_gt) matched_gt->assign(static_cast<size_t>(P), -1);
  for (int p = 0; p < P; ++p) {
    float best = std::numeric_limits<float>::max();
    int best_g = -1;
    for (size_t g = 0; g < gt.size(); ++g) {
      const float dist = (centers.row(p).transpose() - gt[g].center).norm();
      if (dist < best) {
        best = dist;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g < 0 || best > neg_radius) {
      label[static_cast<size_t>(p)] = 0;
    } else if (best < pos_radius) {
      label[static_cast<size_t>(p)] = 1;
      if (matched_gt) (*matched_gt)[static_cast<size_t>(p)] = best_g;
    } else {
      label[static_cast<size_t>(p)] = -1;
    }
  }
  return label;
}

template <typename S>
DetLossParts<S> detection_loss(const Prediction<S>& pred, const VoteSet<S>& votes,
                               const SeedFeatureSet<S>& seeds,
                               const std::vector<Box3D>& gt, const Vec3f& size_prior,
                               const DetectorConfig& cfg) {
  Tape<S>& tape = *pred.center.tape;
  DetLossParts<S> out;

  // Vote regression: foreground seeds pull their votes toward the center of
  // the first box containing them.
  std::vector<int> fg_rows;
  std::vector<Eigen::RowVector3f> fg_targets;
  for (int i = 0; i < seeds.count(); ++i) {
    if (!seeds.foreground[static_cast<size_t>(i)]) continue;
    const Vec3f p = seeds.positions.row(i).transpose();
    for (const auto& b : gt)
      if (b.contains(p)) {
        fg_rows.push_back(i);
        fg_targets.push_back(b.center.transpose());
        break;
      }
  }
  if (fg_rows.empty()) {
    out.vote = scalar_leaf(tape, S(0));
  } else {
    MatX<S> target(static_cast<Eigen::Index>(fg_rows.size()), 3);
    for (size_t i = 0; i < fg_rows.size(); ++i)
      target.row(static_cast<Eigen::Index>(i)) = fg_targets[i].template cast<S>();
    out.vote = mean_all(abs_each(gather_rows(votes.positions, fg_rows), target));
  }

  std::vector<int> matched;
  const std::vector<int> label =
      assign_proposals(pred.proposal_centers, gt, cfg.pos_radius, cfg.neg_radius, &matched);
  const int P = static_cast<int>(label.size());

  std::vector<int> obj_rows, obj_targets, pos_rows, pos_gt;
  for (int p = 0; p < P; ++p) {
    if (label[static_cast<size_t>(p)] < 0) continue;
    obj_rows.push_back(p);
    obj_targets.push_back(label[static_cast<size_t>(p)]);
    if (label[static_cast<size_t>(p)] == 1) {
      pos_rows.push_back(p);
      pos_gt.push_back(matched[static_cast<size_t>(p)]);
    }
  }
  out.positives = static_cast<int>(pos_rows.size());
  out.negatives = static_cast<int>(obj_rows.size()) - out.positives;

  out.objectness = obj_rows.empty()
                       ? scalar_leaf(tape, S(0))
                       : cross_entropy_rows(gather_rows(pred.obj_logits, obj_rows), obj_targets);

  if (pos_rows.empty()) {
    out.box = scalar_leaf(tape, S(0));
    out.cls = scalar_leaf(tape, S(0));
  } else {
    MatX<S> center_t(out.positives, 3), logsize_t(out.positives, 3);
    for (int i = 0; i < out.positives; ++i) {
      const Box3D& b = gt[static_cast<size_t>(pos_gt[static_cast<size_t>(i)])];
      center_t.row(i) = b.center.transpose().template cast<S>();
      for (int c = 0; c < 3; ++c)
        logsize_t(i, c) = std::log(static_cast<S>(b.size(c)) / static_cast<S>(size_prior(c)));
    }
    Var<S> center_err = huber_each(gather_rows(pred.center, pos_rows), center_t);
    Var<S> size_err = huber_each(gather_rows(pred.log_size, pos_rows), logsize_t);
    out.box = add(mean_all(center_err), mean_all(size_err));

    // Classification on positives whose class the head can express; the
    // affine head covers the whole vocabulary, the metric head only the
    // episode's classes.
    std::vector<int> cls_rows, cls_targets;
    for (int i = 0; i < out.positives; ++i) {
      const int cid = gt[static_cast<size_t>(pos_gt[static_cast<size_t>(i)])].class_id;
      for (size_t a = 0; a < pred.active_classes.size(); ++a)
        if (pred.active_classes[a] == cid) {
          cls_rows.push_back(pos_rows[static_cast<size_t>(i)]);
          cls_targets.push_back(static_cast<int>(a));
          break;
        }
    }
    out.cls = cls_rows.empty()
                  ? scalar_leaf(tape, S(0))
                  : cross_entropy_rows(gather_rows(pred.cls_logits, cls_rows), cls_targets);
  }

  out.det = add_scaled(add_scaled(add_scaled(out.vote, out.objectness, S(cfg.w_obj)),
                                  out.box, S(cfg.w_box)),
                       out.cls, S(cfg.w_cls));
  return out;
}

// Eq.-style total: L = l_det + lambda1 * l_semcl + lambda2 * l_primcl.
template <typename S>
Var<S> total_loss(Var<S> l_det, Var<S> l_semcl, Var<S> l_primcl, S lambda1, S lambda2) {
  return add_scaled(add_scaled(l_det, l_semcl, lambda1), l_primcl, lambda2);
}

// ---- inference-side decoding ------------------------------------------------

struct Detection {
  Vec3f center = Vec3f::Zero();
  Vec3f size = Vec3f::Ones();
  int class_id = 0;
  float score = 0.0f;
};

// Softmax over two logits, probability of the "object" column.
template <typename S>
inline S objectness_prob(S bg, S obj) {
  const S m = std::max(bg, obj);
  const S eb = std::exp(bg - m), eo = std::exp(obj - m);
  return eo / (eb + eo);
}

// Greedy score-descending NMS within each class; ties by original order.
std::vector<Detection> nms_per_class(const std::vector<Detection>& dets, float iou_thresh);

// Turns a forward pass into scored boxes: argmax class, score = P(object) *
// P(class), low-objectness proposals dropped, then greedy per-class NMS.
template <typename S>
std::vector<Detection> decode_detections(const Prediction<S>& pred, float obj_thresh,
                                         float nms_iou) {
  const auto& center = pred.center.value();
  const auto& size = pred.size.value();
  const auto& obj = pred.obj_logits.value();
  const auto& cls = pred.cls_logits.value();
  const int P = static_cast<int>(center.rows());

  std::vector<Detection> dets;
  for (int p = 0; p < P; ++p) {
    const S pobj = objectness_prob(obj(p, 0), obj(p, 1));
    if (static_cast<float>(pobj) < obj_thresh) continue;
    int best = 0;
    for (int c = 1; c < cls.cols(); ++c)
      if (cls(p, c) > cls(p, best)) best = c;
    S m = cls.row(p).maxCoeff();
    S z = S(0);
    for (int c = 0; c < cls.cols(); ++c) z += std::exp(cls(p, c) - m);
    const S pcls = std::exp(cls(p, best) - m) / z;

    Detection d;
    d.center = center.row(p).template cast<float>().transpose();
    d.size = size.row(p).template cast<float>().transpose().cwiseMax(1e-4f);
    d.class_id = pred.active_classes[static_cast<size_t>(best)];
    d.score = static_cast<float>(pobj * pcls);
    dets.push_back(d);
  }
  return nms_per_class(dets, nms_iou);
}

// Detection persistence: [{"center":[...], "size":[...], "class_id":int,
// "score":float}], canonical float formatting.
std::string detections_to_json(const std::vector<Detection>& dets);
std::vector<Detection> detections_from_json(const std::string& text, const std::string& origin);
void save_detections(const std::vector<Detection>& dets, const std::string& path);
std::vector<Detection> load_detections(const std::string& path);

}  // namespace cpfs3d
