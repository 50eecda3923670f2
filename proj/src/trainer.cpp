#include "cpfs3d/trainer.hpp"

#include "cpfs3d/contrast.hpp"
#include "cpfs3d/detector.hpp"
#include "cpfs3d/evalrun.hpp"
#include "cpfs3d/eval3d.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace cpfs3d {

namespace {

Vec3f mean_box_size(const std::vector<PointCloudScene>& scenes, const DatasetSplit& split) {
  Vec3f acc = Vec3f::Zero();
  long n = 0;
  for (const auto& scene : scenes)
    for (const auto& box : visible_boxes(scene, split, Stage::kPretrain)) {
      acc += box.size;
      ++n;
    }
  if (n == 0) return Vec3f::Ones();
  return acc / static_cast<float>(n);
}

std::string stage_tag(Stage stage) {
  return stage == Stage::kPretrain ? "pretrain" : "finetune";
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg, LoadedDataset data)
    : cfg_(cfg), data_(std::move(data)), rng_(static_cast<uint64_t>(cfg.seed)) {
  const BackboneConfig bb = cfg_.backbone();
  const DetectorConfig dc = cfg_.detector();
  const ContrastConfig cc = cfg_.contrast();
  init_backbone(params_, "backbone", bb, rng_);
  init_refine_seeds(params_, cfg_.d, rng_);
  init_detector(params_, cfg_.d, dc, rng_);
  init_projections(params_, cfg_.d, rng_, cc);
  bank_ = init_bank(rng_, cfg_.bank_w, cfg_.d, cfg_.gamma);
  opt_.lr = cfg_.lr;
  opt_.weight_decay = cfg_.weight_decay;
  // The anchor every box head offsets from; frozen at the pretrain statistics
  // so finetuning never shifts the decoding of earlier checkpoints.
  size_prior_ = mean_box_size(data_.train_scenes, data_.split);
  sampler_ = std::make_unique<EpisodeSampler>(&data_.train_scenes, &data_.split,
                                              cfg_.min_support_points);
}

Trainer::Trainer(const RunConfig& cfg, LoadedDataset data, const Checkpoint& ckpt)
    : cfg_(cfg), data_(std::move(data)), rng_(0) {
  if (ckpt.config_hash != config_hash(cfg))
    throw ConfigError("checkpoint was produced by a different config (hash mismatch)");
  params_ = ckpt.params;
  bank_ = ckpt.bank;
  opt_ = ckpt.opt;
  epoch_ = ckpt.epoch;
  global_step_ = ckpt.step;
  stage_tag_ = ckpt.stage;
  rng_.set_state_string(ckpt.rng_state);
  size_prior_ = ckpt.size_prior;
  sampler_ = std::make_unique<EpisodeSampler>(&data_.train_scenes, &data_.split,
                                              cfg_.min_support_points);
}

Checkpoint Trainer::make_checkpoint(const std::string& stage) const {
  Checkpoint ckpt;
  ckpt.params = params_;
  ckpt.bank = bank_;
  ckpt.opt = opt_;
  ckpt.epoch = epoch_;
  ckpt.step = global_step_;
  ckpt.stage = stage;
  ckpt.rng_state = rng_.state_string();
  ckpt.config_hash = config_hash(cfg_);
  ckpt.size_prior = size_prior_;
  return ckpt;
}

float Trainer::current_lr(Stage stage) const {
  if (stage == Stage::kPretrain && epoch_ >= cfg_.lr_decay_epoch)
    return cfg_.lr * cfg_.lr_decay_factor;
  return cfg_.lr;
}

StepMetrics Trainer::train_step(const EpisodeBatch& batch, Stage stage) {
  const int B = static_cast<int>(batch.episodes.size());
  const int N = batch.n_way;
  const int K = batch.k_shot;
  if (B < 1) throw ConfigError("train_step: empty batch");

  const BackboneConfig bb = cfg_.backbone();
  const DetectorConfig dc = cfg_.detector();
  const ContrastConfig cc = cfg_.contrast();

  Tape<float> tape;
  ParamTape<float> pt(tape, params_, true);

  // Query scenes: seeds plus their stage-visible supervision.
  std::vector<SeedFeatureSet<float>> seeds;
  seeds.reserve(static_cast<size_t>(B));
  std::vector<std::vector<Box3D>> supervision(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    const PointCloudScene& scene = data_.train_scenes[static_cast<size_t>(
        batch.episodes[static_cast<size_t>(b)].query_index)];
    SeedFeatureSet<float> s = encode_scene(pt, scene.points, bb);
    supervision[static_cast<size_t>(b)] = visible_boxes(scene, data_.split, stage);
    mark_foreground(s, supervision[static_cast<size_t>(b)]);
    seeds.push_back(s);
  }

  // One bank assignment over the whole batch, on pre-refinement features.
  std::vector<Var<float>> feature_list;
  std::vector<char> pooled_fg;
  for (int b = 0; b < B; ++b) {
    feature_list.push_back(seeds[static_cast<size_t>(b)].features);
    const auto& fg = seeds[static_cast<size_t>(b)].foreground;
    pooled_fg.insert(pooled_fg.end(), fg.begin(), fg.end());
  }
  Var<float> pooled = concat_rows(feature_list);
  AssignmentResult assignment = assign(pooled.value(), pooled_fg, bank_, &std::cerr);

  // Support features for every (episode, class, shot), episode-major.
  std::vector<Var<float>> support_list;
  support_list.reserve(static_cast<size_t>(B) * N * K);
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k)
        support_list.push_back(encode_support(
            pt, batch.episodes[static_cast<size_t>(b)].support[static_cast<size_t>(n)]
                    [static_cast<size_t>(k)].points,
            bb, cfg_.support_seeds));
  Var<float> support_stack = concat_rows(support_list);

  // Unprojected class prototypes, one row per (episode, class).
  std::vector<std::vector<int>> proto_groups(static_cast<size_t>(B) * N);
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k)
        proto_groups[static_cast<size_t>(b * N + n)].push_back((b * N + n) * K + k);
  Var<float> proto_all = group_mean_rows(support_stack, proto_groups);

  // Detection path per scene.
  Var<float> l_vote = scalar_leaf(tape, 0.0f);
  Var<float> l_obj = scalar_leaf(tape, 0.0f);
  Var<float> l_box = scalar_leaf(tape, 0.0f);
  Var<float> l_cls = scalar_leaf(tape, 0.0f);
  Var<float> l_det = scalar_leaf(tape, 0.0f);
  for (int b = 0; b < B; ++b) {
    SeedFeatureSet<float> refined = refine_seeds(pt, seeds[static_cast<size_t>(b)], bank_);
    VoteSet<float> votes = vote(pt, refined, dc);
    ProposalSet<float> props = cluster(votes, dc);
    std::vector<int> proto_rows(static_cast<size_t>(N));
    for (int n = 0; n < N; ++n) proto_rows[static_cast<size_t>(n)] = b * N + n;
    Var<float> protos_b = gather_rows(proto_all, proto_rows);
    props = refine_proposals(pt, props, protos_b);
    Prediction<float> pred =
        predict(pt, props, protos_b, batch.class_ids, size_prior_, dc);
    DetLossParts<float> parts = detection_loss(pred, votes, refined,
                                               supervision[static_cast<size_t>(b)],
                                               size_prior_, dc);
    l_vote = add(l_vote, parts.vote);
    l_obj = add(l_obj, parts.objectness);
    l_box = add(l_box, parts.box);
    l_cls = add(l_cls, parts.cls);
    l_det = add(l_det, parts.det);
  }
  const float inv_b = 1.0f / static_cast<float>(B);
  l_vote = scale(l_vote, inv_b);
  l_obj = scale(l_obj, inv_b);
  l_box = scale(l_box, inv_b);
  l_cls = scale(l_cls, inv_b);
  l_det = scale(l_det, inv_b);

  // Contrastive terms.
  const bool scl_feasible = B >= 2 && N >= 2;
  const bool want_scl = cfg_.lambda1 > 0.0f;
  Var<float> l_semcl = scalar_leaf(tape, 0.0f);
  if (want_scl && scl_feasible) {
    Var<float> grid = build_semantic_grid(pt, support_stack, B, N, K, cc);
    l_semcl = semantic_loss(grid, B, N, cfg_.tau);
  }
  PrimitiveLossResult pcl_info;
  Var<float> l_primcl = scalar_leaf(tape, 0.0f);
  if (cfg_.lambda2 > 0.0f) {
    l_primcl = primitive_loss(pt, pooled, assignment, bank_, cc, cfg_.tau, &pcl_info);
  } else {
    pcl_info.W_prime = static_cast<int>(assignment.nonempty.size());
  }
  Var<float> l_total = total_loss(l_det, l_semcl, l_primcl, cfg_.lambda1, cfg_.lambda2);

  StepMetrics m;
  m.l_vote = l_vote.value()(0, 0);
  m.l_objectness = l_obj.value()(0, 0);
  m.l_box = l_box.value()(0, 0);
  m.l_cls = l_cls.value()(0, 0);
  m.l_det = l_det.value()(0, 0);
  m.l_semcl = l_semcl.value()(0, 0);
  m.l_primcl = l_primcl.value()(0, 0);
  m.l_total = l_total.value()(0, 0);
  m.scl_skipped = want_scl && !scl_feasible;
  m.pcl_w_prime = pcl_info.W_prime;

  const struct {
    const char* name;
    float v;
  } checks[] = {{"l_vote", m.l_vote},   {"l_objectness", m.l_objectness},
                {"l_box", m.l_box},     {"l_cls", m.l_cls},
                {"l_semcl", m.l_semcl}, {"l_primcl", m.l_primcl},
                {"l_total", m.l_total}};
  for (const auto& c : checks)
    if (!std::isfinite(c.v)) {
      std::ostringstream os;
      os << "step " << (global_step_ + 1) << ": non-finite " << c.name;
      throw NumericError(os.str());
    }

  tape.backward(l_total.id);
  std::map<std::string, MatX<float>> grads;
  for (const auto& [name, var] : pt.vars) grads[name] = pt.grad(name);
  opt_.lr = current_lr(stage);
  opt_.weight_decay = cfg_.weight_decay;
  opt_.step(params_, grads);
  momentum_update(bank_, assignment, cfg_.bank_renormalize);

  ++global_step_;
  m.step = global_step_;
  m.epoch = epoch_;
  return m;
}

std::string Trainer::run_stage(Stage stage, int epochs, const std::string& out_dir) {
  const std::string tag = stage_tag(stage);
  if (stage_tag_ != tag) {
    // Fresh stage: the epoch counter restarts, the step counter carries on.
    epoch_ = 0;
    stage_tag_ = tag;
  }
  std::filesystem::create_directories(out_dir);
  const bool resuming = epoch_ > 0;
  const auto mode = resuming ? std::ios::app : std::ios::trunc;
  std::ofstream metrics(out_dir + "/" + tag + "_metrics.jsonl", mode);
  std::ofstream audit(out_dir + "/" + tag + "_episodes.jsonl", mode);
  if (!metrics || !audit) throw IoError("cannot open log files under " + out_dir);

  const int steps_per_epoch =
      (static_cast<int>(data_.train_scenes.size()) + cfg_.batch - 1) / cfg_.batch;
  while (epoch_ < epochs) {
    for (int s = 0; s < steps_per_epoch; ++s) {
      EpisodeBatch batch =
          sampler_->sample_batch(stage, cfg_.n_way, cfg_.k_shot, cfg_.batch, rng_);
      for (const Episode& ep : batch.episodes)
        audit << episode_audit_record(ep, data_.train_scenes) << "\n";
      StepMetrics m = train_step(batch, stage);
      metrics << metrics_record(m) << "\n";
    }
    ++epoch_;
    save_checkpoint(make_checkpoint(tag),
                    out_dir + "/" + tag + "_ep" + std::to_string(epoch_) + ".ckpt");
  }
  const std::string final_path = out_dir + "/" + tag + ".ckpt";
  save_checkpoint(make_checkpoint(tag), final_path);
  return final_path;
}

OverfitResult overfit_one_scene(const RunConfig& cfg, const PointCloudScene& scene,
                                int max_steps, int eval_every) {
  RunConfig c = cfg;
  c.batch = 1;
  LoadedDataset data;
  data.train_scenes = {scene};
  data.test_scenes = {scene};
  for (int i = 0; i < c.num_classes(); ++i) data.split.base_class_ids.push_back(i);
  data.split.k_shots = 1;

  std::set<int> present;
  for (const auto& box : scene.boxes) present.insert(box.class_id);
  if (present.empty()) throw ConfigError("overfit_one_scene: scene has no boxes");

  Episode ep;
  ep.query_index = 0;
  ep.class_ids.assign(present.begin(), present.end());
  for (int cls : ep.class_ids) {
    for (const auto& box : scene.boxes)
      if (box.class_id == cls) {
        ep.support.push_back({crop_support(scene, box, c.min_support_points)});
        break;
      }
  }
  EpisodeBatch batch = build_batch({ep});

  Trainer trainer(c, std::move(data));

  std::vector<std::pair<int, Box3D>> gt;
  for (const auto& box : scene.boxes) gt.emplace_back(0, box);

  OverfitResult result;
  for (int step = 1; step <= max_steps; ++step) {
    trainer.train_step(batch, Stage::kPretrain);
    result.steps_run = step;
    if (step % eval_every != 0 && step != max_steps) continue;

    MatX<float> protos(batch.n_way, c.d);
    {
      Tape<float> tape;
      ParamTape<float> pt(tape, trainer.parameters(), false);
      for (int n = 0; n < batch.n_way; ++n) {
        std::vector<Var<float>> shots;
        for (const auto& inst : ep.support[static_cast<size_t>(n)])
          shots.push_back(encode_support(pt, inst.points, c.backbone(), c.support_seeds));
        protos.row(n) = mean_rows(concat_rows(shots)).value().row(0);
      }
    }
    std::vector<Detection> dets = infer_scene(trainer.parameters(), trainer.bank(),
                                              trainer.size_prior(), c, scene, protos,
                                              batch.class_ids);
    double ap_sum = 0.0;
    int ap_classes = 0;
    for (int cls : batch.class_ids) {
      std::vector<RankedDet> cls_dets;
      for (const auto& det : dets)
        if (det.class_id == cls)
          cls_dets.push_back({0, det.score, Box3D{det.center, det.size, 0.0f, cls, -1}});
      std::vector<std::pair<int, Box3D>> cls_gt;
      for (const auto& [sidx, box] : gt)
        if (box.class_id == cls) cls_gt.emplace_back(sidx, box);
      if (cls_gt.empty()) continue;
      ap_sum += average_precision(cls_dets, cls_gt, 0.25);
      ++ap_classes;
    }
    result.ap25 = ap_classes > 0 ? ap_sum / ap_classes : 0.0;
    if (result.ap25 >= 1.0 - 1e-12) {
      result.reached = true;
      return result;
    }
  }
  return result;
}

}  // namespace cpfs3d
