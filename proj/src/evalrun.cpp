#include "cpfs3d/evalrun.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>

namespace cpfs3d {

EvalSupports build_eval_supports(const LoadedDataset& data, const RunConfig& cfg) {
  const int k = data.split.k_shots > 0 ? data.split.k_shots : cfg.data_k;
  EvalSupports out;
  for (int cls = 0; cls < cfg.num_classes(); ++cls) {
    // Every train instance of the class, in (scene_id, instance_id) order.
    std::vector<std::pair<const PointCloudScene*, const Box3D*>> found;
    for (const auto& scene : data.train_scenes)
      for (const auto& box : scene.boxes)
        if (box.class_id == cls) found.emplace_back(&scene, &box);
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
      if (a.first->scene_id != b.first->scene_id)
        return a.first->scene_id < b.first->scene_id;
      return a.second->instance_id < b.second->instance_id;
    });

    std::vector<SupportInstance> shots;
    if (data.split.is_novel(cls)) {
      for (const auto& [scene, box] : found)
        if (data.split.is_designated(scene->scene_id, box->instance_id))
          shots.push_back(crop_support(*scene, *box, cfg.min_support_points));
    } else {
      for (const auto& [scene, box] : found) {
        if (static_cast<int>(shots.size()) >= k) break;
        shots.push_back(crop_support(*scene, *box, cfg.min_support_points));
      }
    }
    if (shots.empty()) {
      std::cerr << "eval: class " << cls << " has no support instances, skipping\n";
      continue;
    }
    out.class_ids.push_back(cls);
    out.per_class.push_back(std::move(shots));
  }
  if (out.class_ids.empty()) throw ConfigError("eval: no class has support instances");
  return out;
}

MatX<float> compute_prototypes(ParamStore& params, const RunConfig& cfg,
                               const EvalSupports& sup) {
  const BackboneConfig bb = cfg.backbone();
  MatX<float> protos(static_cast<Eigen::Index>(sup.class_ids.size()), cfg.d);
  Tape<float> tape;
  ParamTape<float> pt(tape, params, false);
  for (size_t n = 0; n < sup.per_class.size(); ++n) {
    std::vector<Var<float>> shots;
    for (const auto& inst : sup.per_class[n])
      shots.push_back(encode_support(pt, inst.points, bb, cfg.support_seeds));
    protos.row(static_cast<Eigen::Index>(n)) =
        mean_rows(concat_rows(shots)).value().row(0);
  }
  return protos;
}

std::vector<Detection> infer_scene(ParamStore& params, const PrototypeBank& bank,
                                   const Vec3f& size_prior, const RunConfig& cfg,
                                   const PointCloudScene& scene,
                                   const MatX<float>& prototypes,
                                   const std::vector<int>& proto_classes) {
  const BackboneConfig bb = cfg.backbone();
  const DetectorConfig dc = cfg.detector();
  Tape<float> tape;
  ParamTape<float> pt(tape, params, false);
  SeedFeatureSet<float> seeds = encode_scene(pt, scene.points, bb);
  seeds = refine_seeds(pt, seeds, bank);
  VoteSet<float> votes = vote(pt, seeds, dc);
  ProposalSet<float> props = cluster(votes, dc);
  Var<float> protos = leaf(tape, prototypes, false);
  props = refine_proposals(pt, props, protos);
  Prediction<float> pred = predict(pt, props, protos, proto_classes, size_prior, dc);
  return decode_detections(pred, cfg.obj_thresh, cfg.nms_iou);
}

APReport run_eval(ParamStore& params, const PrototypeBank& bank, const Vec3f& size_prior,
                  const RunConfig& cfg, const LoadedDataset& data,
                  const std::string& out_dir) {
  EvalSupports sup = build_eval_supports(data, cfg);
  MatX<float> protos = compute_prototypes(params, cfg, sup);

  if (!out_dir.empty())
    std::filesystem::create_directories(out_dir + "/detections");

  std::map<std::string, SceneDetections> all;
  for (const auto& scene : data.test_scenes) {
    std::vector<Detection> dets =
        infer_scene(params, bank, size_prior, cfg, scene, protos, sup.class_ids);
    SceneDetections sd;
    sd.scene_id = scene.scene_id;
    for (const auto& det : dets) {
      sd.boxes.push_back(Box3D{det.center, det.size, 0.0f, det.class_id, -1});
      sd.scores.push_back(det.score);
    }
    if (!out_dir.empty())
      save_detections(dets, out_dir + "/detections/" + scene.scene_id + ".json");
    all.emplace(scene.scene_id, std::move(sd));
  }
  return evaluate_run(all, data.test_scenes, data.split);
}

}  // namespace cpfs3d
