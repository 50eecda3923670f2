#pragma once

#include "cpfs3d/config.hpp"
#include "cpfs3d/detector.hpp"
#include "cpfs3d/episodes.hpp"
#include "cpfs3d/eval3d.hpp"
#include "cpfs3d/protobank.hpp"
#include "cpfs3d/synthdata.hpp"

#include <string>
#include <vector>

namespace cpfs3d {

// Fixed evaluation supports: for novel classes exactly the designated shots,
// for base classes the first k instances in (scene_id, instance_id) order.
struct EvalSupports {
  std::vector<int> class_ids;                           // ascending
  std::vector<std::vector<SupportInstance>> per_class;  // parallel to class_ids
};

EvalSupports build_eval_supports(const LoadedDataset& data, const RunConfig& cfg);

// Class prototype matrix (one row per entry of sup.class_ids): mean support
// seed feature per class, straight from the frozen backbone.
MatX<float> compute_prototypes(ParamStore& params, const RunConfig& cfg,
                               const EvalSupports& sup);

// Full forward pass on one scene with frozen parameters; returns decoded,
// NMS-filtered detections.
std::vector<Detection> infer_scene(ParamStore& params, const PrototypeBank& bank,
                                   const Vec3f& size_prior, const RunConfig& cfg,
                                   const PointCloudScene& scene,
                                   const MatX<float>& prototypes,
                                   const std::vector<int>& proto_classes);

// Runs inference over every test scene, optionally exporting per-scene
// detections to out_dir/detections/<scene_id>.json, and scores the result.
APReport run_eval(ParamStore& params, const PrototypeBank& bank, const Vec3f& size_prior,
                  const RunConfig& cfg, const LoadedDataset& data,
                  const std::string& out_dir);

}  // namespace cpfs3d
