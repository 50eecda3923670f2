#pragma once

#include "cpfs3d/scene.hpp"

#include <map>
#include <string>
#include <vector>

namespace cpfs3d {

// Axis-aligned 3D intersection-over-union.
double iou3d(const Box3D& a, const Box3D& b);

// One ranked detection of a single class; `scene` scopes the matching so a
// detection can only consume ground truth from its own scene.
struct RankedDet {
  int scene = 0;
  double score = 0.0;
  Box3D box;
};

// All-point interpolated average precision for one class. Detections are
// ranked score-descending (ties by input order); each is greedily matched to
// the highest-IoU unmatched ground-truth box of its scene (ties toward the
// lower GT index) and counts as a true positive at IoU >= threshold.
// Zero GT with some detections gives 0; the zero/zero case is the caller's
// "skip" branch.
double average_precision(const std::vector<RankedDet>& dets,
                         const std::vector<std::pair<int, Box3D>>& gts,
                         double iou_threshold);

// Precision-recall points of the ranked list (one per detection), after the
// monotone envelope. Used by the plot emitter.
struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};
std::vector<PrPoint> pr_curve(const std::vector<RankedDet>& dets,
                              const std::vector<std::pair<int, Box3D>>& gts,
                              double iou_threshold);

struct ClassAP {
  int class_id = 0;
  int gt_count = 0;
  int det_count = 0;
  double ap25 = 0.0;
  double ap50 = 0.0;
  std::vector<PrPoint> pr25;  // populated by evaluate_run for plotting
};

struct APReport {
  std::vector<ClassAP> per_class;  // ascending class_id; skipped classes absent
  double mean_novel_ap25 = 0.0;
  double mean_novel_ap50 = 0.0;
  double mean_base_ap25 = 0.0;
  double mean_base_ap50 = 0.0;
  int novel_classes = 0;
  int base_classes = 0;
};

// Scored detection alongside its class, as exported per scene.
struct SceneDetections {
  std::string scene_id;
  std::vector<Box3D> boxes;       // size/center/class of each detection
  std::vector<float> scores;      // parallel to boxes
};

// Aggregates per-class AP over a full test split. `detections` maps
// scene_id to that scene's detections; every scene in `gt_scenes` must have
// an entry (missing -> IoError listing the scene ids).
APReport evaluate_run(const std::map<std::string, SceneDetections>& detections,
                      const std::vector<PointCloudScene>& gt_scenes,
                      const DatasetSplit& split);

std::string report_to_json(const APReport& report);
std::string report_to_csv(const APReport& report);

}  // namespace cpfs3d
