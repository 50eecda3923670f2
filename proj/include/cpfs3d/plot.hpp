#pragma once

#include "cpfs3d/checkpoint.hpp"
#include "cpfs3d/detector.hpp"
#include "cpfs3d/eval3d.hpp"
#include "cpfs3d/scene.hpp"

#include <string>
#include <vector>

namespace cpfs3d {

// Static SVG emitters. Pure string builders: identical inputs give
// byte-identical output, nothing is read from the environment.

// Training losses over steps (l_total, l_det, l_semcl, l_primcl).
std::string loss_curves_svg(const std::vector<StepMetrics>& metrics);

// One AP25 precision-recall polyline per evaluated class.
std::string pr_curves_svg(const APReport& report);

// Top-down (x,y) view: points gray, ground-truth boxes green (one
// rect class="gt" each), detections colored by class.
std::string scene_svg(const PointCloudScene& scene, const std::vector<Detection>& dets);

}  // namespace cpfs3d
