#include "cpfs3d/eval3d.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

namespace cpfs3d {

double iou3d(const Box3D& a, const Box3D& b) {
  double inter = 1.0;
  for (int c = 0; c < 3; ++c) {
    const double alo = static_cast<double>(a.center(c)) - 0.5 * a.size(c);
    const double ahi = static_cast<double>(a.center(c)) + 0.5 * a.size(c);
    const double blo = static_cast<double>(b.center(c)) - 0.5 * b.size(c);
    const double bhi = static_cast<double>(b.center(c)) + 0.5 * b.size(c);
    const double o = std::min(ahi, bhi) - std::max(alo, blo);
    if (o <= 0.0) return 0.0;
    inter *= o;
  }
  const double va = static_cast<double>(a.size.x()) * a.size.y() * a.size.z();
  const double vb = static_cast<double>(b.size.x()) * b.size.y() * b.size.z();
  return inter / (va + vb - inter);
}

namespace {

// Stable score-descending order; equal scores keep input order.
std::vector<int> ranked_order(const std::vector<RankedDet>& dets) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return dets[static_cast<size_t>(i)].score > dets[static_cast<size_t>(j)].score;
  });
  return order;
}

// TP flags down the ranked list, consuming GT greedily.
std::vector<char> match_tp(const std::vector<RankedDet>& dets,
                           const std::vector<std::pair<int, Box3D>>& gts,
                           double iou_threshold, const std::vector<int>& order) {
  std::vector<char> used(gts.size(), 0);
  std::vector<char> tp(dets.size(), 0);
  for (int idx : order) {
    const RankedDet& d = dets[static_cast<size_t>(idx)];
    double best_iou = 0.0;
    int best_g = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].first != d.scene) continue;
      const double iou = iou3d(d.box, gts[g].second);
      if (iou > best_iou) {
        best_iou = iou;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0 && best_iou >= iou_threshold) {
      used[static_cast<size_t>(best_g)] = 1;
      tp[static_cast<size_t>(idx)] = 1;
    }
  }
  return tp;
}

}  // namespace

std::vector<PrPoint> pr_curve(const std::vector<RankedDet>& dets,
                              const std::vector<std::pair<int, Box3D>>& gts,
                              double iou_threshold) {
  std::vector<PrPoint> pts;
  if (gts.empty() || dets.empty()) return pts;
  const std::vector<int> order = ranked_order(dets);
  const std::vector<char> tp = match_tp(dets, gts, iou_threshold, order);
  int cum_tp = 0;
  pts.reserve(dets.size());
  for (size_t r = 0; r < order.size(); ++r) {
    if (tp[static_cast<size_t>(order[r])]) ++cum_tp;
    PrPoint p;
    p.recall = static_cast<double>(cum_tp) / static_cast<double>(gts.size());
    p.precision = static_cast<double>(cum_tp) / static_cast<double>(r + 1);
    pts.push_back(p);
  }
  // Monotone envelope: precision at each point becomes the max over the tail.
  for (size_t i = pts.size(); i-- > 1;)
    pts[i - 1].precision = std::max(pts[i - 1].precision, pts[i].precision);
  return pts;
}

double average_precision(const std::vector<RankedDet>& dets,
                         const std::vector<std::pair<int, Box3D>>& gts,
                         double iou_threshold) {
  if (gts.empty()) return 0.0;
  const std::vector<PrPoint> pts = pr_curve(dets, gts, iou_threshold);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (const PrPoint& p : pts) {
    ap += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return ap;
}

APReport evaluate_run(const std::map<std::string, SceneDetections>& detections,
                      const std::vector<PointCloudScene>& gt_scenes,
                      const DatasetSplit& split) {
  std::string missing;
  for (const auto& s : gt_scenes)
    if (detections.find(s.scene_id) == detections.end())
      missing += (missing.empty() ? "" : ", ") + s.scene_id;
  if (!missing.empty())
    throw IoError("evaluate_run: missing detections for scenes: " + missing);

  std::set<int> class_ids;
  std::map<int, std::vector<std::pair<int, Box3D>>> gt_by_class;
  for (size_t si = 0; si < gt_scenes.size(); ++si)
    for (const auto& b : gt_scenes[si].boxes) {
      gt_by_class[b.class_id].emplace_back(static_cast<int>(si), b);
      class_ids.insert(b.class_id);
    }

  std::map<int, std::vector<RankedDet>> det_by_class;
  for (size_t si = 0; si < gt_scenes.size(); ++si) {
    const SceneDetections& sd = detections.at(gt_scenes[si].scene_id);
    for (size_t i = 0; i < sd.boxes.size(); ++i) {
      RankedDet rd;
      rd.scene = static_cast<int>(si);
      rd.score = static_cast<double>(sd.scores[i]);
      rd.box = sd.boxes[i];
      det_by_class[sd.boxes[i].class_id].push_back(rd);
      class_ids.insert(sd.boxes[i].class_id);
    }
  }

  APReport report;
  double sum_n25 = 0, sum_n50 = 0, sum_b25 = 0, sum_b50 = 0;
  for (int cid : class_ids) {
    const auto& gts = gt_by_class[cid];
    const auto& dets = det_by_class[cid];
    if (gts.empty() && dets.empty()) continue;  // nothing to score
    ClassAP ap;
    ap.class_id = cid;
    ap.gt_count = static_cast<int>(gts.size());
    ap.det_count = static_cast<int>(dets.size());
    ap.ap25 = average_precision(dets, gts, 0.25);
    ap.ap50 = average_precision(dets, gts, 0.50);
    ap.pr25 = pr_curve(dets, gts, 0.25);
    report.per_class.push_back(std::move(ap));
    if (split.is_novel(cid)) {
      sum_n25 += report.per_class.back().ap25;
      sum_n50 += report.per_class.back().ap50;
      ++report.novel_classes;
    } else if (split.is_base(cid)) {
      sum_b25 += report.per_class.back().ap25;
      sum_b50 += report.per_class.back().ap50;
      ++report.base_classes;
    }
  }
  if (report.novel_classes > 0) {
    report.mean_novel_ap25 = sum_n25 / report.novel_classes;
    report.mean_novel_ap50 = sum_n50 / report.novel_classes;
  }
  if (report.base_classes > 0) {
    report.mean_base_ap25 = sum_b25 / report.base_classes;
    report.mean_base_ap50 = sum_b50 / report.base_classes;
  }
  return report;
}

std::string report_to_json(const APReport& r) {
  std::ostringstream o;
  o << "{\"per_class\":[";
  for (size_t i = 0; i < r.per_class.size(); ++i) {
    const ClassAP& c = r.per_class[i];
    if (i) o << ",";
    o << "{\"class_id\":" << c.class_id << ",\"gt_count\":" << c.gt_count
      << ",\"det_count\":" << c.det_count << ",\"ap25\":" << format_double(c.ap25)
      << ",\"ap50\":" << format_double(c.ap50) << ",\"pr25\":[";
    for (size_t j = 0; j < c.pr25.size(); ++j) {
      if (j) o << ",";
      o << "[" << format_double(c.pr25[j].recall) << ","
        << format_double(c.pr25[j].precision) << "]";
    }
    o << "]}";
  }
  o << "],\"mean_novel_ap25\":" << format_double(r.mean_novel_ap25)
    << ",\"mean_novel_ap50\":" << format_double(r.mean_novel_ap50)
    << ",\"mean_base_ap25\":" << format_double(r.mean_base_ap25)
    << ",\"mean_base_ap50\":" << format_double(r.mean_base_ap50)
    << ",\"novel_classes\":" << r.novel_classes
    << ",\"base_classes\":" << r.base_classes << "}\n";
  return o.str();
}

std::string report_to_csv(const APReport& r) {
  std::ostringstream o;
  o << "class_id,gt_count,det_count,ap25,ap50\n";
  for (const ClassAP& c : r.per_class)
    o << c.class_id << "," << c.gt_count << "," << c.det_count << ","
      << format_double(c.ap25) << "," << format_double(c.ap50) << "\n";
  o << "mean_novel,," << "," << format_double(r.mean_novel_ap25) << ","
    << format_double(r.mean_novel_ap50) << "\n";
  o << "mean_base,," << "," << format_double(r.mean_base_ap25) << ","
    << format_double(r.mean_base_ap50) << "\n";
  return o.str();
}

}  // namespace cpfs3d
