#include "cpfs3d/detector.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cpfs3d {

std::vector<Detection> nms_per_class(const std::vector<Detection>& dets, float iou_thresh) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return dets[static_cast<size_t>(i)].score > dets[static_cast<size_t>(j)].score;
  });

  std::vector<char> suppressed(dets.size(), 0);
  std::vector<Detection> kept;
  for (size_t a = 0; a < order.size(); ++a) {
    const int i = order[a];
    if (suppressed[static_cast<size_t>(i)]) continue;
    kept.push_back(dets[static_cast<size_t>(i)]);
    Box3D bi;
    bi.center = dets[static_cast<size_t>(i)].center;
    bi.size = dets[static_cast<size_t>(i)].size;
    for (size_t b = a + 1; b < order.size(); ++b) {
      const int j = order[b];
      if (suppressed[static_cast<size_t>(j)]) continue;
      if (dets[static_cast<size_t>(j)].class_id != dets[static_cast<size_t>(i)].class_id)
        continue;
      Box3D bj;
      bj.center = dets[static_cast<size_t>(j)].center;
      bj.size = dets[static_cast<size_t>(j)].size;
      if (iou3d(bi, bj) > iou_thresh) suppressed[static_cast<size_t>(j)] = 1;
    }
  }
  return kept;
}

std::string detections_to_json(const std::vector<Detection>& dets) {
  std::ostringstream o;
  o << "[";
  for (size_t i = 0; i < dets.size(); ++i) {
    const Detection& d = dets[i];
    if (i) o << ",";
    o << "{\"center\":[" << format_float(d.center.x()) << "," << format_float(d.center.y())
      << "," << format_float(d.center.z()) << "],\"size\":[" << format_float(d.size.x())
      << "," << format_float(d.size.y()) << "," << format_float(d.size.z())
      << "],\"class_id\":" << d.class_id << ",\"score\":" << format_float(d.score) << "}";
  }
  o << "]\n";
  return o.str();
}

std::vector<Detection> detections_from_json(const std::string& text,
                                            const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ": invalid detection JSON: " + e.what());
  }
  if (!j.is_array()) throw ParseError(origin + ": detection file must be a JSON array");
  std::vector<Detection> out;
  for (size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    const std::string at = origin + ": detection " + std::to_string(i);
    if (!e.is_object()) throw ParseError(at + ": not an object");
    for (const char* key : {"center", "size", "class_id", "score"})
      if (!e.contains(key)) throw ParseError(at + ": missing field \"" + key + "\"");
    Detection d;
    for (int c = 0; c < 3; ++c) {
      d.center(c) = e["center"].at(static_cast<size_t>(c)).get<float>();
      d.size(c) = e["size"].at(static_cast<size_t>(c)).get<float>();
    }
    if (!(d.size.x() > 0 && d.size.y() > 0 && d.size.z() > 0))
      throw ParseError(at + ": field \"size\" must be positive");
    d.class_id = e["class_id"].get<int>();
    d.score = e["score"].get<float>();
    out.push_back(d);
  }
  return out;
}

void save_detections(const std::vector<Detection>& dets, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << detections_to_json(dets);
  if (!f) throw IoError("write failed: " + path);
}

std::vector<Detection> load_detections(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return detections_from_json(ss.str(), path);
}

}  // namespace cpfs3d
