#include "cpfs3d/scene.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace cpfs3d {

using json = nlohmann::json;

namespace {

void append_vec3(std::string& out, const Vec3f& v) {
  out += '[';
  out += format_float(v.x());
  out += ',';
  out += format_float(v.y());
  out += ',';
  out += format_float(v.z());
  out += ']';
}

Vec3f parse_vec3(const json& j, const char* field) {
  if (!j.is_array() || j.size() != 3)
    throw ParseError(std::string("field '") + field + "' must be an array of 3 numbers");
  for (int i = 0; i < 3; ++i)
    if (!j[i].is_number())
      throw ParseError(std::string("field '") + field + "' must contain numbers");
  return Vec3f(static_cast<float>(j[0].get<double>()),
               static_cast<float>(j[1].get<double>()),
               static_cast<float>(j[2].get<double>()));
}

}  // namespace

std::string scene_to_string(const PointCloudScene& scene) {
  std::string out;
  out.reserve(static_cast<size_t>(scene.points.rows()) * 40 + 1024);
  out += "{\"scene_id\":\"";
  out += scene.scene_id;
  out += "\",\"points\":[";
  for (int i = 0; i < scene.points.rows(); ++i) {
    if (i) out += ',';
    append_vec3(out, scene.points.row(i).transpose());
  }
  out += "],\"point_instance\":[";
  for (size_t i = 0; i < scene.point_instance.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(scene.point_instance[i]);
  }
  out += "],\"boxes\":[";
  for (size_t i = 0; i < scene.boxes.size(); ++i) {
    const Box3D& b = scene.boxes[i];
    if (i) out += ',';
    out += "{\"center\":";
    append_vec3(out, b.center);
    out += ",\"size\":";
    append_vec3(out, b.size);
    out += ",\"heading\":";
    out += format_float(b.heading);
    out += ",\"class_id\":";
    out += std::to_string(b.class_id);
    out += ",\"instance_id\":";
    out += std::to_string(b.instance_id);
    out += '}';
  }
  out += "]}\n";
  return out;
}

void save_scene(const PointCloudScene& scene, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  const std::string text = scene_to_string(scene);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw IoError("write failed: " + path);
}

PointCloudScene scene_from_string(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError(origin + ": top level must be an object");
  for (const char* key : {"scene_id", "points", "point_instance", "boxes"})
    if (!j.contains(key)) throw ParseError(origin + ": missing field '" + key + "'");

  PointCloudScene s;
  if (!j["scene_id"].is_string()) throw ParseError(origin + ": field 'scene_id' must be a string");
  s.scene_id = j["scene_id"].get<std::string>();

  const json& pts = j["points"];
  if (!pts.is_array()) throw ParseError(origin + ": field 'points' must be an array");
  s.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i)
    s.points.row(static_cast<Eigen::Index>(i)) = parse_vec3(pts[i], "points").transpose();

  const json& pi = j["point_instance"];
  if (!pi.is_array()) throw ParseError(origin + ": field 'point_instance' must be an array");
  s.point_instance.reserve(pi.size());
  for (const auto& e : pi) {
    if (!e.is_number_integer()) throw ParseError(origin + ": field 'point_instance' must contain integers");
    s.point_instance.push_back(e.get<int>());
  }

  const json& boxes = j["boxes"];
  if (!boxes.is_array()) throw ParseError(origin + ": field 'boxes' must be an array");
  for (const auto& e : boxes) {
    Box3D b;
    for (const char* key : {"center", "size", "heading", "class_id", "instance_id"})
      if (!e.contains(key)) throw ParseError(origin + ": box missing field '" + key + "'");
    b.center = parse_vec3(e["center"], "center");
    b.size = parse_vec3(e["size"], "size");
    b.heading = static_cast<float>(e["heading"].get<double>());
    b.class_id = e["class_id"].get<int>();
    b.instance_id = e["instance_id"].get<int>();
    s.boxes.push_back(b);
  }

  try {
    validate_scene(s);
  } catch (const ParseError& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return s;
}

PointCloudScene load_scene(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return scene_from_string(ss.str(), path);
}

void validate_scene(const PointCloudScene& s) {
  if (s.points.rows() != static_cast<Eigen::Index>(s.point_instance.size()))
    throw ParseError("field 'point_instance' length does not match 'points'");
  std::set<std::pair<int, int>> keys;
  std::set<int> instance_ids;
  for (const auto& b : s.boxes) {
    if (!(b.size.x() > 0.0f && b.size.y() > 0.0f && b.size.z() > 0.0f))
      throw ParseError("field 'size' must be positive for instance " + std::to_string(b.instance_id));
    if (b.class_id < 0) throw ParseError("field 'class_id' must be >= 0");
    if (b.instance_id < 0) throw ParseError("field 'instance_id' must be >= 0");
    if (!keys.insert({b.class_id, b.instance_id}).second)
      throw ParseError("duplicate (class_id, instance_id) pair in 'boxes'");
    instance_ids.insert(b.instance_id);
  }
  for (int inst : s.point_instance) {
    if (inst == kBackgroundInstance) continue;
    if (!instance_ids.count(inst))
      throw ParseError("field 'point_instance' refers to unknown instance " + std::to_string(inst));
  }
}

void save_split(const DatasetSplit& split, const std::string& path) {
  std::string out = "{\"base\":[";
  for (size_t i = 0; i < split.base_class_ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(split.base_class_ids[i]);
  }
  out += "],\"novel\":[";
  for (size_t i = 0; i < split.novel_class_ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(split.novel_class_ids[i]);
  }
  out += "],\"k\":";
  out += std::to_string(split.k_shots);
  out += ",\"annotated\":[";
  for (size_t i = 0; i < split.annotated.size(); ++i) {
    if (i) out += ',';
    out += "[\"" + split.annotated[i].first + "\"," + std::to_string(split.annotated[i].second) + "]";
  }
  out += "]}\n";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path);
}

DatasetSplit load_split(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  DatasetSplit s;
  for (const char* key : {"base", "novel", "k", "annotated"})
    if (!j.contains(key)) throw ParseError(path + ": missing field '" + key + "'");
  for (const auto& e : j["base"]) s.base_class_ids.push_back(e.get<int>());
  for (const auto& e : j["novel"]) s.novel_class_ids.push_back(e.get<int>());
  s.k_shots = j["k"].get<int>();
  for (const auto& e : j["annotated"]) {
    if (!e.is_array() || e.size() != 2)
      throw ParseError(path + ": field 'annotated' entries must be [scene_id, instance_id]");
    s.annotated.emplace_back(e[0].get<std::string>(), e[1].get<int>());
  }
  for (int b : s.base_class_ids)
    for (int n : s.novel_class_ids)
      if (b == n) throw ParseError(path + ": field 'base'/'novel' overlap on class " + std::to_string(b));
  return s;
}

}  // namespace cpfs3d
