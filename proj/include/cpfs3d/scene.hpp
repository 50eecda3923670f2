#pragma once

#include "cpfs3d/core.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cpfs3d {

// Axis-aligned box; heading is carried as a constant-zero field for format
// forward-compatibility.
struct Box3D {
  Vec3f center = Vec3f::Zero();
  Vec3f size = Vec3f::Ones();
  float heading = 0.0f;
  int class_id = 0;
  int instance_id = 0;

  bool contains(const Vec3f& p) const {
    const Vec3f h = size * 0.5f;
    return std::abs(p.x() - center.x()) <= h.x() &&
           std::abs(p.y() - center.y()) <= h.y() &&
           std::abs(p.z() - center.z()) <= h.z();
  }

  // Euclidean distance from p to the box surface; 0 for points on it,
  // positive both inside and outside.
  float surface_distance(const Vec3f& p) const {
    const Vec3f h = size * 0.5f;
    const Vec3f q = (p - center).cwiseAbs() - h;
    const float outside = q.cwiseMax(0.0f).norm();
    if (outside > 0.0f) return outside;
    return -q.maxCoeff();  // q <= 0 inside; nearest face is max component
  }

  float volume() const { return size.x() * size.y() * size.z(); }

  bool operator==(const Box3D& o) const {
    return center == o.center && size == o.size && heading == o.heading &&
           class_id == o.class_id && instance_id == o.instance_id;
  }
};

constexpr int kBackgroundInstance = -1;

struct PointCloudScene {
  std::string scene_id;
  Mat3X points;                     // N x 3, meters
  std::vector<int> point_instance;  // N, instance_id or -1
  std::vector<Box3D> boxes;

  int num_points() const { return static_cast<int>(points.rows()); }

  const Box3D* find_box(int instance_id) const {
    for (const auto& b : boxes)
      if (b.instance_id == instance_id) return &b;
    return nullptr;
  }

  bool operator==(const PointCloudScene& o) const {
    return scene_id == o.scene_id && points == o.points &&
           point_instance == o.point_instance && boxes == o.boxes;
  }
};

// One primitive surface patch of a shape program. Shapes are unions of
// planar quads (optionally tilted), which makes every category an explicit
// composition of faces, edges, and corners.
struct QuadPatch {
  Vec3f origin;  // one corner
  Vec3f u;       // first edge vector
  Vec3f v;       // second edge vector
  float area() const { return u.cross(v).norm(); }
};

struct CategorySpec {
  int class_id = 0;
  std::string name;
  // Shape program: emits the quads of one instance, given per-axis extents.
  // Deterministic in (extents); all randomness lives in the sampler.
  std::vector<QuadPatch> (*shape_program)(const Vec3f& extents) = nullptr;
  Vec3f size_min = Vec3f::Constant(0.3f);
  Vec3f size_max = Vec3f::Constant(1.0f);
  int points_min = 150;
  int points_max = 400;
};

struct DatasetSplit {
  std::vector<int> base_class_ids;
  std::vector<int> novel_class_ids;
  int k_shots = 0;
  // Designated annotated novel instances: (scene_id, instance_id).
  std::vector<std::pair<std::string, int>> annotated;

  bool is_novel(int class_id) const {
    for (int c : novel_class_ids)
      if (c == class_id) return true;
    return false;
  }
  bool is_base(int class_id) const {
    for (int c : base_class_ids)
      if (c == class_id) return true;
    return false;
  }
  bool is_designated(const std::string& scene_id, int instance_id) const {
    for (const auto& [s, i] : annotated)
      if (s == scene_id && i == instance_id) return true;
    return false;
  }
};

// Scene / split persistence. Writing is hand-rolled so the byte layout is
// canonical; reading goes through a JSON parser and validates invariants.
void save_scene(const PointCloudScene& scene, const std::string& path);
PointCloudScene load_scene(const std::string& path);
std::string scene_to_string(const PointCloudScene& scene);
PointCloudScene scene_from_string(const std::string& text, const std::string& origin);

void save_split(const DatasetSplit& split, const std::string& path);
DatasetSplit load_split(const std::string& path);

// Invariant check shared by generator and loader; throws ParseError naming
// the offending field.
void validate_scene(const PointCloudScene& scene);

}  // namespace cpfs3d
