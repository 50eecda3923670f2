#include "cpfs3d/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

namespace cpfs3d {

namespace {

using Quads = std::vector<QuadPatch>;

QuadPatch quad(const Vec3f& origin, const Vec3f& u, const Vec3f& v) { return {origin, u, v}; }

// Horizontal rectangle at height z spanning [-sx/2, sx/2] x [-sy/2, sy/2].
QuadPatch hplane(float sx, float sy, float z) {
  return quad({-sx / 2, -sy / 2, z}, {sx, 0, 0}, {0, sy, 0});
}

// Vertical rectangle normal to y at offset y, z in [z0, z1].
QuadPatch xz_plane(float sx, float y, float z0, float z1) {
  return quad({-sx / 2, y, z0}, {sx, 0, 0}, {0, 0, z1 - z0});
}

// Vertical rectangle normal to x at offset x, z in [z0, z1].
QuadPatch yz_plane(float sy, float x, float z0, float z1) {
  return quad({x, -sy / 2, z0}, {0, sy, 0}, {0, 0, z1 - z0});
}

// A thin leg as two crossed vertical strips centered at (x, y).
void add_leg(Quads& q, float x, float y, float z0, float z1, float w) {
  q.push_back(quad({x - w / 2, y, z0}, {w, 0, 0}, {0, 0, z1 - z0}));
  q.push_back(quad({x, y - w / 2, z0}, {0, w, 0}, {0, 0, z1 - z0}));
}

Quads shell_closed(const Vec3f& s) {
  Quads q;
  q.push_back(hplane(s.x(), s.y(), -s.z() / 2));
  q.push_back(hplane(s.x(), s.y(), s.z() / 2));
  q.push_back(xz_plane(s.x(), -s.y() / 2, -s.z() / 2, s.z() / 2));
  q.push_back(xz_plane(s.x(), s.y() / 2, -s.z() / 2, s.z() / 2));
  q.push_back(yz_plane(s.y(), -s.x() / 2, -s.z() / 2, s.z() / 2));
  q.push_back(yz_plane(s.y(), s.x() / 2, -s.z() / 2, s.z() / 2));
  return q;
}

Quads shell_open_top(const Vec3f& s) {
  Quads q = shell_closed(s);
  q.erase(q.begin() + 1);  // drop the top face
  return q;
}

Quads table_shape(const Vec3f& s) {
  Quads q;
  q.push_back(hplane(s.x(), s.y(), s.z() / 2));
  const float w = 0.05f;
  const float ix = s.x() / 2 - w, iy = s.y() / 2 - w;
  add_leg(q, -ix, -iy, -s.z() / 2, s.z() / 2, w);
  add_leg(q, ix, -iy, -s.z() / 2, s.z() / 2, w);
  add_leg(q, -ix, iy, -s.z() / 2, s.z() / 2, w);
  add_leg(q, ix, iy, -s.z() / 2, s.z() / 2, w);
  return q;
}

Quads shelf_shape(const Vec3f& s) {
  Quads q;
  q.push_back(hplane(s.x(), s.y(), -s.z() / 2));
  q.push_back(hplane(s.x(), s.y(), 0.0f));
  q.push_back(hplane(s.x(), s.y(), s.z() / 2));
  q.push_back(yz_plane(s.y(), -s.x() / 2, -s.z() / 2, s.z() / 2));
  q.push_back(yz_plane(s.y(), s.x() / 2, -s.z() / 2, s.z() / 2));
  return q;
}

Quads drum_shape(const Vec3f& s) {
  Quads q;
  const int facets = 8;
  const float rx = s.x() / 2, ry = s.y() / 2;
  for (int i = 0; i < facets; ++i) {
    const float a0 = 2.0f * static_cast<float>(M_PI) * i / facets;
    const float a1 = 2.0f * static_cast<float>(M_PI) * (i + 1) / facets;
    const Vec3f p0(rx * std::cos(a0), ry * std::sin(a0), -s.z() / 2);
    const Vec3f p1(rx * std::cos(a1), ry * std::sin(a1), -s.z() / 2);
    q.push_back(quad(p0, p1 - p0, {0, 0, s.z()}));
  }
  const float t = 0.707f;
  q.push_back(hplane(s.x() * t, s.y() * t, s.z() / 2));  // inscribed lid
  return q;
}

Quads bracket_shape(const Vec3f& s) {
  Quads q;
  q.push_back(xz_plane(s.x(), -s.y() / 2, -s.z() / 2, s.z() / 2));
  q.push_back(yz_plane(s.y(), -s.x() / 2, -s.z() / 2, s.z() / 2));
  return q;
}

Quads chair_shape(const Vec3f& s) {
  Quads q;
  const float seat_z = -s.z() / 2 + 0.45f * s.z();
  q.push_back(hplane(s.x(), s.y(), seat_z));
  q.push_back(xz_plane(s.x(), s.y() / 2, seat_z, s.z() / 2));  // back rest
  const float w = 0.04f;
  const float ix = s.x() / 2 - w, iy = s.y() / 2 - w;
  add_leg(q, -ix, -iy, -s.z() / 2, seat_z, w);
  add_leg(q, ix, -iy, -s.z() / 2, seat_z, w);
  add_leg(q, -ix, iy, -s.z() / 2, seat_z, w);
  add_leg(q, ix, iy, -s.z() / 2, seat_z, w);
  return q;
}

Quads channel_shape(const Vec3f& s) {
  Quads q;
  q.push_back(hplane(s.x(), s.y(), -s.z() / 2));
  q.push_back(xz_plane(s.x(), -s.y() / 2, -s.z() / 2, s.z() / 2));
  q.push_back(xz_plane(s.x(), s.y() / 2, -s.z() / 2, s.z() / 2));
  return q;
}

Quads tframe_shape(const Vec3f& s) {
  Quads q;
  q.push_back(xz_plane(s.x(), 0.0f, -s.z() / 2, s.z() / 2));
  q.push_back(hplane(s.x(), s.y(), s.z() / 2));
  return q;
}

Quads tent_shape(const Vec3f& s) {
  Quads q;
  // Two tilted faces meeting at a ridge along x.
  q.push_back(quad({-s.x() / 2, -s.y() / 2, -s.z() / 2}, {s.x(), 0, 0}, Vec3f(0, s.y() / 2, s.z())));
  q.push_back(quad({-s.x() / 2, s.y() / 2, -s.z() / 2}, {s.x(), 0, 0}, Vec3f(0, -s.y() / 2, s.z())));
  return q;
}

Quads stool_shape(const Vec3f& s) {
  Quads q;
  q.push_back(hplane(s.x(), s.y(), s.z() / 2));
  const float w = 0.04f;
  add_leg(q, -s.x() / 2 + w, -s.y() / 2 + w, -s.z() / 2, s.z() / 2, w);
  add_leg(q, s.x() / 2 - w, -s.y() / 2 + w, -s.z() / 2, s.z() / 2, w);
  add_leg(q, 0.0f, s.y() / 2 - w, -s.z() / 2, s.z() / 2, w);
  return q;
}

Quads hframe_shape(const Vec3f& s) {
  Quads q;
  q.push_back(yz_plane(s.y(), -s.x() / 2, -s.z() / 2, s.z() / 2));
  q.push_back(yz_plane(s.y(), s.x() / 2, -s.z() / 2, s.z() / 2));
  q.push_back(hplane(s.x(), s.y(), 0.0f));
  return q;
}

CategorySpec make_spec(int id, const char* name, Quads (*program)(const Vec3f&), Vec3f lo, Vec3f hi,
                       int pmin, int pmax) {
  CategorySpec c;
  c.class_id = id;
  c.name = name;
  c.shape_program = program;
  c.size_min = lo;
  c.size_max = hi;
  c.points_min = pmin;
  c.points_max = pmax;
  return c;
}

}  // namespace

std::vector<CategorySpec> default_category_specs() {
  std::vector<CategorySpec> specs;
  specs.push_back(make_spec(0, "crate", shell_closed, {0.4f, 0.4f, 0.4f}, {0.9f, 0.9f, 0.9f}, 180, 400));
  specs.push_back(make_spec(1, "open_bin", shell_open_top, {0.35f, 0.35f, 0.3f}, {0.8f, 0.8f, 0.6f}, 160, 360));
  specs.push_back(make_spec(2, "table", table_shape, {0.9f, 0.6f, 0.55f}, {1.6f, 1.1f, 0.8f}, 180, 400));
  specs.push_back(make_spec(3, "shelf", shelf_shape, {0.6f, 0.25f, 0.9f}, {1.2f, 0.45f, 1.8f}, 200, 420));
  specs.push_back(make_spec(4, "drum", drum_shape, {0.35f, 0.35f, 0.5f}, {0.6f, 0.6f, 1.0f}, 160, 340));
  specs.push_back(make_spec(5, "bracket", bracket_shape, {0.4f, 0.4f, 0.5f}, {0.9f, 0.9f, 1.2f}, 150, 320));
  specs.push_back(make_spec(6, "chair", chair_shape, {0.4f, 0.4f, 0.8f}, {0.55f, 0.55f, 1.0f}, 160, 340));
  specs.push_back(make_spec(7, "channel", channel_shape, {0.5f, 0.3f, 0.25f}, {1.0f, 0.6f, 0.5f}, 150, 320));
  specs.push_back(make_spec(8, "tframe", tframe_shape, {0.5f, 0.4f, 0.7f}, {1.0f, 0.8f, 1.2f}, 150, 320));
  specs.push_back(make_spec(9, "tent", tent_shape, {0.5f, 0.5f, 0.4f}, {1.0f, 1.0f, 0.8f}, 150, 320));
  specs.push_back(make_spec(10, "stool", stool_shape, {0.3f, 0.3f, 0.4f}, {0.45f, 0.45f, 0.55f}, 150, 300));
  specs.push_back(make_spec(11, "hframe", hframe_shape, {0.5f, 0.4f, 0.4f}, {1.0f, 0.8f, 0.9f}, 150, 320));
  return specs;
}

void validate_specs(const std::vector<CategorySpec>& specs) {
  if (specs.empty()) throw ConfigError("spec set is empty");
  for (const auto& s : specs) {
    for (int a = 0; a < 3; ++a) {
      if (!(s.size_min[a] > 0.0f) || !(s.size_max[a] >= s.size_min[a]))
        throw ConfigError("category '" + s.name + "': empty or non-positive size_range on axis " +
                          std::to_string(a));
    }
    if (s.points_min < 1 || s.points_max < s.points_min)
      throw ConfigError("category '" + s.name + "': invalid points_per_object range");
    if (!s.shape_program) throw ConfigError("category '" + s.name + "': missing shape program");
  }
}

namespace {

struct PlacedObject {
  int class_id;
  int instance_id;
  Vec3f center;
  Vec3f extents;
  std::vector<Vec3f> points;  // pre-jitter, world frame
};

// Distributes n points over quads proportionally to area (largest remainder).
std::vector<int> area_allocate(const Quads& quads, int n) {
  std::vector<double> areas(quads.size());
  double total = 0;
  for (size_t i = 0; i < quads.size(); ++i) {
    areas[i] = quads[i].area();
    total += areas[i];
  }
  std::vector<int> counts(quads.size(), 0);
  if (total <= 0) return counts;
  std::vector<std::pair<double, size_t>> rema(quads.size());
  int assigned = 0;
  for (size_t i = 0; i < quads.size(); ++i) {
    const double exact = n * areas[i] / total;
    counts[i] = static_cast<int>(exact);
    assigned += counts[i];
    rema[i] = {exact - counts[i], i};
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int i = 0; i < n - assigned; ++i) counts[rema[static_cast<size_t>(i)].second]++;
  return counts;
}

Vec3f sample_extents(const CategorySpec& spec, Rng& rng) {
  Vec3f e;
  for (int a = 0; a < 3; ++a)
    e[a] = static_cast<float>(rng.uniform(spec.size_min[a], spec.size_max[a]));
  return e;
}

bool footprints_overlap(const Vec3f& c0, const Vec3f& e0, const Vec3f& c1, const Vec3f& e1, float gap) {
  return std::abs(c0.x() - c1.x()) < (e0.x() + e1.x()) / 2 + gap &&
         std::abs(c0.y() - c1.y()) < (e0.y() + e1.y()) / 2 + gap;
}

PointCloudScene assemble_scene(const std::vector<CategorySpec>& all_specs,
                               const std::vector<int>& object_class_ids,
                               const SceneGenParams& params, uint64_t rng_seed,
                               const std::string& scene_id) {
  validate_specs(all_specs);
  Rng rng(rng_seed);

  auto spec_of = [&](int class_id) -> const CategorySpec& {
    for (const auto& s : all_specs)
      if (s.class_id == class_id) return s;
    throw ConfigError("unknown class id " + std::to_string(class_id));
  };

  std::vector<PlacedObject> objects;
  for (size_t oi = 0; oi < object_class_ids.size(); ++oi) {
    const CategorySpec& spec = spec_of(object_class_ids[oi]);
    const Vec3f extents = sample_extents(spec, rng);
    const float lo = params.wall_margin, hi = params.room_xy - params.wall_margin;
    bool placed = false;
    Vec3f center = Vec3f::Zero();
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      center = Vec3f(static_cast<float>(rng.uniform(lo + extents.x() / 2, hi - extents.x() / 2)),
                     static_cast<float>(rng.uniform(lo + extents.y() / 2, hi - extents.y() / 2)),
                     extents.z() / 2);
      placed = true;
      for (const auto& other : objects)
        if (footprints_overlap(center, extents, other.center, other.extents, params.gap)) {
          placed = false;
          break;
        }
    }
    if (!placed) continue;  // room too crowded; drop this object

    PlacedObject obj;
    obj.class_id = spec.class_id;
    obj.instance_id = static_cast<int>(objects.size());
    obj.center = center;
    obj.extents = extents;
    const Quads quads = spec.shape_program(extents);
    const int n_points =
        spec.points_min + static_cast<int>(rng.uniform_int(spec.points_max - spec.points_min + 1));
    const std::vector<int> counts = area_allocate(quads, n_points);
    for (size_t qi = 0; qi < quads.size(); ++qi) {
      for (int p = 0; p < counts[qi]; ++p) {
        const float a = static_cast<float>(rng.uniform());
        const float b = static_cast<float>(rng.uniform());
        obj.points.push_back(center + quads[qi].origin + a * quads[qi].u + b * quads[qi].v);
      }
    }
    objects.push_back(std::move(obj));
  }

  int n_object_points = 0;
  for (const auto& o : objects) n_object_points += static_cast<int>(o.points.size());

  // Background fraction of the final cloud.
  const double frac = rng.uniform(params.background_min, params.background_max);
  int n_bg = static_cast<int>(std::lround(frac * n_object_points / (1.0 - frac)));
  n_bg = std::max(n_bg, 1024 - n_object_points);  // scenes stay >= 1024 points
  const int n_floor = n_bg * 6 / 10;
  const int n_wall = (n_bg - n_floor) / 2;

  PointCloudScene scene;
  scene.scene_id = scene_id;
  const int total = n_object_points + n_floor + 2 * n_wall;
  scene.points.resize(total, 3);
  scene.point_instance.assign(static_cast<size_t>(total), kBackgroundInstance);

  int row = 0;
  for (const auto& o : objects) {
    for (const auto& p : o.points) {
      scene.points.row(row) = p.transpose();
      scene.point_instance[static_cast<size_t>(row)] = o.instance_id;
      ++row;
    }
  }
  for (int i = 0; i < n_floor; ++i, ++row)
    scene.points.row(row) = Vec3f(static_cast<float>(rng.uniform(0, params.room_xy)),
                                  static_cast<float>(rng.uniform(0, params.room_xy)), 0.0f)
                                .transpose();
  for (int i = 0; i < n_wall; ++i, ++row)
    scene.points.row(row) = Vec3f(static_cast<float>(rng.uniform(0, params.room_xy)), 0.0f,
                                  static_cast<float>(rng.uniform(0, params.room_z)))
                                .transpose();
  for (int i = 0; i < n_wall; ++i, ++row)
    scene.points.row(row) = Vec3f(0.0f, static_cast<float>(rng.uniform(0, params.room_xy)),
                                  static_cast<float>(rng.uniform(0, params.room_z)))
                                .transpose();

  for (int i = 0; i < scene.points.rows(); ++i)
    for (int a = 0; a < 3; ++a)
      scene.points(i, a) += static_cast<float>(rng.normal(0.0, params.noise_sigma));

  for (const auto& o : objects) {
    Box3D b;
    b.center = o.center;
    b.size = o.extents;
    b.class_id = o.class_id;
    b.instance_id = o.instance_id;
    scene.boxes.push_back(b);
  }
  validate_scene(scene);
  return scene;
}

}  // namespace

PointCloudScene generate_scene(const std::vector<CategorySpec>& spec_set,
                               const SceneGenParams& params, uint64_t rng_seed,
                               const std::string& scene_id) {
  validate_specs(spec_set);
  if (params.objects_min < 1 || params.objects_max < params.objects_min)
    throw ConfigError("objects_per_scene range is invalid");
  Rng rng(rng_seed);
  const int n_obj = params.objects_min +
                    static_cast<int>(rng.uniform_int(params.objects_max - params.objects_min + 1));
  std::vector<int> class_ids(static_cast<size_t>(n_obj));
  for (auto& c : class_ids)
    c = spec_set[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(spec_set.size())))].class_id;
  const std::string id = scene_id.empty() ? "scene_" + std::to_string(rng_seed) : scene_id;
  return assemble_scene(spec_set, class_ids, params, rng.next_u64(), id);
}

PointCloudScene generate_scene_with_classes(const std::vector<CategorySpec>& all_specs,
                                            const std::vector<int>& object_class_ids,
                                            const SceneGenParams& params, uint64_t rng_seed,
                                            const std::string& scene_id) {
  return assemble_scene(all_specs, object_class_ids, params, rng_seed, scene_id);
}

Benchmark generate_benchmark(const std::vector<CategorySpec>& specs, const BenchmarkParams& params,
                             uint64_t rng_seed) {
  validate_specs(specs);
  if (params.n_base < 2) throw ConfigError("n_base must be >= 2");
  if (params.n_novel < 1) throw ConfigError("n_novel must be >= 1");
  if (params.k < 1) throw ConfigError("k must be >= 1");
  if (params.n_base + params.n_novel > static_cast<int>(specs.size()))
    throw ConfigError("n_base + n_novel exceeds available categories (" +
                      std::to_string(specs.size()) + ")");
  if (params.k > params.n_scenes_train)
    throw ConfigError("fewer train scenes than k; cannot designate " + std::to_string(params.k) +
                      " novel instances");

  Rng rng(rng_seed);
  Rng split_rng = rng.fork(1);
  Rng scene_rng = rng.fork(2);

  std::vector<int> class_ids(specs.size());
  for (size_t i = 0; i < specs.size(); ++i) class_ids[i] = specs[i].class_id;
  split_rng.shuffle(class_ids);

  Benchmark bench;
  bench.split.k_shots = params.k;
  bench.split.base_class_ids.assign(class_ids.begin(), class_ids.begin() + params.n_base);
  bench.split.novel_class_ids.assign(class_ids.begin() + params.n_base,
                                     class_ids.begin() + params.n_base + params.n_novel);
  std::sort(bench.split.base_class_ids.begin(), bench.split.base_class_ids.end());
  std::sort(bench.split.novel_class_ids.begin(), bench.split.novel_class_ids.end());

  const auto& base_ids = bench.split.base_class_ids;
  const auto& novel_ids = bench.split.novel_class_ids;
  std::vector<int> all_ids = base_ids;
  all_ids.insert(all_ids.end(), novel_ids.begin(), novel_ids.end());
  std::sort(all_ids.begin(), all_ids.end());

  // Which train scene receives each designated novel instance.
  std::vector<std::vector<int>> injections(static_cast<size_t>(params.n_scenes_train));
  for (int nc : novel_ids) {
    const std::vector<int> picks = split_rng.sample_without_replacement(params.n_scenes_train, params.k);
    for (int scene_idx : picks) injections[static_cast<size_t>(scene_idx)].push_back(nc);
  }

  char buf[64];
  for (int i = 0; i < params.n_scenes_train; ++i) {
    const int n_obj = params.scene.objects_min +
                      static_cast<int>(scene_rng.uniform_int(params.scene.objects_max -
                                                             params.scene.objects_min + 1));
    std::vector<int> classes(static_cast<size_t>(n_obj));
    for (auto& c : classes)
      c = base_ids[static_cast<size_t>(scene_rng.uniform_int(static_cast<int64_t>(base_ids.size())))];
    // Designated novel instances are appended last so dropped placements
    // (which only ever drop from the tail attempt loop) cannot silently
    // remove them; placement failure for an injection is an error.
    const size_t n_base_objs = classes.size();
    for (int nc : injections[static_cast<size_t>(i)]) classes.push_back(nc);
    std::snprintf(buf, sizeof(buf), "train_%04d", i);
    PointCloudScene s =
        generate_scene_with_classes(specs, classes, params.scene, scene_rng.next_u64(), buf);
    for (int nc : injections[static_cast<size_t>(i)]) {
      bool found = false;
      for (const auto& b : s.boxes)
        if (b.class_id == nc && !bench.split.is_designated(s.scene_id, b.instance_id)) {
          bench.split.annotated.emplace_back(s.scene_id, b.instance_id);
          found = true;
          break;
        }
      if (!found)
        throw ConfigError("failed to place designated novel instance of class " +
                          std::to_string(nc) + " in scene " + s.scene_id);
    }
    (void)n_base_objs;
    bench.train_scenes.push_back(std::move(s));
  }

  std::vector<std::vector<int>> test_classes(static_cast<size_t>(params.n_scenes_test));
  for (int i = 0; i < params.n_scenes_test; ++i) {
    const int n_obj = params.scene.objects_min +
                      static_cast<int>(scene_rng.uniform_int(params.scene.objects_max -
                                                             params.scene.objects_min + 1));
    test_classes[static_cast<size_t>(i)].resize(static_cast<size_t>(n_obj));
    for (auto& c : test_classes[static_cast<size_t>(i)])
      c = all_ids[static_cast<size_t>(scene_rng.uniform_int(static_cast<int64_t>(all_ids.size())))];
  }
  // Every novel class shows up in the test set.
  for (size_t ni = 0; ni < novel_ids.size(); ++ni) {
    bool present = false;
    for (const auto& tc : test_classes)
      for (int c : tc)
        if (c == novel_ids[ni]) present = true;
    if (!present && params.n_scenes_test > 0)
      test_classes[ni % static_cast<size_t>(params.n_scenes_test)].push_back(novel_ids[ni]);
  }
  for (int i = 0; i < params.n_scenes_test; ++i) {
    std::snprintf(buf, sizeof(buf), "test_%04d", i);
    bench.test_scenes.push_back(generate_scene_with_classes(
        specs, test_classes[static_cast<size_t>(i)], params.scene, scene_rng.next_u64(), buf));
  }

  // Exactly k designated shots per novel class.
  for (int nc : novel_ids) {
    int count = 0;
    for (const auto& [sid, iid] : bench.split.annotated) {
      (void)sid;
      for (const auto& sc : bench.train_scenes)
        if (sc.scene_id == sid)
          for (const auto& b : sc.boxes)
            if (b.instance_id == iid && b.class_id == nc) ++count;
    }
    if (count != params.k)
      throw ConfigError("novel class " + std::to_string(nc) + " has " + std::to_string(count) +
                        " designated shots, expected " + std::to_string(params.k));
  }
  return bench;
}

void save_benchmark(const Benchmark& bench, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "scenes", ec);
  if (ec) throw IoError("cannot create directory: " + dir);
  for (const auto& s : bench.train_scenes)
    save_scene(s, (fs::path(dir) / "scenes" / (s.scene_id + ".scene.json")).string());
  for (const auto& s : bench.test_scenes)
    save_scene(s, (fs::path(dir) / "scenes" / (s.scene_id + ".scene.json")).string());
  save_split(bench.split, (fs::path(dir) / "split.json").string());
}

LoadedDataset load_benchmark(const std::string& dir) {
  namespace fs = std::filesystem;
  LoadedDataset ds;
  ds.split = load_split((fs::path(dir) / "split.json").string());
  std::vector<std::string> names;
  const fs::path scene_dir = fs::path(dir) / "scenes";
  if (!fs::exists(scene_dir)) throw IoError("missing scenes directory under " + dir);
  for (const auto& e : fs::directory_iterator(scene_dir))
    if (e.path().extension() == ".json") names.push_back(e.path().string());
  std::sort(names.begin(), names.end());
  for (const auto& n : names) {
    PointCloudScene s = load_scene(n);
    if (s.scene_id.rfind("train_", 0) == 0)
      ds.train_scenes.push_back(std::move(s));
    else
      ds.test_scenes.push_back(std::move(s));
  }
  return ds;
}

std::vector<Box3D> visible_boxes(const PointCloudScene& scene, const DatasetSplit& split,
                                 Stage stage) {
  std::vector<Box3D> out;
  for (const auto& b : scene.boxes) {
    if (split.is_base(b.class_id)) {
      out.push_back(b);
    } else if (stage == Stage::kFinetune && split.is_designated(scene.scene_id, b.instance_id)) {
      out.push_back(b);
    }
  }
  return out;
}

}  // namespace cpfs3d
