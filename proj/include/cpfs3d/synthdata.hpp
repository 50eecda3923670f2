#pragma once

#include "cpfs3d/scene.hpp"

#include <string>
#include <vector>

namespace cpfs3d {

// Generation knobs; difficulty (noise, clutter, density) is configurable
// rather than fixed.
struct SceneGenParams {
  float room_xy = 6.0f;        // square room side, meters
  float room_z = 3.0f;         // wall height
  float wall_margin = 0.8f;    // objects keep this distance from walls
  float gap = 0.10f;           // minimum footprint gap between objects
  float noise_sigma = 0.01f;   // Gaussian jitter applied to every point
  float background_min = 0.30f;
  float background_max = 0.50f;
  int objects_min = 4;
  int objects_max = 8;
};

// The built-in category library: twelve shape programs composed from a
// shared vocabulary of planar patches (slabs, open boxes, legs, brackets,
// faceted drums, tables, shelves, frames, tents).
std::vector<CategorySpec> default_category_specs();

// Rejects degenerate specs (empty size range, bad point counts).
void validate_specs(const std::vector<CategorySpec>& specs);

// One scene whose object categories are drawn uniformly from spec_set.
// Deterministic: fixed (spec_set, params, seed) reproduces the scene
// byte-for-byte on disk.
PointCloudScene generate_scene(const std::vector<CategorySpec>& spec_set,
                               const SceneGenParams& params, uint64_t rng_seed,
                               const std::string& scene_id = "");

// Scene with an explicit per-object category list (used by the benchmark
// builder to inject designated novel instances into train scenes).
PointCloudScene generate_scene_with_classes(const std::vector<CategorySpec>& all_specs,
                                            const std::vector<int>& object_class_ids,
                                            const SceneGenParams& params, uint64_t rng_seed,
                                            const std::string& scene_id);

struct Benchmark {
  DatasetSplit split;
  std::vector<PointCloudScene> train_scenes;
  std::vector<PointCloudScene> test_scenes;
};

struct BenchmarkParams {
  int n_base = 8;
  int n_novel = 4;
  int n_scenes_train = 200;
  int n_scenes_test = 50;
  int k = 5;
  SceneGenParams scene;
};

// Train scenes hold base-class objects plus, per novel class, exactly k
// injected instances (the designated shots). Test scenes mix all classes,
// with at least one instance per novel class guaranteed.
Benchmark generate_benchmark(const std::vector<CategorySpec>& specs,
                             const BenchmarkParams& params, uint64_t rng_seed);

// Writes scenes/<id>.scene.json plus split.json under dir.
void save_benchmark(const Benchmark& bench, const std::string& dir);

struct LoadedDataset {
  DatasetSplit split;
  std::vector<PointCloudScene> train_scenes;
  std::vector<PointCloudScene> test_scenes;
};

LoadedDataset load_benchmark(const std::string& dir);

// Supervision visible to a training stage: pretraining sees base boxes
// only; finetuning additionally sees the designated novel shots.
enum class Stage { kPretrain, kFinetune };
std::vector<Box3D> visible_boxes(const PointCloudScene& scene, const DatasetSplit& split,
                                 Stage stage);

}  // namespace cpfs3d
