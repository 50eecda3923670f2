#pragma once

#include "cpfs3d/synthdata.hpp"

#include <string>
#include <vector>

namespace cpfs3d {

// One cropped support object: the points inside its box, translated so the
// box center is the origin, padded by cycling when the crop is small.
struct SupportInstance {
  Mat3X points;
  int class_id = 0;
  std::string scene_id;
  int instance_id = 0;
};

struct Episode {
  int query_index = 0;                              // into the train scene list
  std::vector<int> class_ids;                       // the N classes, sampled order
  std::vector<std::vector<SupportInstance>> support;  // N x K
};

struct EpisodeBatch {
  std::vector<Episode> episodes;
  std::vector<int> class_ids;  // shared ordered class list
  int n_way = 0;
  int k_shot = 0;
  bool scl_feasible = false;  // B >= 2 (the n = m case divides by B - 1)
};

SupportInstance crop_support(const PointCloudScene& scene, const Box3D& box,
                             int min_points);

// Groups episodes into a batch, rejecting mixed shapes: every episode must
// carry the same (N, K) and the same ordered class list, because the
// semantic loss compares class n of one episode against class n of every
// other.
EpisodeBatch build_batch(std::vector<Episode> episodes);

// Samples episodes against a fixed train split. Candidate supports are
// indexed once: base classes draw from every train instance, novel classes
// only from the k designated shots.
class EpisodeSampler {
 public:
  EpisodeSampler(const std::vector<PointCloudScene>* train_scenes,
                 const DatasetSplit* split, int min_support_points);

  // Classes drawn for one batch: N distinct ids from the stage's pool
  // (pretrain: base only; finetune: base and novel).
  std::vector<int> sample_class_list(Stage stage, int n_way, Rng& rng) const;

  // One episode over an already-chosen class list.
  Episode sample_with_classes(Stage stage, const std::vector<int>& class_ids,
                              int k_shot, Rng& rng) const;

  Episode sample_episode(Stage stage, int n_way, int k_shot, Rng& rng) const;

  // B episodes sharing one class list, as Eq. (2) requires.
  EpisodeBatch sample_batch(Stage stage, int n_way, int k_shot, int batch,
                            Rng& rng) const;

  const std::vector<PointCloudScene>& scenes() const { return *scenes_; }

 private:
  struct InstanceRef {
    int scene_index = 0;
    int instance_id = 0;
  };

  const std::vector<PointCloudScene>* scenes_;
  const DatasetSplit* split_;
  int min_support_points_;
  std::vector<std::vector<InstanceRef>> candidates_;  // per class id
  int num_classes_ = 0;
};

// One audit line per episode: query scene, classes, support sources.
std::string episode_audit_record(const Episode& ep,
                                 const std::vector<PointCloudScene>& scenes);

}  // namespace cpfs3d
