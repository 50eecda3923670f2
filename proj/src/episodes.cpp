#include "cpfs3d/episodes.hpp"

#include <algorithm>
#include <sstream>

namespace cpfs3d {

SupportInstance crop_support(const PointCloudScene& scene, const Box3D& box,
                             int min_points) {
  std::vector<int> inside;
  for (int i = 0; i < scene.num_points(); ++i)
    if (box.contains(scene.points.row(i).transpose())) inside.push_back(i);
  if (inside.empty())
    throw NumericError("crop_support: no points inside instance " +
                       std::to_string(box.instance_id) + " of scene " + scene.scene_id);

  const int n = std::max(static_cast<int>(inside.size()), min_points);
  SupportInstance s;
  s.points.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    // Cycling through the crop is resampling with replacement, kept
    // deterministic so identical episodes are byte-identical.
    const int src = inside[static_cast<size_t>(i) % inside.size()];
    s.points.row(i) = scene.points.row(src) - box.center.transpose();
  }
  s.class_id = box.class_id;
  s.scene_id = scene.scene_id;
  s.instance_id = box.instance_id;
  return s;
}

EpisodeBatch build_batch(std::vector<Episode> episodes) {
  if (episodes.empty()) throw ConfigError("build_batch: empty episode list");
  EpisodeBatch out;
  out.class_ids = episodes[0].class_ids;
  out.n_way = static_cast<int>(out.class_ids.size());
  out.k_shot = episodes[0].support.empty()
                   ? 0
                   : static_cast<int>(episodes[0].support[0].size());
  for (const auto& ep : episodes) {
    if (static_cast<int>(ep.class_ids.size()) != out.n_way)
      throw ConfigError("build_batch: mixed N across episodes");
    if (ep.class_ids != out.class_ids)
      throw ConfigError("build_batch: episodes with differing class lists");
    for (const auto& row : ep.support)
      if (static_cast<int>(row.size()) != out.k_shot)
        throw ConfigError("build_batch: mixed K across episodes");
  }
  out.scl_feasible = episodes.size() >= 2 && out.n_way >= 2;
  out.episodes = std::move(episodes);
  return out;
}

EpisodeSampler::EpisodeSampler(const std::vector<PointCloudScene>* train_scenes,
                               const DatasetSplit* split, int min_support_points)
    : scenes_(train_scenes), split_(split), min_support_points_(min_support_points) {
  for (const auto& s : *scenes_)
    for (const auto& b : s.boxes) num_classes_ = std::max(num_classes_, b.class_id + 1);
  for (int c : split_->base_class_ids) num_classes_ = std::max(num_classes_, c + 1);
  for (int c : split_->novel_class_ids) num_classes_ = std::max(num_classes_, c + 1);

  candidates_.assign(static_cast<size_t>(num_classes_), {});
  for (size_t si = 0; si < scenes_->size(); ++si) {
    const auto& scene = (*scenes_)[si];
    for (const auto& b : scene.boxes) {
      if (split_->is_novel(b.class_id) &&
          !split_->is_designated(scene.scene_id, b.instance_id))
        continue;  // undesignated novel instances never become supports
      candidates_[static_cast<size_t>(b.class_id)].push_back(
          {static_cast<int>(si), b.instance_id});
    }
  }
}

std::vector<int> EpisodeSampler::sample_class_list(Stage stage, int n_way,
                                                   Rng& rng) const {
  std::vector<int> pool = split_->base_class_ids;
  if (stage == Stage::kFinetune)
    pool.insert(pool.end(), split_->novel_class_ids.begin(),
                split_->novel_class_ids.end());
  if (n_way > static_cast<int>(pool.size()))
    throw ConfigError("sample_class_list: n_way " + std::to_string(n_way) +
                      " exceeds available classes " + std::to_string(pool.size()));
  rng.shuffle(pool);
  pool.resize(static_cast<size_t>(n_way));
  return pool;
}

Episode EpisodeSampler::sample_with_classes(Stage stage,
                                            const std::vector<int>& class_ids,
                                            int k_shot, Rng& rng) const {
  Episode ep;
  ep.class_ids = class_ids;
  ep.support.resize(class_ids.size());

  for (size_t n = 0; n < class_ids.size(); ++n) {
    const int cid = class_ids[n];
    if (stage == Stage::kPretrain && split_->is_novel(cid))
      throw ConfigError("sample_with_classes: novel class " + std::to_string(cid) +
                        " in pretrain episode");
    const auto& cands = candidates_[static_cast<size_t>(cid)];
    if (cands.empty())
      throw ConfigError("sample_with_classes: no support candidates for class " +
                        std::to_string(cid));
    // Draw K without replacement while candidates last, then with
    // replacement (a lone designated shot repeats as needed).
    std::vector<int> order(cands.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    for (int k = 0; k < k_shot; ++k) {
      const int pick = k < static_cast<int>(order.size())
                           ? order[static_cast<size_t>(k)]
                           : static_cast<int>(rng.uniform_int(
                                 static_cast<int64_t>(cands.size())));
      const auto& ref = cands[static_cast<size_t>(pick)];
      const auto& scene = (*scenes_)[static_cast<size_t>(ref.scene_index)];
      const Box3D* box = scene.find_box(ref.instance_id);
      ep.support[n].push_back(crop_support(scene, *box, min_support_points_));
    }
  }

  // Query: uniform over train scenes holding at least one instance of a
  // sampled class that is visible at this stage.
  std::vector<int> eligible;
  for (size_t si = 0; si < scenes_->size(); ++si) {
    const std::vector<Box3D> vis = visible_boxes((*scenes_)[si], *split_, stage);
    bool hit = false;
    for (const auto& b : vis) {
      for (int cid : class_ids)
        if (b.class_id == cid) {
          hit = true;
          break;
        }
      if (hit) break;
    }
    if (hit) eligible.push_back(static_cast<int>(si));
  }
  if (eligible.empty())
    throw ConfigError("sample_with_classes: no eligible query scene for sampled classes");
  ep.query_index =
      eligible[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(eligible.size())))];
  return ep;
}

Episode EpisodeSampler::sample_episode(Stage stage, int n_way, int k_shot,
                                       Rng& rng) const {
  return sample_with_classes(stage, sample_class_list(stage, n_way, rng), k_shot, rng);
}

EpisodeBatch EpisodeSampler::sample_batch(Stage stage, int n_way, int k_shot, int batch,
                                          Rng& rng) const {
  if (batch < 1) throw ConfigError("sample_batch: batch must be >= 1");
  EpisodeBatch out;
  out.class_ids = sample_class_list(stage, n_way, rng);
  out.n_way = n_way;
  out.k_shot = k_shot;
  out.scl_feasible = batch >= 2 && n_way >= 2;
  for (int b = 0; b < batch; ++b)
    out.episodes.push_back(sample_with_classes(stage, out.class_ids, k_shot, rng));
  return out;
}

std::string episode_audit_record(const Episode& ep,
                                 const std::vector<PointCloudScene>& scenes) {
  std::ostringstream o;
  o << "{\"scene_id\":\"" << scenes[static_cast<size_t>(ep.query_index)].scene_id
    << "\",\"class_ids\":[";
  for (size_t i = 0; i < ep.class_ids.size(); ++i) {
    if (i) o << ",";
    o << ep.class_ids[i];
  }
  o << "],\"supports\":[";
  bool first = true;
  for (const auto& row : ep.support)
    for (const auto& s : row) {
      if (!first) o << ",";
      first = false;
      o << "[\"" << s.scene_id << "\"," << s.instance_id << "," << s.class_id << "]";
    }
  o << "]}\n";
  return o.str();
}

}  // namespace cpfs3d
