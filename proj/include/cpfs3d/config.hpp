#pragma once

#include "cpfs3d/backbone.hpp"
#include "cpfs3d/contrast.hpp"
#include "cpfs3d/detector.hpp"
#include "cpfs3d/synthdata.hpp"

#include <string>
#include <vector>

namespace cpfs3d {

// Every tunable in one flat struct; file format is `key = value` lines.
// Unknown keys are rejected, every field is range-checked on load.
struct RunConfig {
  // dataset
  int n_base = 8;
  int n_novel = 4;
  int train_scenes = 200;
  int test_scenes = 50;
  int data_k = 5;             // designated shots per novel class
  float noise_sigma = 0.01f;
  float bg_min = 0.30f;
  float bg_max = 0.50f;
  int objects_min = 4;
  int objects_max = 8;
  float room_xy = 6.0f;
  float room_z = 3.0f;

  // model
  int d = 256;
  int seeds = 256;            // M
  int proposals = 64;         // P
  int bank_w = 128;           // W
  float gamma = 0.999f;
  float tau = 0.2f;
  float lambda1 = 0.1f;
  float lambda2 = 0.1f;
  float sa_radius1 = 0.2f;
  float sa_radius2 = 0.4f;
  int sa_nsample1 = 32;
  int sa_nsample2 = 16;
  float cluster_radius = 0.3f;
  int cluster_nsample = 16;
  float max_vote_offset = 1.0f;
  int support_seeds = 64;
  int min_support_points = 128;
  int head_hidden = 128;
  std::string cls_head = "affine";  // or "metric"
  float cls_tau = 0.1f;
  bool normalize_sim = true;
  bool share_projection = false;
  bool bank_renormalize = true;
  std::string pcl_denominator = "mean";  // or "proto"

  // training
  int batch = 16;
  int pretrain_epochs = 36;
  int finetune_epochs = 5;
  float lr = 0.008f;
  float weight_decay = 0.01f;
  int lr_decay_epoch = 24;
  float lr_decay_factor = 0.1f;
  int n_way = 4;
  int k_shot = 5;
  float pos_radius = 0.3f;
  float neg_radius = 0.6f;
  float w_obj = 0.5f;
  float w_box = 1.0f;
  float w_cls = 1.0f;

  // evaluation
  float nms_iou = 0.25f;
  float obj_thresh = 0.05f;

  // run identity (out is excluded from the config hash)
  long seed = 1;
  std::string seeds_list = "1,2,3";
  std::string data_dir = "";
  std::string out = "";

  int num_classes() const { return n_base + n_novel; }

  BackboneConfig backbone() const {
    BackboneConfig b;
    b.seeds = seeds;
    b.d = d;
    b.radius1 = sa_radius1;
    b.radius2 = sa_radius2;
    b.nsample1 = sa_nsample1;
    b.nsample2 = sa_nsample2;
    return b;
  }

  DetectorConfig detector() const {
    DetectorConfig dc;
    dc.proposals = proposals;
    dc.cluster_radius = cluster_radius;
    dc.cluster_nsample = cluster_nsample;
    dc.max_vote_offset = max_vote_offset;
    dc.head_hidden = head_hidden;
    dc.num_classes = num_classes();
    dc.cls_head = cls_head;
    dc.cls_tau = cls_tau;
    dc.pos_radius = pos_radius;
    dc.neg_radius = neg_radius;
    dc.w_obj = w_obj;
    dc.w_box = w_box;
    dc.w_cls = w_cls;
    return dc;
  }

  ContrastConfig contrast() const {
    ContrastConfig cc;
    cc.tau = tau;
    cc.normalize_sim = normalize_sim;
    cc.share_projection = share_projection;
    cc.pcl_denominator = pcl_denominator;
    return cc;
  }

  BenchmarkParams benchmark() const {
    BenchmarkParams bp;
    bp.n_base = n_base;
    bp.n_novel = n_novel;
    bp.n_scenes_train = train_scenes;
    bp.n_scenes_test = test_scenes;
    bp.k = data_k;
    bp.scene.noise_sigma = noise_sigma;
    bp.scene.background_min = bg_min;
    bp.scene.background_max = bg_max;
    bp.scene.objects_min = objects_min;
    bp.scene.objects_max = objects_max;
    bp.scene.room_xy = room_xy;
    bp.scene.room_z = room_z;
    return bp;
  }
};

// Field table metadata, shared by the parser, the serializer, the hash, and
// the coverage test.
std::vector<std::string> config_keys();

// Parses `key = value` text (# comments, blank lines allowed).
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);
void apply_config_file(RunConfig& cfg, const std::string& path);
// A single "key=value" override, as given on the command line.
void apply_config_override(RunConfig& cfg, const std::string& assignment);

std::string config_to_string(const RunConfig& cfg);  // canonical, sorted keys
std::string config_value(const RunConfig& cfg, const std::string& key);
uint64_t config_hash(const RunConfig& cfg);          // ignores `out`

void validate_config(const RunConfig& cfg);

}  // namespace cpfs3d
