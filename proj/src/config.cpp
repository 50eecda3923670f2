#include "cpfs3d/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <variant>

namespace cpfs3d {

namespace {

using FieldPtr = std::variant<int RunConfig::*, float RunConfig::*, bool RunConfig::*,
                              long RunConfig::*, std::string RunConfig::*>;

struct Field {
  const char* name;
  FieldPtr ptr;
};

// One row per config key; this table is the single source of truth for
// parsing, serialization, hashing, and the coverage test.
const std::vector<Field>& fields() {
  static const std::vector<Field> t = {
      {"n_base", &RunConfig::n_base},
      {"n_novel", &RunConfig::n_novel},
      {"train_scenes", &RunConfig::train_scenes},
      {"test_scenes", &RunConfig::test_scenes},
      {"data_k", &RunConfig::data_k},
      {"noise_sigma", &RunConfig::noise_sigma},
      {"bg_min", &RunConfig::bg_min},
      {"bg_max", &RunConfig::bg_max},
      {"objects_min", &RunConfig::objects_min},
      {"objects_max", &RunConfig::objects_max},
      {"room_xy", &RunConfig::room_xy},
      {"room_z", &RunConfig::room_z},
      {"d", &RunConfig::d},
      {"seeds", &RunConfig::seeds},
      {"proposals", &RunConfig::proposals},
      {"bank_w", &RunConfig::bank_w},
      {"gamma", &RunConfig::gamma},
      {"tau", &RunConfig::tau},
      {"lambda1", &RunConfig::lambda1},
      {"lambda2", &RunConfig::lambda2},
      {"sa_radius1", &RunConfig::sa_radius1},
      {"sa_radius2", &RunConfig::sa_radius2},
      {"sa_nsample1", &RunConfig::sa_nsample1},
      {"sa_nsample2", &RunConfig::sa_nsample2},
      {"cluster_radius", &RunConfig::cluster_radius},
      {"cluster_nsample", &RunConfig::cluster_nsample},
      {"max_vote_offset", &RunConfig::max_vote_offset},
      {"support_seeds", &RunConfig::support_seeds},
      {"min_support_points", &RunConfig::min_support_points},
      {"head_hidden", &RunConfig::head_hidden},
      {"cls_head", &RunConfig::cls_head},
      {"cls_tau", &RunConfig::cls_tau},
      {"normalize_sim", &RunConfig::normalize_sim},
      {"share_projection", &RunConfig::share_projection},
      {"bank_renormalize", &RunConfig::bank_renormalize},
      {"pcl_denominator", &RunConfig::pcl_denominator},
      {"batch", &RunConfig::batch},
      {"pretrain_epochs", &RunConfig::pretrain_epochs},
      {"finetune_epochs", &RunConfig::finetune_epochs},
      {"lr", &RunConfig::lr},
      {"weight_decay", &RunConfig::weight_decay},
      {"lr_decay_epoch", &RunConfig::lr_decay_epoch},
      {"lr_decay_factor", &RunConfig::lr_decay_factor},
      {"n_way", &RunConfig::n_way},
      {"k_shot", &RunConfig::k_shot},
      {"pos_radius", &RunConfig::pos_radius},
      {"neg_radius", &RunConfig::neg_radius},
      {"w_obj", &RunConfig::w_obj},
      {"w_box", &RunConfig::w_box},
      {"w_cls", &RunConfig::w_cls},
      {"nms_iou", &RunConfig::nms_iou},
      {"obj_thresh", &RunConfig::obj_thresh},
      {"seed", &RunConfig::seed},
      {"seeds_list", &RunConfig::seeds_list},
      {"data_dir", &RunConfig::data_dir},
      {"out", &RunConfig::out},
  };
  return t;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.name) return &f;
  return nullptr;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

void set_field(RunConfig& cfg, const Field& f, const std::string& raw,
               const std::string& origin) {
  const std::string v = trim(raw);
  try {
    if (auto p = std::get_if<int RunConfig::*>(&f.ptr)) {
      size_t pos = 0;
      const int x = std::stoi(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing characters");
      cfg.**p = x;
    } else if (auto p2 = std::get_if<float RunConfig::*>(&f.ptr)) {
      size_t pos = 0;
      const float x = std::stof(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing characters");
      cfg.**p2 = x;
    } else if (auto p3 = std::get_if<long RunConfig::*>(&f.ptr)) {
      size_t pos = 0;
      const long x = std::stol(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing characters");
      cfg.**p3 = x;
    } else if (auto p4 = std::get_if<bool RunConfig::*>(&f.ptr)) {
      if (v == "true" || v == "1")
        cfg.**p4 = true;
      else if (v == "false" || v == "0")
        cfg.**p4 = false;
      else
        throw std::invalid_argument("expected true/false");
    } else {
      cfg.*std::get<std::string RunConfig::*>(f.ptr) = v;
    }
  } catch (const std::exception& e) {
    throw ConfigError(origin + ": bad value for \"" + f.name + "\": \"" + v +
                      "\" (" + e.what() + ")");
  }
}

std::string get_field(const RunConfig& cfg, const Field& f) {
  if (auto p = std::get_if<int RunConfig::*>(&f.ptr)) return std::to_string(cfg.**p);
  if (auto p2 = std::get_if<float RunConfig::*>(&f.ptr)) return format_float(cfg.**p2);
  if (auto p3 = std::get_if<long RunConfig::*>(&f.ptr)) return std::to_string(cfg.**p3);
  if (auto p4 = std::get_if<bool RunConfig::*>(&f.ptr)) return cfg.**p4 ? "true" : "false";
  return cfg.*std::get<std::string RunConfig::*>(f.ptr);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.name);
  return keys;
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream iss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(iss, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected key = value, got \"" + line + "\"");
    const std::string key = trim(line.substr(0, eq));
    const Field* f = find_field(key);
    if (!f)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown key \"" +
                        key + "\"");
    set_field(cfg, *f, line.substr(eq + 1), origin + ":" + std::to_string(lineno));
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  apply_config_text(cfg, ss.str(), path);
}

void apply_config_override(RunConfig& cfg, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects key=value, got \"" + assignment + "\"");
  const std::string key = trim(assignment.substr(0, eq));
  const Field* f = find_field(key);
  if (!f) throw ConfigError("--set: unknown key \"" + key + "\"");
  set_field(cfg, *f, assignment.substr(eq + 1), "--set " + key);
}

std::string config_to_string(const RunConfig& cfg) {
  std::ostringstream o;
  for (const auto& f : fields()) o << f.name << " = " << get_field(cfg, f) << "\n";
  return o.str();
}

std::string config_value(const RunConfig& cfg, const std::string& key) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("config_value: unknown key \"" + key + "\"");
  return get_field(cfg, *f);
}

uint64_t config_hash(const RunConfig& cfg) {
  std::ostringstream o;
  for (const auto& f : fields()) {
    if (std::string(f.name) == "out") continue;
    o << f.name << "=" << get_field(cfg, f) << ";";
  }
  return fnv1a(o.str());
}

void validate_config(const RunConfig& cfg) {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (cfg.n_base < 1 || cfg.n_novel < 0) fail("n_base must be >= 1, n_novel >= 0");
  if (cfg.train_scenes < 1 || cfg.test_scenes < 1) fail("scene counts must be positive");
  if (cfg.data_k < 1) fail("data_k must be >= 1");
  if (!(cfg.noise_sigma >= 0)) fail("noise_sigma must be >= 0");
  if (!(cfg.bg_min >= 0 && cfg.bg_max <= 0.9f && cfg.bg_min <= cfg.bg_max))
    fail("background fraction range invalid");
  if (cfg.objects_min < 1 || cfg.objects_max < cfg.objects_min)
    fail("object count range invalid");
  if (cfg.room_xy <= 0 || cfg.room_z <= 0) fail("room dimensions must be positive");
  if (cfg.d < 8 || cfg.d % 4 != 0) fail("d must be a multiple of 4, at least 8");
  if (cfg.seeds < 4) fail("seeds must be >= 4");
  if (cfg.proposals < 1 || cfg.proposals > cfg.seeds)
    fail("proposals must be in [1, seeds]");
  if (cfg.bank_w < 1) fail("bank_w must be >= 1");
  if (!(cfg.gamma > 0 && cfg.gamma <= 1)) fail("gamma must be in (0, 1]");
  if (!(cfg.tau > 0)) fail("tau must be positive");
  if (cfg.lambda1 < 0 || cfg.lambda2 < 0) fail("lambda weights must be >= 0");
  if (!(cfg.sa_radius1 > 0 && cfg.sa_radius2 > 0 && cfg.cluster_radius > 0))
    fail("radii must be positive");
  if (cfg.sa_nsample1 < 1 || cfg.sa_nsample2 < 1 || cfg.cluster_nsample < 1)
    fail("nsample values must be >= 1");
  if (!(cfg.max_vote_offset > 0)) fail("max_vote_offset must be positive");
  if (cfg.support_seeds < 1) fail("support_seeds must be >= 1");
  if (cfg.min_support_points < 1) fail("min_support_points must be >= 1");
  if (cfg.head_hidden < 1) fail("head_hidden must be >= 1");
  if (cfg.cls_head != "affine" && cfg.cls_head != "metric")
    fail("cls_head must be affine or metric");
  if (!(cfg.cls_tau > 0)) fail("cls_tau must be positive");
  if (cfg.pcl_denominator != "mean" && cfg.pcl_denominator != "proto")
    fail("pcl_denominator must be mean or proto");
  if (cfg.batch < 1) fail("batch must be >= 1");
  if (cfg.pretrain_epochs < 0 || cfg.finetune_epochs < 0) fail("epochs must be >= 0");
  if (!(cfg.lr > 0)) fail("lr must be positive");
  if (cfg.weight_decay < 0) fail("weight_decay must be >= 0");
  if (cfg.lr_decay_epoch < 0) fail("lr_decay_epoch must be >= 0");
  if (!(cfg.lr_decay_factor > 0 && cfg.lr_decay_factor <= 1))
    fail("lr_decay_factor must be in (0, 1]");
  if (cfg.n_way < 1) fail("n_way must be >= 1");
  if (cfg.k_shot < 1) fail("k_shot must be >= 1");
  if (!(cfg.pos_radius > 0 && cfg.neg_radius >= cfg.pos_radius))
    fail("need 0 < pos_radius <= neg_radius");
  if (cfg.w_obj < 0 || cfg.w_box < 0 || cfg.w_cls < 0) fail("loss weights must be >= 0");
  if (!(cfg.nms_iou > 0 && cfg.nms_iou < 1)) fail("nms_iou must be in (0, 1)");
  if (!(cfg.obj_thresh >= 0 && cfg.obj_thresh < 1)) fail("obj_thresh must be in [0, 1)");
  if (cfg.n_way > cfg.n_base)
    fail("n_way exceeds base class count (finetune widens the pool, pretrain cannot)");
}

}  // namespace cpfs3d
