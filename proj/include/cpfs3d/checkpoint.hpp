#pragma once

#include "cpfs3d/nn.hpp"
#include "cpfs3d/protobank.hpp"

#include <string>

namespace cpfs3d {

// Everything a run needs to continue exactly where it stopped. Serialized as
// a single-file archive: a magic line, a one-line manifest (array names,
// shapes and scalar metadata), then the raw row-major little-endian float32
// payload. Save -> load -> save is byte-identical.
struct Checkpoint {
  ParamStore params;
  PrototypeBank bank;
  AdamW opt;
  int epoch = 0;
  long step = 0;
  std::string stage = "pretrain";
  std::string rng_state;
  uint64_t config_hash = 0;
  Vec3f size_prior = Vec3f::Ones();
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Per-step training record, one JSON line each.
struct StepMetrics {
  long step = 0;
  int epoch = 0;
  float l_vote = 0;
  float l_objectness = 0;
  float l_box = 0;
  float l_cls = 0;
  float l_det = 0;
  float l_semcl = 0;
  float l_primcl = 0;
  float l_total = 0;
  bool scl_skipped = false;
  int pcl_w_prime = 0;
};

std::string metrics_record(const StepMetrics& m);
StepMetrics metrics_from_record(const std::string& line, const std::string& origin);

}  // namespace cpfs3d
