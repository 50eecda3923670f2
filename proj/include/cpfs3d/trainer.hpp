#pragma once

#include "cpfs3d/checkpoint.hpp"
#include "cpfs3d/config.hpp"
#include "cpfs3d/episodes.hpp"

#include <memory>
#include <string>

namespace cpfs3d {

// Owns the full training state and the single-threaded step loop. One
// instance per run; everything it mutates (parameters, bank, optimizer,
// rng) round-trips through Checkpoint for exact resume.
class Trainer {
 public:
  // Fresh run: parameters, bank, and size prior initialized from cfg.seed.
  Trainer(const RunConfig& cfg, LoadedDataset data);

  // Continue from a checkpoint (same config hash enforced).
  Trainer(const RunConfig& cfg, LoadedDataset data, const Checkpoint& ckpt);

  // Runs `epochs` total epochs of the stage (counting any already completed),
  // writing <tag>_metrics.jsonl, <tag>_episodes.jsonl and per-epoch
  // checkpoints under out_dir. Returns the final checkpoint path.
  std::string run_stage(Stage stage, int epochs, const std::string& out_dir);

  // One optimizer step over a prepared batch. Exposed for tests.
  StepMetrics train_step(const EpisodeBatch& batch, Stage stage);

  Checkpoint make_checkpoint(const std::string& stage_tag) const;

  ParamStore& parameters() { return params_; }
  PrototypeBank& bank() { return bank_; }
  const Vec3f& size_prior() const { return size_prior_; }
  const LoadedDataset& data() const { return data_; }
  long step_count() const { return global_step_; }
  int epochs_completed() const { return epoch_; }
  Rng& rng() { return rng_; }

 private:
  float current_lr(Stage stage) const;

  RunConfig cfg_;
  LoadedDataset data_;
  std::unique_ptr<EpisodeSampler> sampler_;
  ParamStore params_;
  PrototypeBank bank_;
  AdamW opt_;
  Rng rng_;
  long global_step_ = 0;
  int epoch_ = 0;  // epochs completed in the current stage
  std::string stage_tag_ = "pretrain";
  Vec3f size_prior_ = Vec3f::Ones();
};

// Detector sanity harness: repeatedly trains on one frozen scene (all of its
// boxes supervised, supports cropped from itself) and evaluates on the same
// scene until AP25 hits 1.0 or max_steps runs out.
struct OverfitResult {
  int steps_run = 0;
  double ap25 = 0.0;
  bool reached = false;
};
OverfitResult overfit_one_scene(const RunConfig& cfg, const PointCloudScene& scene,
                                int max_steps, int eval_every);

}  // namespace cpfs3d
