#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "framecast/data.hpp"
#include "framecast/losses.hpp"
#include "framecast/model.hpp"

namespace framecast {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t batch_size = 2;
  int64_t steps_per_epoch = 20;
  uint64_t seed = 1;
  CurriculumConfig curriculum;
  int checkpoint_every = 0;        // epochs; 0 disables periodic checkpoints
  double clip_norm = 5.0;          // global gradient-norm guard; 0 disables
  std::string checkpoint_dir;      // empty: no checkpoint files
  std::string log_path;            // empty: stdout only

  void validate() const {
    if (lr <= 0) throw ValidationError("TrainConfig: lr must be > 0");
    if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1");
    if (steps_per_epoch < 1) throw ValidationError("TrainConfig: steps_per_epoch must be >= 1");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw ValidationError("TrainConfig: betas must be in [0, 1)");
    if (eps <= 0) throw ValidationError("TrainConfig: eps must be > 0");
    if (clip_norm < 0) throw ValidationError("TrainConfig: clip_norm must be >= 0");
    curriculum.validate();
  }
};

/// Bias-corrected first/second moment state, one slot per model parameter in
/// enumeration order.
struct OptimState {
  std::vector<std::string> names;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  int64_t step = 0;

  static OptimState init_for(PredictorWeights& weights);
};

/// One bias-corrected update. Gradients are read from each parameter's grad
/// buffer; a NaN/Inf gradient aborts with the parameter's name.
void adam_step(PredictorWeights& weights, OptimState& state, const TrainConfig& cfg);

/// Scales all gradients so the global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
double clip_gradients(PredictorWeights& weights, double max_norm);

struct EpochLog {
  int epoch = 0;
  Stage stage = Stage::S1;
  double train_loss = 0.0;
  double grad_norm = 0.0;
  double val_l1 = 0.0;
  double val_gdl = 0.0;
  double val_smooth = 0.0;
  double val_perc = 0.0;
  double val_psnr = 0.0;

  std::string row() const;
};

struct Dataset {
  std::vector<VideoClip> train;
  std::vector<VideoClip> val;
};

struct FitResult {
  std::vector<EpochLog> log;
};

/// Mini-batch metrics for one epoch over the shuffled training clips.
/// Mutates weights in place; the rng drives the shuffle only.
EpochLog train_epoch(PredictorWeights& weights, const std::vector<VideoClip>& train_clips,
                     Stage stage, const TrainConfig& cfg, const FeatureExtractor& phi,
                     OptimState& optim, Rng& rng, int epoch);

/// Runs the staged schedule from scratch: epoch e trains under
/// select_stage(e); weights carry over across stage boundaries untouched.
FitResult fit(PredictorWeights& weights, const Dataset& data, const TrainConfig& cfg);

/// Resumes after `start_epoch` epochs have already run, with optimizer and
/// rng state restored by the caller. Produces the identical trajectory to an
/// uninterrupted run.
FitResult fit_from(PredictorWeights& weights, const Dataset& data, const TrainConfig& cfg,
                   OptimState& optim, Rng& rng, int start_epoch);

// --- checkpoint file --------------------------------------------------------

struct Checkpoint {
  uint32_t version = 1;
  ModelConfig model_cfg;
  PredictorWeights weights;
  OptimState optim;
  int epoch = 0;          // epochs completed
  std::string rng_state;  // training rng, serialized
};

/// Little-endian binary: magic "EVAC", u32 version, length-prefixed config
/// text, u32 tensor count, then per tensor: u32 name length, name, u32 rank,
/// u32 dims, u8 element-type code (0 = f32), raw data.
void save_checkpoint(const std::string& path, Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace framecast
