#include "framecast/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace framecast {

OptimState OptimState::init_for(PredictorWeights& weights) {
  OptimState s;
  weights.for_each_param([&s](const std::string& name, Tensor& t) {
    s.names.push_back(name);
    s.m.emplace_back(t.data().size(), 0.0f);
    s.v.emplace_back(t.data().size(), 0.0f);
  });
  return s;
}

void adam_step(PredictorWeights& weights, OptimState& state, const TrainConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  size_t slot = 0;
  weights.for_each_param([&](const std::string& name, Tensor& t) {
    if (slot >= state.names.size() || state.names[slot] != name)
      throw ValidationError("adam_step: optimizer state does not match parameter " + name);
    auto& m = state.m[slot];
    auto& v = state.v[slot];
    const bool has_grad = t.has_grad();
    for (size_t i = 0; i < t.data().size(); ++i) {
      const float g = has_grad ? t.grad()[i] : 0.0f;
      if (!std::isfinite(g))
        throw NumericError("adam_step: non-finite gradient in parameter " + name);
      m[i] = static_cast<float>(cfg.beta1) * m[i] + static_cast<float>(1.0 - cfg.beta1) * g;
      v[i] = static_cast<float>(cfg.beta2) * v[i] + static_cast<float>(1.0 - cfg.beta2) * g * g;
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      t.data()[i] -= static_cast<float>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
    ++slot;
  });
}

double clip_gradients(PredictorWeights& weights, double max_norm) {
  double sq = 0.0;
  weights.for_each_param([&sq](const std::string&, Tensor& t) {
    if (!t.has_grad()) return;
    for (float g : t.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float factor = static_cast<float>(max_norm / norm);
    weights.for_each_param([factor](const std::string&, Tensor& t) {
      if (!t.has_grad()) return;
      for (float& g : t.grad()) g *= factor;
    });
  }
  return norm;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Stacks whole clips into (B, T, C, H, W) windows: first t_in frames as
// input, the following t_out as target.
void make_batch(const std::vector<VideoClip>& clips, const std::vector<size_t>& indices,
                const ModelConfig& cfg, Tensor& input, Tensor& target) {
  const int64_t b_dim = static_cast<int64_t>(indices.size());
  input = Tensor({b_dim, cfg.t_in, cfg.channels, cfg.height, cfg.width});
  target = Tensor({b_dim, cfg.t_out, cfg.channels, cfg.height, cfg.width});
  const int64_t frame_elems = cfg.channels * cfg.height * cfg.width;
  for (int64_t b = 0; b < b_dim; ++b) {
    const VideoClip& clip = clips[indices[static_cast<size_t>(b)]];
    if (clip.frames.dim(0) < cfg.t_in + cfg.t_out)
      throw ValidationError("train: clip shorter than t_in + t_out");
    if (clip.frames.dim(1) != cfg.channels || clip.frames.dim(2) != cfg.height ||
        clip.frames.dim(3) != cfg.width)
      throw ShapeError("train: clip geometry does not match the model config");
    std::copy_n(clip.frames.data().begin(), cfg.t_in * frame_elems,
                input.data().begin() + b * cfg.t_in * frame_elems);
    std::copy_n(clip.frames.data().begin() + cfg.t_in * frame_elems, cfg.t_out * frame_elems,
                target.data().begin() + b * cfg.t_out * frame_elems);
  }
}

// Fixed validation batch: the first min(4, |val|) clips.
std::vector<size_t> val_indices(const std::vector<VideoClip>& val) {
  std::vector<size_t> idx;
  for (size_t i = 0; i < val.size() && i < 4; ++i) idx.push_back(i);
  return idx;
}

double psnr_of_batch(const Tensor& pred, const Tensor& target);

}  // namespace

std::string EpochLog::row() const {
  std::string s;
  s += "epoch=" + std::to_string(epoch);
  s += " stage=";
  s += stage_name(stage);
  s += " loss=" + fmt(train_loss);
  s += " grad_norm=" + fmt(grad_norm);
  s += " val_l1=" + fmt(val_l1);
  s += " val_gdl=" + fmt(val_gdl);
  s += " val_smooth=" + fmt(val_smooth);
  s += " val_perc=" + fmt(val_perc);
  s += " val_psnr=" + fmt(val_psnr);
  return s;
}

EpochLog train_epoch(PredictorWeights& weights, const std::vector<VideoClip>& train_clips,
                     Stage stage, const TrainConfig& cfg, const FeatureExtractor& phi,
                     OptimState& optim, Rng& rng, int epoch) {
  if (train_clips.empty()) throw ValidationError("train_epoch: empty dataset");
  weights.set_requires_grad(true);

  std::vector<size_t> order(train_clips.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  size_t cursor = 0;

  double loss_sum = 0.0;
  double norm_sum = 0.0;
  for (int64_t step = 0; step < cfg.steps_per_epoch; ++step) {
    std::vector<size_t> batch_idx;
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch_idx.push_back(order[cursor++]);
    }
    Tensor input, target;
    make_batch(train_clips, batch_idx, weights.cfg, input, target);

    GradTape<float> tape;
    Tensor loss;
    {
      GradTape<float>::Scope scope(tape);
      Tensor pred = predict(input, weights);
      loss = stage_loss(stage, pred, target, cfg.curriculum, phi);
    }
    const double loss_value = static_cast<double>(loss.value());
    if (!std::isfinite(loss_value))
      throw NumericError("train_epoch: non-finite loss at epoch " + std::to_string(epoch) +
                         " step " + std::to_string(step));
    weights.zero_grad();
    tape.backward(loss);
    norm_sum += clip_gradients(weights, cfg.clip_norm);
    adam_step(weights, optim, cfg);
    loss_sum += loss_value;
  }

  EpochLog log;
  log.epoch = epoch;
  log.stage = stage;
  log.train_loss = loss_sum / static_cast<double>(cfg.steps_per_epoch);
  log.grad_norm = norm_sum / static_cast<double>(cfg.steps_per_epoch);
  return log;
}

namespace {

double psnr_of_batch(const Tensor& pred, const Tensor& target) {
  // Per-frame PSNR averaged across the batch; predictions clamped to [0,1].
  const int64_t b_dim = pred.dim(0);
  const int64_t t_dim = pred.dim(1);
  const int64_t frame_elems = pred.numel() / (b_dim * t_dim);
  double total = 0.0;
  int64_t frames = 0;
  for (int64_t b = 0; b < b_dim; ++b)
    for (int64_t t = 0; t < t_dim; ++t) {
      const float* p = pred.data().data() + (b * t_dim + t) * frame_elems;
      const float* q = target.data().data() + (b * t_dim + t) * frame_elems;
      double mse = 0.0;
      for (int64_t i = 0; i < frame_elems; ++i) {
        const double pc = std::min(1.0, std::max(0.0, static_cast<double>(p[i])));
        const double d = pc - static_cast<double>(q[i]);
        mse += d * d;
      }
      mse /= static_cast<double>(frame_elems);
      total += mse > 0.0 ? std::min(100.0, 10.0 * std::log10(1.0 / mse)) : 100.0;
      ++frames;
    }
  return total / static_cast<double>(frames);
}

void eval_validation(PredictorWeights& weights, const Dataset& data, const FeatureExtractor& phi,
                     EpochLog& log) {
  const std::vector<size_t> idx = val_indices(data.val);
  if (idx.empty()) throw ValidationError("fit: at least one validation clip is required");
  Tensor input, target;
  make_batch(data.val, idx, weights.cfg, input, target);
  weights.set_requires_grad(false);
  Tensor pred = predict(input, weights);
  weights.set_requires_grad(true);
  log.val_l1 = static_cast<double>(l1_loss(pred, target).value());
  log.val_gdl = static_cast<double>(gdl_loss(pred, target).value());
  log.val_smooth = static_cast<double>(smooth_loss(pred).value());
  log.val_perc = static_cast<double>(perceptual_loss(pred, target, phi).value());
  log.val_psnr = psnr_of_batch(pred, target);
}

FitResult run_epochs(PredictorWeights& weights, const Dataset& data, const TrainConfig& cfg,
                     OptimState& optim, Rng& rng, int start_epoch) {
  cfg.validate();
  weights.cfg.validate();
  const FeatureExtractor phi(weights.cfg.channels, cfg.curriculum.phi_seed);

  std::ofstream log_file;
  if (!cfg.log_path.empty()) {
    log_file.open(cfg.log_path, start_epoch == 0 ? std::ios::trunc : std::ios::app);
    if (!log_file) throw IoError("fit: cannot open log file " + cfg.log_path);
  }

  FitResult result;
  const int total = cfg.curriculum.total_epochs();
  for (int epoch = start_epoch; epoch < total; ++epoch) {
    const Stage stage = select_stage(epoch, cfg.curriculum);
    EpochLog log = train_epoch(weights, data.train, stage, cfg, phi, optim, rng, epoch);
    eval_validation(weights, data, phi, log);
    result.log.push_back(log);

    const std::string row = log.row();
    std::fputs((row + "\n").c_str(), stdout);
    if (log_file) log_file << row << "\n";

    const bool last = epoch + 1 == total;
    if (!cfg.checkpoint_dir.empty() &&
        ((cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) || last)) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      Checkpoint ckpt;
      ckpt.model_cfg = weights.cfg;
      ckpt.weights = weights;
      ckpt.optim = optim;
      ckpt.epoch = epoch + 1;
      ckpt.rng_state = rng.state();
      char name[48];
      std::snprintf(name, sizeof(name), "ckpt_epoch_%03d.evac", epoch + 1);
      save_checkpoint((std::filesystem::path(cfg.checkpoint_dir) / name).string(), ckpt);
      if (last)
        save_checkpoint((std::filesystem::path(cfg.checkpoint_dir) / "model.evac").string(), ckpt);
    }
  }
  return result;
}

}  // namespace

FitResult fit(PredictorWeights& weights, const Dataset& data, const TrainConfig& cfg) {
  OptimState optim = OptimState::init_for(weights);
  Rng rng(cfg.seed);
  return run_epochs(weights, data, cfg, optim, rng, 0);
}

FitResult fit_from(PredictorWeights& weights, const Dataset& data, const TrainConfig& cfg,
                   OptimState& optim, Rng& rng, int start_epoch) {
  return run_epochs(weights, data, cfg, optim, rng, start_epoch);
}

}  // namespace framecast
