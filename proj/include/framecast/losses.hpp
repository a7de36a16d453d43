#pragma once

#include <cstdint>

#include "framecast/model.hpp"
#include "framecast/tensor.hpp"

namespace framecast {

/// Stage boundaries and loss weights for the three-phase schedule.
struct CurriculumConfig {
  int stage1_epochs = 2;
  int stage2_epochs = 2;
  int stage3_epochs = 2;
  double lambda_gdl = 1.0;
  double lambda_smooth = 0.1;
  double lambda_perc = 0.05;
  uint64_t phi_seed = 2024;  // seed of the frozen feature extractor

  int total_epochs() const { return stage1_epochs + stage2_epochs + stage3_epochs; }

  void validate() const {
    if (stage1_epochs < 0 || stage2_epochs < 0 || stage3_epochs < 0)
      throw ValidationError("CurriculumConfig: epoch counts must be >= 0");
    if (total_epochs() < 1) throw ValidationError("CurriculumConfig: at least one stage needs an epoch");
    if (lambda_gdl < 0 || lambda_smooth < 0 || lambda_perc < 0)
      throw ValidationError("CurriculumConfig: loss weights must be >= 0");
  }
};

enum class Stage { S1 = 1, S2 = 2, S3 = 3 };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::S1: return "S1";
    case Stage::S2: return "S2";
    default: return "S3";
  }
}

/// Epoch -> stage. Weights are inherited across boundaries; nothing here
/// resets them.
inline Stage select_stage(int epoch, const CurriculumConfig& cfg) {
  if (epoch < 0) throw ValidationError("select_stage: epoch must be >= 0");
  if (epoch < cfg.stage1_epochs) return Stage::S1;
  if (epoch < cfg.stage1_epochs + cfg.stage2_epochs) return Stage::S2;
  return Stage::S3;
}

/// Frozen feature map used by the perceptual term: three stride-2 conv
/// stages with mish, randomly initialized from a fixed seed and never
/// trained. Accepts (B, T, C, H, W) or (N, C, H, W); frames fold into the
/// batch axis.
template <typename T>
class FeatureExtractorT {
 public:
  FeatureExtractorT(int64_t in_channels, uint64_t seed) : in_channels_(in_channels), seed_(seed) {
    Rng rng(seed);
    int64_t cin = in_channels;
    for (int s = 0; s < 3; ++s) {
      const int64_t cout = widths_[s];
      layers_.push_back(detail::uniform_fan_in<T>(rng, {cout, cin, 3, 3}, cin * 9));
      layers_.back().set_requires_grad(false);
      cin = cout;
    }
  }

  uint64_t seed() const { return seed_; }
  int64_t in_channels() const { return in_channels_; }

  TensorT<T> operator()(const TensorT<T>& frames) const {
    TensorT<T> x = frames;
    if (x.rank() == 5)
      x = reshape(x, {x.dim(0) * x.dim(1), x.dim(2), x.dim(3), x.dim(4)});
    if (x.rank() != 4) throw ShapeError("FeatureExtractor: expected rank-4 or rank-5 input");
    if (x.dim(1) != in_channels_) throw ShapeError("FeatureExtractor: channel mismatch");
    for (const auto& k : layers_) x = mish(conv2d(x, k, 2));
    return x;
  }

 private:
  static constexpr int64_t widths_[3] = {8, 16, 32};
  int64_t in_channels_;
  uint64_t seed_;
  std::vector<TensorT<T>> layers_;
};

using FeatureExtractor = FeatureExtractorT<float>;

/// Mean absolute error over all elements.
template <typename T>
TensorT<T> l1_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  detail::check_same_shape(pred, target, "l1_loss");
  return reduce(subtract(pred, target), Reduce::AbsMean);
}

/// Mean absolute mismatch of first-order spatial differences, width and
/// height directions summed. Constants shift out entirely.
template <typename T>
TensorT<T> gdl_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  detail::check_same_shape(pred, target, "gdl_loss");
  if (pred.rank() < 2) throw ShapeError("gdl_loss: expected spatial input");
  if (pred.dim(-1) < 2 || pred.dim(-2) < 2)
    throw ShapeError("gdl_loss: frames must be at least 2x2");
  TensorT<T> dx = reduce(absolute(subtract(axis_diff(pred, -1), axis_diff(target, -1))),
                         Reduce::Mean);
  TensorT<T> dy = reduce(absolute(subtract(axis_diff(pred, -2), axis_diff(target, -2))),
                         Reduce::Mean);
  return add(dx, dy);
}

/// Mean absolute frame-to-frame change of the prediction. No target enters;
/// a static prediction scores exactly zero. Defined as 0 when t_out == 1.
template <typename T>
TensorT<T> smooth_loss(const TensorT<T>& pred) {
  if (pred.rank() != 5) throw ShapeError("smooth_loss: expected (B, T, C, H, W)");
  if (pred.dim(1) < 2) return TensorT<T>::scalar(T(0));
  return reduce(axis_diff(pred, 1), Reduce::AbsMean);
}

template <typename T>
TensorT<T> stage1_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  return l1_loss(pred, target);
}

template <typename T>
TensorT<T> stage2_loss(const TensorT<T>& pred, const TensorT<T>& target,
                       const CurriculumConfig& cfg) {
  TensorT<T> loss = l1_loss(pred, target);
  loss = add(loss, scale(gdl_loss(pred, target), static_cast<T>(cfg.lambda_gdl)));
  loss = add(loss, scale(smooth_loss(pred), static_cast<T>(cfg.lambda_smooth)));
  return loss;
}

/// Squared distance in the frozen feature space, normalized per feature
/// element and averaged over frames. Gradient reaches pred only; the
/// extractor's kernels never require gradients.
template <typename T>
TensorT<T> perceptual_loss(const TensorT<T>& pred, const TensorT<T>& target,
                           const FeatureExtractorT<T>& phi) {
  detail::check_same_shape(pred, target, "perceptual_loss");
  return reduce(square(subtract(phi(pred), phi(target))), Reduce::Mean);
}

template <typename T>
TensorT<T> stage3_loss(const TensorT<T>& pred, const TensorT<T>& target,
                       const CurriculumConfig& cfg, const FeatureExtractorT<T>& phi) {
  TensorT<T> loss = stage2_loss(pred, target, cfg);
  loss = add(loss, scale(perceptual_loss(pred, target, phi), static_cast<T>(cfg.lambda_perc)));
  return loss;
}

template <typename T>
TensorT<T> stage_loss(Stage stage, const TensorT<T>& pred, const TensorT<T>& target,
                      const CurriculumConfig& cfg, const FeatureExtractorT<T>& phi) {
  switch (stage) {
    case Stage::S1: return stage1_loss(pred, target);
    case Stage::S2: return stage2_loss(pred, target, cfg);
    default: return stage3_loss(pred, target, cfg, phi);
  }
}

}  // namespace framecast
