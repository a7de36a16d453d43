#pragma once

#include "framecast/losses.hpp"
#include "framecast/tensor.hpp"

namespace framecast {

/// Peak signal-to-noise ratio in dB, computed per frame and averaged.
/// Exact matches are reported at the documented 100 dB cap. Inputs are
/// (T, C, H, W); accumulation runs in double.
double psnr(const Tensor& pred, const Tensor& target, double data_range = 1.0);

/// Structural similarity with the standard 11x11 Gaussian window
/// (sigma 1.5, C1 = (0.01 r)^2, C2 = (0.03 r)^2), averaged over valid window
/// positions, channels, and frames. Requires H, W >= 11.
double ssim(const Tensor& pred, const Tensor& target, double data_range = 1.0);

/// Squared distance in the frozen feature space, same computation as the
/// perceptual loss term, reported as a metric.
double perceptual_distance(const Tensor& pred, const Tensor& target, const FeatureExtractor& phi);

/// Elementwise clamp to [lo, hi]; predictions are clamped before metrics and
/// before being written as frames.
Tensor clamp01(const Tensor& x, float lo = 0.0f, float hi = 1.0f);

}  // namespace framecast
