#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace framecast {

/// Forward-only single-head attention over (L, D) with learned Q/K/V/out
/// projections, row-streamed so memory stays O(L + D^2). Work is
/// 2 L^2 D + 4 L D^2 plus the softmax — the quadratic baseline the mixer
/// ladder is compared against.
void naive_joint_attention(const std::vector<float>& x, int64_t len, int64_t width,
                           const std::vector<float>& wq, const std::vector<float>& wk,
                           const std::vector<float>& wv, const std::vector<float>& wo,
                           std::vector<float>& out);

enum class BenchAxis {
  Embed,  // ladder over the token width M at fixed T (M x M time-gate weights refit per rung)
  Time,   // ladder over the frame count T at fixed M (T x T space-gate weights refit per rung)
};

struct BenchPoint {
  int64_t size = 0;          // ladder value (M or T)
  int64_t total_tokens = 0;  // matched naive sequence length L = T * M
  double mixer_seconds = 0.0;
  double naive_seconds = 0.0;
};

struct BenchResult {
  BenchAxis axis = BenchAxis::Embed;
  std::vector<BenchPoint> points;
  double mixer_slope = 0.0;  // log-time vs log-size least squares
  double naive_slope = 0.0;
  bool mixer_pass = false;   // slope <= 1.3
  bool naive_pass = false;   // slope >= 1.8
};

struct BenchOptions {
  std::vector<int64_t> sizes = {256, 512, 1024, 2048};
  int64_t fixed = 8;            // T for the embed axis, M for the time axis
  BenchAxis axis = BenchAxis::Embed;
  int runs = 5;                 // median-of-N timing
  int64_t naive_width = 32;     // D of the attention reference
  double min_sample_seconds = 0.03;  // repeats grow until a sample is this long
  bool run_naive = true;
  uint64_t seed = 7;
};

/// Times one mixer block across the ladder and the attention reference on
/// matched total-token counts, then fits log-log slopes.
BenchResult run_bench(const BenchOptions& opts);

std::string bench_csv(const BenchResult& result);
std::string bench_summary(const BenchResult& result);

double fit_loglog_slope(const std::vector<double>& sizes, const std::vector<double>& times);

}  // namespace framecast
