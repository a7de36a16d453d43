#include "framecast/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "framecast/model.hpp"
#include "framecast/rng.hpp"

namespace framecast {

void naive_joint_attention(const std::vector<float>& x, int64_t len, int64_t width,
                           const std::vector<float>& wq, const std::vector<float>& wk,
                           const std::vector<float>& wv, const std::vector<float>& wo,
                           std::vector<float>& out) {
  if (static_cast<int64_t>(x.size()) != len * width)
    throw ShapeError("naive_joint_attention: input size mismatch");
  const size_t ww = static_cast<size_t>(width * width);
  if (wq.size() != ww || wk.size() != ww || wv.size() != ww || wo.size() != ww)
    throw ShapeError("naive_joint_attention: projection size mismatch");

  auto project_rows = [&](const std::vector<float>& w, std::vector<float>& dst) {
    dst.assign(static_cast<size_t>(len * width), 0.0f);
    detail::matmul_acc(x.data(), w.data(), dst.data(), len, width, width);
  };
  std::vector<float> q, k, v;
  project_rows(wq, q);
  project_rows(wk, k);
  project_rows(wv, v);

  const float scale = 1.0f / std::sqrt(static_cast<float>(width));
  std::vector<float> logits(static_cast<size_t>(len));
  std::vector<float> mixed(static_cast<size_t>(len * width), 0.0f);
  for (int64_t i = 0; i < len; ++i) {
    const float* qrow = q.data() + i * width;
    float max_logit = -1e30f;
    for (int64_t j = 0; j < len; ++j) {
      const float* krow = k.data() + j * width;
      float dot = 0.0f;
      for (int64_t d = 0; d < width; ++d) dot += qrow[d] * krow[d];
      logits[static_cast<size_t>(j)] = dot * scale;
      max_logit = std::max(max_logit, logits[static_cast<size_t>(j)]);
    }
    float denom = 0.0f;
    for (int64_t j = 0; j < len; ++j) {
      logits[static_cast<size_t>(j)] = std::exp(logits[static_cast<size_t>(j)] - max_logit);
      denom += logits[static_cast<size_t>(j)];
    }
    float* mrow = mixed.data() + i * width;
    for (int64_t j = 0; j < len; ++j) {
      const float a = logits[static_cast<size_t>(j)] / denom;
      const float* vrow = v.data() + j * width;
      for (int64_t d = 0; d < width; ++d) mrow[d] += a * vrow[d];
    }
  }

  out.assign(static_cast<size_t>(len * width), 0.0f);
  detail::matmul_acc(mixed.data(), wo.data(), out.data(), len, width, width);
}

double fit_loglog_slope(const std::vector<double>& sizes, const std::vector<double>& times) {
  if (sizes.size() != times.size() || sizes.size() < 2)
    throw ValidationError("fit_loglog_slope: need at least two matched points");
  double sx = 0, sy = 0, sxy = 0, sxx = 0;
  const double n = static_cast<double>(sizes.size());
  for (size_t i = 0; i < sizes.size(); ++i) {
    const double lx = std::log(sizes[i]);
    const double ly = std::log(times[i]);
    sx += lx;
    sy += ly;
    sxy += lx * ly;
    sxx += lx * lx;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

// Median of `runs` samples; each sample repeats the body until it lasts at
// least min_sample_seconds, so timer resolution never dominates.
template <typename Body>
double timed_median(int runs, double min_sample_seconds, Body&& body) {
  body();  // warmup
  std::vector<double> samples;
  int64_t repeats = 1;
  for (int r = 0; r < runs; ++r) {
    for (;;) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int64_t i = 0; i < repeats; ++i) body();
      const auto t1 = std::chrono::steady_clock::now();
      const double total = std::chrono::duration<double>(t1 - t0).count();
      if (total >= min_sample_seconds || repeats > (int64_t(1) << 24)) {
        samples.push_back(total / static_cast<double>(repeats));
        break;
      }
      repeats *= 2;
    }
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

}  // namespace

BenchResult run_bench(const BenchOptions& opts) {
  if (opts.sizes.size() < 2) throw ValidationError("bench: need at least two ladder sizes");
  if (opts.runs < 1) throw ValidationError("bench: runs must be >= 1");
  for (int64_t s : opts.sizes)
    if (s < 2) throw ValidationError("bench: ladder sizes must be >= 2");

  BenchResult result;
  result.axis = opts.axis;
  Rng rng(opts.seed);

  for (int64_t size : opts.sizes) {
    const int64_t t_dim = opts.axis == BenchAxis::Embed ? opts.fixed : size;
    const int64_t m_dim = opts.axis == BenchAxis::Embed ? size : opts.fixed;

    MixerBlockWeights<float> blk;
    blk.ln_time_gain = Tensor::ones({m_dim});
    blk.ln_time_offset = Tensor::zeros({m_dim});
    blk.time_lgu = detail::init_lgu<float>(rng, m_dim);
    blk.ln_space_gain = Tensor::ones({t_dim});
    blk.ln_space_offset = Tensor::zeros({t_dim});
    blk.space_lgu = detail::init_lgu<float>(rng, t_dim);
    Tensor tokens({1, t_dim, m_dim});
    for (auto& v : tokens.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));

    BenchPoint point;
    point.size = size;
    point.total_tokens = t_dim * m_dim;
    point.mixer_seconds =
        timed_median(opts.runs, opts.min_sample_seconds, [&] { mixer_block(tokens, blk); });

    if (opts.run_naive) {
      const int64_t len = point.total_tokens;
      const int64_t d = opts.naive_width;
      std::vector<float> x(static_cast<size_t>(len * d));
      for (auto& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
      auto proj = [&rng, d] {
        std::vector<float> w(static_cast<size_t>(d * d));
        const double bound = std::sqrt(1.0 / static_cast<double>(d));
        for (auto& v : w) v = static_cast<float>(rng.uniform(-bound, bound));
        return w;
      };
      const auto wq = proj(), wk = proj(), wv = proj(), wo = proj();
      std::vector<float> out;
      point.naive_seconds = timed_median(opts.runs, opts.min_sample_seconds, [&] {
        naive_joint_attention(x, len, d, wq, wk, wv, wo, out);
      });
    }
    result.points.push_back(point);
  }

  std::vector<double> sizes, mixer_times, naive_times;
  for (const auto& p : result.points) {
    sizes.push_back(static_cast<double>(p.size));
    mixer_times.push_back(p.mixer_seconds);
    naive_times.push_back(p.naive_seconds);
  }
  result.mixer_slope = fit_loglog_slope(sizes, mixer_times);
  result.mixer_pass = result.mixer_slope <= 1.3;
  if (opts.run_naive) {
    result.naive_slope = fit_loglog_slope(sizes, naive_times);
    result.naive_pass = result.naive_slope >= 1.8;
  }
  return result;
}

std::string bench_csv(const BenchResult& result) {
  std::ostringstream os;
  os << "axis,size,total_tokens,mixer_seconds,naive_seconds\n";
  for (const auto& p : result.points) {
    char line[160];
    std::snprintf(line, sizeof(line), "%s,%ld,%ld,%.9g,%.9g\n",
                  result.axis == BenchAxis::Embed ? "embed" : "time", static_cast<long>(p.size),
                  static_cast<long>(p.total_tokens), p.mixer_seconds, p.naive_seconds);
    os << line;
  }
  return os.str();
}

std::string bench_summary(const BenchResult& result) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "mixer slope: %.3f (%s, threshold <= 1.3)\n",
                result.mixer_slope, result.mixer_pass ? "PASS" : "FAIL");
  os << line;
  if (result.naive_slope != 0.0) {
    std::snprintf(line, sizeof(line), "naive joint-attention slope: %.3f (%s, threshold >= 1.8)\n",
                  result.naive_slope, result.naive_pass ? "PASS" : "FAIL");
    os << line;
  }
  return os.str();
}

}  // namespace framecast
