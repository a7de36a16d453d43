#include "framecast/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace framecast {

namespace {

constexpr double kPsnrCapDb = 100.0;

void check_clip_pair(const Tensor& pred, const Tensor& target, const char* op) {
  if (pred.rank() != 4 || target.rank() != 4)
    throw ShapeError(std::string(op) + ": expected (T, C, H, W) inputs");
  detail::check_same_shape(pred, target, op);
}

}  // namespace

double psnr(const Tensor& pred, const Tensor& target, double data_range) {
  check_clip_pair(pred, target, "psnr");
  if (data_range <= 0) throw ValidationError("psnr: data_range must be positive");
  const int64_t t_dim = pred.dim(0);
  const int64_t frame_elems = pred.numel() / t_dim;
  double sum_db = 0.0;
  for (int64_t t = 0; t < t_dim; ++t) {
    const float* p = pred.data().data() + t * frame_elems;
    const float* q = target.data().data() + t * frame_elems;
    double mse = 0.0;
    for (int64_t i = 0; i < frame_elems; ++i) {
      const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
      mse += d * d;
    }
    mse /= static_cast<double>(frame_elems);
    double db = kPsnrCapDb;
    if (mse > 0.0) db = std::min(kPsnrCapDb, 10.0 * std::log10(data_range * data_range / mse));
    sum_db += db;
  }
  return sum_db / static_cast<double>(t_dim);
}

namespace {

// 11-tap Gaussian, sigma 1.5, normalized to sum 1.
std::vector<double> gaussian_window() {
  std::vector<double> w(11);
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = static_cast<double>(i - 5);
    w[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += w[static_cast<size_t>(i)];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable weighted filtering over valid positions: out is (H-10) x (W-10).
void gauss_filter_valid(const std::vector<double>& img, int64_t h, int64_t w,
                        const std::vector<double>& win, std::vector<double>& tmp,
                        std::vector<double>& out) {
  const int64_t wv = w - 10;
  tmp.assign(static_cast<size_t>(h * wv), 0.0);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < wv; ++x) {
      double acc = 0.0;
      for (int64_t k = 0; k < 11; ++k) acc += img[static_cast<size_t>(y * w + x + k)] * win[static_cast<size_t>(k)];
      tmp[static_cast<size_t>(y * wv + x)] = acc;
    }
  const int64_t hv = h - 10;
  out.assign(static_cast<size_t>(hv * wv), 0.0);
  for (int64_t y = 0; y < hv; ++y)
    for (int64_t x = 0; x < wv; ++x) {
      double acc = 0.0;
      for (int64_t k = 0; k < 11; ++k) acc += tmp[static_cast<size_t>((y + k) * wv + x)] * win[static_cast<size_t>(k)];
      out[static_cast<size_t>(y * wv + x)] = acc;
    }
}

}  // namespace

double ssim(const Tensor& pred, const Tensor& target, double data_range) {
  check_clip_pair(pred, target, "ssim");
  const int64_t t_dim = pred.dim(0), c_dim = pred.dim(1), h = pred.dim(2), w = pred.dim(3);
  if (h < 11 || w < 11) throw ValidationError("ssim: frames must be at least 11x11");
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const std::vector<double> win = gaussian_window();

  const int64_t plane = h * w;
  std::vector<double> x(static_cast<size_t>(plane)), y(static_cast<size_t>(plane));
  std::vector<double> xx(static_cast<size_t>(plane)), yy(static_cast<size_t>(plane)), xy(static_cast<size_t>(plane));
  std::vector<double> tmp, mu_x, mu_y, m_xx, m_yy, m_xy;

  double total = 0.0;
  int64_t planes = 0;
  for (int64_t t = 0; t < t_dim; ++t)
    for (int64_t c = 0; c < c_dim; ++c) {
      const float* p = pred.data().data() + (t * c_dim + c) * plane;
      const float* q = target.data().data() + (t * c_dim + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        x[static_cast<size_t>(i)] = static_cast<double>(p[i]);
        y[static_cast<size_t>(i)] = static_cast<double>(q[i]);
        xx[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
        yy[static_cast<size_t>(i)] = y[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
        xy[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
      }
      gauss_filter_valid(x, h, w, win, tmp, mu_x);
      gauss_filter_valid(y, h, w, win, tmp, mu_y);
      gauss_filter_valid(xx, h, w, win, tmp, m_xx);
      gauss_filter_valid(yy, h, w, win, tmp, m_yy);
      gauss_filter_valid(xy, h, w, win, tmp, m_xy);

      double mean_map = 0.0;
      for (size_t i = 0; i < mu_x.size(); ++i) {
        const double mx = mu_x[i], my = mu_y[i];
        const double var_x = m_xx[i] - mx * mx;
        const double var_y = m_yy[i] - my * my;
        const double cov = m_xy[i] - mx * my;
        const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
        const double den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
        mean_map += num / den;
      }
      total += mean_map / static_cast<double>(mu_x.size());
      ++planes;
    }
  return total / static_cast<double>(planes);
}

double perceptual_distance(const Tensor& pred, const Tensor& target, const FeatureExtractor& phi) {
  check_clip_pair(pred, target, "perceptual_distance");
  Tensor fp = phi(pred);
  Tensor fq = phi(target);
  double acc = 0.0;
  for (size_t i = 0; i < fp.data().size(); ++i) {
    const double d = static_cast<double>(fp.data()[i]) - static_cast<double>(fq.data()[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(fp.numel());
}

Tensor clamp01(const Tensor& x, float lo, float hi) {
  Tensor out = x.clone();
  for (auto& v : out.data()) v = std::min(hi, std::max(lo, v));
  return out;
}

}  // namespace framecast
