#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "framecast/rng.hpp"
#include "framecast/tensor.hpp"

namespace framecast {

/// Geometry and capacity of the predictor. `embed_width` is the token width
/// after the flatten-and-project step; the mixer blocks operate on
/// (B, t_in, embed_width) throughout.
struct ModelConfig {
  int64_t t_in = 10;
  int64_t t_out = 10;
  int64_t channels = 1;
  int64_t height = 64;
  int64_t width = 64;
  int stages = 3;  // stride-2 encoder stages; decoder mirrors them
  int64_t base_channels = 8;
  int n_blocks = 2;
  int64_t embed_width = 128;

  int64_t latent_channels() const { return base_channels << (stages - 1); }
  int64_t latent_height() const { return height >> stages; }
  int64_t latent_width() const { return width >> stages; }
  /// Flattened per-frame feature count ahead of the embedding projection.
  int64_t flat_features() const { return latent_channels() * latent_height() * latent_width(); }

  void validate() const {
    if (t_in < 1 || t_out < 1) throw ValidationError("ModelConfig: t_in and t_out must be >= 1");
    if (channels < 1) throw ValidationError("ModelConfig: channels must be >= 1");
    if (stages < 1) throw ValidationError("ModelConfig: stages must be >= 1");
    if (base_channels < 1) throw ValidationError("ModelConfig: base_channels must be >= 1");
    if (n_blocks < 1) throw ValidationError("ModelConfig: n_blocks must be >= 1");
    if (embed_width < 1) throw ValidationError("ModelConfig: embed_width must be >= 1");
    const int64_t div = int64_t(1) << stages;
    if (height % div != 0 || width % div != 0)
      throw ValidationError("ModelConfig: height/width must be divisible by 2^stages");
    if (latent_height() < 1 || latent_width() < 1)
      throw ValidationError("ModelConfig: too many stages for this resolution");
  }
};

/// The gated unit of the mixer: k = mish(x Wk), v = x Wv, r = sigmoid(x Wr),
/// out = (r * k * v) Wo. Position-wise along the sequence; all four
/// projections are square over the active feature width. No biases.
template <typename T>
struct LguWeights {
  TensorT<T> w_k, w_v, w_r, w_o;
};

template <typename T>
struct MixerBlockWeights {
  TensorT<T> ln_time_gain, ln_time_offset;  // over embed_width
  LguWeights<T> time_lgu;                   // embed_width x embed_width
  TensorT<T> ln_space_gain, ln_space_offset;  // over t_in
  LguWeights<T> space_lgu;                    // t_in x t_in
};

template <typename T>
struct ConvLayer {
  TensorT<T> kernel;  // (Cout, Cin, 3, 3)
  TensorT<T> bias;    // (Cout)
};

/// All learnable parameters of the predictor.
template <typename T>
struct PredictorWeightsT {
  ModelConfig cfg;
  std::vector<ConvLayer<T>> encoder;          // `stages` stride-2 layers
  TensorT<T> embed_in;                        // flat_features x embed_width
  std::vector<MixerBlockWeights<T>> blocks;   // n_blocks
  TensorT<T> temporal_head;                   // t_in x t_out
  TensorT<T> embed_out;                       // embed_width x flat_features
  std::vector<ConvLayer<T>> decoder;          // `stages` up-convs + final projection

  template <typename Fn>
  void for_each_param(Fn&& fn) {
    for (size_t i = 0; i < encoder.size(); ++i) {
      fn("encoder." + std::to_string(i) + ".kernel", encoder[i].kernel);
      fn("encoder." + std::to_string(i) + ".bias", encoder[i].bias);
    }
    fn("embed_in", embed_in);
    for (size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "block." + std::to_string(i) + ".";
      auto& b = blocks[i];
      fn(p + "ln_time.gain", b.ln_time_gain);
      fn(p + "ln_time.offset", b.ln_time_offset);
      fn(p + "time_lgu.w_k", b.time_lgu.w_k);
      fn(p + "time_lgu.w_v", b.time_lgu.w_v);
      fn(p + "time_lgu.w_r", b.time_lgu.w_r);
      fn(p + "time_lgu.w_o", b.time_lgu.w_o);
      fn(p + "ln_space.gain", b.ln_space_gain);
      fn(p + "ln_space.offset", b.ln_space_offset);
      fn(p + "space_lgu.w_k", b.space_lgu.w_k);
      fn(p + "space_lgu.w_v", b.space_lgu.w_v);
      fn(p + "space_lgu.w_r", b.space_lgu.w_r);
      fn(p + "space_lgu.w_o", b.space_lgu.w_o);
    }
    fn("temporal_head", temporal_head);
    fn("embed_out", embed_out);
    for (size_t i = 0; i < decoder.size(); ++i) {
      fn("decoder." + std::to_string(i) + ".kernel", decoder[i].kernel);
      fn("decoder." + std::to_string(i) + ".bias", decoder[i].bias);
    }
  }

  void set_requires_grad(bool v) {
    for_each_param([v](const std::string&, TensorT<T>& t) { t.set_requires_grad(v); });
  }

  void zero_grad() {
    for_each_param([](const std::string&, TensorT<T>& t) { t.zero_grad(); });
  }

  int64_t param_count() {
    int64_t n = 0;
    for_each_param([&n](const std::string&, TensorT<T>& t) { n += t.numel(); });
    return n;
  }
};

using PredictorWeights = PredictorWeightsT<float>;

namespace detail {

template <typename T>
TensorT<T> uniform_fan_in(Rng& rng, Shape shape, int64_t fan_in) {
  TensorT<T> t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
LguWeights<T> init_lgu(Rng& rng, int64_t width) {
  LguWeights<T> w;
  w.w_k = uniform_fan_in<T>(rng, {width, width}, width);
  w.w_v = uniform_fan_in<T>(rng, {width, width}, width);
  w.w_r = uniform_fan_in<T>(rng, {width, width}, width);
  w.w_o = uniform_fan_in<T>(rng, {width, width}, width);
  return w;
}

}  // namespace detail

/// Deterministic initialization: linear/conv weights uniform in
/// +-sqrt(1/fan_in), norm gains 1 and offsets 0, conv biases 0, and a
/// temporal head whose rows are all 1/t_in so every output frame starts as
/// the mean of the input-frame latents.
template <typename T>
PredictorWeightsT<T> init_weights(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  PredictorWeightsT<T> w;
  w.cfg = cfg;

  int64_t cin = cfg.channels;
  for (int s = 0; s < cfg.stages; ++s) {
    const int64_t cout = cfg.base_channels << s;
    ConvLayer<T> layer;
    layer.kernel = detail::uniform_fan_in<T>(rng, {cout, cin, 3, 3}, cin * 9);
    layer.bias = TensorT<T>::zeros({cout});
    w.encoder.push_back(std::move(layer));
    cin = cout;
  }

  const int64_t f_dim = cfg.flat_features();
  const int64_t m_dim = cfg.embed_width;
  w.embed_in = detail::uniform_fan_in<T>(rng, {f_dim, m_dim}, f_dim);

  for (int i = 0; i < cfg.n_blocks; ++i) {
    MixerBlockWeights<T> b;
    b.ln_time_gain = TensorT<T>::ones({m_dim});
    b.ln_time_offset = TensorT<T>::zeros({m_dim});
    b.time_lgu = detail::init_lgu<T>(rng, m_dim);
    b.ln_space_gain = TensorT<T>::ones({cfg.t_in});
    b.ln_space_offset = TensorT<T>::zeros({cfg.t_in});
    b.space_lgu = detail::init_lgu<T>(rng, cfg.t_in);
    w.blocks.push_back(std::move(b));
  }

  w.temporal_head = TensorT<T>::full({cfg.t_in, cfg.t_out}, static_cast<T>(1.0 / static_cast<double>(cfg.t_in)));
  w.embed_out = detail::uniform_fan_in<T>(rng, {m_dim, f_dim}, m_dim);

  // Decoder mirrors the encoder: upsample + conv halving channels back down,
  // then a final stride-1 projection to the frame channels.
  int64_t dc = cfg.latent_channels();
  for (int s = 0; s < cfg.stages; ++s) {
    const int64_t cout = s + 1 < cfg.stages ? dc / 2 : cfg.base_channels;
    ConvLayer<T> layer;
    layer.kernel = detail::uniform_fan_in<T>(rng, {cout, dc, 3, 3}, dc * 9);
    layer.bias = TensorT<T>::zeros({cout});
    w.decoder.push_back(std::move(layer));
    dc = cout;
  }
  ConvLayer<T> final_layer;
  final_layer.kernel = detail::uniform_fan_in<T>(rng, {cfg.channels, dc, 3, 3}, dc * 9);
  final_layer.bias = TensorT<T>::zeros({cfg.channels});
  w.decoder.push_back(std::move(final_layer));

  return w;
}

/// Per-frame downsampling stack. Time folds into the batch axis, so encoding
/// is identical whether frames arrive together or one at a time.
/// (B, T, C, H, W) -> (B, T, C', H', W').
template <typename T>
TensorT<T> encode(const TensorT<T>& frames, const PredictorWeightsT<T>& w) {
  const ModelConfig& cfg = w.cfg;
  if (frames.rank() != 5) throw ShapeError("encode: expected (B, T, C, H, W)");
  if (frames.dim(2) != cfg.channels || frames.dim(3) != cfg.height || frames.dim(4) != cfg.width)
    throw ShapeError("encode: frame geometry does not match config");
  const int64_t b_dim = frames.dim(0), t_dim = frames.dim(1);

  TensorT<T> x = reshape(frames, {b_dim * t_dim, cfg.channels, cfg.height, cfg.width});
  for (const auto& layer : w.encoder) {
    x = conv2d(x, layer.kernel, 2);
    x = channel_bias(x, layer.bias);
    x = mish(x);
  }
  return reshape(x, {b_dim, t_dim, cfg.latent_channels(), cfg.latent_height(), cfg.latent_width()});
}

/// Flattens (C', H', W') row-major into one feature axis and projects it to
/// the embed width. (B, T, C', H', W') -> (B, T, M).
template <typename T>
TensorT<T> tokenize(const TensorT<T>& latents, const PredictorWeightsT<T>& w) {
  const ModelConfig& cfg = w.cfg;
  if (latents.rank() != 5) throw ShapeError("tokenize: expected (B, T, C', H', W')");
  const int64_t b_dim = latents.dim(0), t_dim = latents.dim(1);
  TensorT<T> flat = reshape(latents, {b_dim, t_dim, cfg.flat_features()});
  return linear(flat, w.embed_in);
}

/// k = mish(x Wk), v = x Wv, r = sigmoid(x Wr) -> (r * k * v) Wo, applied
/// position-wise over the last axis.
template <typename T>
TensorT<T> lgu_forward(const TensorT<T>& x, const LguWeights<T>& w) {
  TensorT<T> k = mish(linear(x, w.w_k));
  TensorT<T> v = linear(x, w.w_v);
  TensorT<T> r = sigmoid(linear(x, w.w_r));
  return linear(hadamard(r, hadamard(k, v)), w.w_o);
}

/// Residual branch: normalize, shift one step along time for causality, run
/// the gated unit over the token width. Output index t depends only on
/// inputs at indices <= t.
template <typename T>
TensorT<T> time_mix(const TensorT<T>& tokens, const MixerBlockWeights<T>& blk) {
  TensorT<T> x = layer_norm(tokens, blk.ln_time_gain, blk.ln_time_offset);
  x = time_shift(x);
  x = lgu_forward(x, blk.time_lgu);
  return add(tokens, x);
}

/// Residual branch on the transposed tensor: (B, T, M) -> (B, M, T),
/// normalize and gate over the frame axis, transpose back.
template <typename T>
TensorT<T> space_mix(const TensorT<T>& tokens, const MixerBlockWeights<T>& blk) {
  TensorT<T> x = transpose_axes(tokens);
  x = layer_norm(x, blk.ln_space_gain, blk.ln_space_offset);
  x = lgu_forward(x, blk.space_lgu);
  x = transpose_axes(x);
  return add(tokens, x);
}

template <typename T>
TensorT<T> mixer_block(const TensorT<T>& tokens, const MixerBlockWeights<T>& blk) {
  return space_mix(time_mix(tokens, blk), blk);
}

/// N mixer blocks followed by the learned map from t_in to t_out along the
/// time axis. (B, T_in, M) -> (B, T_out, M).
template <typename T>
TensorT<T> translate(const TensorT<T>& tokens, const PredictorWeightsT<T>& w) {
  TensorT<T> x = tokens;
  for (const auto& blk : w.blocks) x = mixer_block(x, blk);
  TensorT<T> xt = transpose_axes(x);             // (B, M, T_in)
  xt = linear(xt, w.temporal_head);              // (B, M, T_out)
  return transpose_axes(xt);                     // (B, T_out, M)
}

/// Mirror of encode/tokenize: project back to flat features, unflatten, and
/// upsample through the conv stack. The last conv has no activation; outputs
/// are raw (losses see them unclamped, evaluation clamps to [0,1]).
template <typename T>
TensorT<T> decode(const TensorT<T>& tokens, const PredictorWeightsT<T>& w) {
  const ModelConfig& cfg = w.cfg;
  if (tokens.rank() != 3) throw ShapeError("decode: expected (B, T, M)");
  if (tokens.dim(2) != cfg.embed_width) throw ShapeError("decode: token width mismatch");
  const int64_t b_dim = tokens.dim(0), t_dim = tokens.dim(1);

  TensorT<T> flat = linear(tokens, w.embed_out);
  TensorT<T> x = reshape(flat, {b_dim * t_dim, cfg.latent_channels(), cfg.latent_height(),
                                cfg.latent_width()});
  for (size_t i = 0; i + 1 < w.decoder.size(); ++i) {
    x = nearest_upsample2x(x);
    x = conv2d(x, w.decoder[i].kernel, 1);
    x = channel_bias(x, w.decoder[i].bias);
    x = mish(x);
  }
  const auto& last = w.decoder.back();
  x = conv2d(x, last.kernel, 1);
  x = channel_bias(x, last.bias);
  return reshape(x, {b_dim, t_dim, cfg.channels, cfg.height, cfg.width});
}

/// Single-pass prediction of all future frames: no recurrence over outputs.
template <typename T>
TensorT<T> predict(const TensorT<T>& frames, const PredictorWeightsT<T>& w) {
  return decode(translate(tokenize(encode(frames, w), w), w), w);
}

}  // namespace framecast
