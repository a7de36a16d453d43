#include "framecast/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "framecast/losses.hpp"
#include "framecast/model.hpp"
#include "framecast/rng.hpp"
#include "framecast/tensor.hpp"

namespace framecast {

namespace {

Tensor64 rand_t(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  Tensor64 t(std::move(shape), grad);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Keeps values away from a kink at `center` so subgradient choices cannot
// contaminate the finite-difference comparison.
void avoid_kink(Tensor64& t, double center = 0.0, double margin = 0.05) {
  for (auto& v : t.data())
    if (std::abs(v - center) < margin) v += (v >= center ? margin : -margin);
}

// mish with a deliberately sign-flipped input gradient (fault-injection hook
// for the reporting path; forward value identical).
Tensor64 mish_faulty(const Tensor64& a) {
  Tensor64 out(a.shape());
  for (size_t i = 0; i < a.data().size(); ++i) {
    const double x = a.data()[i];
    out.data()[i] = x * std::tanh(detail::stable_softplus(x));
  }
  if (detail::wants_tape(a)) {
    out.set_requires_grad(true);
    auto ai = a.impl, oi = out.impl;
    GradTape<double>::current()->record("mish_faulty", oi, [ai, oi] {
      if (oi->grad.empty() || !ai->requires_grad) return;
      ensure_grad(*ai);
      for (size_t i = 0; i < oi->grad.size(); ++i) {
        const double x = ai->data[i];
        const double th = std::tanh(detail::stable_softplus(x));
        const double sig = detail::stable_sigmoid(x);
        ai->grad[i] -= oi->grad[i] * (th + x * (1.0 - th * th) * sig);
      }
    });
  }
  return out;
}

struct CheckInstance {
  std::vector<Tensor64*> inputs;
  std::function<Tensor64()> forward;
};

// One named case: builds a random instance per call.
struct CheckCase {
  std::string name;
  std::function<void(Rng&, const GradCheckOptions&, std::vector<Tensor64>&,
                     std::function<Tensor64()>&)>
      make;
};

double fd_max_rel_err(std::vector<Tensor64>& inputs, const std::function<Tensor64()>& forward) {
  GradTape<double> tape;
  Tensor64 loss;
  {
    GradTape<double>::Scope scope(tape);
    loss = forward();
  }
  for (auto& t : inputs) t.zero_grad();
  tape.backward(loss);

  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic =
        t.has_grad() ? t.grad() : std::vector<double>(t.data().size(), 0.0);
    // Small tensors are checked exhaustively; large ones on a 128-element
    // stride (two forwards per element dominate the cost otherwise).
    const size_t stride = std::max<size_t>(1, t.data().size() / 128);
    for (size_t i = 0; i < t.data().size(); i += stride) {
      const double x0 = t.data()[i];
      const double h = 1e-5 * (std::abs(x0) + 1.0);
      t.data()[i] = x0 + h;
      const double up = forward().value();
      t.data()[i] = x0 - h;
      const double dn = forward().value();
      t.data()[i] = x0;
      const double numeric = (up - dn) / (2.0 * h);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-3});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
  }
  return worst;
}

// Random projection weights make the scalar loss sensitive to every output
// element, not just their sum.
Tensor64 project(const Tensor64& x, Rng& rng) {
  Tensor64 w(x.shape());
  for (auto& v : w.data()) v = rng.uniform(0.25, 1.0);
  return reduce(hadamard(x, w), Reduce::Sum);
}

MixerBlockWeights<double> rand_block(int64_t t_dim, int64_t m_dim, Rng& rng) {
  MixerBlockWeights<double> b;
  b.ln_time_gain = rand_t({m_dim}, rng, 0.5, 1.5);
  b.ln_time_offset = rand_t({m_dim}, rng, -0.3, 0.3);
  b.time_lgu.w_k = rand_t({m_dim, m_dim}, rng);
  b.time_lgu.w_v = rand_t({m_dim, m_dim}, rng);
  b.time_lgu.w_r = rand_t({m_dim, m_dim}, rng);
  b.time_lgu.w_o = rand_t({m_dim, m_dim}, rng);
  b.ln_space_gain = rand_t({t_dim}, rng, 0.5, 1.5);
  b.ln_space_offset = rand_t({t_dim}, rng, -0.3, 0.3);
  b.space_lgu.w_k = rand_t({t_dim, t_dim}, rng);
  b.space_lgu.w_v = rand_t({t_dim, t_dim}, rng);
  b.space_lgu.w_r = rand_t({t_dim, t_dim}, rng);
  b.space_lgu.w_o = rand_t({t_dim, t_dim}, rng);
  return b;
}

std::vector<CheckCase> build_cases() {
  std::vector<CheckCase> cases;
  auto add = [&cases](std::string name, auto&& fn) {
    cases.push_back({std::move(name), std::forward<decltype(fn)>(fn)});
  };

  add("linear", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                   std::function<Tensor64()>& fwd) {
    const int64_t r = rng.uniform_int(1, 3), f = rng.uniform_int(1, 5), g = rng.uniform_int(1, 4);
    in.push_back(rand_t({r, f}, rng));
    in.push_back(rand_t({f, g}, rng));
    in.push_back(rand_t({g}, rng));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      return project(linear(in[0], in[1], &in[2]), local);
    };
  });

  add("mish", [](Rng& rng, const GradCheckOptions& opts, std::vector<Tensor64>& in,
                 std::function<Tensor64()>& fwd) {
    in.push_back(rand_t({rng.uniform_int(1, 4), rng.uniform_int(1, 5)}, rng, -3.0, 3.0));
    const bool faulty = opts.inject_fault == "mish";
    Rng proj(rng.raw());
    fwd = [&in, proj, faulty]() mutable {
      Rng local = proj;
      return project(faulty ? mish_faulty(in[0]) : mish(in[0]), local);
    };
  });

  add("sigmoid", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                    std::function<Tensor64()>& fwd) {
    in.push_back(rand_t({rng.uniform_int(1, 4), rng.uniform_int(1, 5)}, rng, -4.0, 4.0));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      return project(sigmoid(in[0]), local);
    };
  });

  add("hadamard", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                     std::function<Tensor64()>& fwd) {
    const Shape shape = {rng.uniform_int(1, 2), rng.uniform_int(1, 3), rng.uniform_int(1, 4)};
    in.push_back(rand_t(shape, rng));
    in.push_back(rand_t(shape, rng));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      return project(hadamard(in[0], in[1]), local);
    };
  });

  add("add_subtract_scale", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                               std::function<Tensor64()>& fwd) {
    const Shape shape = {rng.uniform_int(1, 3), rng.uniform_int(1, 4)};
    in.push_back(rand_t(shape, rng));
    in.push_back(rand_t(shape, rng));
    const double s = rng.uniform(0.5, 2.0);
    Rng proj(rng.raw());
    fwd = [&in, proj, s]() mutable {
      Rng local = proj;
      return project(subtract(framecast::add(in[0], in[1]), scale(in[1], s)), local);
    };
  });

  add("absolute", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                     std::function<Tensor64()>& fwd) {
    Tensor64 t = rand_t({rng.uniform_int(1, 3), rng.uniform_int(1, 4)}, rng, -2.0, 2.0);
    avoid_kink(t);
    in.push_back(std::move(t));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      return project(absolute(in[0]), local);
    };
  });

  add("square", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                   std::function<Tensor64()>& fwd) {
    in.push_back(rand_t({rng.uniform_int(1, 3), rng.uniform_int(1, 4)}, rng));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      return project(square(in[0]), local);
    };
  });

  add("layer_norm", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                       std::function<Tensor64()>& fwd) {
    const int64_t rows = rng.uniform_int(1, 3), f = rng.uniform_int(2, 6);
    in.push_back(rand_t({rows, f}, rng));
    in.push_back(rand_t({f}, rng, 0.5, 1.5));
    in.push_back(rand_t({f}, rng, -0.5, 0.5));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      return project(layer_norm(in[0], in[1], in[2]), local);
    };
  });

  add("time_shift", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                       std::function<Tensor64()>& fwd) {
    in.push_back(rand_t({rng.uniform_int(1, 2), rng.uniform_int(1, 5), rng.uniform_int(1, 4)}, rng));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      return project(time_shift(in[0]), local);
    };
  });

  add("transpose_axes", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                           std::function<Tensor64()>& fwd) {
    in.push_back(rand_t({rng.uniform_int(1, 2), rng.uniform_int(1, 4), rng.uniform_int(1, 4)}, rng));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      return project(transpose_axes(in[0]), local);
    };
  });

  add("reshape", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                    std::function<Tensor64()>& fwd) {
    const int64_t a = rng.uniform_int(1, 3), b = rng.uniform_int(1, 4);
    in.push_back(rand_t({a, b}, rng));
    Rng proj(rng.raw());
    fwd = [&in, proj, a, b]() mutable {
      Rng local = proj;
      return project(reshape(in[0], {a * b}), local);
    };
  });

  add("conv2d_s1", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                      std::function<Tensor64()>& fwd) {
    const int64_t cin = rng.uniform_int(1, 2), cout = rng.uniform_int(1, 3);
    const int64_t h = rng.uniform_int(3, 6), w = rng.uniform_int(3, 6);
    in.push_back(rand_t({1, cin, h, w}, rng));
    in.push_back(rand_t({cout, cin, 3, 3}, rng));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      return project(conv2d(in[0], in[1], 1), local);
    };
  });

  add("conv2d_s2", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                      std::function<Tensor64()>& fwd) {
    const int64_t cin = rng.uniform_int(1, 2), cout = rng.uniform_int(1, 2);
    const int64_t h = 2 * rng.uniform_int(2, 3), w = 2 * rng.uniform_int(2, 3);
    in.push_back(rand_t({1, cin, h, w}, rng));
    in.push_back(rand_t({cout, cin, 3, 3}, rng));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      return project(conv2d(in[0], in[1], 2), local);
    };
  });

  add("channel_bias", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                         std::function<Tensor64()>& fwd) {
    const int64_t c = rng.uniform_int(1, 3);
    in.push_back(rand_t({rng.uniform_int(1, 2), c, 3, 3}, rng));
    in.push_back(rand_t({c}, rng));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      return project(channel_bias(in[0], in[1]), local);
    };
  });

  add("nearest_upsample2x", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                               std::function<Tensor64()>& fwd) {
    in.push_back(rand_t({1, rng.uniform_int(1, 2), rng.uniform_int(1, 3), rng.uniform_int(1, 3)}, rng));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      return project(nearest_upsample2x(in[0]), local);
    };
  });

  add("axis_diff", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                      std::function<Tensor64()>& fwd) {
    in.push_back(rand_t({rng.uniform_int(1, 2), rng.uniform_int(2, 5), rng.uniform_int(2, 4)}, rng));
    const int axis = static_cast<int>(rng.uniform_int(1, 2));
    Rng proj(rng.raw());
    fwd = [&in, proj, axis]() mutable {
      Rng local = proj;
      return project(axis_diff(in[0], axis), local);
    };
  });

  add("reduce_sum", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                       std::function<Tensor64()>& fwd) {
    in.push_back(rand_t({rng.uniform_int(1, 3), rng.uniform_int(1, 4)}, rng));
    fwd = [&in] { return reduce(in[0], Reduce::Sum); };
  });

  add("reduce_mean", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                        std::function<Tensor64()>& fwd) {
    in.push_back(rand_t({rng.uniform_int(1, 3), rng.uniform_int(1, 4)}, rng));
    fwd = [&in] { return reduce(in[0], Reduce::Mean); };
  });

  add("reduce_abs_mean", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                            std::function<Tensor64()>& fwd) {
    Tensor64 t = rand_t({rng.uniform_int(1, 3), rng.uniform_int(1, 4)}, rng, -2.0, 2.0);
    avoid_kink(t);
    in.push_back(std::move(t));
    fwd = [&in] { return reduce(in[0], Reduce::AbsMean); };
  });

  add("lgu", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                std::function<Tensor64()>& fwd) {
    const int64_t len = rng.uniform_int(1, 3), width = rng.uniform_int(1, 4);
    in.push_back(rand_t({1, len, width}, rng));
    in.push_back(rand_t({width, width}, rng));
    in.push_back(rand_t({width, width}, rng));
    in.push_back(rand_t({width, width}, rng));
    in.push_back(rand_t({width, width}, rng));
    Rng proj(rng.raw());
    fwd = [&in, proj]() mutable {
      Rng local = proj;
      LguWeights<double> w{in[1], in[2], in[3], in[4]};
      return project(lgu_forward(in[0], w), local);
    };
  });

  auto add_mix = [&add](const std::string& name, bool space, bool both) {
    add(name, [space, both](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                            std::function<Tensor64()>& fwd) {
      const int64_t t_dim = rng.uniform_int(2, 4), m_dim = rng.uniform_int(2, 4);
      auto blk = std::make_shared<MixerBlockWeights<double>>(rand_block(t_dim, m_dim, rng));
      in.push_back(rand_t({1, t_dim, m_dim}, rng));
      in.push_back(blk->time_lgu.w_k);
      in.push_back(blk->time_lgu.w_o);
      in.push_back(blk->space_lgu.w_k);
      in.push_back(blk->space_lgu.w_o);
      in.push_back(blk->ln_time_gain);
      in.push_back(blk->ln_space_gain);
      Rng proj(rng.raw());
      fwd = [&in, proj, blk, space, both]() mutable {
        Rng local = proj;
        Tensor64 out = both ? mixer_block(in[0], *blk)
                            : (space ? space_mix(in[0], *blk) : time_mix(in[0], *blk));
        return project(out, local);
      };
    });
  };
  add_mix("time_mix", false, false);
  add_mix("space_mix", true, false);
  add_mix("mixer_block", false, true);

  add("predict_pipeline", [](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                             std::function<Tensor64()>& fwd) {
    ModelConfig cfg;
    cfg.t_in = 2;
    cfg.t_out = 2;
    cfg.channels = 1;
    cfg.height = 16;
    cfg.width = 16;
    cfg.stages = 3;
    cfg.base_channels = 2;
    cfg.n_blocks = 1;
    cfg.embed_width = 6;
    auto w = std::make_shared<PredictorWeightsT<double>>(init_weights<double>(cfg, rng.raw()));
    w->set_requires_grad(true);
    Tensor64 frames({1, 2, 1, 16, 16}, true);
    for (auto& v : frames.data()) v = rng.uniform(0.0, 1.0);
    in.push_back(frames);
    // A representative parameter from each component joins the check; the
    // remaining parameters still receive gradients through the same tape.
    in.push_back(w->blocks[0].time_lgu.w_o);
    in.push_back(w->temporal_head);
    Rng proj(rng.raw());
    fwd = [&in, proj, w]() mutable {
      Rng local = proj;
      return project(predict(in[0], *w), local);
    };
  });

  // Stage losses: pred is checked, target held fixed.
  auto add_loss = [&add](const std::string& name, int which) {
    add(name, [which](Rng& rng, const GradCheckOptions&, std::vector<Tensor64>& in,
                      std::function<Tensor64()>& fwd) {
      const int64_t t_dim = rng.uniform_int(2, 3);
      // Checkerboard against a constant target: pixel residuals, spatial
      // first differences, and frame-to-frame differences all stay bounded
      // away from the l1 kinks, so central differences see a smooth loss.
      Tensor64 pred({1, t_dim, 1, 16, 16}, true);
      for (int64_t t = 0; t < t_dim; ++t)
        for (int64_t y = 0; y < 16; ++y)
          for (int64_t x = 0; x < 16; ++x) {
            const double chk = (x + y) % 2 == 0 ? 1.0 : -1.0;
            const double amp = 0.25 + 0.1 * static_cast<double>(t);
            pred.at(int64_t(0), t, int64_t(0), y, x) = 0.5 + chk * amp + rng.uniform(-0.02, 0.02);
          }
      Tensor64 target = Tensor64::full({1, t_dim, 1, 16, 16}, 0.5);
      in.push_back(pred);
      // The target is a constant of the loss, not a checked input; the
      // closure keeps it alive.
      auto phi = std::make_shared<FeatureExtractorT<double>>(1, rng.raw());
      auto cfg = std::make_shared<CurriculumConfig>();
      fwd = [&in, target, phi, cfg, which] {
        switch (which) {
          case 1: return stage1_loss(in[0], target);
          case 2: return stage2_loss(in[0], target, *cfg);
          case 3: return gdl_loss(in[0], target);
          case 4: return smooth_loss(in[0]);
          case 5: return perceptual_loss(in[0], target, *phi);
          default: return stage3_loss(in[0], target, *cfg, *phi);
        }
      };
    });
  };
  add_loss("l1_loss", 1);
  add_loss("gdl_loss", 3);
  add_loss("smooth_loss", 4);
  add_loss("perceptual_loss", 5);
  add_loss("stage2_loss", 2);
  add_loss("stage3_loss", 6);

  return cases;
}

}  // namespace

std::vector<std::string> gradcheck_coverage() {
  std::vector<std::string> names;
  for (const auto& c : build_cases()) names.push_back(c.name);
  return names;
}

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& opts) {
  if (opts.instances < 1) throw ValidationError("gradcheck: instances must be >= 1");
  std::vector<GradCheckResult> results;
  Rng master(opts.seed);
  for (const auto& check : build_cases()) {
    GradCheckResult res;
    res.op = check.name;
    res.instances = opts.instances;
    // The heavyweight composites run fewer instances; each is itself a
    // many-parameter check.
    if (check.name == "predict_pipeline")
      res.instances = std::max(1, opts.instances / 10);
    for (int i = 0; i < res.instances; ++i) {
      Rng rng(master.raw());
      std::vector<Tensor64> inputs;
      std::function<Tensor64()> fwd;
      check.make(rng, opts, inputs, fwd);
      res.max_rel_err = std::max(res.max_rel_err, fd_max_rel_err(inputs, fwd));
    }
    res.pass = res.max_rel_err < opts.tolerance;
    results.push_back(res);
  }
  return results;
}

bool all_passed(const std::vector<GradCheckResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return !results.empty();
}

std::string gradcheck_report(const std::vector<GradCheckResult>& results) {
  std::ostringstream os;
  for (const auto& r : results) {
    char line[160];
    std::snprintf(line, sizeof(line), "[%s] %-18s instances=%-3d max_rel_err=%.3e\n",
                  r.pass ? "PASS" : "FAIL", r.op.c_str(), r.instances, r.max_rel_err);
    os << line;
  }
  return os.str();
}

}  // namespace framecast
