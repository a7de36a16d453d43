#include "framecast/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "framecast/bench.hpp"
#include "framecast/config.hpp"
#include "framecast/costmodel.hpp"
#include "framecast/data.hpp"
#include "framecast/gradcheck.hpp"
#include "framecast/metrics.hpp"
#include "framecast/training.hpp"

namespace fs = std::filesystem;

namespace framecast {

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  int64_t seed = -1;  // -1: keep config value
};

RunConfig load_run_config(const CommonFlags& flags) {
  std::vector<std::string> overrides = flags.overrides;
  if (flags.seed >= 0) {
    overrides.push_back("train.seed=" + std::to_string(flags.seed));
    overrides.push_back("scene.seed=" + std::to_string(flags.seed));
  }
  return RunConfig::from_file(flags.config_path, overrides);
}

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "config file (dotted keys)");
  cmd->add_option("--set", flags.overrides, "override: key=value (repeatable)");
  cmd->add_option("--seed", flags.seed, "override train.seed and scene.seed");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

// --- gen-data ---------------------------------------------------------------

int cmd_gen_data(const CommonFlags& flags, const std::string& out_dir, bool force) {
  const RunConfig cfg = load_run_config(flags);
  DatasetSpec spec;
  spec.scene = cfg.scene;
  spec.train_clips = cfg.train_clips;
  spec.val_clips = cfg.val_clips;
  spec.test_clips = cfg.test_clips;
  const auto entries = generate_dataset(spec, out_dir, force);
  int64_t train = 0, val = 0, test = 0;
  for (const auto& e : entries) {
    if (e.split == "train") ++train;
    if (e.split == "val") ++val;
    if (e.split == "test") ++test;
  }
  std::printf("wrote %zu clips (%ld train / %ld val / %ld test) under %s\n", entries.size(),
              static_cast<long>(train), static_cast<long>(val), static_cast<long>(test),
              out_dir.c_str());
  return kExitOk;
}

// --- train -------------------------------------------------------------------

int cmd_train(const CommonFlags& flags, const std::string& data_dir, const std::string& out_dir) {
  RunConfig cfg = load_run_config(flags);
  const std::string manifest = (fs::path(data_dir) / "manifest.cfg").string();
  Dataset data;
  data.train = load_split(manifest, "train");
  data.val = load_split(manifest, "val");
  if (data.train.empty()) throw ValidationError("train: dataset has no training clips");

  fs::create_directories(out_dir);
  cfg.train.checkpoint_dir = out_dir;
  cfg.train.log_path = (fs::path(out_dir) / "train.log").string();

  PredictorWeights weights = init_weights<float>(cfg.model, cfg.train.seed);
  const FitResult result = fit(weights, data, cfg.train);
  const double final_loss = result.log.back().train_loss;
  if (!std::isfinite(final_loss)) throw NumericError("train: non-finite final loss");
  std::printf("trained %zu epochs, final loss %.6g, checkpoints in %s\n", result.log.size(),
              final_loss, out_dir.c_str());
  return kExitOk;
}

// --- predict -----------------------------------------------------------------

Tensor slice_frames(const Tensor& frames, int64_t from, int64_t count) {
  const int64_t frame_elems = frames.numel() / frames.dim(0);
  Tensor out({count, frames.dim(1), frames.dim(2), frames.dim(3)});
  std::copy_n(frames.data().begin() + from * frame_elems, count * frame_elems,
              out.data().begin());
  return out;
}

// input last frame | prediction | ground truth, separated by 1-px columns.
Tensor triptych(const Tensor& last_in, const Tensor& pred, const Tensor& truth) {
  const int64_t c = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
  Tensor out({c, h, 3 * w + 2});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        out.at(ch, y, x) = last_in.at(ch, y, x);
        out.at(ch, y, w + 1 + x) = pred.at(ch, y, x);
        out.at(ch, y, 2 * w + 2 + x) = truth.at(ch, y, x);
      }
      out.at(ch, y, w) = 1.0f;
      out.at(ch, y, 2 * w + 1) = 1.0f;
    }
  return out;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& clip_dir,
                const std::string& out_dir) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const ModelConfig& mc = ckpt.model_cfg;
  VideoClip clip = read_frames(clip_dir);
  if (clip.frames.dim(1) != mc.channels || clip.frames.dim(2) != mc.height ||
      clip.frames.dim(3) != mc.width)
    throw ValidationError("predict: clip geometry does not match the checkpoint");
  if (clip.frames.dim(0) < mc.t_in + mc.t_out)
    throw ValidationError("predict: clip shorter than t_in + t_out frames");

  Tensor input({1, mc.t_in, mc.channels, mc.height, mc.width});
  std::copy_n(clip.frames.data().begin(), input.numel(), input.data().begin());
  Tensor pred5 = predict(input, ckpt.weights);
  Tensor pred = clamp01(reshape(pred5, {mc.t_out, mc.channels, mc.height, mc.width}));

  fs::create_directories(out_dir);
  VideoClip pred_clip;
  pred_clip.frames = pred;
  write_frames(out_dir, pred_clip);

  const Tensor last_in = slice_frames(clip.frames, mc.t_in - 1, 1);
  const Tensor truth = slice_frames(clip.frames, mc.t_in, mc.t_out);
  const int64_t frame_elems = mc.channels * mc.height * mc.width;
  for (int64_t t = 0; t < mc.t_out; ++t) {
    Tensor pf({mc.channels, mc.height, mc.width});
    std::copy_n(pred.data().begin() + t * frame_elems, frame_elems, pf.data().begin());
    Tensor tf({mc.channels, mc.height, mc.width});
    std::copy_n(truth.data().begin() + t * frame_elems, frame_elems, tf.data().begin());
    Tensor li({mc.channels, mc.height, mc.width});
    std::copy_n(last_in.data().begin(), frame_elems, li.data().begin());
    char name[48];
    std::snprintf(name, sizeof(name), "triptych_%03ld.%s", static_cast<long>(t),
                  mc.channels == 1 ? "pgm" : "ppm");
    write_frame((fs::path(out_dir) / name).string(), triptych(li, pf, tf));
  }
  std::printf("wrote %ld predicted frames and triptychs to %s\n", static_cast<long>(mc.t_out),
              out_dir.c_str());
  return kExitOk;
}

// --- eval ----------------------------------------------------------------------

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& out_csv) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const ModelConfig& mc = ckpt.model_cfg;
  const std::string manifest = (fs::path(data_dir) / "manifest.cfg").string();
  const std::vector<VideoClip> clips = load_split(manifest, "test");
  if (clips.empty()) throw ValidationError("eval: empty test set");
  const FeatureExtractor phi(mc.channels, CurriculumConfig{}.phi_seed);

  std::ostringstream csv;
  csv << "clip,seed,psnr,ssim,phi_dist,baseline_psnr,baseline_ssim,baseline_phi,delta_psnr\n";
  double sum_psnr = 0, sum_ssim = 0, sum_phi = 0, sum_bpsnr = 0, sum_bssim = 0, sum_bphi = 0;
  std::printf("%-6s %10s %8s %10s %14s %12s\n", "clip", "psnr", "ssim", "phi_dist",
              "baseline_psnr", "delta_psnr");
  for (size_t i = 0; i < clips.size(); ++i) {
    const VideoClip& clip = clips[i];
    if (clip.frames.dim(0) < mc.t_in + mc.t_out)
      throw ValidationError("eval: clip shorter than t_in + t_out frames");
    Tensor input({1, mc.t_in, mc.channels, mc.height, mc.width});
    std::copy_n(clip.frames.data().begin(), input.numel(), input.data().begin());
    const Tensor truth = slice_frames(clip.frames, mc.t_in, mc.t_out);

    Tensor pred = clamp01(reshape(predict(input, ckpt.weights),
                                  {mc.t_out, mc.channels, mc.height, mc.width}));
    Tensor base = reshape(copy_last_baseline(input, mc.t_out),
                          {mc.t_out, mc.channels, mc.height, mc.width});

    const double p = psnr(pred, truth), s = ssim(pred, truth), d = perceptual_distance(pred, truth, phi);
    const double bp = psnr(base, truth), bs = ssim(base, truth),
                 bd = perceptual_distance(base, truth, phi);
    sum_psnr += p;
    sum_ssim += s;
    sum_phi += d;
    sum_bpsnr += bp;
    sum_bssim += bs;
    sum_bphi += bd;
    char row[256];
    std::snprintf(row, sizeof(row), "%zu,%llu,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", i,
                  static_cast<unsigned long long>(clip.seed), p, s, d, bp, bs, bd, p - bp);
    csv << row;
    std::printf("%-6zu %10.3f %8.4f %10.5f %14.3f %12.3f\n", i, p, s, d, bp, p - bp);
  }
  const double n = static_cast<double>(clips.size());
  char mean_row[256];
  std::snprintf(mean_row, sizeof(mean_row), "mean,,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                sum_psnr / n, sum_ssim / n, sum_phi / n, sum_bpsnr / n, sum_bssim / n,
                sum_bphi / n, (sum_psnr - sum_bpsnr) / n);
  csv << mean_row;
  std::printf("mean   %10.3f %8.4f %10.5f %14.3f %12.3f\n", sum_psnr / n, sum_ssim / n,
              sum_phi / n, sum_bpsnr / n, (sum_psnr - sum_bpsnr) / n);
  if (!out_csv.empty()) write_text(out_csv, csv.str());
  return kExitOk;
}

// --- costmodel -------------------------------------------------------------------

int cmd_costmodel(const std::string& preset_path, bool table1_mode,
                  const std::vector<int64_t>& resolutions, const std::vector<int64_t>& frames,
                  const std::vector<int64_t>& widths, int64_t downsample,
                  const std::string& out_csv) {
  const HardwareSpec hw = preset_path.empty() ? HardwareSpec{} : load_hardware_preset(preset_path);
  if (table1_mode) {
    const auto rows = table1(hw, WorkloadShape{});
    std::printf("%-8s %14s %14s %12s %8s\n", "method", "flops", "bytes", "latency_ms", "bound");
    for (const auto& r : rows)
      std::printf("%-8s %14.4g %14.4g %12.2f %8s\n", r.method.c_str(),
                  static_cast<double>(r.flops), static_cast<double>(r.bytes),
                  r.latency_seconds * 1e3, r.bound == Bound::Compute ? "compute" : "memory");
    if (!out_csv.empty()) write_text(out_csv, table1_csv(rows));
    return kExitOk;
  }
  const auto points = sweep(hw, resolutions, frames, widths, downsample);
  const std::string csv = sweep_csv(points);
  std::fputs(csv.c_str(), stdout);
  if (!out_csv.empty()) write_text(out_csv, csv);
  return kExitOk;
}

// --- bench --------------------------------------------------------------------

int cmd_bench(const BenchOptions& opts, const std::string& out_csv) {
  const BenchResult result = run_bench(opts);
  std::printf("%-6s %12s %14s %14s\n", "size", "total_tokens", "mixer_s", "naive_s");
  for (const auto& p : result.points)
    std::printf("%-6ld %12ld %14.6g %14.6g\n", static_cast<long>(p.size),
                static_cast<long>(p.total_tokens), p.mixer_seconds, p.naive_seconds);
  std::fputs(bench_summary(result).c_str(), stdout);
  if (!out_csv.empty()) write_text(out_csv, bench_csv(result));
  const bool pass = result.mixer_pass && (!opts.run_naive || result.naive_pass);
  return pass ? kExitOk : kExitNumeric;
}

// --- gradcheck -------------------------------------------------------------------

int cmd_gradcheck(const GradCheckOptions& opts) {
  const auto results = run_gradcheck(opts);
  std::fputs(gradcheck_report(results).c_str(), stdout);
  if (!all_passed(results)) {
    std::printf("gradcheck: FAILURES detected\n");
    return kExitNumeric;
  }
  std::printf("gradcheck: all %zu checks passed\n", results.size());
  return kExitOk;
}

std::vector<int64_t> parse_int_list(const std::string& csv) {
  std::vector<int64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoll(item));
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"single-pass video prediction: data synthesis, curriculum training, evaluation, "
               "analytic cost model, scaling benchmarks, gradient checks"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string out_dir = "out";
  bool force = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic clip dataset");
  add_common(gen, flags);
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_flag("--force", force, "overwrite an existing dataset");

  auto* train = app.add_subcommand("train", "run the staged training schedule");
  add_common(train, flags);
  std::string data_dir;
  train->add_option("--data", data_dir, "dataset directory (holds manifest.cfg)")->required();
  train->add_option("--out", out_dir, "run directory for checkpoints and the log")->required();

  auto* predict_cmd = app.add_subcommand("predict", "predict future frames for one clip");
  std::string checkpoint_path, clip_dir;
  predict_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  predict_cmd->add_option("--clip", clip_dir, "clip directory of frame files")->required();
  predict_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "metrics report over the test split");
  std::string eval_csv;
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--out", eval_csv, "CSV report path");

  auto* cost = app.add_subcommand("costmodel", "analytic flops/bytes/latency model");
  std::string preset_path, cost_csv;
  bool table1_mode = false;
  std::string res_list = "256,512,1024", frames_list = "10", width_list = "512";
  int64_t downsample = 8;
  cost->add_option("--preset", preset_path, "hardware preset file");
  cost->add_flag("--table1", table1_mode, "reproduce the reference cost table");
  cost->add_option("--res", res_list, "resolutions, comma separated");
  cost->add_option("--frames", frames_list, "frame counts, comma separated");
  cost->add_option("--width", width_list, "latent widths, comma separated");
  cost->add_option("--downsample", downsample, "encoder downsample factor");
  cost->add_option("--out", cost_csv, "CSV output path");

  auto* bench = app.add_subcommand("bench", "translator scaling measurement");
  std::string sizes_list = "256,512,1024,2048", axis_name = "embed", bench_csv_path;
  BenchOptions bench_opts;
  bench->add_option("--sizes", sizes_list, "ladder values, comma separated");
  bench->add_option("--fixed", bench_opts.fixed, "fixed short-axis extent (T for embed axis)");
  bench->add_option("--axis", axis_name, "ladder axis: embed | time");
  bench->add_option("--runs", bench_opts.runs, "timing samples per size (median)");
  bench->add_option("--naive-width", bench_opts.naive_width, "attention reference width");
  bench->add_flag("!--no-naive", bench_opts.run_naive, "skip the attention reference");
  bench->add_option("--out", bench_csv_path, "CSV output path");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite (64-bit)");
  GradCheckOptions grad_opts;
  grad->add_option("--instances", grad_opts.instances, "random instances per op");
  grad->add_option("--tolerance", grad_opts.tolerance, "max relative error");
  grad->add_option("--inject-fault", grad_opts.inject_fault,
                   "test hook: break one op's gradient")
      ->group("");  // hidden

  std::vector<const char*> argv;
  argv.push_back("framecast");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(flags, out_dir, force);
    if (train->parsed()) return cmd_train(flags, data_dir, out_dir);
    if (predict_cmd->parsed()) return cmd_predict(checkpoint_path, clip_dir, out_dir);
    if (eval_cmd->parsed()) return cmd_eval(checkpoint_path, data_dir, eval_csv);
    if (cost->parsed())
      return cmd_costmodel(preset_path, table1_mode, parse_int_list(res_list),
                           parse_int_list(frames_list), parse_int_list(width_list), downsample,
                           cost_csv);
    if (bench->parsed()) {
      bench_opts.sizes = parse_int_list(sizes_list);
      if (axis_name == "embed")
        bench_opts.axis = BenchAxis::Embed;
      else if (axis_name == "time")
        bench_opts.axis = BenchAxis::Time;
      else
        throw ValidationError("bench: --axis must be embed or time");
      return cmd_bench(bench_opts, bench_csv_path);
    }
    if (grad->parsed()) return cmd_gradcheck(grad_opts);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o failure: %s\n", e.what());
    return kExitIo;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "invalid request: %s\n", e.what());
    return kExitValidation;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace framecast
