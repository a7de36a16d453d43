#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "framecast/bench.hpp"
#include "framecast/costmodel.hpp"
#include "framecast/data.hpp"
#include "framecast/gradcheck.hpp"
#include "framecast/metrics.hpp"
#include "framecast/training.hpp"

namespace py = pybind11;
using namespace framecast;

namespace {

Tensor tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
  Shape shape;
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape.push_back(arr.shape(i));
  std::vector<float> data(arr.data(), arr.data() + arr.size());
  return Tensor::from_data(shape, std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> arr(shape);
  std::copy(t.data().begin(), t.data().end(), arr.mutable_data());
  return arr;
}

ModelConfig config_from_kwargs(int64_t t_in, int64_t t_out, int64_t channels, int64_t height,
                               int64_t width, int stages, int64_t base_channels, int n_blocks,
                               int64_t embed_width) {
  ModelConfig cfg;
  cfg.t_in = t_in;
  cfg.t_out = t_out;
  cfg.channels = channels;
  cfg.height = height;
  cfg.width = width;
  cfg.stages = stages;
  cfg.base_channels = base_channels;
  cfg.n_blocks = n_blocks;
  cfg.embed_width = embed_width;
  cfg.validate();
  return cfg;
}

/// Owning wrapper around the predictor weights for the python surface.
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed) : weights_(init_weights<float>(cfg, seed)) {}
  explicit Model(PredictorWeights weights) : weights_(std::move(weights)) {}

  py::array_t<float> predict_frames(
      const py::array_t<float, py::array::c_style | py::array::forcecast>& frames) {
    Tensor input = tensor_from_array(frames);
    if (input.rank() == 4)
      input = reshape(input, {1, input.dim(0), input.dim(1), input.dim(2), input.dim(3)});
    Tensor out = predict(input, weights_);
    return array_from_tensor(out);
  }

  void save(const std::string& path) {
    Checkpoint ckpt;
    ckpt.model_cfg = weights_.cfg;
    ckpt.weights = weights_;
    ckpt.optim = OptimState::init_for(weights_);
    ckpt.rng_state = Rng(0).state();
    save_checkpoint(path, ckpt);
  }

  static Model load(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    return Model(std::move(ckpt.weights));
  }

  int64_t param_count() { return weights_.param_count(); }
  ModelConfig config() const { return weights_.cfg; }

  std::vector<py::dict> fit_clips(const std::vector<py::array_t<float>>& clips,
                                  int stage1_epochs, int stage2_epochs, int stage3_epochs,
                                  int64_t steps_per_epoch, int64_t batch_size, double lr,
                                  uint64_t seed) {
    Dataset data;
    for (const auto& arr : clips) {
      VideoClip clip;
      clip.frames = tensor_from_array(arr);
      if (clip.frames.rank() != 4)
        throw ShapeError("fit: each clip must be a (T, C, H, W) array");
      data.train.push_back(clip);
    }
    if (data.train.empty()) throw ValidationError("fit: no clips given");
    data.val.push_back(data.train.front());

    TrainConfig cfg;
    cfg.lr = lr;
    cfg.batch_size = batch_size;
    cfg.steps_per_epoch = steps_per_epoch;
    cfg.seed = seed;
    cfg.curriculum.stage1_epochs = stage1_epochs;
    cfg.curriculum.stage2_epochs = stage2_epochs;
    cfg.curriculum.stage3_epochs = stage3_epochs;

    const FitResult result = fit(weights_, data, cfg);
    std::vector<py::dict> rows;
    for (const auto& log : result.log) {
      py::dict row;
      row["epoch"] = log.epoch;
      row["stage"] = stage_name(log.stage);
      row["loss"] = log.train_loss;
      row["grad_norm"] = log.grad_norm;
      row["val_l1"] = log.val_l1;
      row["val_gdl"] = log.val_gdl;
      row["val_smooth"] = log.val_smooth;
      row["val_perc"] = log.val_perc;
      row["val_psnr"] = log.val_psnr;
      rows.push_back(row);
    }
    return rows;
  }

 private:
  PredictorWeights weights_;
};

}  // namespace

PYBIND11_MODULE(_framecast, m) {
  m.doc() = "single-pass video prediction with a factorized token mixer";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init(&config_from_kwargs), py::arg("t_in") = 10, py::arg("t_out") = 10,
           py::arg("channels") = 1, py::arg("height") = 64, py::arg("width") = 64,
           py::arg("stages") = 3, py::arg("base_channels") = 8, py::arg("n_blocks") = 2,
           py::arg("embed_width") = 128)
      .def_readonly("t_in", &ModelConfig::t_in)
      .def_readonly("t_out", &ModelConfig::t_out)
      .def_readonly("channels", &ModelConfig::channels)
      .def_readonly("height", &ModelConfig::height)
      .def_readonly("width", &ModelConfig::width)
      .def_readonly("stages", &ModelConfig::stages)
      .def_readonly("base_channels", &ModelConfig::base_channels)
      .def_readonly("n_blocks", &ModelConfig::n_blocks)
      .def_readonly("embed_width", &ModelConfig::embed_width)
      .def("flat_features", &ModelConfig::flat_features);

  py::class_<Model>(m, "Model")
      .def(py::init<const ModelConfig&, uint64_t>(), py::arg("config"), py::arg("seed") = 1)
      .def("predict", &Model::predict_frames, py::arg("frames"),
           "Predict t_out future frames from (B, T, C, H, W) or (T, C, H, W) input")
      .def("save", &Model::save, py::arg("path"))
      .def_static("load", &Model::load, py::arg("path"))
      .def("param_count", &Model::param_count)
      .def("config", &Model::config)
      .def("fit", &Model::fit_clips, py::arg("clips"), py::arg("stage1_epochs") = 1,
           py::arg("stage2_epochs") = 1, py::arg("stage3_epochs") = 1,
           py::arg("steps_per_epoch") = 4, py::arg("batch_size") = 2, py::arg("lr") = 1e-3,
           py::arg("seed") = 1, "Train on a list of (T, C, H, W) clips; returns per-epoch logs");

  m.def(
      "generate_clip",
      [](int64_t resolution, int n_shapes, int64_t total_frames, uint64_t seed, int64_t channels,
         double speed_min, double speed_max) {
        SceneConfig cfg;
        cfg.resolution = resolution;
        cfg.n_shapes = n_shapes;
        cfg.total_frames = total_frames;
        cfg.seed = seed;
        cfg.channels = channels;
        cfg.speed_min = speed_min;
        cfg.speed_max = speed_max;
        cfg.size_min = std::max<int64_t>(3, resolution / 10);
        cfg.size_max = std::max<int64_t>(cfg.size_min, resolution / 5);
        return array_from_tensor(generate_clip(cfg).frames);
      },
      py::arg("resolution") = 64, py::arg("n_shapes") = 2, py::arg("total_frames") = 20,
      py::arg("seed") = 1, py::arg("channels") = 1, py::arg("speed_min") = 1.0,
      py::arg("speed_max") = 2.0, "Deterministic bouncing-shapes clip as a (T, C, H, W) array");

  m.def(
      "copy_last_baseline",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& frames,
         int64_t t_out) {
        Tensor input = tensor_from_array(frames);
        if (input.rank() == 4)
          input = reshape(input, {1, input.dim(0), input.dim(1), input.dim(2), input.dim(3)});
        return array_from_tensor(copy_last_baseline(input, t_out));
      },
      py::arg("frames"), py::arg("t_out"));

  m.def(
      "psnr",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& target) {
        return psnr(tensor_from_array(pred), tensor_from_array(target));
      },
      py::arg("pred"), py::arg("target"), "Frame-averaged PSNR in dB for (T, C, H, W) arrays");

  m.def(
      "ssim",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& target) {
        return ssim(tensor_from_array(pred), tensor_from_array(target));
      },
      py::arg("pred"), py::arg("target"));

  m.def(
      "perceptual_distance",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& target,
         uint64_t phi_seed) {
        Tensor p = tensor_from_array(pred);
        const FeatureExtractor phi(p.dim(1), phi_seed);
        return perceptual_distance(p, tensor_from_array(target), phi);
      },
      py::arg("pred"), py::arg("target"), py::arg("phi_seed") = 2024);

  m.def(
      "cost_table",
      [] {
        std::vector<py::dict> out;
        for (const auto& row : table1(HardwareSpec{}, WorkloadShape{})) {
          py::dict d;
          d["method"] = row.method;
          d["flops"] = row.flops;
          d["bytes"] = row.bytes;
          d["latency_ms"] = row.latency_seconds * 1e3;
          d["bound"] = row.bound == Bound::Compute ? "compute" : "memory";
          out.push_back(d);
        }
        return out;
      },
      "Four-row analytic cost table at the standard workload");

  m.def(
      "roofline_latency_ms",
      [](double flops, double bytes, double peak_flops, double mem_bandwidth) {
        HardwareSpec hw{"custom", peak_flops, mem_bandwidth};
        return roofline_latency("custom", static_cast<uint64_t>(flops),
                                static_cast<uint64_t>(bytes), hw)
                   .latency_seconds *
               1e3;
      },
      py::arg("flops"), py::arg("bytes"), py::arg("peak_flops") = 10.65e12,
      py::arg("mem_bandwidth") = 204.8e9);

  m.def(
      "run_gradcheck",
      [](int instances, double tolerance) {
        GradCheckOptions opts;
        opts.instances = instances;
        opts.tolerance = tolerance;
        const auto results = run_gradcheck(opts);
        std::vector<py::dict> out;
        for (const auto& r : results) {
          py::dict d;
          d["op"] = r.op;
          d["instances"] = r.instances;
          d["max_rel_err"] = r.max_rel_err;
          d["pass"] = r.pass;
          out.push_back(d);
        }
        return out;
      },
      py::arg("instances") = 3, py::arg("tolerance") = 1e-4,
      "Finite-difference gradient checks (64-bit) across all ops");
}
