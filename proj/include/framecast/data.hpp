#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "framecast/tensor.hpp"

namespace framecast {

/// One moving shape in a synthetic scene. Positions are the top-left corner
/// of the bounding box in float pixels; rasterization rounds, so a shape's
/// drawn pixel count never changes as it moves.
struct ShapeSpec {
  enum class Kind { Square, Disc };
  Kind kind = Kind::Square;
  double x = 0.0, y = 0.0;      // top-left of the bounding box
  double vx = 0.0, vy = 0.0;    // pixels per frame
  int64_t size = 4;             // square side / disc diameter
  float intensity = 1.0f;       // gray level, or the green channel when C=3
  float color_r = 1.0f, color_b = 1.0f;
};

struct SceneConfig {
  int64_t resolution = 64;  // H == W, power of two >= 16
  int64_t channels = 1;     // 1 (grayscale) or 3
  int n_shapes = 2;
  bool squares = true;
  bool discs = true;
  int64_t size_min = 6, size_max = 12;        // pixels
  double speed_min = 1.0, speed_max = 2.0;    // pixels/frame; 0,0 = static test hook
  int64_t total_frames = 20;
  uint64_t seed = 1;

  void validate() const;
};

struct VideoClip {
  Tensor frames;  // (T, C, H, W) in [0, 1]
  uint64_t seed = 0;
  std::string split;  // train | val | test
};

/// Deterministic scene synthesis: shapes placed fully inside the frame move
/// with constant velocity and reflect elastically off the borders.
VideoClip generate_clip(const SceneConfig& cfg);

/// Same rasterizer, caller-supplied shapes (for trajectory tests).
VideoClip generate_clip_from_shapes(const SceneConfig& cfg, std::vector<ShapeSpec> shapes);

/// Repeats the last observed frame t_out times. frames_in: (B, T, C, H, W).
Tensor copy_last_baseline(const Tensor& frames_in, int64_t t_out);

// --- frame files -----------------------------------------------------------
// Binary PGM (P5) for single-channel frames, binary PPM (P6) for RGB.
// Values are quantized by round(255 * x); reading divides by 255, so the
// first quantization is a fixed point of write-read-write.

void write_frame(const std::string& path, const Tensor& frame);  // (C, H, W)
Tensor read_frame(const std::string& path);

/// Writes frame_000.pgm/.ppm ... under `dir` (created if needed).
void write_frames(const std::string& dir, const VideoClip& clip);
VideoClip read_frames(const std::string& dir);

// --- dataset manifest -------------------------------------------------------

struct ManifestEntry {
  std::string split;
  uint64_t seed = 0;
  std::string dir;                       // relative to the manifest
  std::vector<std::string> frame_files;  // relative to the manifest
};

struct DatasetSpec {
  SceneConfig scene;
  int64_t train_clips = 20;
  int64_t val_clips = 4;
  int64_t test_clips = 4;
};

/// Generates the full split tree under out_dir and writes manifest.cfg.
/// Split seeds are disjoint by construction (train: seed+i, val: seed+10000+i,
/// test: seed+20000+i). Refuses to overwrite an existing manifest unless
/// `force`.
std::vector<ManifestEntry> generate_dataset(const DatasetSpec& spec, const std::string& out_dir,
                                            bool force);

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path);

/// Loads every clip of a split (empty split string loads all).
std::vector<VideoClip> load_split(const std::string& manifest_path, const std::string& split);

}  // namespace framecast
