#include "framecast/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "framecast/rng.hpp"

namespace fs = std::filesystem;

namespace framecast {

void SceneConfig::validate() const {
  if (resolution < 16 || (resolution & (resolution - 1)) != 0)
    throw ValidationError("SceneConfig: resolution must be a power of two >= 16");
  if (channels != 1 && channels != 3)
    throw ValidationError("SceneConfig: channels must be 1 or 3");
  if (n_shapes < 1 || n_shapes > 4)
    throw ValidationError("SceneConfig: n_shapes must be in [1, 4]");
  if (!squares && !discs) throw ValidationError("SceneConfig: enable at least one shape kind");
  if (size_min < 1 || size_max < size_min)
    throw ValidationError("SceneConfig: bad size range");
  if (size_max > resolution / 2)
    throw ValidationError("SceneConfig: shapes must fit well inside the frame");
  if (speed_min < 0 || speed_max < speed_min)
    throw ValidationError("SceneConfig: bad speed range");
  // speed_max == 0 is the static-scene test hook; otherwise speeds are nonzero
  if (speed_max > 0 && speed_min <= 0)
    throw ValidationError("SceneConfig: moving scenes need speed_min > 0");
  if (total_frames < 1) throw ValidationError("SceneConfig: total_frames must be >= 1");
}

namespace {

// Reflect `p` into [0, limit] and flip the matching velocity sign.
void reflect(double& p, double& v, double limit) {
  while (p < 0.0 || p > limit) {
    if (p < 0.0) {
      p = -p;
      v = -v;
    } else {
      p = 2.0 * limit - p;
      v = -v;
    }
  }
}

void rasterize(Tensor& frame, const ShapeSpec& s, int64_t res, int64_t channels) {
  const int64_t x0 = static_cast<int64_t>(std::llround(s.x));
  const int64_t y0 = static_cast<int64_t>(std::llround(s.y));
  const double radius = static_cast<double>(s.size) / 2.0;
  const double cx = static_cast<double>(x0) + radius - 0.5;
  const double cy = static_cast<double>(y0) + radius - 0.5;
  for (int64_t yy = std::max<int64_t>(0, y0); yy < std::min(res, y0 + s.size); ++yy)
    for (int64_t xx = std::max<int64_t>(0, x0); xx < std::min(res, x0 + s.size); ++xx) {
      if (s.kind == ShapeSpec::Kind::Disc) {
        const double dx = static_cast<double>(xx) - cx;
        const double dy = static_cast<double>(yy) - cy;
        if (dx * dx + dy * dy > radius * radius) continue;
      }
      if (channels == 1) {
        float& px = frame.at(int64_t(0), yy, xx);
        px = std::max(px, s.intensity);
      } else {
        float& r = frame.at(int64_t(0), yy, xx);
        float& g = frame.at(int64_t(1), yy, xx);
        float& b = frame.at(int64_t(2), yy, xx);
        r = std::max(r, s.intensity * s.color_r);
        g = std::max(g, s.intensity);
        b = std::max(b, s.intensity * s.color_b);
      }
    }
}

}  // namespace

VideoClip generate_clip_from_shapes(const SceneConfig& cfg, std::vector<ShapeSpec> shapes) {
  cfg.validate();
  const int64_t res = cfg.resolution;
  for (const auto& s : shapes) {
    if (s.size > res) throw ValidationError("generate_clip: shape larger than frame");
    if (s.x < 0 || s.y < 0 || s.x > static_cast<double>(res - s.size) ||
        s.y > static_cast<double>(res - s.size))
      throw ValidationError("generate_clip: shape must start fully inside the frame");
  }

  VideoClip clip;
  clip.seed = cfg.seed;
  clip.frames = Tensor({cfg.total_frames, cfg.channels, res, res});
  for (int64_t t = 0; t < cfg.total_frames; ++t) {
    Tensor frame({cfg.channels, res, res});
    for (auto& s : shapes) rasterize(frame, s, res, cfg.channels);
    std::copy(frame.data().begin(), frame.data().end(),
              clip.frames.data().begin() + t * frame.numel());
    for (auto& s : shapes) {
      const double limit = static_cast<double>(res - s.size);
      s.x += s.vx;
      s.y += s.vy;
      reflect(s.x, s.vx, limit);
      reflect(s.y, s.vy, limit);
    }
  }
  return clip;
}

VideoClip generate_clip(const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<ShapeSpec> shapes;
  for (int i = 0; i < cfg.n_shapes; ++i) {
    ShapeSpec s;
    if (cfg.squares && cfg.discs)
      s.kind = rng.uniform() < 0.5 ? ShapeSpec::Kind::Square : ShapeSpec::Kind::Disc;
    else
      s.kind = cfg.squares ? ShapeSpec::Kind::Square : ShapeSpec::Kind::Disc;
    s.size = rng.uniform_int(cfg.size_min, cfg.size_max);
    s.x = static_cast<double>(rng.uniform_int(0, cfg.resolution - s.size));
    s.y = static_cast<double>(rng.uniform_int(0, cfg.resolution - s.size));
    const double speed = cfg.speed_max == 0.0 ? 0.0 : rng.uniform(cfg.speed_min, cfg.speed_max);
    const double angle = rng.uniform(0.0, 6.283185307179586);
    s.vx = speed * std::cos(angle);
    s.vy = speed * std::sin(angle);
    s.intensity = static_cast<float>(rng.uniform(0.5, 1.0));
    if (cfg.channels == 3) {
      s.color_r = static_cast<float>(rng.uniform(0.3, 1.0));
      s.color_b = static_cast<float>(rng.uniform(0.3, 1.0));
    }
    shapes.push_back(s);
  }
  return generate_clip_from_shapes(cfg, std::move(shapes));
}

Tensor copy_last_baseline(const Tensor& frames_in, int64_t t_out) {
  if (frames_in.rank() != 5) throw ShapeError("copy_last_baseline: expected (B, T, C, H, W)");
  if (t_out < 1) throw ValidationError("copy_last_baseline: t_out must be >= 1");
  const int64_t b_dim = frames_in.dim(0), t_dim = frames_in.dim(1);
  const int64_t frame_elems = frames_in.numel() / (b_dim * t_dim);
  Tensor out({b_dim, t_out, frames_in.dim(2), frames_in.dim(3), frames_in.dim(4)});
  for (int64_t b = 0; b < b_dim; ++b) {
    const float* last = frames_in.data().data() + (b * t_dim + (t_dim - 1)) * frame_elems;
    for (int64_t t = 0; t < t_out; ++t)
      std::copy_n(last, frame_elems, out.data().data() + (b * t_out + t) * frame_elems);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PGM / PPM
// ---------------------------------------------------------------------------

void write_frame(const std::string& path, const Tensor& frame) {
  if (frame.rank() != 3) throw ShapeError("write_frame: expected (C, H, W)");
  const int64_t c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
  if (c != 1 && c != 3) throw ValidationError("write_frame: channels must be 1 or 3");
  for (float v : frame.data())
    if (v < 0.0f || v > 1.0f)
      throw ValidationError("write_frame: value out of [0, 1] range; clamp before writing");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_frame: cannot open " + path);
  out << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(w * c));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x)
      for (int64_t ch = 0; ch < c; ++ch)
        row[static_cast<size_t>(x * c + ch)] = static_cast<unsigned char>(
            std::lround(255.0 * static_cast<double>(frame.at(ch, y, x))));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write_frame: short write to " + path);
}

Tensor read_frame(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_frame: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6") throw IoError("read_frame: malformed header in " + path);
  int64_t w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (!in || w < 1 || h < 1 || maxval != 255)
    throw IoError("read_frame: malformed header in " + path);
  in.get();  // single whitespace after maxval
  const int64_t c = magic == "P5" ? 1 : 3;
  std::vector<unsigned char> raw(static_cast<size_t>(w * h * c));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw IoError("read_frame: truncated pixel data in " + path);

  Tensor frame({c, h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t ch = 0; ch < c; ++ch)
        frame.at(ch, y, x) =
            static_cast<float>(raw[static_cast<size_t>((y * w + x) * c + ch)]) / 255.0f;
  return frame;
}

namespace {

std::string frame_name(int64_t t, int64_t channels) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%03ld.%s", static_cast<long>(t),
                channels == 1 ? "pgm" : "ppm");
  return buf;
}

}  // namespace

void write_frames(const std::string& dir, const VideoClip& clip) {
  if (clip.frames.rank() != 4) throw ShapeError("write_frames: expected (T, C, H, W)");
  fs::create_directories(dir);
  const int64_t t_dim = clip.frames.dim(0), c = clip.frames.dim(1);
  const int64_t frame_elems = clip.frames.numel() / t_dim;
  for (int64_t t = 0; t < t_dim; ++t) {
    Tensor frame({c, clip.frames.dim(2), clip.frames.dim(3)});
    std::copy_n(clip.frames.data().begin() + t * frame_elems, frame_elems, frame.data().begin());
    write_frame((fs::path(dir) / frame_name(t, c)).string(), frame);
  }
}

VideoClip read_frames(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("read_frames: not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("frame_", 0) == 0) files.push_back(entry.path().string());
  }
  if (files.empty()) throw IoError("read_frames: no frame files in " + dir);
  std::sort(files.begin(), files.end());

  Tensor first = read_frame(files[0]);
  VideoClip clip;
  clip.frames = Tensor({static_cast<int64_t>(files.size()), first.dim(0), first.dim(1), first.dim(2)});
  const int64_t frame_elems = first.numel();
  for (size_t i = 0; i < files.size(); ++i) {
    Tensor frame = read_frame(files[i]);
    if (frame.shape() != first.shape())
      throw IoError("read_frames: inconsistent frame geometry in " + dir);
    std::copy(frame.data().begin(), frame.data().end(),
              clip.frames.data().begin() + static_cast<int64_t>(i) * frame_elems);
  }
  return clip;
}

// ---------------------------------------------------------------------------
// Dataset generation and manifest
// ---------------------------------------------------------------------------

namespace {

constexpr uint64_t kValSeedOffset = 10000;
constexpr uint64_t kTestSeedOffset = 20000;

}  // namespace

std::vector<ManifestEntry> generate_dataset(const DatasetSpec& spec, const std::string& out_dir,
                                            bool force) {
  spec.scene.validate();
  if (spec.train_clips < 0 || spec.val_clips < 0 || spec.test_clips < 0)
    throw ValidationError("generate_dataset: clip counts must be >= 0");
  if (spec.train_clips + spec.val_clips + spec.test_clips < 1)
    throw ValidationError("generate_dataset: empty dataset requested");
  if (static_cast<uint64_t>(spec.train_clips) >= kValSeedOffset ||
      static_cast<uint64_t>(spec.val_clips) >= kValSeedOffset)
    throw ValidationError("generate_dataset: split too large for disjoint seed ranges");

  const fs::path root(out_dir);
  const fs::path manifest_path = root / "manifest.cfg";
  if (fs::exists(manifest_path) && !force)
    throw ValidationError("generate_dataset: " + manifest_path.string() +
                          " already exists (use --force to regenerate)");
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("generate_dataset: cannot create " + out_dir);

  std::vector<ManifestEntry> entries;
  int64_t clip_index = 0;
  auto emit_split = [&](const std::string& split, int64_t count, uint64_t seed_offset) {
    for (int64_t i = 0; i < count; ++i) {
      SceneConfig scene = spec.scene;
      scene.seed = spec.scene.seed + seed_offset + static_cast<uint64_t>(i);
      VideoClip clip = generate_clip(scene);
      clip.split = split;

      char dirname[32];
      std::snprintf(dirname, sizeof(dirname), "clips/clip_%04ld", static_cast<long>(clip_index));
      write_frames((root / dirname).string(), clip);

      ManifestEntry e;
      e.split = split;
      e.seed = scene.seed;
      e.dir = dirname;
      for (int64_t t = 0; t < clip.frames.dim(0); ++t)
        e.frame_files.push_back(std::string(dirname) + "/" + frame_name(t, scene.channels));
      entries.push_back(std::move(e));
      ++clip_index;
    }
  };
  emit_split("train", spec.train_clips, 0);
  emit_split("val", spec.val_clips, kValSeedOffset);
  emit_split("test", spec.test_clips, kTestSeedOffset);

  std::ostringstream manifest;
  manifest << "dataset.n_clips = " << entries.size() << "\n";
  for (size_t i = 0; i < entries.size(); ++i) {
    manifest << "clip." << i << ".split = " << entries[i].split << "\n";
    manifest << "clip." << i << ".seed = " << entries[i].seed << "\n";
    manifest << "clip." << i << ".dir = " << entries[i].dir << "\n";
    manifest << "clip." << i << ".files = ";
    for (size_t f = 0; f < entries[i].frame_files.size(); ++f)
      manifest << (f ? "," : "") << entries[i].frame_files[f];
    manifest << "\n";
  }
  std::ofstream out(manifest_path);
  if (!out) throw IoError("generate_dataset: cannot write " + manifest_path.string());
  out << manifest.str();
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("read_manifest: cannot open " + manifest_path);
  std::string line;
  int64_t n_clips = -1;
  std::vector<ManifestEntry> entries;
  auto entry_at = [&entries](size_t i) -> ManifestEntry& {
    if (entries.size() <= i) entries.resize(i + 1);
    return entries[i];
  };
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
    };
    trim(key);
    trim(value);
    if (key == "dataset.n_clips") {
      n_clips = std::stoll(value);
      continue;
    }
    if (key.rfind("clip.", 0) != 0) continue;
    const auto dot = key.find('.', 5);
    if (dot == std::string::npos) throw IoError("read_manifest: malformed key " + key);
    const size_t idx = static_cast<size_t>(std::stoull(key.substr(5, dot - 5)));
    const std::string field = key.substr(dot + 1);
    if (field == "split")
      entry_at(idx).split = value;
    else if (field == "seed")
      entry_at(idx).seed = std::stoull(value);
    else if (field == "dir")
      entry_at(idx).dir = value;
    else if (field == "files") {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) entry_at(idx).frame_files.push_back(item);
    } else
      throw IoError("read_manifest: unknown field " + key);
  }
  if (n_clips >= 0 && static_cast<size_t>(n_clips) != entries.size())
    throw IoError("read_manifest: clip count disagrees with entries");
  return entries;
}

std::vector<VideoClip> load_split(const std::string& manifest_path, const std::string& split) {
  const auto entries = read_manifest(manifest_path);
  const fs::path root = fs::path(manifest_path).parent_path();
  std::vector<VideoClip> clips;
  for (const auto& e : entries) {
    if (!split.empty() && e.split != split) continue;
    VideoClip clip = read_frames((root / e.dir).string());
    clip.seed = e.seed;
    clip.split = e.split;
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace framecast
