#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "framecast/data.hpp"
#include "framecast/metrics.hpp"
#include "oracles.hpp"

using namespace framecast;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("framecast_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

SceneConfig small_scene(uint64_t seed) {
  SceneConfig cfg;
  cfg.resolution = 32;
  cfg.n_shapes = 2;
  cfg.size_min = 4;
  cfg.size_max = 6;
  cfg.speed_min = 1.0;
  cfg.speed_max = 2.0;
  cfg.total_frames = 8;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("generate_clip is deterministic in the seed") {
  const VideoClip a = generate_clip(small_scene(7));
  const VideoClip b = generate_clip(small_scene(7));
  CHECK(a.frames.shape() == Shape{8, 1, 32, 32});
  CHECK(std::memcmp(a.frames.data().data(), b.frames.data().data(),
                    a.frames.data().size() * sizeof(float)) == 0);
  const VideoClip c = generate_clip(small_scene(8));
  CHECK(std::memcmp(a.frames.data().data(), c.frames.data().data(),
                    a.frames.data().size() * sizeof(float)) != 0);
  for (float v : a.frames.data()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("zero-speed scene keeps every frame identical") {
  SceneConfig cfg = small_scene(3);
  cfg.speed_min = 0.0;
  cfg.speed_max = 0.0;  // static test hook
  const VideoClip clip = generate_clip(cfg);
  const int64_t frame = clip.frames.numel() / clip.frames.dim(0);
  for (int64_t t = 1; t < clip.frames.dim(0); ++t)
    CHECK(std::memcmp(clip.frames.data().data(), clip.frames.data().data() + t * frame,
                      static_cast<size_t>(frame) * sizeof(float)) == 0);
}

TEST_CASE("single-pixel shape follows the closed-form trajectory with reflection") {
  SceneConfig cfg;
  cfg.resolution = 16;
  cfg.n_shapes = 1;
  cfg.size_min = 1;
  cfg.size_max = 1;
  cfg.total_frames = 24;
  cfg.seed = 5;
  ShapeSpec s;
  s.kind = ShapeSpec::Kind::Square;
  s.size = 1;
  s.x = 8.0;
  s.y = 8.0;
  s.vx = 1.0;
  s.vy = 0.0;
  s.intensity = 1.0f;
  const VideoClip clip = generate_clip_from_shapes(cfg, {s});

  // Reflecting walk on [0, 15]: position x0 + t folded back at the border.
  auto expected_col = [&](int64_t t) {
    int64_t pos = 8 + t;
    const int64_t limit = 15;
    while (pos < 0 || pos > limit) pos = pos < 0 ? -pos : 2 * limit - pos;
    return pos;
  };
  for (int64_t t = 0; t < cfg.total_frames; ++t) {
    int64_t lit = -1, count = 0;
    for (int64_t x = 0; x < 16; ++x)
      if (clip.frames.at(t, int64_t(0), int64_t(8), x) > 0.5f) {
        lit = x;
        ++count;
      }
    CHECK(count == 1);
    CHECK(lit == expected_col(t));
  }
}

TEST_CASE("shape pixel mass is conserved across frames") {
  for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    SceneConfig cfg = small_scene(seed);
    cfg.n_shapes = 1;
    const VideoClip clip = generate_clip(cfg);
    const int64_t frame = clip.frames.numel() / clip.frames.dim(0);
    int64_t first_count = -1;
    for (int64_t t = 0; t < clip.frames.dim(0); ++t) {
      int64_t lit = 0;
      for (int64_t i = 0; i < frame; ++i)
        if (clip.frames.data()[static_cast<size_t>(t * frame + i)] > 0.0f) ++lit;
      if (first_count < 0) first_count = lit;
      CHECK(lit == first_count);
    }
  }
}

TEST_CASE("generate_clip rejects oversized and misplaced shapes") {
  SceneConfig cfg = small_scene(1);
  ShapeSpec s;
  s.size = 64;  // larger than the 32-px frame
  CHECK_THROWS_AS(generate_clip_from_shapes(cfg, {s}), ValidationError);
  s.size = 4;
  s.x = 31.0;
  CHECK_THROWS_AS(generate_clip_from_shapes(cfg, {s}), ValidationError);
}

TEST_CASE("copy_last_baseline repeats the final frame") {
  Rng rng(11);
  Tensor frames({2, 3, 1, 4, 4});
  for (auto& v : frames.data()) v = static_cast<float>(rng.uniform(0, 1));
  Tensor base = copy_last_baseline(frames, 5);
  CHECK(base.shape() == Shape{2, 5, 1, 4, 4});
  const int64_t fr = 16;
  for (int64_t b = 0; b < 2; ++b) {
    const float* last = frames.data().data() + (b * 3 + 2) * fr;
    for (int64_t t = 0; t < 5; ++t)
      CHECK(std::memcmp(last, base.data().data() + (b * 5 + t) * fr, fr * sizeof(float)) == 0);
  }

  // On a static clip the baseline is exact: capped PSNR.
  SceneConfig cfg = small_scene(9);
  cfg.speed_min = cfg.speed_max = 0.0;
  const VideoClip clip = generate_clip(cfg);
  Tensor input({1, 4, 1, 32, 32});
  std::copy_n(clip.frames.data().begin(), input.numel(), input.data().begin());
  Tensor pred = copy_last_baseline(input, 4);
  Tensor pred4 = reshape(pred, {4, 1, 32, 32});
  Tensor truth({4, 1, 32, 32});
  std::copy_n(clip.frames.data().begin() + 4 * 1024, truth.numel(), truth.data().begin());
  CHECK(psnr(pred4, truth) == 100.0);
}

TEST_CASE("psnr closed forms") {
  Tensor a = Tensor::full({2, 1, 4, 4}, 0.5f);
  CHECK(psnr(a, a) == 100.0);

  Tensor b = a.clone();
  for (auto& v : b.data()) v += 0.1f;
  CHECK(psnr(b, a) == doctest::Approx(20.0).epsilon(1e-4));

  // Identical pixel permutations leave it unchanged.
  Rng rng(13);
  Tensor x({1, 1, 4, 4}), y({1, 1, 4, 4});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(0, 1));
  for (auto& v : y.data()) v = static_cast<float>(rng.uniform(0, 1));
  Tensor xp = x.clone(), yp = y.clone();
  std::reverse(xp.data().begin(), xp.data().end());
  std::reverse(yp.data().begin(), yp.data().end());
  CHECK(psnr(x, y) == doctest::Approx(psnr(xp, yp)).epsilon(1e-12));

  CHECK_THROWS_AS(psnr(a, Tensor({2, 1, 4, 5})), ShapeError);
}

TEST_CASE("psnr strictly decreases with noise amplitude") {
  Tensor target = Tensor::full({1, 1, 8, 8}, 0.5f);
  double prev = 1e9;
  for (float amp : {0.05f, 0.1f, 0.2f, 0.4f}) {
    Tensor noisy = target.clone();
    for (size_t i = 0; i < noisy.data().size(); ++i)
      noisy.data()[i] += (i % 2 == 0 ? amp : -amp);
    const double db = psnr(noisy, target);
    CHECK(db == doctest::Approx(-20.0 * std::log10(amp)).epsilon(1e-6));
    CHECK(db < prev);
    prev = db;
  }
}

TEST_CASE("ssim: equality, symmetry, constant-image closed form") {
  Rng rng(17);
  Tensor a({2, 1, 16, 16}), b({2, 1, 16, 16});
  for (auto& v : a.data()) v = static_cast<float>(rng.uniform(0, 1));
  for (auto& v : b.data()) v = static_cast<float>(rng.uniform(0, 1));
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));

  Tensor zeros = Tensor::zeros({1, 1, 16, 16});
  Tensor ones = Tensor::ones({1, 1, 16, 16});
  CHECK(ssim(zeros, ones) ==
        doctest::Approx(oracle::ssim_constant_images(0.0, 1.0)).epsilon(1e-9));

  CHECK_THROWS_AS(ssim(Tensor({1, 1, 8, 8}), Tensor({1, 1, 8, 8})), ValidationError);
}

TEST_CASE("perceptual_distance: identity, nonnegativity, noise monotonicity") {
  const FeatureExtractor phi(1, 2024);
  Rng rng(19);
  Tensor a({2, 1, 16, 16});
  for (auto& v : a.data()) v = static_cast<float>(rng.uniform(0, 1));
  CHECK(perceptual_distance(a, a, phi) == 0.0);

  // Statistical: mean distance grows with the noise amplitude over seeds.
  double low_sum = 0, high_sum = 0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng noise(seed + 100);
    Tensor lo = a.clone(), hi = a.clone();
    for (size_t i = 0; i < a.data().size(); ++i) {
      const float u = static_cast<float>(noise.uniform(-1, 1));
      lo.data()[i] += 0.05f * u;
      hi.data()[i] += 0.25f * u;
    }
    low_sum += perceptual_distance(lo, a, phi);
    high_sum += perceptual_distance(hi, a, phi);
  }
  CHECK(high_sum > low_sum);
  CHECK(low_sum > 0.0);
}

TEST_CASE("pgm round-trip is byte-identical after the first quantization") {
  TempDir tmp;
  Rng rng(23);
  VideoClip clip;
  clip.frames = Tensor({3, 1, 16, 16});
  for (auto& v : clip.frames.data()) v = static_cast<float>(rng.uniform(0, 1));

  const auto dir1 = (tmp.path / "a").string();
  write_frames(dir1, clip);
  VideoClip back = read_frames(dir1);
  CHECK(back.frames.shape() == clip.frames.shape());
  const auto dir2 = (tmp.path / "b").string();
  write_frames(dir2, back);

  for (int t = 0; t < 3; ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03d.pgm", t);
    std::ifstream f1(fs::path(dir1) / name, std::ios::binary);
    std::ifstream f2(fs::path(dir2) / name, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(!s1.empty());
  }
}

TEST_CASE("pgm header bytes and value endpoints") {
  TempDir tmp;
  Tensor frame = Tensor::zeros({1, 64, 64});
  frame.at(0, 0, 0) = 1.0f;
  const std::string path = (tmp.path / "f.pgm").string();
  write_frame(path, frame);

  std::ifstream in(path, std::ios::binary);
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "P5\n64 64\n255\n";
  CHECK(contents.substr(0, header.size()) == header);
  CHECK(static_cast<unsigned char>(contents[header.size()]) == 255);  // x=1 -> byte 255
  CHECK(static_cast<unsigned char>(contents[header.size() + 1]) == 0);  // x=0 -> byte 0

  Tensor bad = Tensor::full({1, 16, 16}, 1.5f);
  CHECK_THROWS_AS(write_frame((tmp.path / "bad.pgm").string(), bad), ValidationError);
}

TEST_CASE("ppm path handles three channels") {
  TempDir tmp;
  Rng rng(29);
  VideoClip clip;
  clip.frames = Tensor({2, 3, 16, 16});
  for (auto& v : clip.frames.data()) v = static_cast<float>(rng.uniform(0, 1));
  const auto dir = (tmp.path / "rgb").string();
  write_frames(dir, clip);
  VideoClip back = read_frames(dir);
  CHECK(back.frames.shape() == clip.frames.shape());
  // Quantization error bounded by half a step.
  for (size_t i = 0; i < clip.frames.data().size(); ++i)
    CHECK(std::abs(back.frames.data()[i] - clip.frames.data()[i]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("read_frame rejects malformed headers") {
  TempDir tmp;
  const std::string path = (tmp.path / "junk.pgm").string();
  std::ofstream(path) << "P4\n2 2\n255\n";
  CHECK_THROWS_AS(read_frame(path), IoError);
  const std::string path2 = (tmp.path / "trunc.pgm").string();
  std::ofstream(path2) << "P5\n64 64\n255\nxx";
  CHECK_THROWS_AS(read_frame(path2), IoError);
}

TEST_CASE("dataset generation: manifest counts, disjoint seeds, force semantics") {
  TempDir tmp;
  DatasetSpec spec;
  spec.scene = small_scene(42);
  spec.train_clips = 5;
  spec.val_clips = 2;
  spec.test_clips = 2;
  const auto out = (tmp.path / "ds").string();
  const auto entries = generate_dataset(spec, out, false);
  CHECK(entries.size() == 9);

  // Regeneration without force refuses; with force succeeds.
  CHECK_THROWS_AS(generate_dataset(spec, out, false), ValidationError);
  CHECK_NOTHROW(generate_dataset(spec, out, true));

  const auto loaded = read_manifest(out + "/manifest.cfg");
  CHECK(loaded.size() == 9);
  std::vector<uint64_t> seeds;
  int64_t train = 0, val = 0, test = 0;
  for (const auto& e : loaded) {
    seeds.push_back(e.seed);
    if (e.split == "train") ++train;
    if (e.split == "val") ++val;
    if (e.split == "test") ++test;
    CHECK(e.frame_files.size() == 8);
  }
  CHECK(train == 5);
  CHECK(val == 2);
  CHECK(test == 2);
  std::sort(seeds.begin(), seeds.end());
  CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());  // all distinct

  const auto train_clips = load_split(out + "/manifest.cfg", "train");
  CHECK(train_clips.size() == 5);
  CHECK(train_clips[0].split == "train");
  CHECK(train_clips[0].frames.shape() == Shape{8, 1, 32, 32});
}

TEST_CASE("dataset regeneration is byte-identical") {
  TempDir tmp;
  DatasetSpec spec;
  spec.scene = small_scene(77);
  spec.train_clips = 2;
  spec.val_clips = 1;
  spec.test_clips = 1;
  const auto out_a = (tmp.path / "a").string();
  const auto out_b = (tmp.path / "b").string();
  generate_dataset(spec, out_a, false);
  generate_dataset(spec, out_b, false);
  for (const auto& entry : fs::recursive_directory_iterator(out_a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), out_a);
    std::ifstream fa(entry.path(), std::ios::binary);
    std::ifstream fb(fs::path(out_b) / rel, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
  }
}
