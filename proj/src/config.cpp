#include "framecast/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace framecast {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  const auto b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

KeyValueMap KeyValueMap::parse(const std::string& text) {
  KeyValueMap map;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
    map.values_[key] = value;
  }
  return map;
}

KeyValueMap KeyValueMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string KeyValueMap::serialize() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
  return os.str();
}

const std::string& KeyValueMap::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("config: missing key " + key);
  return it->second;
}

std::string KeyValueMap::get_or(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int64_t KeyValueMap::get_int(const std::string& key, int64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config: key " + key + " is not an integer: " + it->second);
  }
}

uint64_t KeyValueMap::get_uint(const std::string& key, uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config: key " + key + " is not an unsigned integer: " + it->second);
  }
}

double KeyValueMap::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config: key " + key + " is not a number: " + it->second);
  }
}

bool KeyValueMap::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ValidationError("config: key " + key + " is not a boolean: " + it->second);
}

void KeyValueMap::reject_unknown(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ValidationError("config: unknown key " + key);
  }
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "model.t_in", "model.t_out", "model.channels", "model.height", "model.width",
      "model.stages", "model.base_channels", "model.n_blocks", "model.embed_width",
      "train.lr", "train.beta1", "train.beta2", "train.eps", "train.batch_size",
      "train.steps_per_epoch", "train.seed", "train.checkpoint_every", "train.clip_norm",
      "curriculum.stage1_epochs", "curriculum.stage2_epochs", "curriculum.stage3_epochs",
      "curriculum.lambda_gdl", "curriculum.lambda_smooth", "curriculum.lambda_perc",
      "curriculum.phi_seed",
      "scene.resolution", "scene.channels", "scene.n_shapes", "scene.squares", "scene.discs",
      "scene.size_min", "scene.size_max", "scene.speed_min", "scene.speed_max",
      "scene.total_frames", "scene.seed",
      "data.train_clips", "data.val_clips", "data.test_clips",
  };
  return keys;
}

RunConfig RunConfig::from_map(const KeyValueMap& map) {
  map.reject_unknown(known_keys());
  RunConfig cfg;

  cfg.model.t_in = map.get_int("model.t_in", cfg.model.t_in);
  cfg.model.t_out = map.get_int("model.t_out", cfg.model.t_out);
  cfg.model.channels = map.get_int("model.channels", cfg.model.channels);
  cfg.model.height = map.get_int("model.height", cfg.model.height);
  cfg.model.width = map.get_int("model.width", cfg.model.width);
  cfg.model.stages = static_cast<int>(map.get_int("model.stages", cfg.model.stages));
  cfg.model.base_channels = map.get_int("model.base_channels", cfg.model.base_channels);
  cfg.model.n_blocks = static_cast<int>(map.get_int("model.n_blocks", cfg.model.n_blocks));
  cfg.model.embed_width = map.get_int("model.embed_width", cfg.model.embed_width);

  cfg.train.lr = map.get_double("train.lr", cfg.train.lr);
  cfg.train.beta1 = map.get_double("train.beta1", cfg.train.beta1);
  cfg.train.beta2 = map.get_double("train.beta2", cfg.train.beta2);
  cfg.train.eps = map.get_double("train.eps", cfg.train.eps);
  cfg.train.batch_size = map.get_int("train.batch_size", cfg.train.batch_size);
  cfg.train.steps_per_epoch = map.get_int("train.steps_per_epoch", cfg.train.steps_per_epoch);
  cfg.train.seed = map.get_uint("train.seed", cfg.train.seed);
  cfg.train.checkpoint_every =
      static_cast<int>(map.get_int("train.checkpoint_every", cfg.train.checkpoint_every));
  cfg.train.clip_norm = map.get_double("train.clip_norm", cfg.train.clip_norm);

  auto& cur = cfg.train.curriculum;
  cur.stage1_epochs = static_cast<int>(map.get_int("curriculum.stage1_epochs", cur.stage1_epochs));
  cur.stage2_epochs = static_cast<int>(map.get_int("curriculum.stage2_epochs", cur.stage2_epochs));
  cur.stage3_epochs = static_cast<int>(map.get_int("curriculum.stage3_epochs", cur.stage3_epochs));
  cur.lambda_gdl = map.get_double("curriculum.lambda_gdl", cur.lambda_gdl);
  cur.lambda_smooth = map.get_double("curriculum.lambda_smooth", cur.lambda_smooth);
  cur.lambda_perc = map.get_double("curriculum.lambda_perc", cur.lambda_perc);
  cur.phi_seed = map.get_uint("curriculum.phi_seed", cur.phi_seed);

  cfg.scene.resolution = map.get_int("scene.resolution", cfg.scene.resolution);
  cfg.scene.channels = map.get_int("scene.channels", cfg.scene.channels);
  cfg.scene.n_shapes = static_cast<int>(map.get_int("scene.n_shapes", cfg.scene.n_shapes));
  cfg.scene.squares = map.get_bool("scene.squares", cfg.scene.squares);
  cfg.scene.discs = map.get_bool("scene.discs", cfg.scene.discs);
  cfg.scene.size_min = map.get_int("scene.size_min", cfg.scene.size_min);
  cfg.scene.size_max = map.get_int("scene.size_max", cfg.scene.size_max);
  cfg.scene.speed_min = map.get_double("scene.speed_min", cfg.scene.speed_min);
  cfg.scene.speed_max = map.get_double("scene.speed_max", cfg.scene.speed_max);
  cfg.scene.total_frames = map.get_int("scene.total_frames", cfg.scene.total_frames);
  cfg.scene.seed = map.get_uint("scene.seed", cfg.scene.seed);

  cfg.train_clips = map.get_int("data.train_clips", cfg.train_clips);
  cfg.val_clips = map.get_int("data.val_clips", cfg.val_clips);
  cfg.test_clips = map.get_int("data.test_clips", cfg.test_clips);

  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValueMap map = path.empty() ? KeyValueMap{} : KeyValueMap::load(path);
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ValidationError("override must look like key=value: " + ov);
    map.set(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  return from_map(map);
}

KeyValueMap RunConfig::to_map() const {
  KeyValueMap map;
  map.set("model.t_in", std::to_string(model.t_in));
  map.set("model.t_out", std::to_string(model.t_out));
  map.set("model.channels", std::to_string(model.channels));
  map.set("model.height", std::to_string(model.height));
  map.set("model.width", std::to_string(model.width));
  map.set("model.stages", std::to_string(model.stages));
  map.set("model.base_channels", std::to_string(model.base_channels));
  map.set("model.n_blocks", std::to_string(model.n_blocks));
  map.set("model.embed_width", std::to_string(model.embed_width));
  map.set("train.lr", fmt_double(train.lr));
  map.set("train.beta1", fmt_double(train.beta1));
  map.set("train.beta2", fmt_double(train.beta2));
  map.set("train.eps", fmt_double(train.eps));
  map.set("train.batch_size", std::to_string(train.batch_size));
  map.set("train.steps_per_epoch", std::to_string(train.steps_per_epoch));
  map.set("train.seed", std::to_string(train.seed));
  map.set("train.checkpoint_every", std::to_string(train.checkpoint_every));
  map.set("train.clip_norm", fmt_double(train.clip_norm));
  map.set("curriculum.stage1_epochs", std::to_string(train.curriculum.stage1_epochs));
  map.set("curriculum.stage2_epochs", std::to_string(train.curriculum.stage2_epochs));
  map.set("curriculum.stage3_epochs", std::to_string(train.curriculum.stage3_epochs));
  map.set("curriculum.lambda_gdl", fmt_double(train.curriculum.lambda_gdl));
  map.set("curriculum.lambda_smooth", fmt_double(train.curriculum.lambda_smooth));
  map.set("curriculum.lambda_perc", fmt_double(train.curriculum.lambda_perc));
  map.set("curriculum.phi_seed", std::to_string(train.curriculum.phi_seed));
  map.set("scene.resolution", std::to_string(scene.resolution));
  map.set("scene.channels", std::to_string(scene.channels));
  map.set("scene.n_shapes", std::to_string(scene.n_shapes));
  map.set("scene.squares", scene.squares ? "true" : "false");
  map.set("scene.discs", scene.discs ? "true" : "false");
  map.set("scene.size_min", std::to_string(scene.size_min));
  map.set("scene.size_max", std::to_string(scene.size_max));
  map.set("scene.speed_min", fmt_double(scene.speed_min));
  map.set("scene.speed_max", fmt_double(scene.speed_max));
  map.set("scene.total_frames", std::to_string(scene.total_frames));
  map.set("scene.seed", std::to_string(scene.seed));
  map.set("data.train_clips", std::to_string(train_clips));
  map.set("data.val_clips", std::to_string(val_clips));
  map.set("data.test_clips", std::to_string(test_clips));
  return map;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  scene.validate();
  if (train_clips < 1) throw ValidationError("config: data.train_clips must be >= 1");
  if (val_clips < 1) throw ValidationError("config: data.val_clips must be >= 1");
  if (test_clips < 0) throw ValidationError("config: data.test_clips must be >= 0");
  if (scene.resolution != model.height || scene.resolution != model.width)
    throw ValidationError("config: scene.resolution must match model.height/width");
  if (scene.channels != model.channels)
    throw ValidationError("config: scene.channels must match model.channels");
  if (scene.total_frames < model.t_in + model.t_out)
    throw ValidationError("config: scene.total_frames must cover t_in + t_out");
}

}  // namespace framecast
