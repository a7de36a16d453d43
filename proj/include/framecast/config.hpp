#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "framecast/costmodel.hpp"
#include "framecast/data.hpp"
#include "framecast/training.hpp"

namespace framecast {

/// Flat dotted-key/value store backing the config files. Keys serialize
/// sorted, so parse -> serialize -> parse is the identity.
class KeyValueMap {
 public:
  static KeyValueMap parse(const std::string& text);
  static KeyValueMap load(const std::string& path);

  std::string serialize() const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  uint64_t get_uint(const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Throws ValidationError naming the first key not in `known`.
  void reject_unknown(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
};

/// Merged run configuration: model geometry, training hyperparameters,
/// curriculum, scene synthesis, and dataset sizes. Parsed from a config file
/// plus `key=value` overrides; every field is validated before any side
/// effect and unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SceneConfig scene;
  int64_t train_clips = 20;
  int64_t val_clips = 4;
  int64_t test_clips = 4;

  static const std::vector<std::string>& known_keys();

  static RunConfig from_map(const KeyValueMap& map);
  static RunConfig from_file(const std::string& path,
                             const std::vector<std::string>& overrides = {});

  KeyValueMap to_map() const;
  void validate() const;
};

}  // namespace framecast
