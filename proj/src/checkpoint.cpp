#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "framecast/config.hpp"
#include "framecast/training.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

namespace framecast {

namespace {

constexpr char kMagic[4] = {'E', 'V', 'A', 'C'};
constexpr uint8_t kElemF32 = 0;

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::istream& in, const char* what) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw IoError(std::string("checkpoint: truncated while reading ") + what);
  return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Shape& shape,
                  const std::vector<float>& data) {
  write_u32(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(out, static_cast<uint32_t>(shape.size()));
  for (int64_t d : shape) write_u32(out, static_cast<uint32_t>(d));
  out.put(static_cast<char>(kElemF32));
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
}

struct RawTensor {
  Shape shape;
  std::vector<float> data;
};

std::pair<std::string, RawTensor> read_tensor(std::istream& in) {
  const uint32_t name_len = read_u32(in, "tensor name length");
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  if (!in) throw IoError("checkpoint: truncated tensor name");
  const uint32_t rank = read_u32(in, "tensor rank");
  if (rank == 0 || rank > 8) throw IoError("checkpoint: implausible tensor rank");
  RawTensor t;
  int64_t numel = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    const uint32_t d = read_u32(in, "tensor dim");
    t.shape.push_back(static_cast<int64_t>(d));
    numel *= static_cast<int64_t>(d);
  }
  const int dtype = in.get();
  if (dtype != kElemF32) throw IoError("checkpoint: unsupported element type code");
  t.data.resize(static_cast<size_t>(numel));
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!in) throw IoError("checkpoint: truncated tensor data for " + name);
  return {name, std::move(t)};
}

std::string config_block(const Checkpoint& ckpt) {
  KeyValueMap map;
  const ModelConfig& m = ckpt.model_cfg;
  map.set("model.t_in", std::to_string(m.t_in));
  map.set("model.t_out", std::to_string(m.t_out));
  map.set("model.channels", std::to_string(m.channels));
  map.set("model.height", std::to_string(m.height));
  map.set("model.width", std::to_string(m.width));
  map.set("model.stages", std::to_string(m.stages));
  map.set("model.base_channels", std::to_string(m.base_channels));
  map.set("model.n_blocks", std::to_string(m.n_blocks));
  map.set("model.embed_width", std::to_string(m.embed_width));
  map.set("state.epoch", std::to_string(ckpt.epoch));
  map.set("state.optim_step", std::to_string(ckpt.optim.step));
  map.set("state.rng", ckpt.rng_state);
  return map.serialize();
}

void parse_config_block(const std::string& text, Checkpoint& ckpt) {
  const KeyValueMap map = KeyValueMap::parse(text);
  ModelConfig& m = ckpt.model_cfg;
  m.t_in = map.get_int("model.t_in", m.t_in);
  m.t_out = map.get_int("model.t_out", m.t_out);
  m.channels = map.get_int("model.channels", m.channels);
  m.height = map.get_int("model.height", m.height);
  m.width = map.get_int("model.width", m.width);
  m.stages = static_cast<int>(map.get_int("model.stages", m.stages));
  m.base_channels = map.get_int("model.base_channels", m.base_channels);
  m.n_blocks = static_cast<int>(map.get_int("model.n_blocks", m.n_blocks));
  m.embed_width = map.get_int("model.embed_width", m.embed_width);
  ckpt.epoch = static_cast<int>(map.get_int("state.epoch", 0));
  ckpt.optim.step = map.get_int("state.optim_step", 0);
  ckpt.rng_state = map.get_or("state.rng", "");
}

}  // namespace

void save_checkpoint(const std::string& path, Checkpoint& ckpt) {
  ckpt.model_cfg.validate();
  std::ostringstream body;
  body.write(kMagic, 4);
  write_u32(body, ckpt.version);
  const std::string cfg_text = config_block(ckpt);
  write_u32(body, static_cast<uint32_t>(cfg_text.size()));
  body.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

  uint32_t count = 0;
  ckpt.weights.for_each_param([&count](const std::string&, Tensor&) { count += 3; });
  write_u32(body, count);

  size_t slot = 0;
  ckpt.weights.for_each_param([&](const std::string& name, Tensor& t) {
    if (!t.all_finite())
      throw NumericError("save_checkpoint: non-finite values in " + name);
    write_tensor(body, "model." + name, t.shape(), t.data());
    if (slot >= ckpt.optim.names.size() || ckpt.optim.names[slot] != name)
      throw ValidationError("save_checkpoint: optimizer state does not match " + name);
    write_tensor(body, "optim.m." + name, t.shape(), ckpt.optim.m[slot]);
    write_tensor(body, "optim.v." + name, t.shape(), ckpt.optim.v[slot]);
    ++slot;
  });

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  const std::string blob = body.str();
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("save_checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("load_checkpoint: bad magic, not a checkpoint file");
  Checkpoint ckpt;
  ckpt.version = read_u32(in, "version");
  if (ckpt.version != 1)
    throw IoError("load_checkpoint: unsupported format version " +
                  std::to_string(ckpt.version));
  const uint32_t cfg_len = read_u32(in, "config length");
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  if (!in) throw IoError("load_checkpoint: truncated config block");
  parse_config_block(cfg_text, ckpt);
  ckpt.model_cfg.validate();

  const uint32_t count = read_u32(in, "tensor count");
  std::map<std::string, RawTensor> tensors;
  for (uint32_t i = 0; i < count; ++i) {
    auto [name, t] = read_tensor(in);
    tensors.emplace(std::move(name), std::move(t));
  }

  // Weight structure comes from the embedded config; stored tensors fill it.
  ckpt.weights = init_weights<float>(ckpt.model_cfg, 0);
  const int64_t saved_step = ckpt.optim.step;
  ckpt.optim = OptimState::init_for(ckpt.weights);
  ckpt.optim.step = saved_step;

  size_t slot = 0;
  ckpt.weights.for_each_param([&](const std::string& name, Tensor& t) {
    auto fill = [&](const std::string& key, std::vector<float>& dst) {
      const auto it = tensors.find(key);
      if (it == tensors.end()) throw IoError("load_checkpoint: missing tensor " + key);
      if (it->second.shape != t.shape())
        throw IoError("load_checkpoint: tensor " + key + " has shape " +
                      shape_str(it->second.shape) + " but the config implies " +
                      shape_str(t.shape()));
      dst = it->second.data;
    };
    fill("model." + name, t.data());
    fill("optim.m." + name, ckpt.optim.m[slot]);
    fill("optim.v." + name, ckpt.optim.v[slot]);
    ++slot;
  });
  return ckpt;
}

}  // namespace framecast
