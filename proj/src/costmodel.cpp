#include "framecast/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace framecast {

namespace {

uint64_t checked_mul(uint64_t a, uint64_t b, const char* what) {
  uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out))
    throw ValidationError(std::string("cost model overflow in ") + what);
  return out;
}

uint64_t checked_add(uint64_t a, uint64_t b, const char* what) {
  uint64_t out = 0;
  if (__builtin_add_overflow(a, b, &out))
    throw ValidationError(std::string("cost model overflow in ") + what);
  return out;
}

}  // namespace

uint64_t vit_attention_flops(const WorkloadShape& w) {
  w.validate();
  const uint64_t l = static_cast<uint64_t>(w.total_tokens());
  const uint64_t d = static_cast<uint64_t>(w.width);
  return checked_mul(checked_mul(2 * l, l, "vit"), d, "vit");
}

uint64_t vit_flops(const WorkloadShape& w) {
  const uint64_t l = static_cast<uint64_t>(w.total_tokens());
  const uint64_t d = static_cast<uint64_t>(w.width);
  const uint64_t proj = checked_mul(checked_mul(4 * l, d, "vit"), d, "vit");
  return checked_add(vit_attention_flops(w), proj, "vit");
}

uint64_t vit_bytes(const WorkloadShape& w) {
  w.validate();
  const uint64_t l = static_cast<uint64_t>(w.total_tokens());
  return checked_mul(2 * l, l, "vit bytes");
}

uint64_t linear_flops(const WorkloadShape& w) {
  w.validate();
  const uint64_t l = static_cast<uint64_t>(w.total_tokens());
  const uint64_t d = static_cast<uint64_t>(w.width);
  return checked_mul(checked_mul(8 * l, d, "linear"), d, "linear");
}

uint64_t mixer_flops(const WorkloadShape& w) {
  w.validate();
  const uint64_t st = static_cast<uint64_t>(w.frames + w.tokens);
  const uint64_t d = static_cast<uint64_t>(w.width);
  return checked_mul(checked_mul(4 * st, d, "mixer"), d, "mixer");
}

CostRow roofline_latency(const std::string& method, uint64_t flops, uint64_t bytes,
                         const HardwareSpec& hw) {
  hw.validate();
  CostRow row;
  row.method = method;
  row.flops = flops;
  row.bytes = bytes;
  const double compute_s = static_cast<double>(flops) / hw.peak_flops;
  const double memory_s = static_cast<double>(bytes) / hw.mem_bandwidth;
  row.latency_seconds = std::max(compute_s, memory_s);
  row.bound = compute_s >= memory_s ? Bound::Compute : Bound::Memory;
  return row;
}

std::vector<CostRow> table1(const HardwareSpec& hw, const WorkloadShape& w,
                            const ByteConstants& bytes) {
  w.validate();
  std::vector<CostRow> rows;
  rows.push_back(roofline_latency("vit", vit_attention_flops(w), vit_bytes(w), hw));
  rows.push_back(roofline_latency("rwkv", linear_flops(w),
                                  static_cast<uint64_t>(bytes.rwkv_bytes), hw));
  rows.push_back(roofline_latency("mamba", kMambaReferenceFlops,
                                  static_cast<uint64_t>(bytes.mamba_bytes), hw));
  rows.push_back(roofline_latency("mixer", mixer_flops(w),
                                  static_cast<uint64_t>(bytes.mixer_bytes), hw));
  return rows;
}

std::vector<SweepPoint> sweep(const HardwareSpec& hw, const std::vector<int64_t>& resolutions,
                              const std::vector<int64_t>& frame_counts,
                              const std::vector<int64_t>& widths, int64_t downsample,
                              const ByteConstants& bytes) {
  if (downsample < 1) throw ValidationError("sweep: downsample must be >= 1");
  // Byte anchors refer to the standard workload; away from it, scale by the
  // stated asymptotic memory laws.
  const WorkloadShape anchor{};
  const double anchor_ld =
      static_cast<double>(anchor.total_tokens()) * static_cast<double>(anchor.width);
  const double anchor_dmax = static_cast<double>(anchor.width) *
                             static_cast<double>(std::max(anchor.tokens, anchor.frames));

  std::vector<SweepPoint> points;
  for (int64_t res : resolutions)
    for (int64_t t : frame_counts)
      for (int64_t d : widths) {
        if (res % downsample != 0)
          throw ValidationError("sweep: resolution must be divisible by the downsample factor");
        WorkloadShape w;
        w.frames = t;
        const int64_t side = res / downsample;
        w.tokens = side * side;
        w.width = d;
        w.validate();

        const double ld = static_cast<double>(w.total_tokens()) * static_cast<double>(w.width);
        const double dmax = static_cast<double>(w.width) *
                            static_cast<double>(std::max(w.tokens, w.frames));

        points.push_back({"vit", w, roofline_latency("vit", vit_attention_flops(w), vit_bytes(w), hw)});
        points.push_back({"rwkv", w,
                          roofline_latency("rwkv", linear_flops(w),
                                           static_cast<uint64_t>(bytes.rwkv_bytes * ld / anchor_ld), hw)});
        points.push_back({"mamba", w,
                          roofline_latency("mamba", linear_flops(w),
                                           static_cast<uint64_t>(bytes.mamba_bytes * ld / anchor_ld), hw)});
        points.push_back({"mixer", w,
                          roofline_latency("mixer", mixer_flops(w),
                                           static_cast<uint64_t>(bytes.mixer_bytes * dmax / anchor_dmax), hw)});
      }
  return points;
}

namespace {

std::string latency_ms_str(double seconds) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", seconds * 1e3);
  return buf;
}

}  // namespace

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os << "method,T,S,D,L,flops,bytes,latency_ms,bound\n";
  for (const auto& p : points) {
    os << p.method << "," << p.shape.frames << "," << p.shape.tokens << "," << p.shape.width << ","
       << p.shape.total_tokens() << "," << p.cost.flops << "," << p.cost.bytes << ","
       << latency_ms_str(p.cost.latency_seconds) << ","
       << (p.cost.bound == Bound::Compute ? "compute" : "memory") << "\n";
  }
  return os.str();
}

std::string table1_csv(const std::vector<CostRow>& rows) {
  std::ostringstream os;
  os << "method,flops,bytes,latency_ms,bound\n";
  for (const auto& r : rows)
    os << r.method << "," << r.flops << "," << r.bytes << ","
       << latency_ms_str(r.latency_seconds) << ","
       << (r.bound == Bound::Compute ? "compute" : "memory") << "\n";
  return os.str();
}

HardwareSpec load_hardware_preset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_hardware_preset: cannot open " + path);
  HardwareSpec hw;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "hw.name")
      hw.name = value;
    else if (key == "hw.peak_flops")
      hw.peak_flops = std::stod(value);
    else if (key == "hw.mem_bandwidth")
      hw.mem_bandwidth = std::stod(value);
    else if (!key.empty())
      throw ValidationError("load_hardware_preset: unknown key " + key);
  }
  hw.validate();
  return hw;
}

}  // namespace framecast
