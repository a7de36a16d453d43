#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "framecast/errors.hpp"

namespace framecast {

struct HardwareSpec {
  std::string name = "orin";
  double peak_flops = 10.65e12;        // ops/second
  double mem_bandwidth = 204.8e9;      // bytes/second

  void validate() const {
    if (peak_flops <= 0 || mem_bandwidth <= 0)
      throw ValidationError("HardwareSpec: rates must be strictly positive");
  }
};

/// Translator workload: T frames, S tokens per frame, latent width D,
/// flattened length L = S*T.
struct WorkloadShape {
  int64_t frames = 10;    // T
  int64_t tokens = 16384; // S
  int64_t width = 512;    // D

  int64_t total_tokens() const { return frames * tokens; }  // L

  void validate() const {
    if (frames < 1 || tokens < 1 || width < 1)
      throw ValidationError("WorkloadShape: all dims must be >= 1");
  }
};

enum class Bound { Compute, Memory };

struct CostRow {
  std::string method;
  uint64_t flops = 0;
  uint64_t bytes = 0;
  double latency_seconds = 0.0;
  Bound bound = Bound::Compute;
};

/// Reference byte footprints per translator layer at the standard workload
/// (T=10, S=16384, D=512). These are measured constants, not derivable from
/// the asymptotics; sweeps away from the anchor scale them by the stated
/// memory laws (linear methods O(L*D), factorized O(D*max(S,T))).
struct ByteConstants {
  double rwkv_bytes = 2.4e9;
  double mamba_bytes = 1.8e9;
  double mixer_bytes = 1.0e9;
};

// Exact integer FLOP counts; ValidationError on uint64 overflow.
uint64_t vit_flops(const WorkloadShape& w);      // 2 L^2 D + 4 L D^2
uint64_t vit_attention_flops(const WorkloadShape& w);  // 2 L^2 D (the logits/value term)
uint64_t vit_bytes(const WorkloadShape& w);      // 2 L^2
uint64_t linear_flops(const WorkloadShape& w);   // 8 L D^2
uint64_t mixer_flops(const WorkloadShape& w);    // 4 (T + S) D^2

/// Latency is max(flops/peak, bytes/bandwidth); ties label as compute-bound.
CostRow roofline_latency(const std::string& method, uint64_t flops, uint64_t bytes,
                         const HardwareSpec& hw);

/// The four-row reference cost table at the standard workload. The vit row
/// reports the dominant attention term (see vit_attention_flops); the mamba
/// FLOPs are a stored constant (the 8LD^2 formula yields the rwkv value).
std::vector<CostRow> table1(const HardwareSpec& hw, const WorkloadShape& w,
                            const ByteConstants& bytes = ByteConstants{});

constexpr uint64_t kMambaReferenceFlops = 392000000000ull;  // 3.92e11

struct SweepPoint {
  std::string method;
  WorkloadShape shape;
  CostRow cost;
};

/// One row per (method, resolution, T, D): S = (resolution / downsample)^2.
std::vector<SweepPoint> sweep(const HardwareSpec& hw, const std::vector<int64_t>& resolutions,
                              const std::vector<int64_t>& frame_counts,
                              const std::vector<int64_t>& widths, int64_t downsample,
                              const ByteConstants& bytes = ByteConstants{});

std::string sweep_csv(const std::vector<SweepPoint>& points);
std::string table1_csv(const std::vector<CostRow>& rows);

/// Reads `hw.name`, `hw.peak_flops`, `hw.mem_bandwidth` from a dotted-key
/// preset file.
HardwareSpec load_hardware_preset(const std::string& path);

}  // namespace framecast
