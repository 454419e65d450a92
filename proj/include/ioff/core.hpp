#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ioff/fp16.hpp"

namespace ioff {

using ParamCount = std::uint64_t;

enum class Residency : std::uint8_t { HostResident, StaticFastResident };

// Gradient buffer of one subgroup. Backward produces FP16; after a flush the
// host (or fast tier, when retained) holds the FP32 widening.
struct GradientBuffer {
  Precision precision = Precision::FP16;
  std::vector<Half> fp16;
  std::vector<float> fp32;

  std::size_t size() const { return precision == Precision::FP16 ? fp16.size() : fp32.size(); }
};

// One shard of a rank's optimizer state, updated as a unit.
struct Subgroup {
  std::size_t id = 0;
  std::vector<float> params32;
  std::vector<float> momentum32;
  std::vector<float> variance32;
  GradientBuffer grads;
  Residency residency = Residency::HostResident;

  Subgroup() = default;
  Subgroup(std::size_t id, std::size_t size);

  std::size_t size() const { return params32.size(); }

  // Throws ValidationError when the state vectors disagree in length or are empty.
  void check() const;
};

// Optimizer state of one rank plus the FP16 model copy that forward/backward
// read. Subgroups are contiguous in parameter order.
class ShardedOptimizer {
 public:
  ShardedOptimizer() = default;
  explicit ShardedOptimizer(const std::vector<ParamCount>& subgroup_sizes);

  std::vector<Subgroup>& subgroups() { return subgroups_; }
  const std::vector<Subgroup>& subgroups() const { return subgroups_; }
  std::vector<Half>& model16() { return model16_; }
  const std::vector<Half>& model16() const { return model16_; }

  std::size_t num_subgroups() const { return subgroups_.size(); }
  ParamCount total_params() const { return total_params_; }
  // Offset of subgroup `id` inside model16.
  std::size_t offset(std::size_t id) const { return offsets_.at(id); }

  // Deterministic initialization: params ~ U(-1, 1), m = v = 0, FP16 grads
  // ~ N(0, grad_scale). model16 is refreshed from params32.
  void randomize(std::uint64_t seed, float grad_scale = 1e-2f);
  // Fresh FP16 gradients for every subgroup (synthetic backward output).
  void synthesize_gradients(std::uint64_t seed, float grad_scale = 1e-2f);
  void refresh_model16();

  // Invariants: consecutive ids, sizes sum to total_params, model16 length.
  void check() const;
  // model16[i] == downscale_rne(params32[i]) for every parameter.
  bool model16_coherent() const;

  // Bit-level equality of all FP32 state and model16 (gradients ignored).
  bool state_equals(const ShardedOptimizer& other) const;

 private:
  std::vector<Subgroup> subgroups_;
  std::vector<Half> model16_;
  std::vector<std::size_t> offsets_;
  ParamCount total_params_ = 0;
};

// Throughput/capacity description of one node, as seen by one rank.
// Rates used by the stride model are params/s at FP32 width; the rest are
// bytes/s. Conversion byte rates are counted on the FP16 side.
struct SystemProfile {
  std::string name;
  double cpu_update_params_per_s = 0;      // U_c
  double fast_update_params_per_s = 0;     // U_g
  double host_downscale_params_per_s = 0;  // D_c, FP32 -> FP16 on host
  double channel_params_per_s = 0;         // B, per direction, pinned
  double pageable_h2d_bytes_per_s = 0;
  double pageable_d2h_bytes_per_s = 0;
  double fast_conversion_bytes_per_s = 0;
  double host_conversion_bytes_per_s = 0;
  double host_alloc_unpinned_bytes_per_s = 0;
  double fast_capacity_bytes = 0;  // for dynamic optimizer state
  // Slowdown applied to CPU compute and channel transfers that run
  // concurrently in non-blocking plans. 1.0 disables it.
  double host_contention = 1.0;
  std::string source;

  double channel_bytes_per_s() const { return channel_params_per_s * 4.0; }

  // Seconds to move S params over one channel direction.
  double fp32_transfer_s(double params) const { return params / channel_params_per_s; }
  double fp16_transfer_s(double params) const { return params / (2.0 * channel_params_per_s); }

  // Throws InvalidArgument naming the first offending field.
  void validate() const;

  friend bool operator==(const SystemProfile&, const SystemProfile&) = default;
};

struct FootprintReport {
  std::uint64_t model16_bytes = 0;
  std::uint64_t grads16_bytes = 0;
  std::uint64_t optimizer32_bytes = 0;
  std::uint64_t per_gpu_subgroup_count = 0;
  std::uint64_t per_subgroup_state_bytes = 0;

  friend bool operator==(const FootprintReport&, const FootprintReport&) = default;
};

/// Splits `total_params` across `num_ranks` (ceil(P/N) each, trailing ranks
/// possibly fewer or empty) and each rank's share into `subgroup_size`
/// chunks with one trailing remainder chunk.
std::vector<std::vector<ParamCount>> shard(ParamCount total_params, ParamCount subgroup_size,
                                           ParamCount num_ranks);

/// Memory accounting: 2 bytes each for FP16 model and gradients, 16 bytes of
/// FP32 optimizer state (p, m, v, g) per parameter; 12 bytes per parameter
/// of a subgroup's p/m/v.
FootprintReport footprint(ParamCount total_params, ParamCount subgroup_size);

}  // namespace ioff
