#pragma once

#include <cstddef>
#include <optional>

#include "ioff/core.hpp"
#include "ioff/plan.hpp"

namespace ioff {

// Ratio of CPU-updated to fast-device-updated subgroups (k CPU updates for
// every fast-device update), or all-CPU when offloading never pays.
struct StrideResult {
  std::optional<double> k_real;  // nullopt: all-CPU
  std::optional<int> k;          // nullopt: all-CPU
  double gpu_fraction = 0.0;     // 1 / (k + 1), 0 for all-CPU

  bool all_cpu() const { return !k.has_value(); }
  // Plan stride realizing this ratio: one fast subgroup every k + 1.
  Stride stride() const { return k ? Stride::every(*k + 1) : Stride::all_cpu(); }
};

/// Balances k CPU updates plus downscales against the subgroup swap
/// (3 FP32 tensors each way), the FP16 upload of the k CPU-updated
/// subgroups, and one fast-device update:
///
///   k (S/U_c + S/D_c) = 3S/B + kS/(2B) + S/U_g
///   k_real = (3/B + 1/U_g) / (1/U_c + 1/D_c - 1/(2B))
///
/// S cancels. The integer k is whichever of floor/ceil (clamped to >= 1)
/// gives the lower estimate_update_time, ties to the smaller.
StrideResult optimal_stride(const SystemProfile& profile);

/// Closed-form update-phase time in seconds for N subgroups of S params.
///
/// Interleaved (k set): the dynamic subgroups form (N - static)/(k + 1)
/// cycles, each costing
///   max(k S (1/U_c + 1/D_c),  3S/B + kS/(2B) + S/U_g),
/// plus S/U_g per static resident. All-CPU (k unset) is the blocking
/// baseline: every dynamic subgroup costs S/U_c + S/D_c + S/(2B).
double estimate_update_time(const SystemProfile& profile, std::size_t num_subgroups, ParamCount subgroup_size,
                            std::optional<int> k, std::size_t static_residents = 0);

}  // namespace ioff
