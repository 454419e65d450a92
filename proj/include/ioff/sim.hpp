#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ioff/core.hpp"
#include "ioff/perfmodel.hpp"
#include "ioff/plan.hpp"
#include "ioff/timeline.hpp"

namespace ioff {

enum class ApproachKind { Zero3, TwinFlow, Interleaved };

struct ApproachConfig {
  ApproachKind kind = ApproachKind::Zero3;
  double static_ratio = 0.0;
  // Interleaved only: CPU updates per fast-device update. Unset picks
  // optimal_stride(profile); set to nullopt with `all_cpu` to force all-CPU.
  std::optional<int> k;
  bool all_cpu = false;
  Placement placement = Placement::StaticLast;

  static ApproachConfig zero3();
  static ApproachConfig twinflow(double static_ratio);
  static ApproachConfig interleaved(std::optional<int> k, double static_ratio = 0.0,
                                    Placement placement = Placement::StaticLast);

  std::string label() const;
  friend bool operator==(const ApproachConfig&, const ApproachConfig&) = default;
};

/// Plan for one approach. Zero3 and TwinFlow are the blocking baseline
/// (TwinFlow with static residents at the front); Interleaved uses stride
/// k + 1 with static residents at `placement` (the back by default).
UpdatePlan plan_for(const ApproachConfig& approach, const SystemProfile& profile, std::size_t num_subgroups);

/// Event-level simulation of one update phase with N subgroups of
/// `subgroup_size` params. Throws InfeasibleConfiguration when the plan has
/// dynamic fast subgroups and the fast tier cannot hold 12 * S bytes.
Timeline simulate_update_phase(const UpdatePlan& plan, const SystemProfile& profile, ParamCount subgroup_size);
Timeline simulate_update_phase(const UpdatePlan& plan, const SystemProfile& profile,
                               const std::vector<ParamCount>& subgroup_sizes);

enum class GradFlushStrategy { Fp16HostUpscale, GpuUpscaleFp32 };

/// Effective gradient flush rate in FP16 bytes/s. The FP16 path allocates a
/// pageable host buffer, copies into it and widens on the host, one stage
/// after another; the FP32 path widens on the device and copies FP32 over
/// the pinned channel. Stage times are linear in size, so the rate does not
/// depend on `grad_bytes_fp16` (zero returns the same limit).
double grad_flush_throughput(GradFlushStrategy strategy, const SystemProfile& profile, double grad_bytes_fp16);

struct IterationModel {
  Nanos fwd_ns = 0;
  Nanos bwd_ns = 0;  // without recomputation
  bool activation_checkpointing = true;
  double microbatch_scale = 1.0;  // multiplies fwd and bwd compute
  std::optional<std::uint64_t> grad_bytes_per_subgroup;  // FP16 bytes; default 2 * S

  double recompute_factor() const { return activation_checkpointing ? 1.33 : 1.0; }
  friend bool operator==(const IterationModel&, const IterationModel&) = default;
};

/// Which fast-scheduled subgroups keep their FP32 gradients on the fast
/// tier instead of flushing them: greedily in subgroup order while
/// retained gradients (4 bytes/param) plus two staging slots fit within 90%
/// of fast_capacity_bytes. Static residents always retain.
std::vector<bool> gradient_retention(const UpdatePlan& plan, const SystemProfile& profile,
                                     const std::vector<ParamCount>& subgroup_sizes);

struct IterationBreakdown {
  double fwd_s = 0;
  double bwd_s = 0;          // compute + exposed gradient flush
  double bwd_compute_s = 0;  // bwd_ns * recompute * microbatch scale
  double grad_flush_s = 0;   // exposed part only
  double update_s = 0;
  std::size_t retained_gradients = 0;
  std::optional<int> k;
  Timeline update;

  double total_s() const { return fwd_s + bwd_s + update_s; }
};

/// Forward, backward and update phase times for one approach. The baseline
/// flushes FP16 gradients at every subgroup boundary, blocking backward;
/// the interleaved approach flushes FP32 gradients overlapped with
/// backward compute, so only the part exceeding the per-subgroup compute
/// window is exposed, and fast-scheduled subgroups may keep theirs.
IterationBreakdown simulate_iteration(const ApproachConfig& approach, const SystemProfile& profile,
                                      const IterationModel& model, std::size_t num_subgroups,
                                      ParamCount subgroup_size);
IterationBreakdown simulate_iteration(const ApproachConfig& approach, const SystemProfile& profile,
                                      const IterationModel& model, const std::vector<ParamCount>& subgroup_sizes);

struct ComparisonRow {
  ApproachConfig approach;
  IterationBreakdown phases;
  double update_speedup = 1.0;     // first row's update time / this row's
  double iteration_speedup = 1.0;  // same for the whole iteration
};

// Throws InvalidArgument for fewer than two approaches.
std::vector<ComparisonRow> compare_approaches(const SystemProfile& profile, std::size_t num_subgroups,
                                              ParamCount subgroup_size, const std::vector<ApproachConfig>& approaches,
                                              const IterationModel& model, std::size_t jobs = 1);
std::vector<ComparisonRow> compare_approaches(const SystemProfile& profile,
                                              const std::vector<ParamCount>& subgroup_sizes,
                                              const std::vector<ApproachConfig>& approaches,
                                              const IterationModel& model, std::size_t jobs = 1);

struct StrideSweepPoint {
  int k = 0;
  Nanos makespan_ns = 0;
  bool worse_than_all_cpu = false;
};

struct StrideSweep {
  std::vector<StrideSweepPoint> points;
  int best_k = 0;
  Nanos all_cpu_makespan_ns = 0;
  // True when the all-CPU baseline beats every k in the range.
  bool all_cpu_best = false;
};

/// Simulated update phase for each ratio k in `k_range` (interleaved, no
/// static residents) plus the all-CPU baseline. Brute-force counterpart of
/// optimal_stride.
StrideSweep sweep_stride(const SystemProfile& profile, std::size_t num_subgroups, ParamCount subgroup_size,
                         const std::vector<int>& k_range, std::size_t jobs = 1);
StrideSweep sweep_stride(const SystemProfile& profile, const std::vector<ParamCount>& subgroup_sizes,
                         const std::vector<int>& k_range, std::size_t jobs = 1);

// Runs fn(0..n-1) on at most `jobs` threads; results in index order.
template <typename T, typename F>
std::vector<T> parallel_map(std::size_t n, std::size_t jobs, F fn);

}  // namespace ioff

#include "ioff/detail/parallel.hpp"
