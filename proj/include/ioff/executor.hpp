#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ioff/core.hpp"
#include "ioff/plan.hpp"
#include "ioff/sim.hpp"
#include "ioff/timeline.hpp"

namespace ioff {

struct AdamHyper {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  std::uint64_t step = 1;  // shared by every subgroup in the phase

  // Throws InvalidArgument.
  void validate() const;
  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

/// One FP32 Adam step with bias correction, in place:
///   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
///   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// Both tiers call this same out-of-line kernel, built without FMA
/// contraction, so results do not depend on where a subgroup is updated.
void adam_step(std::span<float> params, std::span<float> momentum, std::span<float> variance,
               std::span<const float> grads, const AdamHyper& h);

// Throws InvalidArgument when grads32 does not match the subgroup size.
void adam_step_subgroup(Subgroup& sg, std::span<const float> grads32, const AdamHyper& h);

struct FlushRecord {
  std::size_t subgroup = 0;
  GradFlushStrategy strategy = GradFlushStrategy::GpuUpscaleFp32;
  std::size_t chunks = 1;
  bool retained = false;
  std::uint64_t bytes_fp16 = 0;
  double seconds = 0;  // zero when retained
};

struct FlushResult {
  std::vector<float> grads32;
  FlushRecord record;
};

/// Widens the subgroup's FP16 gradients chunk by chunk. The FP32 result is
/// upscale(grads16) for any strategy and chunk count; only the cost record
/// differs. Retained gradients stay on the fast tier and cost nothing.
FlushResult flush_gradients(const Subgroup& sg, GradFlushStrategy strategy, const SystemProfile& profile,
                            std::size_t chunks = 1, bool retained = false);

enum class ExecMode { VirtualTime, Throttled };

struct ExecOptions {
  ExecMode mode = ExecMode::VirtualTime;
  // Throttled: wall seconds slept per virtual second of each action.
  double throttle_scale = 1e-3;
  GradFlushStrategy grad_strategy = GradFlushStrategy::GpuUpscaleFp32;
  std::size_t grad_chunks = 4;
};

struct ExecutionResult {
  ShardedOptimizer optimizer;
  Timeline timeline;
  std::vector<FlushRecord> grad_flushes;
  double grad_flush_s = 0;
  double wall_s = 0;
};

/// Runs the plan with real data movement: one worker thread per compute
/// tier and per (stream, direction) queue, fed by a coordinator that hands
/// each worker its next action once dependencies and the staging slot are
/// complete. Virtual event times come from the simulator's VirtualClock, so
/// the timeline equals simulate_update_phase for the same plan and sizes.
///
/// Throws InvalidArgument on shape mismatch, InfeasibleConfiguration when
/// no staging slot fits, SchedulingError when the lane runtime sees a
/// consistency violation (the message names the action).
ExecutionResult execute_plan(const UpdatePlan& plan, ShardedOptimizer opt, const SystemProfile& profile,
                             const AdamHyper& h, const ExecOptions& options = {});

// Plain in-order Adam over every subgroup on one tier, then model16 refresh.
ShardedOptimizer sequential_oracle(ShardedOptimizer opt, const AdamHyper& h);

}  // namespace ioff
