#include "ioff/sim.hpp"

#include <algorithm>
#include <cstdio>

#include "ioff/error.hpp"

namespace ioff {

ApproachConfig ApproachConfig::zero3() { return ApproachConfig{}; }

ApproachConfig ApproachConfig::twinflow(double static_ratio) {
  ApproachConfig a;
  a.kind = ApproachKind::TwinFlow;
  a.static_ratio = static_ratio;
  a.placement = Placement::StaticFirst;
  return a;
}

ApproachConfig ApproachConfig::interleaved(std::optional<int> k, double static_ratio, Placement placement) {
  ApproachConfig a;
  a.kind = ApproachKind::Interleaved;
  a.k = k;
  a.static_ratio = static_ratio;
  a.placement = placement;
  return a;
}

std::string ApproachConfig::label() const {
  char buf[96];
  switch (kind) {
    case ApproachKind::Zero3: return "zero3";
    case ApproachKind::TwinFlow:
      std::snprintf(buf, sizeof buf, "twinflow(ratio=%.2f)", static_ratio);
      return buf;
    case ApproachKind::Interleaved:
      if (all_cpu)
        std::snprintf(buf, sizeof buf, "interleaved(k=all_cpu,ratio=%.2f)", static_ratio);
      else if (k)
        std::snprintf(buf, sizeof buf, "interleaved(k=%d,ratio=%.2f)", *k, static_ratio);
      else
        std::snprintf(buf, sizeof buf, "interleaved(k=auto,ratio=%.2f)", static_ratio);
      return buf;
  }
  return "?";
}

namespace {

std::optional<int> resolve_k(const ApproachConfig& approach, const SystemProfile& profile) {
  if (approach.kind != ApproachKind::Interleaved || approach.all_cpu) return std::nullopt;
  if (approach.k) {
    if (*approach.k < 1) throw InvalidArgument("interleaved k must be >= 1");
    return approach.k;
  }
  return optimal_stride(profile).k;
}

}  // namespace

UpdatePlan plan_for(const ApproachConfig& approach, const SystemProfile& profile, std::size_t num_subgroups) {
  switch (approach.kind) {
    case ApproachKind::Zero3: return build_plan(num_subgroups, Stride::all_cpu(), 0.0, Placement::StaticFirst);
    case ApproachKind::TwinFlow:
      return build_plan(num_subgroups, Stride::all_cpu(), approach.static_ratio, Placement::StaticFirst);
    case ApproachKind::Interleaved: {
      const auto k = resolve_k(approach, profile);
      const Stride stride = k ? Stride::every(*k + 1) : Stride::all_cpu();
      return build_plan(num_subgroups, stride, approach.static_ratio, approach.placement);
    }
  }
  throw InvalidArgument("unknown approach");
}

Timeline simulate_update_phase(const UpdatePlan& plan, const SystemProfile& profile,
                               const std::vector<ParamCount>& subgroup_sizes) {
  if (subgroup_sizes.size() != plan.num_subgroups)
    throw InvalidArgument("plan has " + std::to_string(plan.num_subgroups) + " subgroups, sizes list has " +
                          std::to_string(subgroup_sizes.size()));
  ParamCount max_size = 0;
  for (const auto s : subgroup_sizes) max_size = std::max(max_size, s);
  VirtualClock clock(plan, TimingModel(profile, subgroup_sizes, plan.blocking), staging_slots(profile, max_size));
  // Plan order is a valid placement order: dependencies, lane predecessors
  // and slot predecessors are all emitted earlier.
  for (const auto& a : plan.actions) clock.place(a);
  return std::move(clock).finish();
}

Timeline simulate_update_phase(const UpdatePlan& plan, const SystemProfile& profile, ParamCount subgroup_size) {
  if (subgroup_size == 0 && plan.num_subgroups > 0) throw InvalidArgument("subgroup_size must be positive");
  return simulate_update_phase(plan, profile, std::vector<ParamCount>(plan.num_subgroups, subgroup_size));
}

double grad_flush_throughput(GradFlushStrategy strategy, const SystemProfile& profile, double grad_bytes_fp16) {
  profile.validate();
  if (grad_bytes_fp16 < 0) throw InvalidArgument("grad_bytes_fp16 must be >= 0");
  // Per FP16 byte: each stage's time is bytes / rate, so the rate is the
  // harmonic combination and the size drops out.
  if (strategy == GradFlushStrategy::Fp16HostUpscale) {
    const double per_byte = 1.0 / profile.host_alloc_unpinned_bytes_per_s + 1.0 / profile.pageable_d2h_bytes_per_s +
                            1.0 / profile.host_conversion_bytes_per_s;
    return 1.0 / per_byte;
  }
  // Widened gradients are twice the FP16 bytes on the channel.
  const double per_byte = 1.0 / profile.fast_conversion_bytes_per_s + 2.0 / profile.channel_bytes_per_s();
  return 1.0 / per_byte;
}

std::vector<bool> gradient_retention(const UpdatePlan& plan, const SystemProfile& profile,
                                     const std::vector<ParamCount>& subgroup_sizes) {
  std::vector<bool> keep(plan.num_subgroups, false);
  ParamCount max_size = 0;
  for (const auto s : subgroup_sizes) max_size = std::max(max_size, s);
  const double budget = 0.9 * profile.fast_capacity_bytes;
  double used = plan.dynamic_fast().empty() ? 0.0 : 24.0 * static_cast<double>(max_size);
  for (std::size_t i = 0; i < plan.num_subgroups; ++i) {
    if (plan.is_static(i)) {
      keep[i] = true;
      continue;
    }
    if (!plan.is_dynamic_fast(i)) continue;
    const double need = 4.0 * static_cast<double>(subgroup_sizes.at(i));
    if (used + need <= budget) {
      used += need;
      keep[i] = true;
    }
  }
  return keep;
}

IterationBreakdown simulate_iteration(const ApproachConfig& approach, const SystemProfile& profile,
                                      const IterationModel& model, std::size_t num_subgroups,
                                      ParamCount subgroup_size) {
  if (subgroup_size == 0 && num_subgroups > 0) throw InvalidArgument("subgroup_size must be positive");
  return simulate_iteration(approach, profile, model, std::vector<ParamCount>(num_subgroups, subgroup_size));
}

IterationBreakdown simulate_iteration(const ApproachConfig& approach, const SystemProfile& profile,
                                      const IterationModel& model, const std::vector<ParamCount>& sizes) {
  if (model.fwd_ns < 0 || model.bwd_ns < 0) throw InvalidArgument("phase times must be >= 0");
  if (!(model.microbatch_scale > 0)) throw InvalidArgument("microbatch_scale must be positive");

  const std::size_t num_subgroups = sizes.size();
  const UpdatePlan plan = plan_for(approach, profile, num_subgroups);

  IterationBreakdown out;
  out.k = resolve_k(approach, profile);
  out.fwd_s = static_cast<double>(model.fwd_ns) * 1e-9 * model.microbatch_scale;
  out.bwd_compute_s = static_cast<double>(model.bwd_ns) * 1e-9 * model.recompute_factor() * model.microbatch_scale;

  const bool baseline = approach.kind != ApproachKind::Interleaved;
  const auto strategy = baseline ? GradFlushStrategy::Fp16HostUpscale : GradFlushStrategy::GpuUpscaleFp32;
  const double rate = grad_flush_throughput(strategy, profile, 0.0);
  auto flush_one = [&](std::size_t i) {
    return static_cast<double>(model.grad_bytes_per_subgroup.value_or(2 * sizes[i])) / rate;
  };

  std::vector<bool> retained(num_subgroups, false);
  if (baseline) {
    for (const auto s : plan.static_set) retained[s] = true;
  } else {
    retained = gradient_retention(plan, profile, sizes);
  }

  const double window = num_subgroups > 0 ? out.bwd_compute_s / static_cast<double>(num_subgroups) : 0.0;
  for (std::size_t i = 0; i < num_subgroups; ++i) {
    if (retained[i]) {
      ++out.retained_gradients;
      continue;
    }
    out.grad_flush_s += baseline ? flush_one(i) : std::max(0.0, flush_one(i) - window);
  }
  out.bwd_s = out.bwd_compute_s + out.grad_flush_s;

  out.update = simulate_update_phase(plan, profile, sizes);
  out.update_s = static_cast<double>(out.update.makespan_ns) * 1e-9;
  return out;
}

std::vector<ComparisonRow> compare_approaches(const SystemProfile& profile, std::size_t num_subgroups,
                                              ParamCount subgroup_size, const std::vector<ApproachConfig>& approaches,
                                              const IterationModel& model, std::size_t jobs) {
  return compare_approaches(profile, std::vector<ParamCount>(num_subgroups, subgroup_size), approaches, model, jobs);
}

std::vector<ComparisonRow> compare_approaches(const SystemProfile& profile,
                                              const std::vector<ParamCount>& subgroup_sizes,
                                              const std::vector<ApproachConfig>& approaches,
                                              const IterationModel& model, std::size_t jobs) {
  if (approaches.size() < 2) throw InvalidArgument("compare needs at least two approaches");
  auto phases = parallel_map<IterationBreakdown>(approaches.size(), jobs, [&](std::size_t i) {
    return simulate_iteration(approaches[i], profile, model, subgroup_sizes);
  });
  std::vector<ComparisonRow> rows;
  rows.reserve(approaches.size());
  for (std::size_t i = 0; i < approaches.size(); ++i) {
    ComparisonRow row;
    row.approach = approaches[i];
    row.phases = std::move(phases[i]);
    rows.push_back(std::move(row));
  }
  const double base_update = rows.front().phases.update_s;
  const double base_total = rows.front().phases.total_s();
  for (auto& row : rows) {
    row.update_speedup = row.phases.update_s > 0 ? base_update / row.phases.update_s : 1.0;
    row.iteration_speedup = row.phases.total_s() > 0 ? base_total / row.phases.total_s() : 1.0;
  }
  return rows;
}

StrideSweep sweep_stride(const SystemProfile& profile, std::size_t num_subgroups, ParamCount subgroup_size,
                         const std::vector<int>& k_range, std::size_t jobs) {
  if (subgroup_size == 0 && num_subgroups > 0) throw InvalidArgument("subgroup_size must be positive");
  return sweep_stride(profile, std::vector<ParamCount>(num_subgroups, subgroup_size), k_range, jobs);
}

StrideSweep sweep_stride(const SystemProfile& profile, const std::vector<ParamCount>& subgroup_sizes,
                         const std::vector<int>& k_range, std::size_t jobs) {
  const std::size_t num_subgroups = subgroup_sizes.size();
  if (k_range.empty()) throw InvalidArgument("k_range must not be empty");
  for (const int k : k_range)
    if (k < 1) throw InvalidArgument("k values must be >= 1");

  StrideSweep out;
  const auto baseline = build_plan(num_subgroups, Stride::all_cpu(), 0.0, Placement::StaticLast);
  out.all_cpu_makespan_ns = simulate_update_phase(baseline, profile, subgroup_sizes).makespan_ns;

  const auto makespans = parallel_map<Nanos>(k_range.size(), jobs, [&](std::size_t i) {
    const auto plan = build_plan(num_subgroups, Stride::every(k_range[i] + 1), 0.0, Placement::StaticLast);
    return simulate_update_phase(plan, profile, subgroup_sizes).makespan_ns;
  });

  out.all_cpu_best = true;
  std::size_t best = 0;
  for (std::size_t i = 0; i < k_range.size(); ++i) {
    StrideSweepPoint p{k_range[i], makespans[i], makespans[i] > out.all_cpu_makespan_ns};
    if (!p.worse_than_all_cpu) out.all_cpu_best = false;
    if (makespans[i] < makespans[best] || (makespans[i] == makespans[best] && k_range[i] < k_range[best])) best = i;
    out.points.push_back(p);
  }
  out.best_k = k_range[best];
  return out;
}

}  // namespace ioff
