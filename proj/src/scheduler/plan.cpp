#include "ioff/plan.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "ioff/error.hpp"

namespace ioff {

namespace {

constexpr std::array<std::string_view, 12> kKindNames = {
    "cpu_update",  "gpu_update",  "cpu_downscale", "flush_out_p", "flush_out_m",  "flush_out_v",
    "flush_out_model16", "prefetch_p", "prefetch_m", "prefetch_v", "h2d_params16", "grad_flush",
};

constexpr std::array<std::string_view, 4> kLaneNames = {"cpu_compute", "fast_compute", "channel_h2d",
                                                        "channel_d2h"};

}  // namespace

std::string_view to_string(ActionKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }
std::string_view to_string(Lane lane) { return kLaneNames[static_cast<std::size_t>(lane)]; }

std::string_view to_string(Stream stream) {
  switch (stream) {
    case Stream::Param: return "param";
    case Stream::Momentum: return "momentum";
    case Stream::Variance: return "variance";
  }
  return "?";
}

std::string_view to_string(Placement placement) {
  return placement == Placement::StaticFirst ? "static_first" : "static_last";
}

std::optional<ActionKind> parse_action_kind(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == s) return static_cast<ActionKind>(i);
  return std::nullopt;
}

std::optional<Lane> parse_lane(std::string_view s) {
  for (std::size_t i = 0; i < kLaneNames.size(); ++i)
    if (kLaneNames[i] == s) return static_cast<Lane>(i);
  return std::nullopt;
}

std::optional<Placement> parse_placement(std::string_view s) {
  if (s == "static_first" || s == "first") return Placement::StaticFirst;
  if (s == "static_last" || s == "last") return Placement::StaticLast;
  return std::nullopt;
}

Lane lane_of(ActionKind kind) {
  switch (kind) {
    case ActionKind::CpuUpdate:
    case ActionKind::CpuDownscale: return Lane::CpuCompute;
    case ActionKind::GpuUpdate:
    case ActionKind::FlushOutModel16: return Lane::FastCompute;
    case ActionKind::PrefetchP:
    case ActionKind::PrefetchM:
    case ActionKind::PrefetchV:
    case ActionKind::H2DParams16: return Lane::ChannelH2D;
    case ActionKind::FlushOutP:
    case ActionKind::FlushOutM:
    case ActionKind::FlushOutV:
    case ActionKind::GradFlush: return Lane::ChannelD2H;
  }
  return Lane::CpuCompute;
}

std::optional<StreamQueue> queue_of(ActionKind kind) {
  switch (kind) {
    case ActionKind::PrefetchP:
    case ActionKind::H2DParams16: return StreamQueue{Stream::Param, Direction::H2D};
    case ActionKind::PrefetchM: return StreamQueue{Stream::Momentum, Direction::H2D};
    case ActionKind::PrefetchV: return StreamQueue{Stream::Variance, Direction::H2D};
    case ActionKind::FlushOutP: return StreamQueue{Stream::Param, Direction::D2H};
    case ActionKind::FlushOutM: return StreamQueue{Stream::Momentum, Direction::D2H};
    case ActionKind::FlushOutV: return StreamQueue{Stream::Variance, Direction::D2H};
    case ActionKind::FlushOutModel16: return StreamQueue{Stream::Param, Direction::D2D};
    default: return std::nullopt;
  }
}

bool is_prefetch(ActionKind kind) {
  return kind == ActionKind::PrefetchP || kind == ActionKind::PrefetchM || kind == ActionKind::PrefetchV;
}

bool is_flush_out(ActionKind kind) {
  return kind == ActionKind::FlushOutP || kind == ActionKind::FlushOutM || kind == ActionKind::FlushOutV ||
         kind == ActionKind::FlushOutModel16;
}

bool is_compute(ActionKind kind) {
  const Lane lane = lane_of(kind);
  return lane == Lane::CpuCompute || lane == Lane::FastCompute;
}

Stride Stride::every(int k) {
  if (k < 1) throw InvalidArgument("stride k must be >= 1, got " + std::to_string(k));
  return Stride(k);
}

bool UpdatePlan::is_static(std::size_t i) const { return i < static_mask_.size() && static_mask_[i]; }

bool UpdatePlan::is_dynamic_fast(std::size_t i) const {
  return i < assignments.size() && assignments[i] == Device::Fast && !is_static(i);
}

std::optional<std::size_t> UpdatePlan::fast_ordinal(std::size_t i) const {
  return i < ordinals_.size() ? ordinals_[i] : std::nullopt;
}

std::vector<std::size_t> UpdatePlan::dynamic_fast() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < num_subgroups; ++i)
    if (is_dynamic_fast(i)) out.push_back(i);
  return out;
}

std::optional<std::size_t> UpdatePlan::prev_on_gpu(std::size_t i) const {
  for (std::size_t j = std::min(i, num_subgroups); j-- > 0;)
    if (is_dynamic_fast(j)) return j;
  return std::nullopt;
}

std::optional<std::size_t> UpdatePlan::next_on_gpu(std::size_t i) const {
  for (std::size_t j = i + 1; j < num_subgroups; ++j)
    if (is_dynamic_fast(j)) return j;
  return std::nullopt;
}

double UpdatePlan::dynamic_gpu_fraction() const {
  const std::size_t dynamic = num_subgroups - static_set.size();
  if (dynamic == 0) return 0.0;
  return static_cast<double>(dynamic_fast().size()) / static_cast<double>(dynamic);
}

namespace {

class Emitter {
 public:
  explicit Emitter(UpdatePlan& plan) : plan_(plan) {}

  std::size_t emit(ActionKind kind, std::size_t subgroup, std::vector<std::size_t> deps = {}) {
    Action a;
    a.id = plan_.actions.size();
    a.kind = kind;
    a.subgroup = subgroup;
    if (auto q = queue_of(kind)) a.stream = q->stream;
    if (plan_.blocking && !plan_.actions.empty()) {
      const std::size_t prev = plan_.actions.back().id;
      if (std::find(deps.begin(), deps.end(), prev) == deps.end()) deps.push_back(prev);
    }
    a.depends_on = std::move(deps);
    plan_.actions.push_back(std::move(a));
    return plan_.actions.back().id;
  }

 private:
  UpdatePlan& plan_;
};

void build_blocking(UpdatePlan& plan) {
  Emitter e(plan);
  for (std::size_t i = 0; i < plan.num_subgroups; ++i) {
    if (plan.is_static(i)) {
      const auto upd = e.emit(ActionKind::GpuUpdate, i);
      e.emit(ActionKind::FlushOutModel16, i, {upd});
    } else {
      const auto upd = e.emit(ActionKind::CpuUpdate, i);
      const auto ds = e.emit(ActionKind::CpuDownscale, i, {upd});
      e.emit(ActionKind::H2DParams16, i, {ds});
    }
  }
}

void build_interleaved(UpdatePlan& plan) {
  const std::size_t n = plan.num_subgroups;
  Emitter e(plan);
  std::vector<std::optional<std::size_t>> update_of(n);
  std::vector<std::array<std::size_t, 3>> prefetch_of(n);
  std::vector<bool> prefetched(n, false);
  std::vector<std::size_t> pending_cpu;  // CpuUpdate ids awaiting downscale
  std::optional<std::size_t> unflushed;
  std::optional<std::size_t> last_fast_update;

  auto prefetch = [&](std::size_t x) {
    std::vector<std::size_t> deps;
    if (last_fast_update) deps.push_back(*last_fast_update);
    prefetch_of[x] = {e.emit(ActionKind::PrefetchM, x, deps), e.emit(ActionKind::PrefetchV, x, deps),
                      e.emit(ActionKind::PrefetchP, x, deps)};
    prefetched[x] = true;
  };

  auto flush_out = [&](std::size_t x) {
    const std::size_t upd = *update_of[x];
    const auto m16 = e.emit(ActionKind::FlushOutModel16, x, {upd});
    e.emit(ActionKind::FlushOutM, x, {upd});
    e.emit(ActionKind::FlushOutV, x, {upd});
    // Same parameter stream as the model16 write, so it follows it.
    e.emit(ActionKind::FlushOutP, x, {upd, m16});
  };

  auto drain_downscale = [&] {
    for (const std::size_t upd : pending_cpu) {
      const std::size_t sg = plan.actions[upd].subgroup;
      const auto ds = e.emit(ActionKind::CpuDownscale, sg, {upd});
      e.emit(ActionKind::H2DParams16, sg, {ds});
    }
    pending_cpu.clear();
  };

  for (std::size_t i = 0; i < n; ++i) {
    if (plan.assignments[i] == Device::Fast) {
      const bool dynamic = !plan.is_static(i);
      std::vector<std::size_t> deps;
      if (dynamic) {
        if (!prefetched[i]) prefetch(i);
        deps.assign(prefetch_of[i].begin(), prefetch_of[i].end());
      }
      update_of[i] = e.emit(ActionKind::GpuUpdate, i, deps);
      if (!dynamic) e.emit(ActionKind::FlushOutModel16, i, {*update_of[i]});
      drain_downscale();
      if (dynamic) {
        last_fast_update = update_of[i];
        const bool next_is_fast = i + 1 < n && plan.assignments[i + 1] == Device::Fast;
        if (next_is_fast) {
          // No CPU subgroup follows to issue the flush/prefetch pair.
          flush_out(i);
          if (auto nx = plan.next_on_gpu(i); nx && !prefetched[*nx]) prefetch(*nx);
        } else {
          unflushed = i;
        }
      }
      continue;
    }
    if (unflushed) {
      flush_out(*unflushed);
      unflushed.reset();
    }
    if (auto nx = plan.next_on_gpu(i); nx && !prefetched[*nx]) prefetch(*nx);
    pending_cpu.push_back(e.emit(ActionKind::CpuUpdate, i));
  }
  drain_downscale();
  if (unflushed) flush_out(*unflushed);
}

}  // namespace

UpdatePlan build_plan(std::size_t num_subgroups, Stride stride, double static_ratio, Placement placement) {
  if (!(static_ratio >= 0.0 && static_ratio <= 1.0))
    throw InvalidArgument("static_ratio must be in [0, 1]");

  UpdatePlan plan;
  plan.num_subgroups = num_subgroups;
  plan.stride = stride;
  plan.placement = placement;
  plan.blocking = stride.is_all_cpu();

  // Guard against 0.29 * 100 == 28.999...
  const auto num_static = std::min<std::size_t>(
      num_subgroups, static_cast<std::size_t>(std::floor(static_ratio * static_cast<double>(num_subgroups) + 1e-9)));
  plan.static_mask_.assign(num_subgroups, false);
  for (std::size_t j = 0; j < num_static; ++j) {
    const std::size_t i = placement == Placement::StaticFirst ? j : num_subgroups - num_static + j;
    plan.static_mask_[i] = true;
    plan.static_set.push_back(i);
  }

  plan.assignments.resize(num_subgroups, Device::Cpu);
  plan.ordinals_.assign(num_subgroups, std::nullopt);
  std::size_t ordinal = 0;
  for (std::size_t i = 0; i < num_subgroups; ++i) {
    const bool on_stride = !stride.is_all_cpu() && (i + 1) % static_cast<std::size_t>(stride.value()) == 0;
    if (plan.static_mask_[i] || on_stride) plan.assignments[i] = Device::Fast;
    if (!plan.static_mask_[i] && on_stride) plan.ordinals_[i] = ordinal++;
  }

  if (num_subgroups > 0 && num_static == num_subgroups && !stride.is_all_cpu())
    plan.warnings.emplace_back("every subgroup is a static resident; the stride has no effect");

  if (plan.blocking)
    build_blocking(plan);
  else
    build_interleaved(plan);
  return plan;
}

void check_plan(const UpdatePlan& plan) {
  std::vector<int> updates(plan.num_subgroups, 0);
  for (std::size_t i = 0; i < plan.actions.size(); ++i) {
    const Action& a = plan.actions[i];
    if (a.id != i) throw ValidationError("action ids are not consecutive");
    if (a.subgroup >= plan.num_subgroups) throw ValidationError("action names an unknown subgroup");
    for (const auto d : a.depends_on)
      if (d >= a.id) throw ValidationError("dependency of action " + std::to_string(a.id) + " is not earlier");
    if (a.kind == ActionKind::CpuUpdate || a.kind == ActionKind::GpuUpdate) {
      ++updates[a.subgroup];
      const Device expect = a.kind == ActionKind::GpuUpdate ? Device::Fast : Device::Cpu;
      if (plan.assignments[a.subgroup] != expect)
        throw ValidationError("update of subgroup " + std::to_string(a.subgroup) + " on the wrong device");
    }
  }
  for (std::size_t i = 0; i < updates.size(); ++i)
    if (updates[i] != 1)
      throw ValidationError("subgroup " + std::to_string(i) + " updated " + std::to_string(updates[i]) + " times");
}

}  // namespace ioff
