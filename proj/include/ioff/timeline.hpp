#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ioff/core.hpp"
#include "ioff/plan.hpp"

namespace ioff {

using Nanos = std::int64_t;

struct Event {
  std::size_t action_id = 0;
  Lane lane = Lane::CpuCompute;
  ActionKind kind = ActionKind::CpuUpdate;
  std::size_t subgroup = 0;
  Nanos start_ns = 0;
  Nanos end_ns = 0;
  std::uint64_t bytes = 0;
};

struct Timeline {
  // Indexed by action id.
  std::vector<Event> events;
  // Last compute end or last FP16 parameter upload, whichever is later; the
  // next iteration can start then.
  Nanos makespan_ns = 0;
  // FP32 state flush-outs still running after makespan_ns.
  Nanos spillover_ns = 0;
  // FP16 model + FP16 gradients of the rank, resident for the whole phase.
  std::uint64_t base_fast_bytes = 0;
  // p/m/v of static residents.
  std::uint64_t static_fast_bytes = 0;
  std::uint64_t peak_fast_bytes = 0;
};

struct OccupancySample {
  Nanos t_ns = 0;
  std::uint64_t bytes = 0;
  friend bool operator==(const OccupancySample&, const OccupancySample&) = default;
};

/// Piecewise-constant fast-tier occupancy: each sample holds until the next.
/// A dynamic subgroup occupies 12 bytes per parameter from its first
/// prefetch start to its last flush-out end.
std::vector<OccupancySample> memory_trace(const Timeline& timeline);

// Maximum number of dynamic subgroups simultaneously resident.
std::size_t max_dynamic_resident(const Timeline& timeline);

// Per-action lane and duration, derived from the profile.
class TimingModel {
 public:
  TimingModel(const SystemProfile& profile, std::vector<ParamCount> subgroup_sizes, bool blocking);

  Nanos duration_ns(const Action& action) const;
  std::uint64_t bytes(const Action& action) const;
  ParamCount size_of(std::size_t subgroup) const { return sizes_.at(subgroup); }

  static Nanos to_nanos(double seconds);

 private:
  SystemProfile profile_;
  std::vector<ParamCount> sizes_;
  double contention_;
};

// Number of double-buffer slots the fast tier can give dynamic subgroups
// (at most 2: one resident, one in flight). Zero means infeasible.
std::size_t staging_slots(const SystemProfile& profile, ParamCount max_subgroup_size);

/// Virtual clock shared by the simulator and the executor. Each lane serves
/// its actions in plan order; an action starts once its lane is free, its
/// dependencies have ended, and (for prefetches) the staging slot it reuses
/// has been flushed out.
class VirtualClock {
 public:
  VirtualClock(const UpdatePlan& plan, TimingModel timing, std::size_t slots);

  // Action whose completion frees the slot `action` needs, if any.
  std::optional<std::size_t> slot_predecessor(const Action& action) const;

  // Requires every dependency, lane predecessor and slot predecessor of
  // `action` to have been placed already.
  const Event& place(const Action& action);

  bool placed(std::size_t action_id) const { return placed_.at(action_id); }

  // Fills makespan, spillover and memory accounting. All actions must be placed.
  Timeline finish() &&;

 private:
  const UpdatePlan& plan_;
  TimingModel timing_;
  std::size_t slots_;
  std::vector<Event> events_;
  std::vector<bool> placed_;
  std::array<Nanos, kNumLanes> lane_free_{};
  // Last flush-out action of each dynamic fast subgroup, by ordinal.
  std::vector<std::size_t> last_flush_by_ordinal_;
};

/// Structural checks: events cover every action once, no overlap on a lane,
/// each event starts after its dependencies end, FIFO within each stream
/// queue, at most two dynamic subgroups resident, makespan/spillover/peak
/// consistent. Throws ValidationError describing the first violation.
void validate_timeline(const Timeline& timeline, const UpdatePlan& plan);

/// The same checks minus dependency ordering, for traces read back from CSV.
void validate_timeline(const Timeline& timeline);

// CSV: header `event_id,lane,kind,subgroup,start_ns,end_ns,bytes`.
void write_timeline_csv(std::ostream& os, const Timeline& timeline);
Timeline read_timeline_csv(std::istream& is);

}  // namespace ioff
