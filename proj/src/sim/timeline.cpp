#include "ioff/timeline.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "ioff/error.hpp"

namespace ioff {

namespace {

struct Window {
  std::size_t subgroup;
  Nanos start;
  Nanos end;
  std::uint64_t bytes;
};

// Residency window of every dynamic subgroup, recovered from its prefetch
// and flush-out events.
std::vector<Window> dynamic_windows(const std::vector<Event>& events) {
  std::map<std::size_t, Window> by_sg;
  for (const auto& ev : events) {
    if (is_prefetch(ev.kind)) {
      auto [it, inserted] = by_sg.try_emplace(ev.subgroup, Window{ev.subgroup, ev.start_ns, ev.end_ns, 0});
      it->second.start = std::min(it->second.start, ev.start_ns);
      it->second.end = std::max(it->second.end, ev.end_ns);
      it->second.bytes += ev.bytes;
    }
  }
  for (const auto& ev : events) {
    if (!is_flush_out(ev.kind)) continue;
    auto it = by_sg.find(ev.subgroup);
    if (it != by_sg.end()) it->second.end = std::max(it->second.end, ev.end_ns);
  }
  std::vector<Window> out;
  out.reserve(by_sg.size());
  for (auto& [sg, w] : by_sg) out.push_back(w);
  return out;
}

// Sweep over window boundaries; ends sort before starts at equal times so
// back-to-back windows do not count as overlapping.
template <typename F>
void sweep(const std::vector<Window>& windows, F&& on_change) {
  std::vector<std::pair<Nanos, std::int64_t>> edges;
  edges.reserve(windows.size() * 2);
  for (const auto& w : windows) {
    if (w.end <= w.start) continue;
    edges.emplace_back(w.start, static_cast<std::int64_t>(w.bytes));
    edges.emplace_back(w.end, -static_cast<std::int64_t>(w.bytes));
  }
  std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second < b.second;
  });
  for (const auto& [t, delta] : edges) on_change(t, delta);
}

void compute_summary(Timeline& tl) {
  Nanos last_compute = 0;
  Nanos last_upload = 0;
  Nanos last_any = 0;
  for (const auto& ev : tl.events) {
    last_any = std::max(last_any, ev.end_ns);
    if (is_compute(ev.kind)) last_compute = std::max(last_compute, ev.end_ns);
    if (ev.kind == ActionKind::H2DParams16) last_upload = std::max(last_upload, ev.end_ns);
  }
  tl.makespan_ns = std::max(last_compute, last_upload);
  tl.spillover_ns = std::max<Nanos>(0, last_any - tl.makespan_ns);

  std::uint64_t peak_dynamic = 0;
  std::int64_t current = 0;
  sweep(dynamic_windows(tl.events), [&](Nanos, std::int64_t delta) {
    current += delta;
    peak_dynamic = std::max(peak_dynamic, static_cast<std::uint64_t>(std::max<std::int64_t>(current, 0)));
  });
  tl.peak_fast_bytes = tl.base_fast_bytes + tl.static_fast_bytes + peak_dynamic;
}

}  // namespace

std::vector<OccupancySample> memory_trace(const Timeline& timeline) {
  const std::uint64_t floor_bytes = timeline.base_fast_bytes + timeline.static_fast_bytes;
  std::vector<OccupancySample> out{{0, floor_bytes}};
  std::int64_t current = 0;
  sweep(dynamic_windows(timeline.events), [&](Nanos t, std::int64_t delta) {
    current += delta;
    const std::uint64_t bytes = floor_bytes + static_cast<std::uint64_t>(current);
    if (out.back().t_ns == t)
      out.back().bytes = bytes;
    else
      out.push_back({t, bytes});
  });
  // Collapse equal consecutive levels left by same-time end/start pairs.
  std::vector<OccupancySample> merged;
  for (const auto& s : out)
    if (merged.empty() || merged.back().bytes != s.bytes) merged.push_back(s);
  return merged;
}

std::size_t max_dynamic_resident(const Timeline& timeline) {
  auto windows = dynamic_windows(timeline.events);
  for (auto& w : windows) w.bytes = 1;
  std::int64_t current = 0;
  std::int64_t peak = 0;
  sweep(windows, [&](Nanos, std::int64_t delta) {
    current += delta;
    peak = std::max(peak, current);
  });
  return static_cast<std::size_t>(peak);
}

TimingModel::TimingModel(const SystemProfile& profile, std::vector<ParamCount> subgroup_sizes, bool blocking)
    : profile_(profile), sizes_(std::move(subgroup_sizes)), contention_(blocking ? 1.0 : profile.host_contention) {
  profile_.validate();
}

Nanos TimingModel::to_nanos(double seconds) {
  return static_cast<Nanos>(std::ceil(seconds * 1e9));
}

Nanos TimingModel::duration_ns(const Action& a) const {
  const double s = static_cast<double>(sizes_.at(a.subgroup));
  const SystemProfile& p = profile_;
  switch (a.kind) {
    case ActionKind::CpuUpdate: return to_nanos(contention_ * s / p.cpu_update_params_per_s);
    case ActionKind::CpuDownscale: return to_nanos(contention_ * s / p.host_downscale_params_per_s);
    case ActionKind::GpuUpdate: return to_nanos(s / p.fast_update_params_per_s);
    case ActionKind::FlushOutModel16: return to_nanos(2.0 * s / p.fast_conversion_bytes_per_s);
    case ActionKind::PrefetchP:
    case ActionKind::PrefetchM:
    case ActionKind::PrefetchV:
    case ActionKind::FlushOutP:
    case ActionKind::FlushOutM:
    case ActionKind::FlushOutV: return to_nanos(contention_ * p.fp32_transfer_s(s));
    case ActionKind::H2DParams16: return to_nanos(contention_ * p.fp16_transfer_s(s));
    case ActionKind::GradFlush: return to_nanos(2.0 * s / p.pageable_d2h_bytes_per_s);
  }
  return 0;
}

std::uint64_t TimingModel::bytes(const Action& a) const {
  const std::uint64_t s = sizes_.at(a.subgroup);
  switch (a.kind) {
    case ActionKind::PrefetchP:
    case ActionKind::PrefetchM:
    case ActionKind::PrefetchV:
    case ActionKind::FlushOutP:
    case ActionKind::FlushOutM:
    case ActionKind::FlushOutV: return 4 * s;
    case ActionKind::H2DParams16:
    case ActionKind::FlushOutModel16:
    case ActionKind::CpuDownscale:
    case ActionKind::GradFlush: return 2 * s;
    default: return 0;
  }
}

std::size_t staging_slots(const SystemProfile& profile, ParamCount max_subgroup_size) {
  if (max_subgroup_size == 0) return 2;
  const double per_slot = 12.0 * static_cast<double>(max_subgroup_size);
  const double fit = std::floor(profile.fast_capacity_bytes / per_slot);
  return static_cast<std::size_t>(std::clamp(fit, 0.0, 2.0));
}

VirtualClock::VirtualClock(const UpdatePlan& plan, TimingModel timing, std::size_t slots)
    : plan_(plan), timing_(std::move(timing)), slots_(slots) {
  events_.resize(plan.actions.size());
  placed_.assign(plan.actions.size(), false);
  const auto fast = plan.dynamic_fast();
  if (!fast.empty() && slots_ == 0)
    throw InfeasibleConfiguration("fast tier cannot hold one dynamic subgroup (needs 12 bytes/param)");
  last_flush_by_ordinal_.assign(fast.size(), plan.actions.size());
  for (const auto& a : plan.actions) {
    if (!is_flush_out(a.kind)) continue;
    if (auto ord = plan.fast_ordinal(a.subgroup)) last_flush_by_ordinal_[*ord] = a.id;
  }
}

std::optional<std::size_t> VirtualClock::slot_predecessor(const Action& a) const {
  if (!is_prefetch(a.kind)) return std::nullopt;
  const auto ord = plan_.fast_ordinal(a.subgroup);
  if (!ord || *ord < slots_) return std::nullopt;
  const std::size_t id = last_flush_by_ordinal_[*ord - slots_];
  if (id >= plan_.actions.size()) return std::nullopt;
  return id;
}

const Event& VirtualClock::place(const Action& a) {
  const Lane lane = lane_of(a.kind);
  Nanos start = lane_free_[static_cast<std::size_t>(lane)];
  for (const auto d : a.depends_on) {
    if (!placed_.at(d)) throw SchedulingError("action " + std::to_string(a.id) + " placed before its dependency");
    start = std::max(start, events_[d].end_ns);
  }
  if (auto slot = slot_predecessor(a)) {
    if (!placed_.at(*slot))
      throw SchedulingError("prefetch " + std::to_string(a.id) + " placed before its staging slot was flushed");
    start = std::max(start, events_[*slot].end_ns);
  }
  Event& ev = events_[a.id];
  ev.action_id = a.id;
  ev.lane = lane;
  ev.kind = a.kind;
  ev.subgroup = a.subgroup;
  ev.start_ns = start;
  ev.end_ns = start + timing_.duration_ns(a);
  ev.bytes = timing_.bytes(a);
  lane_free_[static_cast<std::size_t>(lane)] = ev.end_ns;
  placed_[a.id] = true;
  return ev;
}

Timeline VirtualClock::finish() && {
  for (std::size_t i = 0; i < placed_.size(); ++i)
    if (!placed_[i]) throw SchedulingError("action " + std::to_string(i) + " never ran");
  Timeline tl;
  tl.events = std::move(events_);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < plan_.num_subgroups; ++i) total += timing_.size_of(i);
  tl.base_fast_bytes = 4 * total;
  for (const auto s : plan_.static_set) tl.static_fast_bytes += 12 * timing_.size_of(s);
  compute_summary(tl);
  return tl;
}

namespace {

void check_common(const Timeline& tl) {
  for (std::size_t i = 0; i < tl.events.size(); ++i) {
    const Event& ev = tl.events[i];
    if (ev.action_id != i) throw ValidationError("event ids are not consecutive at " + std::to_string(i));
    if (ev.end_ns < ev.start_ns || ev.start_ns < 0)
      throw ValidationError("event " + std::to_string(i) + " has a negative duration");
    if (ev.lane != lane_of(ev.kind)) throw ValidationError("event " + std::to_string(i) + " is on the wrong lane");
  }

  // Lane exclusivity.
  std::array<std::vector<const Event*>, kNumLanes> by_lane;
  for (const auto& ev : tl.events) by_lane[static_cast<std::size_t>(ev.lane)].push_back(&ev);
  for (auto& lane : by_lane) {
    std::sort(lane.begin(), lane.end(), [](const Event* a, const Event* b) {
      return a->start_ns != b->start_ns ? a->start_ns < b->start_ns : a->end_ns < b->end_ns;
    });
    for (std::size_t i = 1; i < lane.size(); ++i) {
      if (lane[i]->start_ns < lane[i - 1]->end_ns)
        throw ValidationError("events " + std::to_string(lane[i - 1]->action_id) + " and " +
                              std::to_string(lane[i]->action_id) + " overlap on " +
                              std::string(to_string(lane[i]->lane)));
    }
  }

  // FIFO within each stream queue, in emission order.
  std::map<std::pair<int, int>, const Event*> last_in_queue;
  for (const auto& ev : tl.events) {
    const auto q = queue_of(ev.kind);
    if (!q) continue;
    const auto key = std::make_pair(static_cast<int>(q->stream), static_cast<int>(q->direction));
    auto it = last_in_queue.find(key);
    if (it != last_in_queue.end() && it->second->end_ns > ev.start_ns)
      throw ValidationError("stream FIFO violated between events " + std::to_string(it->second->action_id) +
                            " and " + std::to_string(ev.action_id));
    last_in_queue[key] = &ev;
  }

  if (max_dynamic_resident(tl) > 2)
    throw ValidationError("more than two dynamic subgroups resident on the fast tier");

  Timeline copy;
  copy.events = tl.events;
  copy.base_fast_bytes = tl.base_fast_bytes;
  copy.static_fast_bytes = tl.static_fast_bytes;
  compute_summary(copy);
  if (copy.makespan_ns != tl.makespan_ns) throw ValidationError("makespan does not match events");
  if (copy.spillover_ns != tl.spillover_ns) throw ValidationError("spillover does not match events");
  if (copy.peak_fast_bytes != tl.peak_fast_bytes) throw ValidationError("peak fast bytes do not match events");
}

}  // namespace

void validate_timeline(const Timeline& tl) { check_common(tl); }

void validate_timeline(const Timeline& tl, const UpdatePlan& plan) {
  if (tl.events.size() != plan.actions.size())
    throw ValidationError("timeline has " + std::to_string(tl.events.size()) + " events for " +
                          std::to_string(plan.actions.size()) + " actions");
  for (const auto& a : plan.actions) {
    const Event& ev = tl.events[a.id];
    if (ev.kind != a.kind || ev.subgroup != a.subgroup)
      throw ValidationError("event " + std::to_string(a.id) + " does not match its action");
    for (const auto d : a.depends_on)
      if (tl.events[d].end_ns > ev.start_ns)
        throw ValidationError("event " + std::to_string(a.id) + " starts before dependency " + std::to_string(d) +
                              " ends");
  }
  check_common(tl);
}

void write_timeline_csv(std::ostream& os, const Timeline& tl) {
  os << "event_id,lane,kind,subgroup,start_ns,end_ns,bytes\n";
  for (const auto& ev : tl.events) {
    os << ev.action_id << ',' << to_string(ev.lane) << ',' << to_string(ev.kind) << ',' << ev.subgroup << ','
       << ev.start_ns << ',' << ev.end_ns << ',' << ev.bytes << '\n';
  }
}

Timeline read_timeline_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "event_id,lane,kind,subgroup,start_ns,end_ns,bytes")
    throw ValidationError("timeline CSV: missing or unexpected header");
  Timeline tl;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 7) throw ValidationError("timeline CSV line " + std::to_string(lineno) + ": expected 7 columns");
    Event ev;
    try {
      ev.action_id = std::stoull(cols[0]);
      ev.subgroup = std::stoull(cols[3]);
      ev.start_ns = std::stoll(cols[4]);
      ev.end_ns = std::stoll(cols[5]);
      ev.bytes = std::stoull(cols[6]);
    } catch (const std::exception&) {
      throw ValidationError("timeline CSV line " + std::to_string(lineno) + ": bad number");
    }
    const auto lane = parse_lane(cols[1]);
    const auto kind = parse_action_kind(cols[2]);
    if (!lane || !kind) throw ValidationError("timeline CSV line " + std::to_string(lineno) + ": unknown lane or kind");
    ev.lane = *lane;
    ev.kind = *kind;
    tl.events.push_back(ev);
  }
  compute_summary(tl);
  return tl;
}

}  // namespace ioff
