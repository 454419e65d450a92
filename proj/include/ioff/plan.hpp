#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ioff {

enum class Device : std::uint8_t { Cpu, Fast };
enum class Placement : std::uint8_t { StaticFirst, StaticLast };

enum class ActionKind : std::uint8_t {
  CpuUpdate,
  GpuUpdate,
  CpuDownscale,
  FlushOutP,
  FlushOutM,
  FlushOutV,
  FlushOutModel16,
  PrefetchP,
  PrefetchM,
  PrefetchV,
  H2DParams16,
  GradFlush,
};

enum class Stream : std::uint8_t { Param, Momentum, Variance };
enum class Direction : std::uint8_t { H2D, D2H, D2D };
enum class Lane : std::uint8_t { CpuCompute, FastCompute, ChannelH2D, ChannelD2H };

inline constexpr std::size_t kNumLanes = 4;

// FIFO ordering applies per (stream, direction) queue, i.e. three named
// streams in each direction plus the on-device parameter conversion.
struct StreamQueue {
  Stream stream;
  Direction direction;
  friend bool operator==(StreamQueue, StreamQueue) = default;
};

std::string_view to_string(ActionKind kind);
std::string_view to_string(Lane lane);
std::string_view to_string(Stream stream);
std::string_view to_string(Placement placement);
std::optional<ActionKind> parse_action_kind(std::string_view s);
std::optional<Lane> parse_lane(std::string_view s);
std::optional<Placement> parse_placement(std::string_view s);

Lane lane_of(ActionKind kind);
std::optional<StreamQueue> queue_of(ActionKind kind);
bool is_prefetch(ActionKind kind);
// FP32 state flush-outs and the fast-side model16 write.
bool is_flush_out(ActionKind kind);
bool is_compute(ActionKind kind);

struct Action {
  std::size_t id = 0;
  ActionKind kind = ActionKind::CpuUpdate;
  std::size_t subgroup = 0;
  std::optional<Stream> stream;
  std::vector<std::size_t> depends_on;
};

// Period of the interleaving pattern (one of every k dynamic
// subgroups goes to the fast device), or all-CPU.
class Stride {
 public:
  static Stride all_cpu() { return Stride(0); }
  // Throws InvalidArgument for k == 0.
  static Stride every(int k);

  bool is_all_cpu() const { return k_ == 0; }
  // Undefined for all_cpu().
  int value() const { return k_; }

  friend bool operator==(Stride, Stride) = default;

 private:
  explicit Stride(int k) : k_(k) {}
  int k_;
};

class UpdatePlan {
 public:
  std::size_t num_subgroups = 0;
  Stride stride = Stride::all_cpu();
  Placement placement = Placement::StaticLast;
  // All-CPU plans run every step back to back, as the blocking baseline does.
  bool blocking = false;
  std::vector<Device> assignments;
  std::vector<std::size_t> static_set;
  std::vector<Action> actions;
  std::vector<std::string> warnings;

  bool is_static(std::size_t i) const;
  bool is_dynamic_fast(std::size_t i) const;
  // Position of a dynamic fast subgroup among all dynamic fast subgroups.
  std::optional<std::size_t> fast_ordinal(std::size_t i) const;
  std::vector<std::size_t> dynamic_fast() const;

  // Nearest dynamic fast subgroup strictly before / after i.
  std::optional<std::size_t> prev_on_gpu(std::size_t i) const;
  std::optional<std::size_t> next_on_gpu(std::size_t i) const;

  // Fraction of dynamic (non-static) subgroups assigned to the fast device.
  double dynamic_gpu_fraction() const;

 private:
  friend UpdatePlan build_plan(std::size_t, Stride, double, Placement);
  std::vector<std::optional<std::size_t>> ordinals_;
  std::vector<bool> static_mask_;
};

/// Builds the update plan for one rank.
///
/// Device assignment follows the interleaving predicate: subgroup i runs on
/// the fast device iff it is a static resident or (i + 1) % k == 0. The
/// static set is floor(static_ratio * N) subgroups from the front or back.
///
/// Action emission walks subgroups in order:
///  - fast-device subgroup: prefetch m, v, p if nothing prefetched it yet,
///    the update itself, then the host downscale of every CPU subgroup
///    accumulated since the previous fast update, each followed by its FP16
///    parameter upload;
///  - first CPU subgroup after a fast update: flush-out of that subgroup
///    (model16 write, m, v, p) and prefetch of the next fast subgroup, then
///    the CPU update;
///  - other CPU subgroups: just the CPU update.
/// Static residents never move, so they get no prefetch or flush; their
/// model16 is written right after their update. A prefetch depends on the
/// most recent dynamic fast update, which is the point where the loop
/// issues it.
///
/// With `Stride::all_cpu()` the plan is the blocking baseline: each
/// subgroup is updated, downscaled and uploaded before the next one starts.
UpdatePlan build_plan(std::size_t num_subgroups, Stride stride, double static_ratio, Placement placement);

// Throws ValidationError if ids are not 0..n-1 in order, dependencies point
// forward, or a subgroup has other than exactly one update action.
void check_plan(const UpdatePlan& plan);

}  // namespace ioff
