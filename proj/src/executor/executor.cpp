#include "ioff/executor.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

#include "ioff/error.hpp"

namespace ioff {

FlushResult flush_gradients(const Subgroup& sg, GradFlushStrategy strategy, const SystemProfile& profile,
                            std::size_t chunks, bool retained) {
  if (chunks == 0) throw InvalidArgument("chunks must be >= 1");
  if (sg.grads.precision != Precision::FP16) throw InvalidArgument("flush_gradients expects FP16 gradients");
  const std::size_t n = sg.grads.fp16.size();
  FlushResult out;
  out.grads32.resize(n);
  // Chunk boundaries are spread evenly; widening is exact, so any split
  // yields the same bytes.
  const std::span<const Half> src(sg.grads.fp16);
  const std::span<float> dst(out.grads32);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t lo = n * c / chunks;
    const std::size_t hi = n * (c + 1) / chunks;
    upscale(src.subspan(lo, hi - lo), dst.subspan(lo, hi - lo));
  }
  out.record.subgroup = sg.id;
  out.record.strategy = strategy;
  out.record.chunks = chunks;
  out.record.retained = retained;
  out.record.bytes_fp16 = 2 * static_cast<std::uint64_t>(n);
  if (!retained && n > 0)
    out.record.seconds = static_cast<double>(out.record.bytes_fp16) /
                         grad_flush_throughput(strategy, profile, static_cast<double>(out.record.bytes_fp16));
  return out;
}

ShardedOptimizer sequential_oracle(ShardedOptimizer opt, const AdamHyper& h) {
  h.validate();
  for (auto& sg : opt.subgroups()) {
    const auto g = upscale(sg.grads.fp16);
    adam_step_subgroup(sg, g, h);
  }
  opt.refresh_model16();
  return opt;
}

namespace {

// Worker identities: two compute tiers plus the six stream queues.
constexpr std::size_t kCpuWorker = 0;
constexpr std::size_t kFastWorker = 1;
constexpr std::size_t kNumWorkers = 8;

std::size_t worker_of(ActionKind kind) {
  switch (kind) {
    case ActionKind::CpuUpdate:
    case ActionKind::CpuDownscale: return kCpuWorker;
    case ActionKind::GpuUpdate:
    case ActionKind::FlushOutModel16: return kFastWorker;
    default: break;
  }
  const auto q = queue_of(kind);
  if (!q || q->direction == Direction::D2D) return kFastWorker;
  return 2 + static_cast<std::size_t>(q->stream) * 2 + (q->direction == Direction::D2H ? 1 : 0);
}

enum class HostState : std::uint8_t { HostOwned, CheckedOut, FastResident };

struct Slot {
  std::optional<std::size_t> owner;
  int prefetched = 0;
  int flushed = 0;
  std::vector<float> p, m, v;
};

// Data plane: host buffers live in the optimizer, fast-tier staging in the
// slots. Bookkeeping is guarded by one mutex; the numeric work runs
// unlocked, with exclusivity established by the checks that precede it.
class Tiers {
 public:
  Tiers(const UpdatePlan& plan, ShardedOptimizer& opt, std::vector<std::vector<float>> grads, std::size_t slots,
        const AdamHyper& h)
      : plan_(plan), opt_(opt), grads_(std::move(grads)), h_(h), slots_(std::max<std::size_t>(slots, 1)) {
    state_.assign(plan.num_subgroups, HostState::HostOwned);
    for (const auto s : plan.static_set) state_[s] = HostState::FastResident;
    host16_.resize(plan.num_subgroups);
  }

  void run(const Action& a) {
    auto& sg = opt_.subgroups()[a.subgroup];
    switch (a.kind) {
      case ActionKind::CpuUpdate:
        expect_host(a);
        adam_step_subgroup(sg, grads_[a.subgroup], h_);
        return;
      case ActionKind::CpuDownscale:
        expect_host(a);
        host16_[a.subgroup] = downscale_rne(sg.params32);
        return;
      case ActionKind::H2DParams16: {
        expect_host(a);
        const auto& src = host16_[a.subgroup];
        if (src.size() != sg.size()) fail(a, "FP16 parameters were never downscaled");
        std::copy(src.begin(), src.end(), opt_.model16().begin() + static_cast<std::ptrdiff_t>(opt_.offset(sg.id)));
        return;
      }
      case ActionKind::PrefetchP:
      case ActionKind::PrefetchM:
      case ActionKind::PrefetchV: return prefetch(a, sg);
      case ActionKind::GpuUpdate: return fast_update(a, sg);
      case ActionKind::FlushOutModel16: {
        const std::span<const float> p = fast_params(a, sg);
        downscale_rne(p, std::span<Half>(opt_.model16()).subspan(opt_.offset(sg.id), sg.size()));
        return;
      }
      case ActionKind::FlushOutP:
      case ActionKind::FlushOutM:
      case ActionKind::FlushOutV: return flush_out(a, sg);
      case ActionKind::GradFlush: return;  // backward-phase action, nothing to move here
    }
  }

 private:
  [[noreturn]] static void fail(const Action& a, const std::string& why) {
    throw SchedulingError("action " + std::to_string(a.id) + " (" + std::string(to_string(a.kind)) + ", subgroup " +
                          std::to_string(a.subgroup) + "): " + why);
  }

  // Consistency window: host buffers of a subgroup are off limits between
  // its first prefetch and its last flush-out.
  void expect_host(const Action& a) {
    std::lock_guard lock(mu_);
    if (state_[a.subgroup] != HostState::HostOwned) fail(a, "host buffers read while checked out to the fast tier");
  }

  Slot& slot_for(const Action& a) {
    const auto ord = plan_.fast_ordinal(a.subgroup);
    if (!ord) fail(a, "subgroup is not a dynamic fast subgroup");
    return slots_[*ord % slots_.size()];
  }

  void prefetch(const Action& a, Subgroup& sg) {
    Slot* slot;
    {
      std::lock_guard lock(mu_);
      slot = &slot_for(a);
      if (slot->owner && *slot->owner != a.subgroup) fail(a, "staging slot still holds another subgroup");
      if (!slot->owner) {
        if (state_[a.subgroup] != HostState::HostOwned) fail(a, "subgroup already checked out");
        slot->owner = a.subgroup;
        slot->prefetched = slot->flushed = 0;
        state_[a.subgroup] = HostState::CheckedOut;
      }
    }
    const std::vector<float>& src = a.kind == ActionKind::PrefetchP   ? sg.params32
                                    : a.kind == ActionKind::PrefetchM ? sg.momentum32
                                                                      : sg.variance32;
    std::vector<float>& dst = a.kind == ActionKind::PrefetchP ? slot->p : a.kind == ActionKind::PrefetchM ? slot->m : slot->v;
    dst.assign(src.begin(), src.end());
    std::lock_guard lock(mu_);
    ++slot->prefetched;
  }

  void fast_update(const Action& a, Subgroup& sg) {
    if (plan_.is_static(a.subgroup)) {
      adam_step_subgroup(sg, grads_[a.subgroup], h_);
      return;
    }
    Slot* slot;
    {
      std::lock_guard lock(mu_);
      slot = &slot_for(a);
      if (slot->owner != a.subgroup || slot->prefetched != 3) fail(a, "update before the staging buffers were filled");
    }
    adam_step(slot->p, slot->m, slot->v, grads_[a.subgroup], h_);
  }

  std::span<const float> fast_params(const Action& a, const Subgroup& sg) {
    if (plan_.is_static(a.subgroup)) return sg.params32;
    std::lock_guard lock(mu_);
    Slot& slot = slot_for(a);
    if (slot.owner != a.subgroup || slot.prefetched != 3) fail(a, "staging buffers not resident");
    return slot.p;
  }

  void flush_out(const Action& a, Subgroup& sg) {
    Slot* slot;
    {
      std::lock_guard lock(mu_);
      slot = &slot_for(a);
      if (slot->owner != a.subgroup || slot->prefetched != 3) fail(a, "flush-out of a subgroup that is not resident");
      if (state_[a.subgroup] != HostState::CheckedOut) fail(a, "host buffers not checked out");
    }
    const std::vector<float>& src = a.kind == ActionKind::FlushOutP ? slot->p : a.kind == ActionKind::FlushOutM ? slot->m : slot->v;
    std::vector<float>& dst = a.kind == ActionKind::FlushOutP   ? sg.params32
                              : a.kind == ActionKind::FlushOutM ? sg.momentum32
                                                                : sg.variance32;
    std::copy(src.begin(), src.end(), dst.begin());
    std::lock_guard lock(mu_);
    if (++slot->flushed == 3) {
      slot->owner.reset();
      state_[a.subgroup] = HostState::HostOwned;
    }
  }

  const UpdatePlan& plan_;
  ShardedOptimizer& opt_;
  std::vector<std::vector<float>> grads_;
  AdamHyper h_;
  std::vector<Slot> slots_;
  std::vector<HostState> state_;
  std::vector<std::vector<Half>> host16_;
  std::mutex mu_;
};

struct Completion {
  std::size_t action = 0;
  std::exception_ptr error;
};

class Worker {
 public:
  template <typename Run>
  explicit Worker(Run run, std::mutex& done_mu, std::condition_variable& done_cv, std::deque<Completion>& done)
      : thread_([this, run, &done_mu, &done_cv, &done](std::stop_token st) {
          while (true) {
            std::size_t id;
            {
              std::unique_lock lock(mu_);
              cv_.wait(lock, st, [&] { return !inbox_.empty(); });
              if (inbox_.empty()) return;
              id = inbox_.front();
              inbox_.pop_front();
            }
            Completion c{id, nullptr};
            try {
              run(id);
            } catch (...) {
              c.error = std::current_exception();
            }
            {
              std::lock_guard lock(done_mu);
              done.push_back(c);
            }
            done_cv.notify_one();
          }
        }) {}

  void send(std::size_t id) {
    {
      std::lock_guard lock(mu_);
      inbox_.push_back(id);
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable_any cv_;
  std::deque<std::size_t> inbox_;
  std::jthread thread_;  // last: joins before the queue goes away
};

}  // namespace

ExecutionResult execute_plan(const UpdatePlan& plan, ShardedOptimizer opt, const SystemProfile& profile,
                             const AdamHyper& h, const ExecOptions& options) {
  h.validate();
  profile.validate();
  check_plan(plan);
  opt.check();
  if (opt.num_subgroups() != plan.num_subgroups)
    throw InvalidArgument("plan has " + std::to_string(plan.num_subgroups) + " subgroups, optimizer has " +
                          std::to_string(opt.num_subgroups()));
  if (!(options.throttle_scale >= 0)) throw InvalidArgument("throttle_scale must be >= 0");

  std::vector<ParamCount> sizes;
  ParamCount max_size = 0;
  for (const auto& sg : opt.subgroups()) {
    sizes.push_back(sg.size());
    max_size = std::max<ParamCount>(max_size, sg.size());
  }
  const TimingModel timing(profile, sizes, plan.blocking);
  VirtualClock clock(plan, timing, staging_slots(profile, max_size));

  ExecutionResult result;
  // Backward-phase gradient flush: fast-scheduled subgroups may keep theirs.
  const auto retained = gradient_retention(plan, profile, sizes);
  std::vector<std::vector<float>> grads(plan.num_subgroups);
  for (std::size_t i = 0; i < plan.num_subgroups; ++i) {
    auto f = flush_gradients(opt.subgroups()[i], options.grad_strategy, profile, options.grad_chunks, retained[i]);
    grads[i] = std::move(f.grads32);
    result.grad_flush_s += f.record.seconds;
    result.grad_flushes.push_back(f.record);
  }
  for (auto& sg : opt.subgroups())
    sg.residency = plan.is_static(sg.id) ? Residency::StaticFastResident : Residency::HostResident;

  const auto wall_start = std::chrono::steady_clock::now();
  {
    Tiers tiers(plan, opt, std::move(grads), staging_slots(profile, max_size), h);
    const bool throttled = options.mode == ExecMode::Throttled;
    auto run = [&](std::size_t id) {
      const Action& a = plan.actions[id];
      if (throttled) {
        const auto ns = static_cast<double>(timing.duration_ns(a)) * options.throttle_scale;
        std::this_thread::sleep_for(std::chrono::nanoseconds(static_cast<std::int64_t>(ns)));
      }
      tiers.run(a);
    };

    // A prefetch may reuse a staging slot only after every flush-out of its
    // previous tenant: the m, v and p streams drain independently here.
    std::vector<std::vector<std::size_t>> flushes_of(plan.num_subgroups);
    for (const auto& a : plan.actions)
      if (is_flush_out(a.kind)) flushes_of[a.subgroup].push_back(a.id);
    std::vector<std::vector<std::size_t>> slot_gate(plan.actions.size());
    for (const auto& a : plan.actions)
      if (auto pred = clock.slot_predecessor(a)) slot_gate[a.id] = flushes_of[plan.actions[*pred].subgroup];

    std::array<std::deque<std::size_t>, kNumWorkers> queues;
    for (const auto& a : plan.actions) queues[worker_of(a.kind)].push_back(a.id);
    std::vector<bool> done(plan.actions.size(), false);
    std::array<bool, kNumWorkers> busy{};

    std::mutex done_mu;
    std::condition_variable done_cv;
    std::deque<Completion> completions;
    std::exception_ptr error;
    std::size_t in_flight = 0;
    std::size_t finished = 0;
    {
      std::vector<std::unique_ptr<Worker>> workers;
      for (std::size_t w = 0; w < kNumWorkers; ++w)
        workers.push_back(std::make_unique<Worker>(run, done_mu, done_cv, completions));

      auto ready = [&](std::size_t id) {
        const Action& a = plan.actions[id];
        for (const auto d : a.depends_on)
          if (!done[d]) return false;
        for (const auto g : slot_gate[id])
          if (!done[g]) return false;
        return true;
      };

      while (finished < plan.actions.size()) {
        if (!error) {
          for (std::size_t w = 0; w < kNumWorkers; ++w) {
            if (busy[w] || queues[w].empty() || !ready(queues[w].front())) continue;
            busy[w] = true;
            ++in_flight;
            workers[w]->send(queues[w].front());
            queues[w].pop_front();
          }
        }
        if (in_flight == 0) {
          if (!error) error = std::make_exception_ptr(SchedulingError("plan cannot make progress: dependency cycle"));
          break;
        }
        std::unique_lock lock(done_mu);
        done_cv.wait(lock, [&] { return !completions.empty(); });
        while (!completions.empty()) {
          const Completion c = completions.front();
          completions.pop_front();
          --in_flight;
          ++finished;
          busy[worker_of(plan.actions[c.action].kind)] = false;
          done[c.action] = true;
          if (c.error && !error) error = c.error;
        }
      }
    }
    if (error) std::rethrow_exception(error);
  }
  result.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

  if (!opt.model16_coherent()) throw SchedulingError("model16 is stale after the update phase");
  // Same arithmetic as the simulator; plan order satisfies every precondition.
  for (const auto& a : plan.actions) clock.place(a);
  result.timeline = std::move(clock).finish();
  result.optimizer = std::move(opt);
  return result;
}

}  // namespace ioff
