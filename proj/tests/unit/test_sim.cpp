#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ioff/catalog.hpp"
#include "ioff/error.hpp"
#include "ioff/sim.hpp"

using namespace ioff;

namespace {

constexpr ParamCount kS = 100'000'000;

SystemProfile random_profile(std::mt19937_64& rng) {
  auto U = [&](double a, double b) { return std::exp(std::uniform_real_distribution<double>(std::log(a), std::log(b))(rng)); };
  SystemProfile p = catalog::h100_node();
  p.channel_params_per_s = U(1e9, 20e9);
  p.fast_update_params_per_s = U(10e9, 200e9);
  p.cpu_update_params_per_s = U(0.5e9, 10e9);
  p.host_downscale_params_per_s = U(2e9, 60e9);
  p.fast_capacity_bytes = 1e12;
  return p;
}

Timeline run(const UpdatePlan& plan, const SystemProfile& p, ParamCount s = kS) {
  auto tl = simulate_update_phase(plan, p, s);
  validate_timeline(tl, plan);
  return tl;
}

}  // namespace

TEST(SimulateUpdatePhase, BlockingSingleSubgroup) {
  const auto p = catalog::v100_node();
  const auto plan = build_plan(1, Stride::all_cpu(), 0.0, Placement::StaticLast);
  const auto tl = run(plan, p);
  ASSERT_EQ(tl.events.size(), 3u);
  EXPECT_EQ(tl.events[0].end_ns, 50'000'000);
  EXPECT_EQ(tl.events[1].start_ns, tl.events[0].end_ns);
  EXPECT_EQ(tl.events[2].start_ns, tl.events[1].end_ns);
  // 50 ms + 11.494 ms + 16.667 ms, each rounded up to whole nanoseconds.
  const Nanos want = 50'000'000 + TimingModel::to_nanos(1e8 / 8.7e9) + TimingModel::to_nanos(1e8 / 6e9);
  EXPECT_EQ(tl.makespan_ns, want);
  EXPECT_NEAR(static_cast<double>(tl.makespan_ns) * 1e-9, estimate_update_time(p, 1, kS, std::nullopt), 1e-8);
  EXPECT_NEAR(tl.makespan_ns / 1e6, 78.16, 0.01);
}

TEST(SimulateUpdatePhase, EmptyPlan) {
  const auto plan = build_plan(0, Stride::every(2), 0.0, Placement::StaticLast);
  const auto tl = run(plan, catalog::v100_node());
  EXPECT_TRUE(tl.events.empty());
  EXPECT_EQ(tl.makespan_ns, 0);
}

TEST(SimulateUpdatePhase, FlushOverlapsNextCpuUpdateAndPrefetch) {
  const auto p = catalog::v100_node();
  const auto plan = build_plan(8, Stride::every(2), 0.25, Placement::StaticLast);
  const auto tl = run(plan, p);
  const Event* flush1 = nullptr;
  const Event* cpu2 = nullptr;
  const Event* pre3 = nullptr;
  for (const auto& ev : tl.events) {
    if (ev.kind == ActionKind::FlushOutM && ev.subgroup == 1) flush1 = &ev;
    if (ev.kind == ActionKind::CpuUpdate && ev.subgroup == 2) cpu2 = &ev;
    if (ev.kind == ActionKind::PrefetchM && ev.subgroup == 3) pre3 = &ev;
  }
  ASSERT_TRUE(flush1 && cpu2 && pre3);
  EXPECT_LT(flush1->start_ns, cpu2->end_ns);
  EXPECT_LT(cpu2->start_ns, flush1->end_ns);
  EXPECT_LT(pre3->start_ns, flush1->end_ns);
  EXPECT_LT(flush1->start_ns, pre3->end_ns);
  EXPECT_NE(flush1->lane, pre3->lane);
}

TEST(SimulateUpdatePhase, Deterministic) {
  const auto p = catalog::h100_node();
  const auto plan = build_plan(30, Stride::every(3), 0.2, Placement::StaticLast);
  std::ostringstream a, b;
  write_timeline_csv(a, run(plan, p));
  write_timeline_csv(b, run(plan, p));
  EXPECT_EQ(a.str(), b.str());
}

TEST(SimulateUpdatePhase, InfeasibleWhenNoSlotFits) {
  auto p = catalog::v100_node();
  p.fast_capacity_bytes = 12.0 * kS - 1;
  const auto plan = build_plan(6, Stride::every(2), 0.0, Placement::StaticLast);
  EXPECT_THROW(simulate_update_phase(plan, p, kS), InfeasibleConfiguration);
  // No dynamic fast subgroup: nothing needs a slot.
  const auto cpu = build_plan(6, Stride::all_cpu(), 0.0, Placement::StaticLast);
  EXPECT_NO_THROW(simulate_update_phase(cpu, p, kS));
}

TEST(SimulateUpdatePhase, OneSlotSerializesResidency) {
  auto p = catalog::v100_node();
  p.fast_capacity_bytes = 12.0 * kS;
  const auto plan = build_plan(12, Stride::every(2), 0.0, Placement::StaticLast);
  const auto tl = run(plan, p);
  EXPECT_EQ(max_dynamic_resident(tl), 1u);
  p.fast_capacity_bytes = 1e12;
  EXPECT_LE(run(plan, p).makespan_ns, tl.makespan_ns);
}

TEST(SimulateUpdatePhase, SizeMismatchRejected) {
  const auto plan = build_plan(3, Stride::every(2), 0.0, Placement::StaticLast);
  EXPECT_THROW(simulate_update_phase(plan, catalog::v100_node(), std::vector<ParamCount>{1, 2}), InvalidArgument);
}

TEST(SimulateUpdatePhase, V100SweepOrdering) {
  const auto sw = sweep_stride(catalog::v100_node(), 12, kS, {2, 3, 4, 5}, 4);
  ASSERT_EQ(sw.points.size(), 4u);
  for (std::size_t i = 1; i < sw.points.size(); ++i) EXPECT_LT(sw.points[i - 1].makespan_ns, sw.points[i].makespan_ns);
  EXPECT_EQ(sw.best_k, 2);
  EXPECT_FALSE(sw.all_cpu_best);
}

TEST(SweepStride, FlagsAllCpuWhenOffloadNeverPays) {
  auto p = catalog::v100_node();
  p.cpu_update_params_per_s = 1e15;
  p.host_downscale_params_per_s = 1e15;
  ASSERT_TRUE(optimal_stride(p).all_cpu());
  const auto sw = sweep_stride(p, 12, kS, {1, 2, 3});
  EXPECT_TRUE(sw.all_cpu_best);
  for (const auto& pt : sw.points) EXPECT_TRUE(pt.worse_than_all_cpu);
  EXPECT_THROW(sweep_stride(p, 12, kS, {}), InvalidArgument);
  EXPECT_THROW(sweep_stride(p, 12, kS, {0}), InvalidArgument);
}

TEST(SweepStride, JobsDoNotChangeResults) {
  const auto p = catalog::h100_node();
  const auto a = sweep_stride(p, 40, kS, {1, 2, 3, 4, 5, 6}, 1);
  const auto b = sweep_stride(p, 40, kS, {1, 2, 3, 4, 5, 6}, 6);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) EXPECT_EQ(a.points[i].makespan_ns, b.points[i].makespan_ns);
}

// Brute-force sim argmin lands on floor or ceil of k_real once the phase has
// enough (k+1)-cycles for steady state.
TEST(SweepStride, ArgminMatchesEquationOneOnRandomProfiles) {
  std::mt19937_64 rng(5);
  int checked = 0;
  while (checked < 60) {
    const auto p = random_profile(rng);
    const auto r = optimal_stride(p);
    if (r.all_cpu() || *r.k_real < 1 || *r.k_real > 8) continue;
    ++checked;
    const auto sw = sweep_stride(p, 60, kS, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 4);
    const int lo = static_cast<int>(std::floor(*r.k_real));
    const int hi = static_cast<int>(std::ceil(*r.k_real));
    EXPECT_TRUE(sw.best_k == lo || sw.best_k == hi) << *r.k_real << " -> " << sw.best_k;
  }
}

TEST(Properties, EstimateAgreesWithSimulation) {
  std::mt19937_64 rng(9);
  int checked = 0;
  while (checked < 60) {
    const auto p = random_profile(rng);
    const auto r = optimal_stride(p);
    if (r.all_cpu() || *r.k_real > 8) continue;
    ++checked;
    for (double ratio : {0.0, 0.2, 0.5}) {
      const auto plan = plan_for(ApproachConfig::interleaved(std::nullopt, ratio), p, 100);
      const auto tl = run(plan, p);
      const double est = estimate_update_time(p, 100, kS, r.k, plan.static_set.size()) * 1e9;
      EXPECT_NEAR(est / static_cast<double>(tl.makespan_ns), 1.0, 0.15);
      const auto base = plan_for(ApproachConfig::twinflow(ratio), p, 100);
      const double est_base = estimate_update_time(p, 100, kS, std::nullopt, base.static_set.size()) * 1e9;
      EXPECT_NEAR(est_base / static_cast<double>(run(base, p).makespan_ns), 1.0, 0.15);
    }
  }
}

TEST(Properties, InterleavedNeverSlowerThanBlocking) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_profile(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 60)(rng);
    const auto base = run(plan_for(ApproachConfig::zero3(), p, n), p);
    const auto inter = run(plan_for(ApproachConfig::interleaved(std::nullopt), p, n), p);
    EXPECT_LE(inter.makespan_ns, base.makespan_ns) << i;
  }
}

TEST(Properties, MakespanMonotoneInEachRate) {
  std::mt19937_64 rng(29);
  for (int i = 0; i < 60; ++i) {
    const auto p = random_profile(rng);
    const int k = std::uniform_int_distribution<int>(1, 5)(rng);
    const double ratio = std::uniform_int_distribution<int>(0, 5)(rng) / 10.0;
    const auto plan = build_plan(24, Stride::every(k + 1), ratio, Placement::StaticLast);
    const Nanos t0 = run(plan, p).makespan_ns;
    for (int field = 0; field < 4; ++field) {
      auto q = p;
      double* rate = field == 0   ? &q.cpu_update_params_per_s
                     : field == 1 ? &q.fast_update_params_per_s
                     : field == 2 ? &q.host_downscale_params_per_s
                                  : &q.channel_params_per_s;
      *rate *= std::uniform_real_distribution<double>(1.0, 3.0)(rng);
      EXPECT_LE(run(plan, q).makespan_ns, t0) << "field " << field;
    }
  }
}

TEST(Properties, RandomPlansValidate) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_profile(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(0, 40)(rng);
    const int k = std::uniform_int_distribution<int>(0, 7)(rng);
    const double ratio = std::uniform_int_distribution<int>(0, 10)(rng) / 10.0;
    const auto plan = build_plan(n, k == 0 ? Stride::all_cpu() : Stride::every(k), ratio,
                                 i % 2 ? Placement::StaticFirst : Placement::StaticLast);
    std::vector<ParamCount> sizes(n);
    for (auto& s : sizes) s = std::uniform_int_distribution<ParamCount>(1, 1'000'000)(rng);
    const auto tl = simulate_update_phase(plan, p, sizes);
    validate_timeline(tl, plan);
    EXPECT_LE(max_dynamic_resident(tl), 2u);
  }
}

TEST(Validator, CatchesViolations) {
  const auto p = catalog::v100_node();
  const auto plan = build_plan(8, Stride::every(2), 0.0, Placement::StaticLast);
  const auto good = run(plan, p);

  auto overlap = good;
  for (auto& ev : overlap.events)
    if (ev.kind == ActionKind::CpuUpdate && ev.subgroup == 2) ev.start_ns -= 1;
  EXPECT_THROW(validate_timeline(overlap, plan), ValidationError);

  auto early = good;
  for (auto& ev : early.events)
    if (ev.kind == ActionKind::CpuDownscale) {
      ev.start_ns = 0;
      ev.end_ns = 1;
      break;
    }
  EXPECT_THROW(validate_timeline(early, plan), ValidationError);

  auto wrong_lane = good;
  wrong_lane.events[0].lane = Lane::FastCompute;
  EXPECT_THROW(validate_timeline(wrong_lane), ValidationError);

  auto bad_makespan = good;
  bad_makespan.makespan_ns += 1;
  EXPECT_THROW(validate_timeline(bad_makespan), ValidationError);
}

TEST(Validator, CatchesStreamFifoAndCapacity) {
  // Hand-built trace: two prefetches on the momentum stream out of order.
  Timeline tl;
  tl.events = {{0, Lane::ChannelH2D, ActionKind::PrefetchM, 0, 10, 20, 4},
               {1, Lane::ChannelH2D, ActionKind::PrefetchM, 1, 0, 10, 4}};
  tl.makespan_ns = 0;
  tl.spillover_ns = 20;
  tl.peak_fast_bytes = 4;
  EXPECT_THROW(validate_timeline(tl), ValidationError);

  // Three dynamic subgroups resident at once.
  Timeline cap;
  for (std::size_t s = 0; s < 3; ++s)
    cap.events.push_back({s, Lane::ChannelH2D, s == 0 ? ActionKind::PrefetchM : s == 1 ? ActionKind::PrefetchV : ActionKind::PrefetchP, s,
                          static_cast<Nanos>(s), static_cast<Nanos>(s + 1), 4});
  cap.events.push_back({3, Lane::ChannelD2H, ActionKind::FlushOutM, 0, 10, 11, 4});
  cap.events.push_back({4, Lane::ChannelD2H, ActionKind::FlushOutV, 1, 11, 12, 4});
  cap.events.push_back({5, Lane::ChannelD2H, ActionKind::FlushOutP, 2, 12, 13, 4});
  EXPECT_THROW(validate_timeline(cap), ValidationError);
}

TEST(Timeline, CsvRoundTrip) {
  const auto p = catalog::h100_node();
  const auto plan = build_plan(10, Stride::every(3), 0.2, Placement::StaticLast);
  const auto tl = run(plan, p);
  std::stringstream ss;
  write_timeline_csv(ss, tl);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "event_id,lane,kind,subgroup,start_ns,end_ns,bytes");
  const auto back = read_timeline_csv(ss);
  validate_timeline(back);
  ASSERT_EQ(back.events.size(), tl.events.size());
  EXPECT_EQ(back.makespan_ns, tl.makespan_ns);
  EXPECT_EQ(back.spillover_ns, tl.spillover_ns);
  std::stringstream bad("event_id,lane\n");
  EXPECT_THROW(read_timeline_csv(bad), ValidationError);
}

TEST(MemoryTrace, AllCpuIsFlat) {
  const auto tl = run(build_plan(6, Stride::all_cpu(), 0.0, Placement::StaticLast), catalog::v100_node());
  const auto tr = memory_trace(tl);
  ASSERT_EQ(tr.size(), 1u);
  EXPECT_EQ(tr[0].bytes, 4 * 6 * kS);
  EXPECT_EQ(tl.peak_fast_bytes, tr[0].bytes);
}

TEST(MemoryTrace, InterleavedRisesByOneSubgroupState) {
  const auto tl = run(build_plan(12, Stride::every(3), 0.0, Placement::StaticLast), catalog::v100_node());
  const auto tr = memory_trace(tl);
  const std::uint64_t base = 4 * 12 * kS;
  std::uint64_t peak = 0;
  bool saw_single = false;
  for (const auto& s : tr) {
    EXPECT_EQ((s.bytes - base) % (12 * kS), 0u);
    saw_single |= s.bytes == base + 12 * kS;
    peak = std::max(peak, s.bytes);
  }
  EXPECT_TRUE(saw_single);
  EXPECT_EQ(peak, tl.peak_fast_bytes);
  EXPECT_LE(peak, base + 24 * kS);
}

TEST(MemoryTrace, AllStaticHoldsEverything) {
  const auto tl = run(build_plan(5, Stride::all_cpu(), 1.0, Placement::StaticFirst), catalog::v100_node());
  const auto tr = memory_trace(tl);
  ASSERT_EQ(tr.size(), 1u);
  EXPECT_EQ(tr[0].bytes, 4 * 5 * kS + 12 * 5 * kS);
}

TEST(GradFlush, Throughputs) {
  auto p = catalog::h100_node();
  const double host = grad_flush_throughput(GradFlushStrategy::Fp16HostUpscale, p, 2e8);
  EXPECT_NEAR(host, 1.0 / (1 / 4e9 + 1 / 10e9 + 1 / 62e9), 1.0);
  EXPECT_NEAR(host / 2.5e9, 1.0, 0.15);
  p.channel_params_per_s = 25e9 / 4;
  const double fast = grad_flush_throughput(GradFlushStrategy::GpuUpscaleFp32, p, 2e8);
  EXPECT_NEAR(fast, 1.0 / (1 / 1.2e12 + 2 / 25e9), 1.0);
  EXPECT_GT(fast, host);
  EXPECT_EQ(grad_flush_throughput(GradFlushStrategy::Fp16HostUpscale, p, 0), host);
}

TEST(SimulateIteration, RecomputeToggle) {
  IterationModel m;
  m.fwd_ns = 1'000'000'000;
  m.bwd_ns = 2'000'000'000;
  const auto p = catalog::h100_node();
  const auto on = simulate_iteration(ApproachConfig::interleaved(2), p, m, 10, kS);
  m.activation_checkpointing = false;
  const auto off = simulate_iteration(ApproachConfig::interleaved(2), p, m, 10, kS);
  EXPECT_DOUBLE_EQ(on.bwd_compute_s, off.bwd_compute_s * 1.33);
  EXPECT_DOUBLE_EQ(on.fwd_s, 1.0);
}

TEST(SimulateIteration, InterleavedNotSlowerThanBaseline) {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 40; ++i) {
    const auto p = random_profile(rng);
    IterationModel m;
    m.fwd_ns = std::uniform_int_distribution<Nanos>(1, 5'000'000'000)(rng);
    m.bwd_ns = std::uniform_int_distribution<Nanos>(1, 10'000'000'000)(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 50)(rng);
    const auto base = simulate_iteration(ApproachConfig::zero3(), p, m, n, kS);
    const auto inter = simulate_iteration(ApproachConfig::interleaved(std::nullopt), p, m, n, kS);
    EXPECT_LE(inter.total_s(), base.total_s());
  }
}

TEST(SimulateIteration, RetainedGradientsCostNothing) {
  auto p = catalog::h100_node();
  IterationModel m;
  m.bwd_ns = 1;  // no overlap window to hide behind
  p.fast_capacity_bytes = 1e13;
  // k = 1: every second subgroup is fast-scheduled.
  const auto roomy = simulate_iteration(ApproachConfig::interleaved(1), p, m, 10, kS);
  EXPECT_EQ(roomy.retained_gradients, 5u);
  const double flush_one = 2.0 * kS / grad_flush_throughput(GradFlushStrategy::GpuUpscaleFp32, p, 2.0 * kS);
  EXPECT_NEAR(roomy.grad_flush_s, 5 * flush_one, 1e-7);
  p.fast_capacity_bytes = 12.0 * kS * 2;
  const auto tight = simulate_iteration(ApproachConfig::interleaved(1), p, m, 10, kS);
  EXPECT_EQ(tight.retained_gradients, 0u);
  EXPECT_NEAR(tight.grad_flush_s, 10 * flush_one, 1e-7);
}

TEST(CompareApproaches, SpeedupsAgainstFirstRow) {
  const auto p = catalog::v100_node();
  const auto rows =
      compare_approaches(p, 12, kS, {ApproachConfig::zero3(), ApproachConfig::interleaved(2)}, IterationModel{}, 2);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].update_speedup, 1.0);
  EXPECT_GT(rows[1].update_speedup, 1.0);
  EXPECT_THROW(compare_approaches(p, 12, kS, {ApproachConfig::zero3()}, IterationModel{}), InvalidArgument);
}

TEST(CompareApproaches, TwinFlowImprovesWithRatio) {
  const auto p = catalog::h100_node();
  Nanos prev = std::numeric_limits<Nanos>::max();
  for (double r : {0.0, 0.2, 0.3, 0.4, 0.5}) {
    const auto tl = run(plan_for(ApproachConfig::twinflow(r), p, 50), p);
    EXPECT_LT(tl.makespan_ns, prev) << r;
    prev = tl.makespan_ns;
  }
}
