#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "ioff/catalog.hpp"
#include "ioff/cli.hpp"
#include "ioff/error.hpp"
#include "ioff/executor.hpp"
#include "ioff/perfmodel.hpp"
#include "ioff/scenario.hpp"
#include "json.hpp"

namespace ioff {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Largest rank the executor materializes: four FP32 arrays plus FP16 copies.
constexpr ParamCount kMaxExecuteParams = 16'000'000;

struct Options {
  std::string scenario;
  std::string out;
  std::string format;
  std::size_t jobs = 1;
  std::string mode = "virtual";
  bool emit_actions = false;
  std::string axis = "k";
  std::string profile;
  std::size_t subgroups = 50;
  ParamCount subgroup_size = 100'000'000;
};

// Files produced by one command, committed together at the end.
class Outputs {
 public:
  void add(std::string name, std::string content) { files_[std::move(name)] = std::move(content); }

  void commit(const fs::path& dir) const {
    if (files_.empty()) return;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
    std::vector<fs::path> staged;
    auto cleanup = [&] {
      for (const auto& p : staged) fs::remove(p, ec);
    };
    for (const auto& [name, content] : files_) {
      const fs::path tmp = dir / ("." + name + ".tmp");
      staged.push_back(tmp);
      std::ofstream f(tmp, std::ios::binary);
      f << content;
      f.close();
      if (!f) {
        cleanup();
        throw std::runtime_error("cannot write " + tmp.string());
      }
    }
    for (const auto& [name, content] : files_) {
      fs::rename(dir / ("." + name + ".tmp"), dir / name, ec);
      if (ec) {
        cleanup();
        throw std::runtime_error("cannot write " + (dir / name).string() + ": " + ec.message());
      }
    }
  }

 private:
  std::map<std::string, std::string> files_;
};

Scenario load(const Options& o) {
  Scenario s = load_scenario(o.scenario);
  if (!o.out.empty()) s.out_dir = o.out;
  if (!o.format.empty()) s.format = *parse_trace_format(o.format);
  return s;
}

std::string trace_text(const Timeline& tl, TraceFormat format) {
  if (format == TraceFormat::Json) return timeline_to_json(tl);
  std::ostringstream os;
  write_timeline_csv(os, tl);
  return os.str();
}

std::string ext(TraceFormat f) { return f == TraceFormat::Csv ? ".csv" : ".json"; }

// "interleaved(k=2,ratio=0.00)" -> "interleaved_k2_ratio0.00"
std::string slug(const std::string& label) {
  std::string s;
  for (const char c : label) {
    if (c == '(' || c == ',') s += '_';
    else if (c == '=' || c == ')') continue;
    else s += c;
  }
  return s;
}

ParamCount max_size(const std::vector<ParamCount>& sizes) {
  ParamCount m = 0;
  for (const auto s : sizes) m = std::max(m, s);
  return m;
}

ordered_json phase_json(const IterationBreakdown& b) {
  return {{"fwd_s", b.fwd_s},     {"bwd_s", b.bwd_s},           {"bwd_compute_s", b.bwd_compute_s},
          {"grad_flush_s", b.grad_flush_s}, {"update_s", b.update_s}, {"total_s", b.total_s()}};
}

ordered_json timeline_summary(const Timeline& tl) {
  return {{"makespan_ns", tl.makespan_ns}, {"peak_fast_bytes", tl.peak_fast_bytes}, {"spillover_ns", tl.spillover_ns}};
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int cmd_plan(const Options& o, std::ostream& out) {
  SystemProfile profile;
  std::vector<ParamCount> sizes;
  std::string out_dir = o.out.empty() ? "out" : o.out;
  ApproachConfig approach = ApproachConfig::interleaved(std::nullopt);
  if (!o.scenario.empty()) {
    const Scenario s = load(o);
    profile = s.profile;
    sizes = s.workload.rank_subgroups();
    out_dir = s.out_dir;
    for (const auto& a : s.approaches)
      if (a.kind == ApproachKind::Interleaved) {
        approach = a;
        break;
      }
  } else {
    try {
      profile = catalog::lookup(o.profile.empty() ? "v100-node" : o.profile);
    } catch (const InvalidArgument& e) {
      throw ValidationError(e.what());
    }
    if (o.subgroups == 0 || o.subgroup_size == 0) throw ValidationError("--subgroups and --subgroup-size must be >= 1");
    sizes.assign(o.subgroups, o.subgroup_size);
  }
  try {
    profile.validate();
  } catch (const InvalidArgument& e) {
    throw ValidationError(e.what());
  }

  const StrideResult r = optimal_stride(profile);
  out << "profile: " << profile.name << "\n";
  if (r.all_cpu()) {
    out << "ALL_CPU (no fast-tier updates pay off on this profile)\n";
  } else {
    out << "k_real≈" << fmt("%.2f", *r.k_real) << ", k=" << *r.k << "\n";
    out << "k_real: " << fmt("%.4f", *r.k_real) << "\n";
    out << "stride: every " << (*r.k + 1) << " dynamic subgroups\n";
  }
  out << "gpu_fraction: " << fmt("%.4f", r.gpu_fraction) << "\n";
  const std::size_t n = sizes.size();
  const ParamCount smax = max_size(sizes);
  out << "subgroups: " << n << " x " << smax << " params\n";
  out << "estimate_s: " << fmt("%.6f", estimate_update_time(profile, n, smax, r.k)) << "\n";
  out << "all_cpu_estimate_s: " << fmt("%.6f", estimate_update_time(profile, n, smax, std::nullopt)) << "\n";
  if (const auto caveat = catalog::unit_caveat(profile.name); !caveat.empty()) out << caveat << "\n";

  if (o.emit_actions) {
    const UpdatePlan plan = plan_for(approach, profile, n);
    check_plan(plan);
    Outputs files;
    files.add("actions.json", plan_to_json(plan));
    files.commit(out_dir);
    out << "wrote " << (fs::path(out_dir) / "actions.json").string() << "\n";
  }
  return kExitOk;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const Scenario s = load(o);
  const auto sizes = s.workload.rank_subgroups();
  const auto runs = parallel_map<IterationBreakdown>(s.approaches.size(), o.jobs, [&](std::size_t i) {
    return simulate_iteration(s.approaches[i], s.profile, s.iteration, sizes);
  });
  Outputs files;
  ordered_json summary;
  summary["profile"] = s.profile.name;
  summary["num_subgroups"] = sizes.size();
  summary["approaches"] = ordered_json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& a = s.approaches[i];
    const auto& run = runs[i];
    validate_timeline(run.update, plan_for(a, s.profile, sizes.size()));
    const std::string name = "trace_" + std::to_string(i) + "_" + slug(a.label()) + ext(s.format);
    files.add(name, trace_text(run.update, s.format));
    ordered_json row = {{"approach", a.label()}, {"trace", name}};
    if (run.k) row["k"] = *run.k;
    row.update(timeline_summary(run.update));
    row["phases"] = phase_json(run);
    row["retained_gradients"] = run.retained_gradients;
    summary["approaches"].push_back(row);
    out << std::left << std::setw(36) << a.label() << " update " << fmt("%.6f", run.update_s) << " s, iteration "
        << fmt("%.6f", run.total_s()) << " s, peak_fast " << run.update.peak_fast_bytes << " B\n";
  }
  files.add("summary.json", summary.dump(2) + "\n");
  files.commit(s.out_dir);
  return kExitOk;
}

// FNV-1a over the bit patterns of the final optimizer state.
std::uint64_t state_digest(const ShardedOptimizer& opt) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ull;
  };
  for (const auto& sg : opt.subgroups()) {
    mix(sg.params32.data(), sg.params32.size() * sizeof(float));
    mix(sg.momentum32.data(), sg.momentum32.size() * sizeof(float));
    mix(sg.variance32.data(), sg.variance32.size() * sizeof(float));
  }
  mix(opt.model16().data(), opt.model16().size() * sizeof(Half));
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int cmd_execute(const Options& o, std::ostream& out) {
  const Scenario s = load(o);
  if (!s.seed) throw ValidationError("execute needs a seed in the scenario");
  if (o.mode != "virtual" && o.mode != "throttled") throw ValidationError("--mode must be virtual or throttled");
  const auto sizes = s.workload.rank_subgroups();
  ParamCount total = 0;
  for (const auto sz : sizes) total += sz;
  if (total > kMaxExecuteParams)
    throw ValidationError("execute holds real state; the rank has " + std::to_string(total) +
                          " params, the limit is " + std::to_string(kMaxExecuteParams));

  // Refuse infeasible plans before materializing any state.
  std::vector<UpdatePlan> plans;
  for (const auto& a : s.approaches) {
    plans.push_back(plan_for(a, s.profile, sizes.size()));
    if (!plans.back().dynamic_fast().empty() && staging_slots(s.profile, max_size(sizes)) == 0)
      throw InfeasibleConfiguration(a.label() + ": the fast tier cannot hold one dynamic subgroup");
  }

  ShardedOptimizer initial(sizes);
  initial.randomize(*s.seed);
  const ShardedOptimizer oracle = sequential_oracle(initial, s.adam);
  ExecOptions opts;
  opts.mode = o.mode == "throttled" ? ExecMode::Throttled : ExecMode::VirtualTime;

  Outputs files;
  ordered_json summary;
  summary["profile"] = s.profile.name;
  summary["seed"] = *s.seed;
  summary["num_subgroups"] = sizes.size();
  summary["oracle_digest"] = hex(state_digest(oracle));
  summary["approaches"] = ordered_json::array();
  bool all_match = true;
  for (std::size_t i = 0; i < s.approaches.size(); ++i) {
    const auto& a = s.approaches[i];
    const UpdatePlan& plan = plans[i];
    const ExecutionResult res = execute_plan(plan, initial, s.profile, s.adam, opts);
    validate_timeline(res.timeline, plan);
    const bool match = res.optimizer.state_equals(oracle);
    all_match = all_match && match;
    const std::string name = "trace_" + std::to_string(i) + "_" + slug(a.label()) + ext(s.format);
    files.add(name, trace_text(res.timeline, s.format));
    ordered_json row = {{"approach", a.label()}, {"trace", name}};
    row.update(timeline_summary(res.timeline));
    row["grad_flush_s"] = res.grad_flush_s;
    row["matches_oracle"] = match;
    row["state_digest"] = hex(state_digest(res.optimizer));
    summary["approaches"].push_back(row);
    out << std::left << std::setw(36) << a.label() << " makespan " << res.timeline.makespan_ns << " ns, "
        << (match ? "matches oracle" : "DIFFERS from oracle") << "\n";
  }
  summary["all_match_oracle"] = all_match;
  files.add("summary.json", summary.dump(2) + "\n");
  files.commit(s.out_dir);
  return all_match ? kExitOk : kExitFailure;
}

std::string table_text(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows,
                       TraceFormat format) {
  if (format == TraceFormat::Json) {
    ordered_json j = ordered_json::array();
    for (const auto& r : rows) {
      ordered_json obj;
      for (std::size_t c = 0; c < header.size(); ++c) obj[header[c]] = r[c];
      j.push_back(obj);
    }
    return j.dump(2) + "\n";
  }
  std::string s;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      // Approach labels contain commas.
      const bool quote = cells[c].find(',') != std::string::npos;
      s += (c ? "," : "") + (quote ? "\"" + cells[c] + "\"" : cells[c]);
    }
    s += "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  return s;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const Scenario s = load(o);
  const auto sizes = s.workload.rank_subgroups();
  ParamCount total = 0;
  for (const auto sz : sizes) total += sz;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  if (o.axis == "k") {
    const StrideSweep sw = sweep_stride(s.profile, sizes, s.sweep.k_values, o.jobs);
    header = {"k", "makespan_ns", "params_per_s", "worse_than_all_cpu"};
    for (const auto& p : sw.points) {
      const double tput = p.makespan_ns > 0 ? static_cast<double>(total) / (p.makespan_ns * 1e-9) : 0.0;
      rows.push_back({std::to_string(p.k), std::to_string(p.makespan_ns), fmt("%.6e", tput),
                      p.worse_than_all_cpu ? "true" : "false"});
      out << "k=" << p.k << " makespan " << p.makespan_ns << " ns, " << fmt("%.3f", tput * 1e-9) << " billion params/s"
          << (p.worse_than_all_cpu ? " (worse than all-CPU)" : "") << "\n";
    }
    out << "best k=" << sw.best_k << (sw.all_cpu_best ? ", but all-CPU is faster" : "") << "\n";
  } else if (o.axis == "ratio") {
    std::vector<ApproachConfig> configs;
    for (const double r : s.sweep.static_ratios) {
      configs.push_back(ApproachConfig::twinflow(r));
      configs.push_back(ApproachConfig::interleaved(std::nullopt, r));
    }
    const auto tl = parallel_map<Timeline>(configs.size(), o.jobs, [&](std::size_t i) {
      return simulate_update_phase(plan_for(configs[i], s.profile, sizes.size()), s.profile, sizes);
    });
    header = {"static_ratio", "twinflow_makespan_ns", "interleaved_makespan_ns", "speedup"};
    for (std::size_t i = 0; i < s.sweep.static_ratios.size(); ++i) {
      const Nanos tw = tl[2 * i].makespan_ns;
      const Nanos il = tl[2 * i + 1].makespan_ns;
      const double speedup = il > 0 ? static_cast<double>(tw) / static_cast<double>(il) : 1.0;
      rows.push_back({fmt("%.2f", s.sweep.static_ratios[i]), std::to_string(tw), std::to_string(il),
                      fmt("%.4f", speedup)});
      out << "ratio " << fmt("%.2f", s.sweep.static_ratios[i]) << ": twinflow " << tw << " ns, interleaved " << il
          << " ns, speedup " << fmt("%.3f", speedup) << "\n";
    }
  } else if (o.axis == "microbatch") {
    const std::size_t na = s.approaches.size();
    const std::size_t nm = s.sweep.microbatch_scales.size();
    const auto runs = parallel_map<IterationBreakdown>(na * nm, o.jobs, [&](std::size_t i) {
      IterationModel m = s.iteration;
      m.microbatch_scale = s.sweep.microbatch_scales[i / na];
      return simulate_iteration(s.approaches[i % na], s.profile, m, sizes);
    });
    header = {"microbatch_scale", "approach", "fwd_s", "bwd_s", "update_s", "total_s"};
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto& r = runs[i];
      rows.push_back({fmt("%.2f", s.sweep.microbatch_scales[i / na]), s.approaches[i % na].label(),
                      fmt("%.6f", r.fwd_s), fmt("%.6f", r.bwd_s), fmt("%.6f", r.update_s), fmt("%.6f", r.total_s())});
      out << "scale " << fmt("%.2f", s.sweep.microbatch_scales[i / na]) << " " << std::left << std::setw(36)
          << s.approaches[i % na].label() << " iteration " << fmt("%.6f", r.total_s()) << " s\n";
    }
  } else {
    throw ValidationError("--axis must be k, ratio or microbatch");
  }
  Outputs files;
  files.add("sweep_" + o.axis + ext(s.format), table_text(header, rows, s.format));
  files.commit(s.out_dir);
  return kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
  const Scenario s = load(o);
  if (s.approaches.size() < 2) throw ValidationError("compare needs at least two approaches");
  const auto rows = compare_approaches(s.profile, s.workload.rank_subgroups(), s.approaches, s.iteration, o.jobs);
  std::vector<std::string> header{"approach", "update_s", "iteration_s", "update_speedup", "iteration_speedup"};
  std::vector<std::vector<std::string>> cells;
  out << std::left << std::setw(36) << "approach" << std::right << std::setw(12) << "update_s" << std::setw(14)
      << "iteration_s" << std::setw(10) << "update" << std::setw(10) << "iter" << "\n";
  for (const auto& r : rows) {
    cells.push_back({r.approach.label(), fmt("%.6f", r.phases.update_s), fmt("%.6f", r.phases.total_s()),
                     fmt("%.4f", r.update_speedup), fmt("%.4f", r.iteration_speedup)});
    out << std::left << std::setw(36) << r.approach.label() << std::right << std::setw(12)
        << fmt("%.4f", r.phases.update_s) << std::setw(14) << fmt("%.4f", r.phases.total_s()) << std::setw(9)
        << fmt("%.2f", r.update_speedup) << "x" << std::setw(9) << fmt("%.2f", r.iteration_speedup) << "x\n";
  }
  Outputs files;
  files.add("compare" + ext(s.format), table_text(header, cells, s.format));
  files.commit(s.out_dir);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interleaved CPU/GPU optimizer offload: planner, simulator and executor", "ioff"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool need_scenario) {
    auto* opt = sub->add_option("--scenario", o.scenario, "Scenario JSON file")->check(CLI::ExistingFile);
    if (need_scenario) opt->required();
    sub->add_option("--out", o.out, "Output directory (overrides the scenario)");
    sub->add_option("--format", o.format, "Trace format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--jobs", o.jobs, "Parallel workers for sweeps")->check(CLI::PositiveNumber);
  };

  auto* plan = app.add_subcommand("plan", "Print the optimal stride for a profile");
  common(plan, false);
  plan->add_flag("--emit-actions", o.emit_actions, "Write the plan's action list as actions.json");
  plan->add_option("--profile", o.profile, "Catalog profile when no scenario is given");
  plan->add_option("--subgroups", o.subgroups, "Subgroup count when no scenario is given");
  plan->add_option("--subgroup-size", o.subgroup_size, "Params per subgroup when no scenario is given");

  auto* simulate = app.add_subcommand("simulate", "Simulate one iteration per approach");
  common(simulate, true);
  auto* execute = app.add_subcommand("execute", "Run the update phase on real data and check it against the oracle");
  common(execute, true);
  execute->add_option("--mode", o.mode, "virtual or throttled")->check(CLI::IsMember({"virtual", "throttled"}));
  auto* sweep = app.add_subcommand("sweep", "Sweep stride, static ratio or microbatch scale");
  common(sweep, true);
  sweep->add_option("--axis", o.axis, "k, ratio or microbatch")->check(CLI::IsMember({"k", "ratio", "microbatch"}));
  auto* compare = app.add_subcommand("compare", "Compare approaches and print speedups");
  common(compare, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (plan->parsed()) return cmd_plan(o, out);
    if (simulate->parsed()) return cmd_simulate(o, out);
    if (execute->parsed()) return cmd_execute(o, out);
    if (sweep->parsed()) return cmd_sweep(o, out);
    if (compare->parsed()) return cmd_compare(o, out);
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InfeasibleConfiguration& e) {
    err << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace ioff
