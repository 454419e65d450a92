#include "ioff/scenario.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ioff/catalog.hpp"
#include "ioff/error.hpp"
#include "json.hpp"

namespace ioff {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<ParamCount> Workload::rank_subgroups() const {
  return shard(total_params, subgroup_size, num_ranks).at(rank_index);
}

std::string to_string(TraceFormat format) { return format == TraceFormat::Csv ? "csv" : "json"; }

std::optional<TraceFormat> parse_trace_format(std::string_view s) {
  if (s == "csv") return TraceFormat::Csv;
  if (s == "json") return TraceFormat::Json;
  return std::nullopt;
}

void Scenario::validate() const {
  try {
    profile.validate();
  } catch (const InvalidArgument& e) {
    throw ValidationError(e.what());
  }
  if (workload.total_params == 0) throw ValidationError("workload.total_params must be >= 1");
  if (workload.subgroup_size == 0) throw ValidationError("workload.subgroup_size must be >= 1");
  if (workload.num_ranks == 0) throw ValidationError("workload.num_ranks must be >= 1");
  if (workload.rank_index >= workload.num_ranks) throw ValidationError("workload.rank_index must be < num_ranks");
  if (approaches.empty()) throw ValidationError("approaches must list at least one approach");
  for (const auto& a : approaches) {
    if (!(a.static_ratio >= 0 && a.static_ratio <= 1)) throw ValidationError("static_ratio must be in [0, 1]");
    if (a.k && *a.k < 1) throw ValidationError("interleaved k must be >= 1");
  }
  if (iteration.fwd_ns < 0 || iteration.bwd_ns < 0) throw ValidationError("iteration times must be >= 0");
  if (!(iteration.microbatch_scale > 0)) throw ValidationError("iteration.microbatch_scale must be > 0");
  try {
    adam.validate();
  } catch (const InvalidArgument& e) {
    throw ValidationError(std::string("adam: ") + e.what());
  }
  for (const int k : sweep.k_values)
    if (k < 1) throw ValidationError("sweep.k_values must be >= 1");
  for (const double r : sweep.static_ratios)
    if (!(r >= 0 && r <= 1)) throw ValidationError("sweep.static_ratios must be in [0, 1]");
  for (const double m : sweep.microbatch_scales)
    if (!(m > 0)) throw ValidationError("sweep.microbatch_scales must be > 0");
}

namespace {

// Reads the fields of one JSON object, rejecting any it does not know.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_ + ": expected an object");
  }

  template <typename T>
  void opt(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError(path_ + "." + key + ": wrong type");
    }
  }

  template <typename T>
  void req(const char* key, T& out) {
    if (!j_.contains(key)) throw ValidationError(path_ + "." + key + ": missing");
    opt(key, out);
  }

  const json* sub(const char* key) {
    seen_.push_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void done() const {
    for (const auto& [k, v] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end())
        throw ValidationError(path_ + ": unknown field '" + k + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

SystemProfile lookup_or_fail(const std::string& name) {
  try {
    return catalog::lookup(name);
  } catch (const InvalidArgument& e) {
    throw ValidationError(std::string("profile: ") + e.what());
  }
}

SystemProfile parse_profile(const json& j) {
  if (j.is_string()) return lookup_or_fail(j.get<std::string>());
  Fields f(j, "profile");
  SystemProfile p;
  std::string base;
  f.opt("catalog", base);
  if (!base.empty()) p = lookup_or_fail(base);
  f.opt("name", p.name);
  f.opt("source", p.source);
  f.opt("cpu_update_params_per_s", p.cpu_update_params_per_s);
  f.opt("fast_update_params_per_s", p.fast_update_params_per_s);
  f.opt("host_downscale_params_per_s", p.host_downscale_params_per_s);
  f.opt("channel_params_per_s", p.channel_params_per_s);
  f.opt("pageable_h2d_bytes_per_s", p.pageable_h2d_bytes_per_s);
  f.opt("pageable_d2h_bytes_per_s", p.pageable_d2h_bytes_per_s);
  f.opt("fast_conversion_bytes_per_s", p.fast_conversion_bytes_per_s);
  f.opt("host_conversion_bytes_per_s", p.host_conversion_bytes_per_s);
  f.opt("host_alloc_unpinned_bytes_per_s", p.host_alloc_unpinned_bytes_per_s);
  f.opt("fast_capacity_bytes", p.fast_capacity_bytes);
  f.opt("host_contention", p.host_contention);
  f.done();
  return p;
}

ApproachConfig parse_approach(const json& j, const std::string& path) {
  Fields f(j, path);
  std::string kind;
  f.req("kind", kind);
  ApproachConfig a;
  if (kind == "zero3") {
    a = ApproachConfig::zero3();
  } else if (kind == "twinflow") {
    a = ApproachConfig::twinflow(0.0);
    f.opt("static_ratio", a.static_ratio);
  } else if (kind == "interleaved") {
    a = ApproachConfig::interleaved(std::nullopt);
    f.opt("static_ratio", a.static_ratio);
    if (const json* k = f.sub("k")) {
      if (k->is_number_integer()) {
        a.k = k->get<int>();
      } else if (*k == "all_cpu") {
        a.all_cpu = true;
      } else if (*k != "auto") {
        throw ValidationError(path + ".k: expected an integer, \"auto\" or \"all_cpu\"");
      }
    }
    std::string placement = std::string(to_string(a.placement));
    f.opt("placement", placement);
    const auto p = parse_placement(placement);
    if (!p) throw ValidationError(path + ".placement: expected static_first or static_last");
    a.placement = *p;
  } else {
    throw ValidationError(path + ".kind: expected zero3, twinflow or interleaved");
  }
  f.done();
  return a;
}

ordered_json approach_to_json(const ApproachConfig& a) {
  ordered_json j;
  switch (a.kind) {
    case ApproachKind::Zero3: j["kind"] = "zero3"; break;
    case ApproachKind::TwinFlow:
      j["kind"] = "twinflow";
      j["static_ratio"] = a.static_ratio;
      break;
    case ApproachKind::Interleaved:
      j["kind"] = "interleaved";
      if (a.all_cpu)
        j["k"] = "all_cpu";
      else if (a.k)
        j["k"] = *a.k;
      else
        j["k"] = "auto";
      j["static_ratio"] = a.static_ratio;
      j["placement"] = std::string(to_string(a.placement));
      break;
  }
  return j;
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("scenario is not valid JSON: ") + e.what());
  }
  Scenario s;
  Fields f(root, "scenario");

  const json* profile = f.sub("profile");
  if (!profile) throw ValidationError("scenario.profile: missing");
  s.profile = parse_profile(*profile);

  const json* workload = f.sub("workload");
  if (!workload) throw ValidationError("scenario.workload: missing");
  {
    Fields w(*workload, "workload");
    w.req("total_params", s.workload.total_params);
    w.req("subgroup_size", s.workload.subgroup_size);
    w.opt("num_ranks", s.workload.num_ranks);
    w.opt("rank_index", s.workload.rank_index);
    w.done();
  }

  const json* approaches = f.sub("approaches");
  if (!approaches || !approaches->is_array()) throw ValidationError("scenario.approaches: expected an array");
  for (std::size_t i = 0; i < approaches->size(); ++i)
    s.approaches.push_back(parse_approach(approaches->at(i), "approaches[" + std::to_string(i) + "]"));

  if (const json* it = f.sub("iteration")) {
    Fields w(*it, "iteration");
    w.opt("fwd_ns", s.iteration.fwd_ns);
    w.opt("bwd_ns", s.iteration.bwd_ns);
    w.opt("activation_checkpointing", s.iteration.activation_checkpointing);
    w.opt("microbatch_scale", s.iteration.microbatch_scale);
    std::optional<std::uint64_t> grad_bytes;
    if (const json* g = w.sub("grad_bytes_per_subgroup"); g && !g->is_null()) {
      if (!g->is_number_unsigned()) throw ValidationError("iteration.grad_bytes_per_subgroup: expected a count");
      grad_bytes = g->get<std::uint64_t>();
    }
    s.iteration.grad_bytes_per_subgroup = grad_bytes;
    w.done();
  }

  if (const json* seed = f.sub("seed"); seed && !seed->is_null()) {
    if (!seed->is_number_unsigned()) throw ValidationError("scenario.seed: expected a non-negative integer");
    s.seed = seed->get<std::uint64_t>();
  }

  if (const json* adam = f.sub("adam")) {
    Fields w(*adam, "adam");
    w.opt("lr", s.adam.lr);
    w.opt("beta1", s.adam.beta1);
    w.opt("beta2", s.adam.beta2);
    w.opt("eps", s.adam.eps);
    w.opt("step", s.adam.step);
    w.done();
  }

  if (const json* sweep = f.sub("sweep")) {
    Fields w(*sweep, "sweep");
    w.opt("k_values", s.sweep.k_values);
    w.opt("static_ratios", s.sweep.static_ratios);
    w.opt("microbatch_scales", s.sweep.microbatch_scales);
    w.done();
  }

  if (const json* out = f.sub("output")) {
    Fields w(*out, "output");
    w.opt("dir", s.out_dir);
    std::string format = to_string(s.format);
    w.opt("format", format);
    const auto fmt = parse_trace_format(format);
    if (!fmt) throw ValidationError("output.format: expected csv or json");
    s.format = *fmt;
    w.done();
  }
  f.done();
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string serialize_scenario(const Scenario& s) {
  ordered_json j;
  const SystemProfile& p = s.profile;
  j["profile"] = {
      {"name", p.name},
      {"source", p.source},
      {"cpu_update_params_per_s", p.cpu_update_params_per_s},
      {"fast_update_params_per_s", p.fast_update_params_per_s},
      {"host_downscale_params_per_s", p.host_downscale_params_per_s},
      {"channel_params_per_s", p.channel_params_per_s},
      {"pageable_h2d_bytes_per_s", p.pageable_h2d_bytes_per_s},
      {"pageable_d2h_bytes_per_s", p.pageable_d2h_bytes_per_s},
      {"fast_conversion_bytes_per_s", p.fast_conversion_bytes_per_s},
      {"host_conversion_bytes_per_s", p.host_conversion_bytes_per_s},
      {"host_alloc_unpinned_bytes_per_s", p.host_alloc_unpinned_bytes_per_s},
      {"fast_capacity_bytes", p.fast_capacity_bytes},
      {"host_contention", p.host_contention},
  };
  j["workload"] = {{"total_params", s.workload.total_params},
                   {"subgroup_size", s.workload.subgroup_size},
                   {"num_ranks", s.workload.num_ranks},
                   {"rank_index", s.workload.rank_index}};
  j["approaches"] = ordered_json::array();
  for (const auto& a : s.approaches) j["approaches"].push_back(approach_to_json(a));
  j["iteration"] = {{"fwd_ns", s.iteration.fwd_ns},
                    {"bwd_ns", s.iteration.bwd_ns},
                    {"activation_checkpointing", s.iteration.activation_checkpointing},
                    {"microbatch_scale", s.iteration.microbatch_scale}};
  if (s.iteration.grad_bytes_per_subgroup) j["iteration"]["grad_bytes_per_subgroup"] = *s.iteration.grad_bytes_per_subgroup;
  if (s.seed) j["seed"] = *s.seed;
  j["adam"] = {{"lr", s.adam.lr}, {"beta1", s.adam.beta1}, {"beta2", s.adam.beta2}, {"eps", s.adam.eps}, {"step", s.adam.step}};
  j["sweep"] = {{"k_values", s.sweep.k_values},
                {"static_ratios", s.sweep.static_ratios},
                {"microbatch_scales", s.sweep.microbatch_scales}};
  j["output"] = {{"dir", s.out_dir}, {"format", to_string(s.format)}};
  return j.dump(2) + "\n";
}

std::string plan_to_json(const UpdatePlan& plan) {
  ordered_json j;
  j["num_subgroups"] = plan.num_subgroups;
  if (plan.stride.is_all_cpu())
    j["stride"] = "all_cpu";
  else
    j["stride"] = plan.stride.value();
  j["placement"] = std::string(to_string(plan.placement));
  j["blocking"] = plan.blocking;
  j["assignments"] = ordered_json::array();
  for (const auto d : plan.assignments) j["assignments"].push_back(d == Device::Fast ? "fast" : "cpu");
  j["static_set"] = plan.static_set;
  j["actions"] = ordered_json::array();
  for (const auto& a : plan.actions) {
    ordered_json aj;
    aj["id"] = a.id;
    aj["kind"] = std::string(to_string(a.kind));
    aj["subgroup"] = a.subgroup;
    aj["lane"] = std::string(to_string(lane_of(a.kind)));
    if (a.stream)
      aj["stream"] = std::string(to_string(*a.stream));
    else
      aj["stream"] = nullptr;
    aj["depends_on"] = a.depends_on;
    j["actions"].push_back(std::move(aj));
  }
  j["warnings"] = plan.warnings;
  return j.dump(2) + "\n";
}

std::string timeline_to_json(const Timeline& tl) {
  ordered_json j;
  j["makespan_ns"] = tl.makespan_ns;
  j["spillover_ns"] = tl.spillover_ns;
  j["peak_fast_bytes"] = tl.peak_fast_bytes;
  j["events"] = ordered_json::array();
  for (const auto& ev : tl.events) {
    j["events"].push_back({{"event_id", ev.action_id},
                           {"lane", std::string(to_string(ev.lane))},
                           {"kind", std::string(to_string(ev.kind))},
                           {"subgroup", ev.subgroup},
                           {"start_ns", ev.start_ns},
                           {"end_ns", ev.end_ns},
                           {"bytes", ev.bytes}});
  }
  return j.dump(2) + "\n";
}

}  // namespace ioff
