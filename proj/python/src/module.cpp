#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ioff/catalog.hpp"
#include "ioff/cli.hpp"
#include "ioff/error.hpp"
#include "ioff/executor.hpp"
#include "ioff/perfmodel.hpp"
#include "ioff/scenario.hpp"
#include "ioff/sim.hpp"

namespace py = pybind11;
using namespace ioff;

namespace {

py::dict summary(const Timeline& tl) {
  py::dict d;
  d["makespan_ns"] = tl.makespan_ns;
  d["spillover_ns"] = tl.spillover_ns;
  d["peak_fast_bytes"] = tl.peak_fast_bytes;
  d["events"] = tl.events.size();
  return d;
}

Placement placement_of(const std::string& s) {
  const auto p = parse_placement(s);
  if (!p) throw InvalidArgument("placement must be static_first or static_last");
  return *p;
}

}  // namespace

PYBIND11_MODULE(_ioff, m) {
  m.doc() = "Interleaved CPU/GPU optimizer offload: stride model, simulator and executor";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<InfeasibleConfiguration>(m, "InfeasibleConfiguration", PyExc_RuntimeError);
  py::register_exception<SchedulingError>(m, "SchedulingError", PyExc_RuntimeError);

  py::class_<SystemProfile>(m, "SystemProfile")
      .def(py::init<>())
      .def_readwrite("name", &SystemProfile::name)
      .def_readwrite("cpu_update_params_per_s", &SystemProfile::cpu_update_params_per_s)
      .def_readwrite("fast_update_params_per_s", &SystemProfile::fast_update_params_per_s)
      .def_readwrite("host_downscale_params_per_s", &SystemProfile::host_downscale_params_per_s)
      .def_readwrite("channel_params_per_s", &SystemProfile::channel_params_per_s)
      .def_readwrite("pageable_h2d_bytes_per_s", &SystemProfile::pageable_h2d_bytes_per_s)
      .def_readwrite("pageable_d2h_bytes_per_s", &SystemProfile::pageable_d2h_bytes_per_s)
      .def_readwrite("fast_conversion_bytes_per_s", &SystemProfile::fast_conversion_bytes_per_s)
      .def_readwrite("host_conversion_bytes_per_s", &SystemProfile::host_conversion_bytes_per_s)
      .def_readwrite("host_alloc_unpinned_bytes_per_s", &SystemProfile::host_alloc_unpinned_bytes_per_s)
      .def_readwrite("fast_capacity_bytes", &SystemProfile::fast_capacity_bytes)
      .def_readwrite("host_contention", &SystemProfile::host_contention)
      .def("validate", &SystemProfile::validate)
      .def("__repr__", [](const SystemProfile& p) { return "<SystemProfile " + p.name + ">"; });

  m.def("catalog_names", &catalog::names);
  m.def("profile", [](const std::string& name) { return catalog::lookup(name); }, py::arg("name"));

  m.def(
      "optimal_stride",
      [](const SystemProfile& p) {
        const auto r = optimal_stride(p);
        py::dict d;
        d["k_real"] = r.k_real ? py::cast(*r.k_real) : py::none();
        d["k"] = r.k ? py::cast(*r.k) : py::none();
        d["gpu_fraction"] = r.gpu_fraction;
        return d;
      },
      py::arg("profile"));

  m.def(
      "fast_assignments",
      [](std::size_t n, int stride, double static_ratio, const std::string& placement) {
        const auto plan = build_plan(n, stride == 0 ? Stride::all_cpu() : Stride::every(stride), static_ratio,
                                     placement_of(placement));
        std::vector<std::size_t> fast;
        for (std::size_t i = 0; i < n; ++i)
          if (plan.assignments[i] == Device::Fast) fast.push_back(i);
        return fast;
      },
      py::arg("num_subgroups"), py::arg("stride"), py::arg("static_ratio") = 0.0,
      py::arg("placement") = "static_last", "Indices updated on the fast tier; stride 0 means all-CPU.");

  m.def(
      "simulate",
      [](const SystemProfile& p, std::size_t n, ParamCount size, std::optional<int> k, double static_ratio,
         bool twinflow) {
        const auto a = twinflow ? ApproachConfig::twinflow(static_ratio)
                       : k      ? ApproachConfig::interleaved(*k, static_ratio)
                                : ApproachConfig::zero3();
        const auto plan = plan_for(a, p, n);
        const auto tl = simulate_update_phase(plan, p, size);
        validate_timeline(tl, plan);
        return summary(tl);
      },
      py::arg("profile"), py::arg("num_subgroups"), py::arg("subgroup_size"), py::arg("k") = py::none(),
      py::arg("static_ratio") = 0.0, py::arg("twinflow") = false,
      "Update-phase summary. k=None with twinflow=False is the all-CPU baseline.");

  m.def("estimate_update_time", &estimate_update_time, py::arg("profile"), py::arg("num_subgroups"),
        py::arg("subgroup_size"), py::arg("k"), py::arg("static_residents") = 0);

  m.def(
      "execute_matches_oracle",
      [](const std::vector<ParamCount>& sizes, int stride, double static_ratio, std::uint64_t seed,
         std::uint64_t step) {
        ShardedOptimizer opt(sizes);
        opt.randomize(seed);
        AdamHyper h;
        h.step = step;
        auto p = catalog::v100_node();
        p.fast_capacity_bytes = 1e9;
        const auto plan = build_plan(sizes.size(), stride == 0 ? Stride::all_cpu() : Stride::every(stride),
                                     static_ratio, Placement::StaticLast);
        py::gil_scoped_release release;
        const auto res = execute_plan(plan, opt, p, h);
        return res.optimizer.state_equals(sequential_oracle(opt, h));
      },
      py::arg("sizes"), py::arg("stride"), py::arg("static_ratio") = 0.0, py::arg("seed") = 0, py::arg("step") = 1);

  m.def("parse_scenario", [](const std::string& text) { return serialize_scenario(parse_scenario(text)); },
        py::arg("text"), "Validates a scenario and returns its canonical JSON.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> all{"ioff"};
        all.insert(all.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : all) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
