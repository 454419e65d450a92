#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ioff/core.hpp"
#include "ioff/executor.hpp"
#include "ioff/sim.hpp"

namespace ioff {

struct Workload {
  ParamCount total_params = 0;
  ParamCount subgroup_size = 0;
  ParamCount num_ranks = 1;
  ParamCount rank_index = 0;

  // Subgroup sizes of the simulated rank.
  std::vector<ParamCount> rank_subgroups() const;
  friend bool operator==(const Workload&, const Workload&) = default;
};

struct SweepSpec {
  std::vector<int> k_values{1, 2, 3, 4, 5, 6};
  std::vector<double> static_ratios{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> microbatch_scales{1.0, 2.0, 4.0};
  friend bool operator==(const SweepSpec&, const SweepSpec&) = default;
};

enum class TraceFormat { Csv, Json };

struct Scenario {
  SystemProfile profile;
  Workload workload;
  std::vector<ApproachConfig> approaches;
  IterationModel iteration;
  std::optional<std::uint64_t> seed;
  AdamHyper adam;
  SweepSpec sweep;
  std::string out_dir = "out";
  TraceFormat format = TraceFormat::Csv;

  // Throws ValidationError.
  void validate() const;
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// JSON scenario. Field names carry their units; "profile" is either a
/// catalog name or an object with all rates, optionally starting from
/// {"catalog": name} and overriding single fields. Unknown fields are
/// rejected. Throws ValidationError with the offending path.
Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario(const std::filesystem::path& path);
std::string serialize_scenario(const Scenario& scenario);

std::string to_string(TraceFormat format);
std::optional<TraceFormat> parse_trace_format(std::string_view s);

// Action list of a plan, for golden files and `plan --emit-actions`.
std::string plan_to_json(const UpdatePlan& plan);
// Timeline events as a JSON document (the CSV's columns plus the summary).
std::string timeline_to_json(const Timeline& timeline);

}  // namespace ioff
