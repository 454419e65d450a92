#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ioff/core.hpp"

namespace ioff::catalog {

// Single V100 node used for stride verification: B = 3, U_g = 35,
// U_c = 2, D_c = 8.7 billion params/s. Conversion and pageable rates are
// not reported for this node and reuse the H100 node's measurements.
SystemProfile v100_node();

// One rank of the 4xH100 node: PCIe Gen5 ~55 GB/s pinned per direction,
// 100 / 8 billion params/s GPU / CPU update, 62 GB/s host conversion.
// Update rates are quoted node-wide while the channel is per GPU; see
// `unit_caveat`.
SystemProfile h100_node();

std::vector<std::string> names();

// Throws InvalidArgument for unknown names.
SystemProfile lookup(std::string_view name);

// Non-empty for entries whose quoted rates mix per-node and per-device units.
std::string unit_caveat(std::string_view name);

}  // namespace ioff::catalog
