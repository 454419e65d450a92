#include "ioff/catalog.hpp"

#include "ioff/error.hpp"

namespace ioff::catalog {

SystemProfile v100_node() {
  SystemProfile p;
  p.name = "v100-node";
  p.cpu_update_params_per_s = 2e9;
  p.fast_update_params_per_s = 35e9;
  p.host_downscale_params_per_s = 8.7e9;
  p.channel_params_per_s = 3e9;
  p.pageable_h2d_bytes_per_s = 9e9;
  p.pageable_d2h_bytes_per_s = 10e9;
  p.fast_conversion_bytes_per_s = 1.2e12;
  p.host_conversion_bytes_per_s = 62e9;
  p.host_alloc_unpinned_bytes_per_s = 4e9;
  p.fast_capacity_bytes = 8e9;
  p.source = "7B stride verification node: B=3, U_g=35, U_c=2, D_c=8.7 billion P/s; other rates from the H100 node";
  return p;
}

SystemProfile h100_node() {
  SystemProfile p;
  p.name = "h100-node";
  p.cpu_update_params_per_s = 8e9;
  p.fast_update_params_per_s = 100e9;
  p.host_downscale_params_per_s = 62e9 / 4.0;
  p.channel_params_per_s = 55e9 / 4.0;
  p.pageable_h2d_bytes_per_s = 9e9;
  // 16 GB/s is the pageable D2H peak; 10 GB/s is what the FP16 gradient
  // flush actually sustains into a freshly allocated buffer.
  p.pageable_d2h_bytes_per_s = 10e9;
  p.fast_conversion_bytes_per_s = 1.2e12;
  p.host_conversion_bytes_per_s = 62e9;
  p.host_alloc_unpinned_bytes_per_s = 4e9;
  p.fast_capacity_bytes = 16e9;
  p.source = "4xH100 node: ~100/8 billion P/s GPU/CPU update, PCIe Gen5 55 GB/s pinned, H32<->H16 62 GB/s, G32<->G16 1.2 TB/s";
  return p;
}

std::vector<std::string> names() { return {"v100-node", "h100-node"}; }

SystemProfile lookup(std::string_view name) {
  if (name == "v100-node") return v100_node();
  if (name == "h100-node") return h100_node();
  throw InvalidArgument("unknown profile '" + std::string(name) + "'");
}

std::string unit_caveat(std::string_view name) {
  if (name == "h100-node")
    return "caveat: update rates are node-wide (4 GPUs, 192 CPU threads) while B is per-GPU PCIe; "
           "the stride is sensitive to which unit is assumed";
  return {};
}

}  // namespace ioff::catalog
