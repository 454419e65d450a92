#include "ioff/perfmodel.hpp"

#include <algorithm>
#include <cmath>

#include "ioff/error.hpp"

namespace ioff {

StrideResult optimal_stride(const SystemProfile& profile) {
  profile.validate();
  const double B = profile.channel_params_per_s;
  const double numerator = 3.0 / B + 1.0 / profile.fast_update_params_per_s;
  const double denominator =
      1.0 / profile.cpu_update_params_per_s + 1.0 / profile.host_downscale_params_per_s - 1.0 / (2.0 * B);

  StrideResult r;
  if (!(denominator > 0.0)) return r;

  const double k_real = numerator / denominator;
  const int lo = std::max(1, static_cast<int>(std::floor(k_real)));
  const int hi = std::max(1, static_cast<int>(std::ceil(k_real)));
  // The estimate is linear in N and S, so any positive pair ranks the candidates.
  const double t_lo = estimate_update_time(profile, 1, 1, lo);
  const double t_hi = estimate_update_time(profile, 1, 1, hi);
  r.k_real = k_real;
  r.k = t_hi < t_lo ? hi : lo;
  r.gpu_fraction = 1.0 / (*r.k + 1);
  return r;
}

double estimate_update_time(const SystemProfile& profile, std::size_t num_subgroups, ParamCount subgroup_size,
                            std::optional<int> k, std::size_t static_residents) {
  profile.validate();
  if (static_residents > num_subgroups) throw InvalidArgument("static_residents exceeds num_subgroups");
  if (k && *k < 1) throw InvalidArgument("k must be >= 1");

  const double S = static_cast<double>(subgroup_size);
  const double B = profile.channel_params_per_s;
  const double cpu_one = S / profile.cpu_update_params_per_s + S / profile.host_downscale_params_per_s;
  const double fast_one = S / profile.fast_update_params_per_s;
  const double dynamic = static_cast<double>(num_subgroups - static_residents);
  const double statics = static_cast<double>(static_residents) * fast_one;

  if (!k) return statics + dynamic * (cpu_one + S / (2.0 * B));

  const double kk = static_cast<double>(*k);
  const double cpu_block = kk * cpu_one;
  const double transfer_block = 3.0 * S / B + kk * S / (2.0 * B) + fast_one;
  return statics + dynamic / (kk + 1.0) * std::max(cpu_block, transfer_block);
}

}  // namespace ioff
