#include "ioff/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>

#include "ioff/error.hpp"

namespace ioff {

Subgroup::Subgroup(std::size_t id_, std::size_t size)
    : id(id_), params32(size, 0.0f), momentum32(size, 0.0f), variance32(size, 0.0f) {
  grads.fp16.assign(size, Half{});
}

void Subgroup::check() const {
  const std::size_t s = params32.size();
  if (s == 0) throw ValidationError("subgroup " + std::to_string(id) + " is empty");
  if (momentum32.size() != s || variance32.size() != s || grads.size() != s)
    throw ValidationError("subgroup " + std::to_string(id) + " has mismatched state lengths");
}

ShardedOptimizer::ShardedOptimizer(const std::vector<ParamCount>& subgroup_sizes) {
  subgroups_.reserve(subgroup_sizes.size());
  offsets_.reserve(subgroup_sizes.size());
  for (std::size_t i = 0; i < subgroup_sizes.size(); ++i) {
    if (subgroup_sizes[i] == 0) throw InvalidArgument("subgroup sizes must be positive");
    offsets_.push_back(total_params_);
    subgroups_.emplace_back(i, static_cast<std::size_t>(subgroup_sizes[i]));
    total_params_ += subgroup_sizes[i];
  }
  model16_.assign(total_params_, Half{});
}

void ShardedOptimizer::randomize(std::uint64_t seed, float grad_scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uniform(-1.0f, 1.0f);
  for (auto& sg : subgroups_) {
    for (auto& p : sg.params32) p = uniform(rng);
    std::fill(sg.momentum32.begin(), sg.momentum32.end(), 0.0f);
    std::fill(sg.variance32.begin(), sg.variance32.end(), 0.0f);
  }
  refresh_model16();
  synthesize_gradients(seed ^ 0x9E3779B97F4A7C15ull, grad_scale);
}

void ShardedOptimizer::synthesize_gradients(std::uint64_t seed, float grad_scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, grad_scale);
  for (auto& sg : subgroups_) {
    sg.grads.precision = Precision::FP16;
    sg.grads.fp32.clear();
    sg.grads.fp16.resize(sg.size());
    for (auto& g : sg.grads.fp16) g = to_half(normal(rng));
  }
}

void ShardedOptimizer::refresh_model16() {
  for (const auto& sg : subgroups_) {
    downscale_rne(sg.params32, std::span<Half>(model16_).subspan(offsets_[sg.id], sg.size()));
  }
}

void ShardedOptimizer::check() const {
  ParamCount sum = 0;
  for (std::size_t i = 0; i < subgroups_.size(); ++i) {
    if (subgroups_[i].id != i) throw ValidationError("subgroup ids are not consecutive");
    subgroups_[i].check();
    sum += subgroups_[i].size();
  }
  if (sum != total_params_) throw ValidationError("subgroup sizes do not sum to total_params");
  if (model16_.size() != total_params_) throw ValidationError("model16 length mismatch");
}

bool ShardedOptimizer::model16_coherent() const {
  for (const auto& sg : subgroups_) {
    const std::size_t base = offsets_[sg.id];
    for (std::size_t i = 0; i < sg.size(); ++i) {
      if (model16_[base + i] != to_half(sg.params32[i])) return false;
    }
  }
  return true;
}

namespace {

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return false;
  }
  return true;
}

}  // namespace

bool ShardedOptimizer::state_equals(const ShardedOptimizer& other) const {
  if (subgroups_.size() != other.subgroups_.size()) return false;
  for (std::size_t i = 0; i < subgroups_.size(); ++i) {
    const auto& a = subgroups_[i];
    const auto& b = other.subgroups_[i];
    if (!bits_equal(a.params32, b.params32) || !bits_equal(a.momentum32, b.momentum32) ||
        !bits_equal(a.variance32, b.variance32))
      return false;
  }
  return model16_ == other.model16_;
}

void SystemProfile::validate() const {
  auto positive = [](double v, const char* field) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw InvalidArgument(std::string("profile field ") + field + " must be positive");
  };
  positive(cpu_update_params_per_s, "cpu_update_params_per_s");
  positive(fast_update_params_per_s, "fast_update_params_per_s");
  positive(host_downscale_params_per_s, "host_downscale_params_per_s");
  positive(channel_params_per_s, "channel_params_per_s");
  positive(pageable_h2d_bytes_per_s, "pageable_h2d_bytes_per_s");
  positive(pageable_d2h_bytes_per_s, "pageable_d2h_bytes_per_s");
  positive(fast_conversion_bytes_per_s, "fast_conversion_bytes_per_s");
  positive(host_conversion_bytes_per_s, "host_conversion_bytes_per_s");
  positive(host_alloc_unpinned_bytes_per_s, "host_alloc_unpinned_bytes_per_s");
  if (!(fast_capacity_bytes >= 0.0)) throw InvalidArgument("profile field fast_capacity_bytes must be >= 0");
  if (!(host_contention >= 1.0)) throw InvalidArgument("profile field host_contention must be >= 1");
}

std::vector<std::vector<ParamCount>> shard(ParamCount total_params, ParamCount subgroup_size,
                                           ParamCount num_ranks) {
  if (total_params == 0 || subgroup_size == 0 || num_ranks == 0)
    throw InvalidArgument("shard: arguments must be positive");
  const ParamCount per_rank = (total_params + num_ranks - 1) / num_ranks;
  std::vector<std::vector<ParamCount>> out(num_ranks);
  ParamCount remaining = total_params;
  for (auto& rank : out) {
    ParamCount share = std::min(per_rank, remaining);
    remaining -= share;
    while (share > 0) {
      const ParamCount chunk = std::min(subgroup_size, share);
      rank.push_back(chunk);
      share -= chunk;
    }
  }
  return out;
}

FootprintReport footprint(ParamCount total_params, ParamCount subgroup_size) {
  if (total_params == 0 || subgroup_size == 0) throw InvalidArgument("footprint: arguments must be positive");
  FootprintReport r;
  r.model16_bytes = 2 * total_params;
  r.grads16_bytes = 2 * total_params;
  r.optimizer32_bytes = 16 * total_params;
  r.per_gpu_subgroup_count = (total_params + subgroup_size - 1) / subgroup_size;
  r.per_subgroup_state_bytes = 12 * subgroup_size;
  return r;
}

}  // namespace ioff
