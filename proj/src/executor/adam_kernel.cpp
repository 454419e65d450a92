// Built with -ffp-contract=off: the kernel must round identically on every
// call site, so no fused multiply-adds.
#include <cmath>

#include "ioff/error.hpp"
#include "ioff/executor.hpp"

namespace ioff {

void AdamHyper::validate() const {
  if (!std::isfinite(lr) || lr < 0) throw InvalidArgument("lr must be finite and >= 0");
  if (!(beta1 >= 0 && beta1 < 1)) throw InvalidArgument("beta1 must be in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw InvalidArgument("beta2 must be in [0, 1)");
  if (!(eps > 0)) throw InvalidArgument("eps must be > 0");
  if (step < 1) throw InvalidArgument("step must be >= 1");
}

void adam_step(std::span<float> p, std::span<float> m, std::span<float> v, std::span<const float> g,
               const AdamHyper& h) {
  const std::size_t n = p.size();
  if (m.size() != n || v.size() != n || g.size() != n)
    throw InvalidArgument("adam_step: state and gradient lengths differ");
  const float t = static_cast<float>(h.step);
  const float bc1 = 1.0f - std::pow(h.beta1, t);
  const float bc2 = 1.0f - std::pow(h.beta2, t);
  const float one_minus_b1 = 1.0f - h.beta1;
  const float one_minus_b2 = 1.0f - h.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const float gi = g[i];
    m[i] = h.beta1 * m[i] + one_minus_b1 * gi;
    v[i] = h.beta2 * v[i] + one_minus_b2 * (gi * gi);
    const float m_hat = m[i] / bc1;
    const float v_hat = v[i] / bc2;
    p[i] = p[i] - h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

void adam_step_subgroup(Subgroup& sg, std::span<const float> grads32, const AdamHyper& h) {
  if (grads32.size() != sg.size())
    throw InvalidArgument("subgroup " + std::to_string(sg.id) + " has " + std::to_string(sg.size()) +
                          " params, got " + std::to_string(grads32.size()) + " gradients");
  adam_step(sg.params32, sg.momentum32, sg.variance32, grads32, h);
}

}  // namespace ioff
