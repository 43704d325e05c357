#include "sofuse/optim.hpp"

#include <cmath>

namespace sofuse {

void Adam::step(std::span<Parameter* const> params) const {
  for (Parameter* p : params) step(*p);
}

void Adam::step(Parameter& p) const {
  p.step_count += 1;
  const double t = static_cast<double>(p.step_count);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  const double* mask = p.mask ? p.mask->raw() : nullptr;
  double* value = p.value.raw();
  double* m = p.adam_m.raw();
  double* v = p.adam_v.raw();
  const double* g = p.grad.raw();
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    if (mask && mask[i] == 0.0) {
      value[i] = 0.0;
      continue;
    }
    m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
    v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    value[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
  }
}

}  // namespace sofuse
