#include <cmath>
#include <string>

#include "facecap/diffusion.hpp"

namespace facecap::diffusion {

DiffusionSchedule build_schedule(std::size_t steps, double beta_start, double beta_end) {
  if (steps == 0) throw DiffusionError("schedule: step count must be positive");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw DiffusionError("schedule: need 0 < beta_start <= beta_end < 1");
  }
  DiffusionSchedule s;
  s.beta.assign(steps + 1, 0.0);
  s.alpha.assign(steps + 1, 1.0);
  s.alpha_bar.assign(steps + 1, 1.0);
  for (std::size_t t = 1; t <= steps; ++t) {
    const double f = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
    s.beta[t] = beta_start + (beta_end - beta_start) * f;
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

DiffusionSchedule::Posterior DiffusionSchedule::posterior(std::size_t t) const {
  if (t < 1 || t > steps()) {
    throw DiffusionError("posterior: step " + std::to_string(t) + " outside [1, " +
                         std::to_string(steps()) + "]");
  }
  const double ab = alpha_bar[t];
  const double ab_prev = alpha_bar[t - 1];
  return {beta[t] * std::sqrt(ab_prev) / (1.0 - ab),
          (1.0 - ab_prev) * std::sqrt(alpha[t]) / (1.0 - ab),
          beta[t] * (1.0 - ab_prev) / (1.0 - ab)};
}

Matrix forward_diffuse(const DiffusionSchedule& s, const Matrix& x0, std::size_t t,
                       const Matrix& noise) {
  if (t < 1 || t > s.steps()) {
    throw DiffusionError("forward_diffuse: step " + std::to_string(t) + " outside [1, " +
                         std::to_string(s.steps()) + "]");
  }
  if (!x0.same_shape(noise)) {
    throw ad::ShapeError("forward_diffuse: x0 " + x0.shape_string() + " vs noise " +
                         noise.shape_string());
  }
  const double a = std::sqrt(s.alpha_bar[t]);
  const double b = std::sqrt(1.0 - s.alpha_bar[t]);
  Matrix out = x0;
  for (std::size_t k = 0; k < out.size(); ++k) out.data[k] = a * x0.data[k] + b * noise.data[k];
  return out;
}

Matrix posterior_step(const DiffusionSchedule& s, const Matrix& x_t, const Matrix& x0_hat,
                      std::size_t t, const Matrix* noise) {
  const auto p = s.posterior(t);
  if (!x_t.same_shape(x0_hat)) {
    throw ad::ShapeError("posterior_step: x_t " + x_t.shape_string() + " vs x0 " +
                         x0_hat.shape_string());
  }
  Matrix out = x_t;
  const double sd = std::sqrt(p.variance);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out.data[k] = p.coef_x0 * x0_hat.data[k] + p.coef_xt * x_t.data[k];
    if (t > 1 && noise) out.data[k] += sd * noise->data[k];
  }
  return out;
}

}  // namespace facecap::diffusion
