#pragma once

#include <cmath>
#include <concepts>
#include <vector>

#include "venom/denoiser.hpp"
#include "venom/errors.hpp"
#include "venom/rng.hpp"
#include "venom/schedule.hpp"
#include "venom/tensor.hpp"

namespace venom {

/// Anything that predicts the noise in z at timestep t for class token c.
template <class M>
concept NoiseModel = requires(const M& m, const Tensor& z, int t, int c) {
  { m.predict_noise(z, t, c) } -> std::convertible_to<Tensor>;
};

inline constexpr int kUnconditional = NoisePredictor::kNullClass;

/// Classifier-free guided prediction. With cfg_scale == 1 (or the null
/// token as class) this is the plain conditional prediction.
template <NoiseModel M>
Tensor guided_noise(const M& model, const Tensor& z, int t, int cls, double cfg_scale) {
  Tensor eps = model.predict_noise(z, t, cls);
  if (cfg_scale != 1.0 && cls != kUnconditional) {
    const Tensor eps_null = model.predict_noise(z, t, kUnconditional);
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = eps_null[i] + cfg_scale * (eps[i] - eps_null[i]);
  }
  if (!eps.all_finite()) throw NumericError("non-finite noise prediction at t=" + std::to_string(t));
  return eps;
}

/// Deterministic DDIM transfer between two noise levels given a noise
/// estimate: predict the clean image, then re-noise it to the target level.
inline Tensor ddim_transfer(const Tensor& z, const Tensor& eps, double ab_from, double ab_to) {
  require(z.shape() == eps.shape(), "ddim: noise shape mismatch");
  const double a_from = std::sqrt(ab_from), s_from = std::sqrt(1.0 - ab_from);
  const double a_to = std::sqrt(ab_to), s_to = std::sqrt(1.0 - ab_to);
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i)
    out[i] = a_to * (z[i] - s_from * eps[i]) / a_from + s_to * eps[i];
  return out;
}

/// Reverse step k: level k -> level k-1 (k in 1..S), noise predicted at the
/// higher level.
template <NoiseModel M>
Tensor ddim_reverse_step(const NoiseSchedule& s, const M& model, const Tensor& z, std::size_t step,
                         int cls, double cfg_scale = 1.0) {
  require(step >= 1 && step <= s.num_steps(), "reverse step index " + std::to_string(step) + " out of range");
  if (!z.all_finite()) throw NumericError("ddim_reverse_step: non-finite input");
  const int t_hi = s.timestep_at_level(step);
  const Tensor eps = guided_noise(model, z, t_hi, cls, cfg_scale);
  return ddim_transfer(z, eps, s.alpha_bar_at_level(step), s.alpha_bar_at_level(step - 1));
}

/// Inversion step k: level k-1 -> level k. The noise is evaluated on the
/// lower-level latent with the higher timestep, so under any t-only noise
/// function this step and ddim_reverse_step(k) are exact inverses.
template <NoiseModel M>
Tensor ddim_invert_step(const NoiseSchedule& s, const M& model, const Tensor& z, std::size_t step,
                        int cls, double cfg_scale = 1.0) {
  require(step >= 1 && step <= s.num_steps(), "invert step index " + std::to_string(step) + " out of range");
  if (!z.all_finite()) throw NumericError("ddim_invert_step: non-finite input");
  const int t_hi = s.timestep_at_level(step);
  const Tensor eps = guided_noise(model, z, t_hi, cls, cfg_scale);
  return ddim_transfer(z, eps, s.alpha_bar_at_level(step - 1), s.alpha_bar_at_level(step));
}

/// Runs reverse steps from `from_level` down to level 0. No clipping.
template <NoiseModel M>
Tensor reverse_from(const NoiseSchedule& s, const M& model, Tensor z, std::size_t from_level, int cls,
                    double cfg_scale = 1.0) {
  for (std::size_t k = from_level; k >= 1; --k) z = ddim_reverse_step(s, model, z, k, cls, cfg_scale);
  return z;
}

/// Full reverse pass from z_T; the result is clipped to [-1, 1] only here.
template <NoiseModel M>
Tensor sample(const NoiseSchedule& s, const M& model, int cls, double cfg_scale, const Tensor& z_T) {
  require(cls >= 0 && cls <= kUnconditional, "sample: invalid class token");
  return clipped(reverse_from(s, model, z_T, s.num_steps(), cls, cfg_scale));
}

template <NoiseModel M>
Tensor sample(const NoiseSchedule& s, const M& model, int cls, double cfg_scale, Rng& rng) {
  return sample(s, model, cls, cfg_scale, Tensor::normal({kImageSide, kImageSide}, rng));
}

/// DDIM inversion of a clean image up to sampler level `depth`.
template <NoiseModel M>
Tensor invert_image(const NoiseSchedule& s, const M& model, const Tensor& x0, int cls, std::size_t depth,
                    double cfg_scale = 1.0) {
  require(depth <= s.num_steps(), "invert_image depth out of range");
  Tensor z = x0;
  for (std::size_t k = 1; k <= depth; ++k) z = ddim_invert_step(s, model, z, k, cls, cfg_scale);
  return z;
}

/// Diffusion purification: forward-diffuse to t* = ceil(fraction * T) with
/// fresh noise, then DDIM-denoise unconditionally through the sampler
/// timesteps below t* down to 0.
template <NoiseModel M>
Tensor purify(const NoiseSchedule& s, const M& model, const Tensor& x, double depth_fraction, Rng& rng) {
  require(depth_fraction > 0.0 && depth_fraction < 1.0, "purify depth_fraction must lie in (0, 1)");
  const int t_star = std::max(1, static_cast<int>(std::ceil(depth_fraction * s.T_train)));
  std::vector<int> path{t_star};
  for (auto it = s.sample_steps.rbegin(); it != s.sample_steps.rend(); ++it)
    if (*it < t_star) path.push_back(*it);
  path.push_back(0);

  Tensor z = forward_diffuse(s, x, t_star, rng).zt;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Tensor eps = guided_noise(model, z, path[i], kUnconditional, 1.0);
    z = ddim_transfer(z, eps, s.alpha_bar_at(path[i]), s.alpha_bar_at(path[i + 1]));
  }
  return clipped(std::move(z));
}

}  // namespace venom
