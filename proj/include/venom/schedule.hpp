#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "venom/errors.hpp"
#include "venom/rng.hpp"
#include "venom/tensor.hpp"

namespace venom {

/// Variance schedule over the training horizon plus the DDIM subsequence.
/// Vectors are indexed by timestep: beta[t] and alpha_bar[t] for t in
/// 1..T_train, with alpha_bar[0] = 1 and beta[0] unused.
///
/// The sampler works on "levels" 0..S: level 0 is the clean image and level
/// k > 0 sits at timestep sample_steps[k-1]. Reverse step k moves level k to
/// level k-1.
struct NoiseSchedule {
  int T_train = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;
  std::vector<int> sample_steps;

  std::size_t num_steps() const { return sample_steps.size(); }

  int timestep_at_level(std::size_t level) const {
    require(level <= num_steps(), "sampler level " + std::to_string(level) + " out of range");
    return level == 0 ? 0 : sample_steps[level - 1];
  }

  double alpha_bar_at(int t) const {
    require(t >= 0 && t <= T_train, "timestep " + std::to_string(t) + " out of range");
    return alpha_bar[static_cast<std::size_t>(t)];
  }

  double alpha_bar_at_level(std::size_t level) const { return alpha_bar_at(timestep_at_level(level)); }
};

inline std::vector<int> uniform_sample_steps(int T_train, std::size_t n_sample_steps) {
  std::vector<int> steps(n_sample_steps);
  for (std::size_t i = 0; i < n_sample_steps; ++i)
    steps[i] = static_cast<int>(((i + 1) * static_cast<std::size_t>(T_train)) / n_sample_steps);
  return steps;
}

/// Schedule from explicit betas (beta_1..beta_T).
inline NoiseSchedule schedule_from_betas(const std::vector<double>& betas, std::size_t n_sample_steps) {
  require(!betas.empty(), "schedule needs at least one beta");
  require(n_sample_steps >= 1 && n_sample_steps <= betas.size(),
          "n_sample_steps must lie in [1, T_train]");
  NoiseSchedule s;
  s.T_train = static_cast<int>(betas.size());
  s.beta.assign(1, 0.0);
  s.alpha_bar.assign(1, 1.0);
  for (double b : betas) {
    require(b > 0.0 && b < 1.0, "beta must lie in (0, 1)");
    s.beta.push_back(b);
    s.alpha_bar.push_back((1.0 - b) * s.alpha_bar.back());
  }
  s.beta_min = betas.front();
  s.beta_max = betas.back();
  s.sample_steps = uniform_sample_steps(s.T_train, n_sample_steps);
  return s;
}

/// Linear beta ramp from beta_min to beta_max over T_train steps.
inline NoiseSchedule build_schedule(int T_train = 200, double beta_min = 1e-4, double beta_max = 0.02,
                                    std::size_t n_sample_steps = 50) {
  require(T_train >= 1, "T_train must be positive");
  require(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0,
          "need 0 < beta_min <= beta_max < 1");
  require(n_sample_steps >= 1 && n_sample_steps <= static_cast<std::size_t>(T_train),
          "n_sample_steps must lie in [1, T_train]");
  std::vector<double> betas(static_cast<std::size_t>(T_train));
  for (int t = 1; t <= T_train; ++t) {
    const double frac = T_train == 1 ? 0.0 : static_cast<double>(t - 1) / (T_train - 1);
    betas[static_cast<std::size_t>(t - 1)] = beta_min + (beta_max - beta_min) * frac;
  }
  NoiseSchedule s = schedule_from_betas(betas, n_sample_steps);
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  return s;
}

struct ForwardDraw {
  Tensor z0;
  int t = 0;
  Tensor epsilon;
  Tensor zt;
};

/// zt = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps with a caller-supplied eps.
inline ForwardDraw forward_diffuse_with(const NoiseSchedule& s, const Tensor& z0, int t, Tensor epsilon) {
  require(t >= 1 && t <= s.T_train, "forward_diffuse timestep " + std::to_string(t) + " out of range");
  require(epsilon.shape() == z0.shape(), "noise shape must match z0");
  if (!z0.all_finite()) throw NumericError("forward_diffuse: non-finite z0");
  const double ab = s.alpha_bar_at(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor zt(z0.shape());
  for (std::size_t i = 0; i < zt.size(); ++i) zt[i] = a * z0[i] + b * epsilon[i];
  return ForwardDraw{z0, t, std::move(epsilon), std::move(zt)};
}

inline ForwardDraw forward_diffuse(const NoiseSchedule& s, const Tensor& z0, int t, Rng& rng) {
  return forward_diffuse_with(s, z0, t, Tensor::normal(z0.shape(), rng));
}

}  // namespace venom
