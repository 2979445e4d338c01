#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "venom/venom.hpp"

namespace venom::testing {

/// eps_hat(z, t, c) = e for every input.
struct ConstantNoise {
  double e = 1.0;
  Tensor predict_noise(const Tensor& z, int, int) const { return Tensor(z.shape(), e); }
};

/// eps_hat depends only on t.
struct TimeOnlyNoise {
  Tensor predict_noise(const Tensor& z, int t, int) const {
    Tensor out(z.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(0.37 * t + 0.11 * static_cast<double>(i)) * 0.8;
    return out;
  }
};

struct ZeroNoise {
  Tensor predict_noise(const Tensor& z, int, int) const { return Tensor(z.shape(), 0.0); }
};

/// Fixed log-probabilities with a zero input gradient.
struct FixedClassifier {
  std::vector<double> probs;
  Tensor log_probs(const Tensor&) const {
    Tensor out({probs.size()});
    for (std::size_t k = 0; k < probs.size(); ++k) out[k] = std::log(probs[k]);
    return out;
  }
  Tensor input_log_prob_grad(const Tensor& x, int) const { return Tensor(x.shape(), 0.0); }
};

/// Predicts class `pick(x)` with probability 0.9 and returns a unit gradient.
struct ScriptedClassifier {
  std::function<int(const Tensor&)> pick;
  Tensor log_probs(const Tensor& x) const {
    Tensor out({kNumClasses}, std::log(0.1 / (kNumClasses - 1)));
    out[static_cast<std::size_t>(pick(x))] = std::log(0.9);
    return out;
  }
  Tensor input_log_prob_grad(const Tensor& x, int) const { return Tensor(x.shape(), 1.0); }
};

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::normal(std::move(shape), rng);
  for (double& v : t.values()) v *= scale;
  return t;
}

}  // namespace venom::testing
