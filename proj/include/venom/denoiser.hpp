#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "venom/autodiff.hpp"
#include "venom/dataset.hpp"
#include "venom/errors.hpp"
#include "venom/nn.hpp"
#include "venom/rng.hpp"
#include "venom/schedule.hpp"

namespace venom {

/// Conditional noise predictor eps(z_t, t, c): an MLP over the flattened
/// image, a fixed sinusoidal time embedding (dim 32) and a learned class
/// embedding (6 classes + null token, dim 16). Each hidden layer sums an
/// affine map of its input with projections of both embeddings, which is
/// one affine map over the concatenation.
class NoisePredictor {
 public:
  static constexpr std::size_t kTimeDim = 32;
  static constexpr std::size_t kClassDim = 16;
  static constexpr int kNullClass = static_cast<int>(kNumClasses);
  static constexpr std::size_t kClassTokens = kNumClasses + 1;

  NoisePredictor() = default;

  NoisePredictor(int T_train, std::size_t hidden, Rng& rng) : T_train_(T_train) {
    require(T_train >= 1 && hidden >= 1, "bad denoiser geometry");
    auto normal = [&](Shape shape, double stddev) {
      Tensor t(std::move(shape));
      for (double& v : t.values()) v = stddev * rng.normal();
      return t;
    };
    const double in_std = std::sqrt(2.0 / static_cast<double>(kImagePixels + kTimeDim + kClassDim));
    params_.add("class_embed", normal({kClassTokens, kClassDim}, 1.0));
    params_.add("in.z", normal({kImagePixels, hidden}, in_std));
    params_.add("in.t", normal({kTimeDim, hidden}, in_std));
    params_.add("in.c", normal({kClassDim, hidden}, in_std));
    params_.add("in.bias", Tensor({hidden}, 0.0));
    const double h_std = std::sqrt(2.0 / static_cast<double>(hidden + kTimeDim + kClassDim));
    params_.add("h1.weight", normal({hidden, hidden}, h_std));
    params_.add("h1.t", normal({kTimeDim, hidden}, h_std));
    params_.add("h1.c", normal({kClassDim, hidden}, h_std));
    params_.add("h1.bias", Tensor({hidden}, 0.0));
    // Zero-initialised output: the untrained model predicts eps = 0.
    params_.add("out.weight", Tensor({hidden, kImagePixels}, 0.0));
    params_.add("out.bias", Tensor({kImagePixels}, 0.0));
    build_time_table();
  }

  /// Adopts loaded weights (names as produced by the constructor above).
  NoisePredictor(int T_train, ParameterSet params) : T_train_(T_train), params_(std::move(params)) {
    static const char* kNames[] = {"class_embed", "in.z", "in.t", "in.c", "in.bias",
                                   "h1.weight", "h1.t", "h1.c", "h1.bias", "out.weight", "out.bias"};
    ParameterSet ordered;
    for (const char* n : kNames) ordered.add(n, params_.get(n));
    params_ = std::move(ordered);
    const std::size_t hidden = params_.get("in.bias").size();
    require(params_.get("class_embed").shape() == Shape{kClassTokens, kClassDim}, "class embedding arity");
    require(params_.get("in.z").shape() == Shape{kImagePixels, hidden}, "in.z shape");
    require(params_.get("in.t").shape() == Shape{kTimeDim, hidden}, "in.t shape");
    require(params_.get("in.c").shape() == Shape{kClassDim, hidden}, "in.c shape");
    require(params_.get("h1.weight").shape() == Shape{hidden, hidden}, "h1 shape");
    require(params_.get("h1.t").shape() == Shape{kTimeDim, hidden}, "h1.t shape");
    require(params_.get("h1.c").shape() == Shape{kClassDim, hidden}, "h1.c shape");
    require(params_.get("out.weight").shape() == Shape{hidden, kImagePixels}, "out shape");
    build_time_table();
  }

  int T_train() const { return T_train_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Sinusoidal embedding row for timestep t.
  std::span<const double> time_embedding(int t) const {
    require(t >= 0 && t <= T_train_, "timestep out of range for embedding");
    return {time_table_.data() + static_cast<std::size_t>(t) * kTimeDim, kTimeDim};
  }

  /// Records the forward pass for a batch: z [B, 256], one timestep and one
  /// class token per row.
  ad::Var forward(ad::Tape& tape, const std::vector<ad::Var>& p, ad::Var z, std::span<const int> t,
                  std::span<const int> cls) const {
    const std::size_t batch = z.value().rows();
    require(z.value().cols() == kImagePixels, "denoiser expects 256-wide rows");
    require(t.size() == batch && cls.size() == batch, "timestep/class count must match batch");
    if (!params_.all_finite()) throw NumericError("non-finite denoiser parameter");
    Tensor temb({batch, kTimeDim});
    std::vector<std::size_t> rows(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      auto e = time_embedding(t[i]);
      std::copy(e.begin(), e.end(), temb.data() + i * kTimeDim);
      require(cls[i] >= 0 && cls[i] <= kNullClass, "class token out of range");
      rows[i] = static_cast<std::size_t>(cls[i]);
    }
    ad::Var cemb = tape.gather_row(p[0], std::move(rows));
    ad::Var tv = tape.constant(std::move(temb));
    ad::Var h = tape.relu(tape.affine(z, p[1], p[4]) + tape.matmul(tv, p[2]) + tape.matmul(cemb, p[3]));
    h = tape.relu(tape.affine(h, p[5], p[8]) + tape.matmul(tv, p[6]) + tape.matmul(cemb, p[7]));
    return tape.affine(h, p[9], p[10]);
  }

  Tensor predict_batch(const Tensor& z, std::span<const int> t, std::span<const int> cls) const {
    ad::Tape tape;
    auto p = bind_parameters(tape, params_, false);
    return forward(tape, p, tape.constant(z), t, cls).value();
  }

  /// Single-image prediction; the output has the input's shape.
  Tensor predict_noise(const Tensor& z, int t, int cls) const {
    require(z.size() == kImagePixels, "denoiser expects a 16x16 image");
    const int ts[1] = {t};
    const int cs[1] = {cls};
    return predict_batch(z.reshaped({1, kImagePixels}), ts, cs).reshaped(z.shape());
  }

 private:
  void build_time_table() {
    time_table_.assign(static_cast<std::size_t>(T_train_ + 1) * kTimeDim, 0.0);
    constexpr std::size_t half = kTimeDim / 2;
    for (int t = 0; t <= T_train_; ++t)
      for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        const std::size_t base = static_cast<std::size_t>(t) * kTimeDim;
        time_table_[base + 2 * i] = std::sin(t * freq);
        time_table_[base + 2 * i + 1] = std::cos(t * freq);
      }
  }

  int T_train_ = 0;
  ParameterSet params_;
  std::vector<double> time_table_;
};

struct DenoiserTrainConfig {
  std::size_t steps = 20000;
  std::size_t batch = 64;
  double lr = 1e-3;
  double lr_final = 1e-5;  // cosine decay target
  double cfg_dropout = 0.1;
  std::size_t hidden = 512;
  /// Exponential moving average of the weights; the returned model uses the
  /// averaged weights. 0 disables averaging.
  double ema_decay = 0.999;
};

struct DenoiserTrainResult {
  NoisePredictor model;
  std::vector<double> loss_trace;
};

/// Minimises the per-pixel mean of (eps - eps_theta(z_t, t, c))^2 with Adam.
/// With probability cfg_dropout the class token is replaced by the null token.
inline DenoiserTrainResult train_denoiser(const NoiseSchedule& schedule, const Dataset& data,
                                          const DenoiserTrainConfig& cfg, Rng& rng) {
  require(data.size() > 0, "train_denoiser: empty dataset");
  require(cfg.steps >= 1 && cfg.batch >= 1, "train_denoiser: steps and batch must be positive");
  require(cfg.cfg_dropout >= 0.0 && cfg.cfg_dropout <= 1.0, "cfg_dropout must lie in [0, 1]");
  require(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0, "ema_decay must lie in [0, 1)");

  DenoiserTrainResult out{NoisePredictor(schedule.T_train, cfg.hidden, rng), {}};
  out.loss_trace.reserve(cfg.steps);
  AdamState adam(out.model.params(), cfg.lr);
  ParameterSet ema = out.model.params();

  std::vector<std::size_t> idx(cfg.batch);
  std::vector<int> ts(cfg.batch), cls(cfg.batch);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double progress = static_cast<double>(step) / static_cast<double>(cfg.steps);
    adam.set_learning_rate(cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) *
                                              (1.0 + std::cos(std::numbers::pi * progress)));
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      idx[b] = rng.index(data.size());
      ts[b] = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(schedule.T_train)));
      cls[b] = rng.bernoulli(cfg.cfg_dropout) ? NoisePredictor::kNullClass : data.labels[idx[b]];
    }
    Tensor z0 = data.batch(idx);
    Tensor neg_eps({cfg.batch, kImagePixels});
    Tensor zt({cfg.batch, kImagePixels});
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const double ab = schedule.alpha_bar_at(ts[b]);
      const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
      for (std::size_t i = 0; i < kImagePixels; ++i) {
        const double e = rng.normal();
        const std::size_t k = b * kImagePixels + i;
        zt[k] = a * z0[k] + s * e;
        neg_eps[k] = -e;
      }
    }

    ad::Tape tape;
    auto p = bind_parameters(tape, out.model.params());
    double loss_value = 0.0;
    try {
      ad::Var pred = out.model.forward(tape, p, tape.constant(std::move(zt)), ts, cls);
      ad::Var loss = tape.mean(tape.square(pred + tape.constant(std::move(neg_eps))));
      loss_value = loss.value().item();
      tape.backward(loss);
    } catch (const NumericError& e) {
      throw NumericError("denoiser training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(loss_value))
      throw NumericError("denoiser training diverged at step " + std::to_string(step));
    out.loss_trace.push_back(loss_value);
    adam.step(out.model.params(), collect_gradients(tape, p));
    if (cfg.ema_decay > 0.0) {
      // warm-up keeps early averages from clinging to the random init
      const double d = std::min(cfg.ema_decay, (1.0 + static_cast<double>(step)) / (10.0 + static_cast<double>(step)));
      for (std::size_t j = 0; j < ema.size(); ++j) {
        Tensor& avg = ema.entries()[j].value;
        const Tensor& cur = out.model.params().entries()[j].value;
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = d * avg[i] + (1.0 - d) * cur[i];
      }
    }
  }
  if (cfg.ema_decay > 0.0) out.model = NoisePredictor(schedule.T_train, std::move(ema));
  return out;
}

}  // namespace venom
