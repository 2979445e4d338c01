#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <numeric>
#include <string>
#include <vector>

#include "venom/autodiff.hpp"
#include "venom/dataset.hpp"
#include "venom/errors.hpp"
#include "venom/nn.hpp"
#include "venom/rng.hpp"

namespace venom {

/// Anything exposing class log-probabilities for one image.
template <class C>
concept ProbabilisticClassifier = requires(const C& c, const Tensor& x) {
  { c.log_probs(x) } -> std::convertible_to<Tensor>;
};

/// A classifier that can also differentiate log p(y|x) with respect to x.
template <class C>
concept DifferentiableClassifier = ProbabilisticClassifier<C> && requires(const C& c, const Tensor& x, int y) {
  { c.input_log_prob_grad(x, y) } -> std::convertible_to<Tensor>;
};

template <ProbabilisticClassifier C>
int predict_label(const C& clf, const Tensor& x) {
  const Tensor lp = clf.log_probs(x);
  return static_cast<int>(argmax(lp.values()));
}

/// Row-wise log-softmax of the network output for a flattened input.
inline Tensor mlp_log_probs(const Mlp& net, const Tensor& x) {
  ad::Tape tape;
  auto p = bind_parameters(tape, net.params(), false);
  const Tensor flat = x.rank() == 1 || (x.rank() == 2 && x.cols() == net.input_width())
                          ? x
                          : x.reshaped({x.size() / net.input_width(), net.input_width()});
  return tape.log_softmax(net.forward(tape, p, tape.constant(flat))).value();
}

/// Exact reverse-mode gradient of log p(y|x) with respect to a single input;
/// the result has x's shape. Network parameters are not differentiated.
inline Tensor mlp_input_log_prob_grad(const Mlp& net, const Tensor& x, int y) {
  require(x.size() == net.input_width(), "input_log_prob_grad expects a single input");
  require(y >= 0 && static_cast<std::size_t>(y) < net.output_width(), "label out of range");
  ad::Tape tape;
  auto p = bind_parameters(tape, net.params(), false);
  ad::Var xv = tape.variable(x.reshaped({1, net.input_width()}));
  ad::Var lp = tape.log_softmax(net.forward(tape, p, xv));
  Tensor pick({1, net.output_width()}, 0.0);
  pick[static_cast<std::size_t>(y)] = 1.0;
  tape.backward(tape.sum(lp * tape.constant(std::move(pick))));
  return tape.grad(xv).reshaped(x.shape());
}

enum class Arch { kA = 0, kB = 1 };

inline const char* arch_name(Arch a) { return a == Arch::kA ? "a" : "b"; }

inline Arch parse_arch(const std::string& s) {
  if (s == "a" || s == "A") return Arch::kA;
  if (s == "b" || s == "B") return Arch::kB;
  throw ConfigError("unknown architecture '" + s + "' (expected a or b)");
}

/// A: 256-128-64-6 relu. B: 256-96-96-96-6 tanh.
inline std::vector<std::size_t> arch_widths(Arch a) {
  if (a == Arch::kA) return {kImagePixels, 128, 64, kNumClasses};
  return {kImagePixels, 96, 96, 96, kNumClasses};
}

inline Activation arch_activation(Arch a) { return a == Arch::kA ? Activation::kRelu : Activation::kTanh; }

/// Victim model f with p_f(y|x) = softmax(logits). Immutable after training.
class VictimClassifier {
 public:
  VictimClassifier() = default;
  VictimClassifier(Arch arch, Rng& rng) : arch_(arch), net_(arch_widths(arch), arch_activation(arch), rng) {}
  VictimClassifier(Arch arch, ParameterSet params)
      : arch_(arch), net_(arch_widths(arch), arch_activation(arch), std::move(params)) {}

  Arch arch() const { return arch_; }
  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }

  /// Penultimate activations: 64 for A, 96 for B.
  std::size_t feature_dim() const { return net_.widths()[net_.widths().size() - 2]; }

  /// Single image -> [6] log-probabilities.
  Tensor log_probs(const Tensor& x) const {
    require(x.size() == kImagePixels, "classifier expects one 16x16 image");
    return mlp_log_probs(net_, x.reshaped({kImagePixels})).reshaped({kNumClasses});
  }

  /// Batch [B, 256] (or [B, 16, 16]) -> [B, 6].
  Tensor batch_log_probs(const Tensor& x) const { return mlp_log_probs(net_, x); }

  double log_prob(const Tensor& x, int y) const {
    require(y >= 0 && y < static_cast<int>(kNumClasses), "label out of range");
    return log_probs(x)[static_cast<std::size_t>(y)];
  }

  Tensor input_log_prob_grad(const Tensor& x, int y) const { return mlp_input_log_prob_grad(net_, x, y); }

  int predict(const Tensor& x) const { return predict_label(*this, x); }

  std::vector<int> predict_batch(const Tensor& x) const {
    const Tensor lp = batch_log_probs(x);
    std::vector<int> out(lp.rows());
    for (std::size_t r = 0; r < lp.rows(); ++r)
      out[r] = static_cast<int>(argmax(std::span<const double>(lp.data() + r * kNumClasses, kNumClasses)));
    return out;
  }

  /// Penultimate-layer features for a batch [B, 256] -> [B, feature_dim].
  Tensor features(const Tensor& x) const {
    ad::Tape tape;
    auto p = bind_parameters(tape, net_.params(), false);
    const Tensor flat = x.reshaped({x.size() / kImagePixels, kImagePixels});
    auto layers = net_.forward_layers(tape, p, tape.constant(flat));
    return layers[layers.size() - 2].value();
  }

 private:
  Arch arch_ = Arch::kA;
  Mlp net_;
};

struct ClassifierTrainConfig {
  std::size_t epochs = 20;
  std::size_t batch = 64;
  double lr = 1e-3;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct AccuracyReport {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  /// Test accuracy under a single-step sign-gradient perturbation; only
  /// filled by adversarial training.
  double perturbed_accuracy = std::nan("");
  std::vector<EpochStats> trace;
};

struct ClassifierTrainResult {
  VictimClassifier classifier;
  AccuracyReport report;
};

inline double accuracy(const VictimClassifier& clf, const Dataset& data) {
  require(data.size() > 0, "accuracy on an empty dataset");
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto pred = clf.predict_batch(data.batch(all));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) hits += pred[i] == data.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace detail {

/// Mean cross-entropy over a batch, composed from log_softmax, mul and sum.
inline ad::Var cross_entropy(ad::Tape& tape, ad::Var logits, const std::vector<int>& labels) {
  const std::size_t batch = labels.size();
  Tensor pick({batch, kNumClasses}, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    pick[b * kNumClasses + static_cast<std::size_t>(labels[b])] = -1.0 / static_cast<double>(batch);
  return tape.sum(tape.log_softmax(logits) * tape.constant(std::move(pick)));
}

/// x + eps * sign(d loss / d x) for a batch.
inline Tensor sign_gradient_perturb(const VictimClassifier& clf, const Tensor& x, const std::vector<int>& labels,
                                    double eps) {
  ad::Tape tape;
  auto p = bind_parameters(tape, clf.net().params(), false);
  ad::Var xv = tape.variable(x);
  tape.backward(cross_entropy(tape, clf.net().forward(tape, p, xv), labels));
  const Tensor& g = tape.grad(xv);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += eps * (g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0));
  return out;
}

inline ClassifierTrainResult train_impl(const Dataset& train, const Dataset& test, Arch arch,
                                        const ClassifierTrainConfig& cfg, double attack_eps, Rng& rng) {
  require(train.size() > 0 && test.size() > 0, "classifier training needs train and test data");
  require(cfg.epochs >= 1 && cfg.batch >= 1, "epochs and batch must be positive");
  ClassifierTrainResult out{VictimClassifier(arch, rng), {}};
  AdamState adam(out.classifier.net().params(), cfg.lr);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<int> labels(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b) labels[b] = train.labels[idx[b]];
      Tensor x = train.batch(idx);
      if (attack_eps > 0.0) x = sign_gradient_perturb(out.classifier, x, labels, attack_eps);

      ad::Tape tape;
      auto p = bind_parameters(tape, out.classifier.net().params());
      double loss_value = 0.0;
      try {
        ad::Var loss = cross_entropy(tape, out.classifier.net().forward(tape, p, tape.constant(std::move(x))), labels);
        loss_value = loss.value().item();
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw NumericError("classifier training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
      }
      loss_sum += loss_value;
      ++batches;
      adam.step(out.classifier.net().params(), collect_gradients(tape, p));
    }
    out.report.trace.push_back(EpochStats{epoch, loss_sum / static_cast<double>(batches),
                                          accuracy(out.classifier, train), accuracy(out.classifier, test)});
  }
  out.report.train_accuracy = out.report.trace.back().train_accuracy;
  out.report.test_accuracy = out.report.trace.back().test_accuracy;
  return out;
}

}  // namespace detail

/// Test accuracy when every test image is replaced by its single-step
/// sign-gradient perturbation against `clf` itself.
inline double perturbed_accuracy(const VictimClassifier& clf, const Dataset& test, double eps) {
  std::vector<std::size_t> all(test.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Tensor x = detail::sign_gradient_perturb(clf, test.batch(all), test.labels, eps);
  const auto pred = clf.predict_batch(x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) hits += pred[i] == test.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

/// Cross-entropy training with Adam; reports train/test accuracy per epoch.
inline ClassifierTrainResult train_classifier(const Dataset& train, const Dataset& test, Arch arch,
                                              const ClassifierTrainConfig& cfg, Rng& rng) {
  return detail::train_impl(train, test, arch, cfg, 0.0, rng);
}

/// Trains every batch on x + eps * sign(grad_x loss). eps == 0 is plain
/// training.
inline ClassifierTrainResult adv_train_classifier(const Dataset& train, const Dataset& test, Arch arch,
                                                  double attack_eps, const ClassifierTrainConfig& cfg, Rng& rng) {
  require(attack_eps >= 0.0, "attack_eps must be non-negative");
  auto out = detail::train_impl(train, test, arch, cfg, attack_eps, rng);
  if (attack_eps > 0.0) out.report.perturbed_accuracy = perturbed_accuracy(out.classifier, test, attack_eps);
  return out;
}

}  // namespace venom
