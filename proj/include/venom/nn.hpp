#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "venom/autodiff.hpp"
#include "venom/errors.hpp"
#include "venom/rng.hpp"
#include "venom/tensor.hpp"

namespace venom {

/// Ordered, named parameter tensors. Order is insertion order and is what
/// the optimizer and the checkpoint writer iterate over.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  Tensor& add(std::string name, Tensor value) {
    require(!contains(name), "duplicate parameter " + name);
    entries_.push_back({std::move(name), std::move(value)});
    return entries_.back().value;
  }

  bool contains(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return true;
    return false;
  }

  Tensor& get(const std::string& name) {
    for (auto& e : entries_)
      if (e.name == name) return e.value;
    throw ContractViolation("unknown parameter " + name);
  }
  const Tensor& get(const std::string& name) const {
    return const_cast<ParameterSet*>(this)->get(name);
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  bool all_finite() const {
    for (const auto& e : entries_)
      if (!e.value.all_finite()) return false;
    return true;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i)
      if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value))
        return false;
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

enum class Activation { kRelu, kTanh };

/// Registers every parameter of a set on a tape, in order.
inline std::vector<ad::Var> bind_parameters(ad::Tape& tape, const ParameterSet& params,
                                            bool requires_grad = true) {
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const auto& e : params.entries()) vars.push_back(tape.parameter(e.value, requires_grad));
  return vars;
}

/// Collects gradients for every bound parameter after backward. Parameters
/// the output does not depend on get zero gradients.
inline std::vector<Tensor> collect_gradients(const ad::Tape& tape, const std::vector<ad::Var>& vars) {
  std::vector<Tensor> grads;
  grads.reserve(vars.size());
  for (ad::Var v : vars)
    grads.push_back(tape.has_grad(v) ? tape.grad(v) : Tensor(v.shape(), 0.0));
  return grads;
}

/// Fully connected network: affine layers with an activation between them
/// and none after the last. Parameters are named "l{i}.weight" [in,out] and
/// "l{i}.bias" [out].
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<std::size_t> widths, Activation act, Rng& rng)
      : widths_(std::move(widths)), act_(act) {
    require(widths_.size() >= 2, "an MLP needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
      const std::size_t in = widths_[i], out = widths_[i + 1];
      // He init for relu, Xavier for tanh.
      const double stddev = act_ == Activation::kRelu ? std::sqrt(2.0 / static_cast<double>(in))
                                                       : std::sqrt(1.0 / static_cast<double>(in));
      Tensor w({in, out});
      for (double& v : w.values()) v = stddev * rng.normal();
      params_.add(layer_name(i, "weight"), std::move(w));
      params_.add(layer_name(i, "bias"), Tensor({out}, 0.0));
    }
  }

  /// Adopts an existing parameter set; used by checkpoint loading and tests.
  Mlp(std::vector<std::size_t> widths, Activation act, ParameterSet params)
      : widths_(std::move(widths)), act_(act), params_(std::move(params)) {
    require(widths_.size() >= 2, "an MLP needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
      require(params_.get(layer_name(i, "weight")).shape() == Shape{widths_[i], widths_[i + 1]},
              "layer " + std::to_string(i) + " weight shape mismatch");
      require(params_.get(layer_name(i, "bias")).shape() == Shape{widths_[i + 1]},
              "layer " + std::to_string(i) + " bias shape mismatch");
    }
  }

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t input_width() const { return widths_.front(); }
  std::size_t output_width() const { return widths_.back(); }
  Activation activation() const { return act_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::size_t layer_count() const { return widths_.size() - 1; }

  /// Records the forward pass. `params` must come from bind_parameters on
  /// this network. Returns all layer outputs; the last is the network output
  /// and the one before it the penultimate features.
  std::vector<ad::Var> forward_layers(ad::Tape& tape, const std::vector<ad::Var>& params,
                                      ad::Var x) const {
    check_input(x.value());
    if (!params_.all_finite()) throw NumericError("non-finite network parameter");
    std::vector<ad::Var> outs;
    ad::Var h = x;
    for (std::size_t i = 0; i < layer_count(); ++i) {
      h = tape.affine(h, params[2 * i], params[2 * i + 1]);
      if (i + 1 < layer_count()) h = act_ == Activation::kRelu ? tape.relu(h) : tape.tanh(h);
      outs.push_back(h);
    }
    return outs;
  }

  ad::Var forward(ad::Tape& tape, const std::vector<ad::Var>& params, ad::Var x) const {
    return forward_layers(tape, params, x).back();
  }

  /// Tape-free convenience evaluation: input [n] or [batch, n].
  Tensor evaluate(const Tensor& input) const {
    ad::Tape tape;
    auto vars = bind_parameters(tape, params_, false);
    return forward(tape, vars, tape.constant(input)).value();
  }

 private:
  static std::string layer_name(std::size_t i, const char* what) {
    return "l" + std::to_string(i) + "." + what;
  }

  void check_input(const Tensor& x) const {
    if (x.cols() != input_width())
      throw ContractViolation("network expects input width " + std::to_string(input_width()) +
                              ", got shape " + shape_string(x.shape()));
  }

  std::vector<std::size_t> widths_;
  Activation act_ = Activation::kRelu;
  ParameterSet params_;
};

struct FiniteDiffReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Builds a scalar from an input leaf; the probe for finite_diff_check.
using ScalarFn = std::function<ad::Var(ad::Tape&, ad::Var)>;

/// Compares reverse-mode gradients of `fn` at `input` with central finite
/// differences. Relative error per coordinate is |a-n| / max(|a|, |n|, 1e-2).
inline FiniteDiffReport finite_diff_check(const ScalarFn& fn, const Tensor& input,
                                          double tolerance, double step = 1e-5,
                                          const std::function<void(ad::Tape&)>& prepare = {}) {
  require(tolerance > 0.0, "finite_diff_check tolerance must be positive");
  ad::Tape tape;
  if (prepare) prepare(tape);
  ad::Var x = tape.variable(input);
  ad::Var y = fn(tape, x);
  tape.backward(y);
  const Tensor analytic = tape.has_grad(x) ? tape.grad(x) : Tensor(input.shape(), 0.0);

  auto eval = [&](const Tensor& at) {
    ad::Tape t;
    return fn(t, t.constant(at)).value().item();
  };

  FiniteDiffReport report;
  Tensor probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = eval(probe);
    probe[i] = orig - step;
    const double down = eval(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-2});
    const double err = std::abs(analytic[i] - numeric) / denom;
    if (i == 0 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

/// Adam with bias-corrected moments.
class AdamState {
 public:
  AdamState(const ParameterSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
            double floor = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), floor_(floor) {
    require(lr > 0.0, "learning rate must be positive");
    for (const auto& e : params.entries()) {
      m_.emplace_back(e.value.shape(), 0.0);
      v_.emplace_back(e.value.shape(), 0.0);
    }
  }

  void step(ParameterSet& params, const std::vector<Tensor>& grads) {
    require(params.size() == m_.size() && grads.size() == m_.size(),
            "adam_step parameter count mismatch");
    ++step_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t k = 0; k < m_.size(); ++k) {
      Tensor& p = params.entries()[k].value;
      const Tensor& g = grads[k];
      require(p.shape() == g.shape() && p.shape() == m_[k].shape(),
              "adam_step shape mismatch for " + params.entries()[k].name);
      for (std::size_t i = 0; i < p.size(); ++i) {
        m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
        v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
        const double mhat = m_[k][i] / c1;
        const double vhat = v_[k][i] / c2;
        p[i] -= lr_ * mhat / (std::sqrt(vhat) + floor_);
      }
    }
  }

  std::size_t steps() const { return step_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) {
    require(lr > 0.0, "learning rate must be positive");
    lr_ = lr;
  }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  double lr_, beta1_, beta2_, floor_;
  std::size_t step_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace venom
