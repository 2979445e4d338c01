#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "venom/autodiff.hpp"
#include "venom/classifier.hpp"
#include "venom/ddim.hpp"
#include "venom/errors.hpp"
#include "venom/rng.hpp"
#include "venom/schedule.hpp"
#include "venom/tensor.hpp"

namespace venom {

enum class Mode { kNae, kUae };
enum class Direction { kTargeted, kUntargeted };
enum class SwitchState { kOn, kOff };

inline const char* mode_name(Mode m) { return m == Mode::kNae ? "nae" : "uae"; }
inline const char* direction_name(Direction d) { return d == Direction::kTargeted ? "targeted" : "untargeted"; }
inline const char* switch_name(SwitchState s) { return s == SwitchState::kOn ? "on" : "off"; }

inline Mode parse_mode(const std::string& s) {
  if (s == "nae") return Mode::kNae;
  if (s == "uae") return Mode::kUae;
  throw ConfigError("unknown mode '" + s + "' (expected nae or uae)");
}

inline Direction parse_direction(const std::string& s) {
  if (s == "targeted") return Direction::kTargeted;
  if (s == "untargeted") return Direction::kUntargeted;
  throw ConfigError("unknown direction '" + s + "' (expected targeted or untargeted)");
}

struct AttackConfig {
  Mode mode = Mode::kNae;
  Direction direction = Direction::kTargeted;
  std::size_t max_passes = 5;  // N
  std::size_t t_start = 12;    // guidance window is 0 < step <= t_start
  double scale = 0.5;          // s
  double beta = 0.5;           // momentum coefficient
  int cls = 0;                 // generation class c
  std::optional<int> target;   // y_a; chosen by select_target when absent
  std::optional<int> y_true;   // defaults to cls
  double cfg_scale = 1.0;
  std::uint64_t seed = 0;
  /// Adaptive switch. When false the switch is forced ON at every step.
  bool adaptive = true;
  /// Apply the update on the step where the switch turns OFF.
  bool apply_on_deactivation = true;
  /// Divide each guidance gradient by its L2 norm.
  bool normalize_gradient = false;
  bool log_trajectory = true;
  /// UAE inversion depth in sampler levels; 0 means the full sampler depth.
  std::size_t uae_depth = 0;
};

inline void validate(const AttackConfig& c, std::size_t num_steps) {
  auto bad = [](const std::string& m) { throw ConfigError(m); };
  if (c.t_start == 0 || c.t_start > num_steps)
    bad("t_start must lie in [1, " + std::to_string(num_steps) + "]");
  if (c.max_passes < 1) bad("N (max passes) must be at least 1");
  if (!(c.scale >= 0.0) || !std::isfinite(c.scale)) bad("guidance scale must be finite and >= 0");
  if (!(c.beta >= 0.0 && c.beta <= 1.0)) bad("beta must lie in [0, 1]");
  const int n = static_cast<int>(kNumClasses);
  if (c.cls < 0 || c.cls >= n) bad("generation class out of range");
  if (c.target && (*c.target < 0 || *c.target >= n)) bad("target label out of range");
  if (c.y_true && (*c.y_true < 0 || *c.y_true >= n)) bad("true label out of range");
  const int truth = c.y_true.value_or(c.cls);
  if (c.direction == Direction::kTargeted && c.target && *c.target == truth)
    bad("targeted mode needs a target different from the true label");
  if (c.uae_depth > num_steps) bad("uae_depth exceeds the sampler depth");
}

/// Highest-probability class other than y_true; ties go to the lowest id.
inline int select_target_from_log_probs(std::span<const double> log_probs, int y_true) {
  int best = -1;
  for (std::size_t k = 0; k < log_probs.size(); ++k) {
    if (static_cast<int>(k) == y_true) continue;
    if (best < 0 || log_probs[k] > log_probs[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  }
  require(best >= 0, "select_target needs at least two classes");
  return best;
}

template <ProbabilisticClassifier C>
int select_target(const C& clf, const Tensor& probe, int y_true) {
  const Tensor lp = clf.log_probs(probe);
  return select_target_from_log_probs(lp.values(), y_true);
}

struct GuidanceState {
  Tensor v;
  SwitchState sw = SwitchState::kOn;
  std::size_t restart_index = 1;
  bool initialized = false;
};

/// v <- g on the first guided step of a pass, else v <- beta v + (1-beta) g.
inline void momentum_update(GuidanceState& state, const Tensor& g, bool is_first_step, double beta) {
  if (!g.all_finite()) throw NumericError("non-finite guidance gradient");
  if (is_first_step) {
    state.v = g;
    state.initialized = true;
    return;
  }
  require(state.v.shape() == g.shape(), "momentum shape mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) state.v[i] = beta * state.v[i] + (1.0 - beta) * g[i];
}

struct SwitchDecision {
  SwitchState effective = SwitchState::kOn;  // state under which guidance was decided
  SwitchState next = SwitchState::kOn;       // state carried into the next step
  bool apply = false;
};

struct SwitchPolicy {
  bool adaptive = true;
  bool apply_on_deactivation = true;
};

inline bool forced_on(std::size_t restart_index, const SwitchPolicy& p) {
  return !p.adaptive || restart_index >= 3;
}

inline bool in_window(std::size_t step, std::size_t t_start) { return step > 0 && step <= t_start; }

/// Whether switch_step needs a fresh classification of x_{t-1} this step.
inline bool needs_verdict(SwitchState current, std::size_t step, std::size_t t_start, std::size_t restart_index,
                          const SwitchPolicy& p = {}) {
  const bool forced = forced_on(restart_index, p);
  const SwitchState s = forced ? SwitchState::kOn : current;
  if (s == SwitchState::kOff) return true;
  if (!in_window(step, t_start)) return false;
  // Under forcing the verdict can only matter if it would cancel the update.
  return !(forced && p.apply_on_deactivation);
}

/// One step of the adaptive control switch. `hit` is the verdict that
/// x_{t-1} already satisfies the adversarial criterion.
///  - forced ON at every step from the third pass (or when not adaptive);
///  - while OFF, a miss turns it back ON;
///  - inside the window and ON, guidance is applied; a hit turns it OFF
///    (after the update unless apply_on_deactivation is false).
inline SwitchDecision switch_step(SwitchState current, std::optional<bool> hit, std::size_t step,
                                  std::size_t t_start, std::size_t restart_index, const SwitchPolicy& p = {}) {
  if (needs_verdict(current, step, t_start, restart_index, p) && !hit)
    throw ContractViolation("switch_step needs a classifier verdict at step " + std::to_string(step));
  SwitchState s = forced_on(restart_index, p) ? SwitchState::kOn : current;
  if (s == SwitchState::kOff && !*hit) s = SwitchState::kOn;
  SwitchDecision d;
  d.effective = s;
  if (in_window(step, t_start) && s == SwitchState::kOn) {
    d.apply = true;
    if (hit && *hit) {
      s = SwitchState::kOff;
      d.apply = p.apply_on_deactivation;
    }
  }
  d.next = s;
  return d;
}

/// Maps latents to classifier inputs. Identity by default; the linear mode
/// decodes x = D z and pulls gradients back as D^T g.
class Codec {
 public:
  Codec() = default;
  static Codec linear(Tensor decoder) {
    require(decoder.shape() == Shape{kImagePixels, kImagePixels}, "linear codec must be 256x256");
    Codec c;
    c.decoder_ = std::move(decoder);
    return c;
  }

  bool is_identity() const { return decoder_.empty(); }

  Tensor decode(const Tensor& z) const {
    if (is_identity()) return z;
    Tensor x(z.shape());
    Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())) =
        ad::as_matrix(decoder_) * Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
    return x;
  }

  Tensor pullback(const Tensor& g) const {
    if (is_identity()) return g;
    Tensor out(g.shape());
    Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) =
        ad::as_matrix(decoder_).transpose() * Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
    return out;
  }

 private:
  Tensor decoder_;
};

struct TrajectoryEntry {
  std::size_t pass = 0;
  std::size_t step = 0;
  int timestep = 0;
  SwitchState effective = SwitchState::kOn;
  SwitchState next = SwitchState::kOn;
  std::optional<bool> hit;
  bool applied = false;
  double grad_norm = 0.0;
  double v_norm = 0.0;
};

/// Outcome of one attack. `success` is argmax f(x_star) == y_a (targeted)
/// or != y_true (untargeted). The label the image is meant to show, o(x),
/// is approximated by the generation class `cls`.
struct AttackRecord {
  std::size_t index = 0;
  AttackConfig config;
  int cls = 0;
  int y_true = 0;
  int y_a = 0;
  bool success = false;
  std::size_t passes_used = 0;
  std::size_t guidance_steps_applied = 0;
  int final_prediction = -1;
  int clean_prediction = -1;
  Tensor x_star;
  Tensor clean;
  Tensor reference;  // UAE only
  std::optional<std::size_t> reference_index;
  std::vector<TrajectoryEntry> trajectory;
  std::optional<std::string> error;
};

/// Adversarial criterion shared by the switch, the early exit and scoring.
inline bool is_adversarial(int predicted, Direction d, int y_a, int y_true) {
  return d == Direction::kTargeted ? predicted == y_a : predicted != y_true;
}

/// Momentum-guided DDIM sampling under the adaptive switch. For UAE mode
/// pass the reference image; its label must be in config.y_true.
template <NoiseModel M, DifferentiableClassifier C>
AttackRecord run_attack(const AttackConfig& cfg, const NoiseSchedule& s, const M& model, const C& clf,
                        const Tensor* reference = nullptr, const Codec& codec = {}) {
  validate(cfg, s.num_steps());
  AttackRecord rec;
  rec.config = cfg;
  rec.cls = cfg.cls;
  rec.y_true = cfg.y_true.value_or(cfg.cls);
  const std::size_t S = s.num_steps();
  const SwitchPolicy policy{cfg.adaptive, cfg.apply_on_deactivation};

  try {
    Tensor z_T;
    if (cfg.mode == Mode::kUae) {
      if (!reference) throw ConfigError("UAE mode requires a reference image");
      require(reference->size() == kImagePixels, "reference must be a 16x16 image");
      rec.reference = reference->reshaped({kImageSide, kImageSide});
      z_T = invert_image(s, model, rec.reference, cfg.cls, cfg.uae_depth == 0 ? S : cfg.uae_depth, cfg.cfg_scale);
    } else {
      Rng rng(cfg.seed);
      z_T = Tensor::normal({kImageSide, kImageSide}, rng);
    }
    const std::size_t start_level = cfg.mode == Mode::kUae && cfg.uae_depth != 0 ? cfg.uae_depth : S;

    rec.clean = clipped(codec.decode(reverse_from(s, model, z_T, start_level, cfg.cls, cfg.cfg_scale)));
    rec.clean_prediction = predict_label(clf, rec.clean);
    const Tensor& probe = cfg.mode == Mode::kUae ? rec.reference : rec.clean;
    if (cfg.direction == Direction::kTargeted)
      rec.y_a = cfg.target ? *cfg.target : select_target(clf, probe, rec.y_true);
    else
      rec.y_a = rec.y_true;

    auto hit_of = [&](const Tensor& z) {
      return is_adversarial(predict_label(clf, codec.decode(z)), cfg.direction, rec.y_a, rec.y_true);
    };

    GuidanceState state;
    Tensor x0;
    for (std::size_t pass = 1; pass <= cfg.max_passes; ++pass) {
      state.restart_index = pass;
      state.initialized = false;
      Tensor z = z_T;
      for (std::size_t k = start_level; k >= 1; --k) {
        z = ddim_reverse_step(s, model, z, k, cfg.cls, cfg.cfg_scale);
        std::optional<bool> hit;
        if (needs_verdict(state.sw, k, cfg.t_start, pass, policy)) hit = hit_of(z);
        const SwitchDecision d = switch_step(state.sw, hit, k, cfg.t_start, pass, policy);
        TrajectoryEntry entry{pass, k, s.timestep_at_level(k), d.effective, d.next, hit, d.apply, 0.0, 0.0};
        if (d.apply) {
          Tensor g = codec.pullback(clf.input_log_prob_grad(codec.decode(z), rec.y_a));
          if (!g.all_finite())
            throw NumericError("non-finite guidance gradient at pass " + std::to_string(pass) + " step " +
                               std::to_string(k));
          if (cfg.direction == Direction::kUntargeted) g = -1.0 * std::move(g);
          entry.grad_norm = l2_norm(g);
          if (cfg.normalize_gradient && entry.grad_norm > 0.0) g = (1.0 / entry.grad_norm) * std::move(g);
          momentum_update(state, g, !state.initialized, cfg.beta);
          z = axpy(std::move(z), cfg.scale, state.v);
          entry.v_norm = l2_norm(state.v);
          ++rec.guidance_steps_applied;
        }
        state.sw = d.next;
        if (cfg.log_trajectory) rec.trajectory.push_back(entry);
      }
      x0 = clipped(codec.decode(z));
      rec.passes_used = pass;
      rec.final_prediction = predict_label(clf, x0);
      if (is_adversarial(rec.final_prediction, cfg.direction, rec.y_a, rec.y_true)) break;
    }
    rec.x_star = std::move(x0);
    rec.success = is_adversarial(rec.final_prediction, cfg.direction, rec.y_a, rec.y_true);
  } catch (const NumericError& e) {
    rec.error = e.what();
    rec.success = false;
    rec.x_star = Tensor{};
  }
  return rec;
}

}  // namespace venom
