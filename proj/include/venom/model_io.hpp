#pragma once

#include <string>

#include "venom/checkpoint.hpp"
#include "venom/classifier.hpp"
#include "venom/denoiser.hpp"
#include "venom/schedule.hpp"

namespace venom {

struct DiffusionModel {
  NoiseSchedule schedule;
  NoisePredictor predictor;
};

/// Weights plus the schedule parameters as named scalars.
inline ParameterSet diffusion_tensors(const DiffusionModel& m) {
  ParameterSet ps = m.predictor.params();
  ps.add("schedule.T_train", Tensor::scalar(m.schedule.T_train));
  ps.add("schedule.beta_min", Tensor::scalar(m.schedule.beta_min));
  ps.add("schedule.beta_max", Tensor::scalar(m.schedule.beta_max));
  ps.add("schedule.sample_steps", Tensor::scalar(static_cast<double>(m.schedule.num_steps())));
  return ps;
}

/// The schedule is rebuilt from its float32-stored parameters.
inline DiffusionModel diffusion_from_tensors(const ParameterSet& ps) {
  const int T = static_cast<int>(scalar_entry(ps, "schedule.T_train"));
  DiffusionModel m{build_schedule(T, scalar_entry(ps, "schedule.beta_min"), scalar_entry(ps, "schedule.beta_max"),
                                  static_cast<std::size_t>(scalar_entry(ps, "schedule.sample_steps"))),
                   {}};
  try {
    m.predictor = NoisePredictor(T, ps);
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("diffusion checkpoint: ") + e.what());
  }
  return m;
}

inline void save_diffusion(const DiffusionModel& m, const std::string& path) {
  save_checkpoint(diffusion_tensors(m), path);
}

inline DiffusionModel load_diffusion(const std::string& path) {
  return diffusion_from_tensors(load_checkpoint(path));
}

inline ParameterSet victim_tensors(const VictimClassifier& clf) {
  ParameterSet ps = clf.net().params();
  ps.add("meta.arch", Tensor::scalar(static_cast<double>(clf.arch())));
  return ps;
}

inline VictimClassifier victim_from_tensors(const ParameterSet& ps) {
  const double tag = scalar_entry(ps, "meta.arch");
  if (tag != 0.0 && tag != 1.0) throw FormatError("unknown architecture tag in checkpoint");
  const Arch arch = tag == 0.0 ? Arch::kA : Arch::kB;
  ParameterSet weights;
  for (const auto& e : ps.entries())
    if (e.name.rfind("meta.", 0) != 0) weights.add(e.name, e.value);
  try {
    return VictimClassifier(arch, std::move(weights));
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("victim checkpoint: ") + e.what());
  }
}

inline void save_victim(const VictimClassifier& clf, const std::string& path) {
  save_checkpoint(victim_tensors(clf), path);
}

inline VictimClassifier load_victim(const std::string& path) { return victim_from_tensors(load_checkpoint(path)); }

}  // namespace venom
