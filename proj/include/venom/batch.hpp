#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "venom/attack.hpp"
#include "venom/dataset.hpp"
#include "venom/errors.hpp"
#include "venom/rng.hpp"

namespace venom {

struct BatchSpec {
  AttackConfig base;
  std::size_t count = 0;
  /// NAE only: use base.cls for every sample instead of cycling i % 6.
  bool fixed_class = false;
  /// UAE only: references are taken in order, cycling when count exceeds them.
  const Dataset* references = nullptr;
  std::size_t jobs = 1;
};

struct BatchSummary {
  std::size_t count = 0;
  std::size_t successes = 0;
  std::size_t errors = 0;
  std::optional<double> asr;  // undefined for an empty batch
  double mean_guidance_steps = 0.0;
  double mean_passes = 0.0;
};

struct BatchResult {
  std::vector<AttackRecord> records;
  BatchSummary summary;
};

/// Per-sample configuration. The attack seed is keyed by (base seed, index)
/// so a record never depends on which worker produced it.
inline AttackConfig batch_config(const BatchSpec& spec, std::size_t i) {
  AttackConfig c = spec.base;
  c.seed = stream_key({spec.base.seed, static_cast<std::uint64_t>(i)});
  if (c.mode == Mode::kUae) {
    if (!spec.references || spec.references->size() == 0) throw ConfigError("UAE batch needs reference images");
    const int label = spec.references->labels[i % spec.references->size()];
    c.cls = label;
    c.y_true = label;
  } else {
    if (!spec.fixed_class) {
      if (c.target) throw ConfigError("a fixed target needs a fixed generation class");
      c.cls = static_cast<int>(i % kNumClasses);
    }
    c.y_true = c.cls;
  }
  return c;
}

inline BatchSummary summarize(const std::vector<AttackRecord>& records) {
  BatchSummary s;
  s.count = records.size();
  if (records.empty()) return s;
  double steps = 0.0, passes = 0.0;
  for (const auto& r : records) {
    s.successes += r.success ? 1 : 0;
    s.errors += r.error ? 1 : 0;
    steps += static_cast<double>(r.guidance_steps_applied);
    passes += static_cast<double>(r.passes_used);
  }
  const auto n = static_cast<double>(records.size());
  s.asr = static_cast<double>(s.successes) / n;
  s.mean_guidance_steps = steps / n;
  s.mean_passes = passes / n;
  return s;
}

/// Runs `count` attacks over `jobs` worker threads. Models are shared
/// read-only; a failed attack is recorded and the batch carries on.
template <NoiseModel M, DifferentiableClassifier C>
BatchResult run_batch(const BatchSpec& spec, const NoiseSchedule& s, const M& model, const C& clf,
                      const Codec& codec = {}) {
  validate(spec.base, s.num_steps());
  BatchResult out;
  out.records.resize(spec.count);
  std::vector<AttackConfig> configs;
  configs.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) configs.push_back(batch_config(spec, i));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < spec.count; i = next++) {
      try {
        std::optional<Tensor> ref;
        if (configs[i].mode == Mode::kUae) ref = spec.references->image(i % spec.references->size());
        AttackRecord rec = run_attack(configs[i], s, model, clf, ref ? &*ref : nullptr, codec);
        rec.index = i;
        if (ref) rec.reference_index = i % spec.references->size();
        out.records[i] = std::move(rec);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(spec.jobs, spec.count));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  out.summary = summarize(out.records);
  return out;
}

/// One cell of the {momentum on/off} x {adaptive switch on/off} grid.
/// Momentum off means beta = 0; switch off means forced ON in the window.
struct AblationCell {
  bool momentum = true;
  bool adaptive = true;
};

inline const char* ablation_cell_name(const AblationCell& c) {
  if (c.momentum && c.adaptive) return "mo+as";
  if (c.momentum) return "mo";
  if (c.adaptive) return "as";
  return "none";
}

inline std::vector<AblationCell> ablation_grid() { return {{true, true}, {true, false}, {false, true}, {false, false}}; }

inline AblationCell parse_ablation_cell(const std::string& s) {
  if (s == "both") return {true, true};
  if (s == "mo") return {true, false};
  if (s == "as") return {false, true};
  if (s == "none") return {false, false};
  throw ConfigError("unknown ablation module '" + s + "' (expected mo, as, both or none)");
}

inline BatchSpec ablation_spec(BatchSpec spec, const AblationCell& cell) {
  if (!cell.momentum) spec.base.beta = 0.0;
  spec.base.adaptive = cell.adaptive;
  return spec;
}

}  // namespace venom
