#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "venom/attack.hpp"
#include "venom/batch.hpp"
#include "venom/dataset.hpp"
#include "venom/errors.hpp"
#include "venom/metrics.hpp"

namespace venom {

/// FNV-1a over the raw doubles, as 16 hex digits.
inline std::string tensor_hash(const Tensor& t) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(t.data(), t.size())));
  return buf;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

namespace detail {

inline nlohmann::json tensor_to_json(const Tensor& t) {
  if (t.empty()) return nullptr;
  return nlohmann::json(t.values());
}

inline Tensor tensor_from_json(const nlohmann::json& j, const char* field) {
  if (j.is_null()) return {};
  if (!j.is_array() || j.size() != kImagePixels)
    throw FormatError(std::string("record field '") + field + "' must hold 256 numbers");
  Tensor t({kImageSide, kImageSide});
  for (std::size_t i = 0; i < kImagePixels; ++i) t[i] = j[i].get<double>();
  return t;
}

}  // namespace detail

inline nlohmann::json record_to_json(const AttackRecord& r, bool with_trajectory) {
  const AttackConfig& c = r.config;
  nlohmann::json j;
  j["index"] = r.index;
  j["mode"] = mode_name(c.mode);
  j["direction"] = direction_name(c.direction);
  j["cls"] = r.cls;
  j["y_true"] = r.y_true;
  j["y_a"] = r.y_a;
  j["target"] = c.target ? nlohmann::json(*c.target) : nlohmann::json(nullptr);
  j["success"] = r.success;
  j["passes_used"] = r.passes_used;
  j["guidance_steps_applied"] = r.guidance_steps_applied;
  j["final_prediction"] = r.final_prediction;
  j["clean_prediction"] = r.clean_prediction;
  j["seed"] = c.seed;
  j["n"] = c.max_passes;
  j["t_start"] = c.t_start;
  j["scale"] = c.scale;
  j["beta"] = c.beta;
  j["cfg_scale"] = c.cfg_scale;
  j["adaptive"] = c.adaptive;
  j["apply_on_deactivation"] = c.apply_on_deactivation;
  j["normalize_gradient"] = c.normalize_gradient;
  j["uae_depth"] = c.uae_depth;
  j["x_star"] = detail::tensor_to_json(r.x_star);
  j["x_star_hash"] = r.x_star.empty() ? nlohmann::json(nullptr) : nlohmann::json(tensor_hash(r.x_star));
  j["clean"] = detail::tensor_to_json(r.clean);
  j["clean_hash"] = r.clean.empty() ? nlohmann::json(nullptr) : nlohmann::json(tensor_hash(r.clean));
  j["reference"] = detail::tensor_to_json(r.reference);
  j["reference_index"] = r.reference_index ? nlohmann::json(*r.reference_index) : nlohmann::json(nullptr);
  j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr);
  if (with_trajectory) {
    auto& arr = j["trajectory"] = nlohmann::json::array();
    for (const auto& e : r.trajectory) {
      arr.push_back({{"pass", e.pass},
                     {"step", e.step},
                     {"t", e.timestep},
                     {"switch", switch_name(e.effective)},
                     {"next", switch_name(e.next)},
                     {"hit", e.hit ? nlohmann::json(*e.hit) : nlohmann::json(nullptr)},
                     {"applied", e.applied},
                     {"grad_norm", e.grad_norm},
                     {"v_norm", e.v_norm}});
    }
  }
  return j;
}

inline AttackRecord record_from_json(const nlohmann::json& j) {
  try {
    AttackRecord r;
    AttackConfig& c = r.config;
    r.index = j.at("index").get<std::size_t>();
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.direction = parse_direction(j.at("direction").get<std::string>());
    r.cls = c.cls = j.at("cls").get<int>();
    r.y_true = j.at("y_true").get<int>();
    c.y_true = r.y_true;
    r.y_a = j.at("y_a").get<int>();
    if (!j.at("target").is_null()) c.target = j.at("target").get<int>();
    r.success = j.at("success").get<bool>();
    r.passes_used = j.at("passes_used").get<std::size_t>();
    r.guidance_steps_applied = j.at("guidance_steps_applied").get<std::size_t>();
    r.final_prediction = j.at("final_prediction").get<int>();
    r.clean_prediction = j.at("clean_prediction").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.max_passes = j.at("n").get<std::size_t>();
    c.t_start = j.at("t_start").get<std::size_t>();
    c.scale = j.at("scale").get<double>();
    c.beta = j.at("beta").get<double>();
    c.cfg_scale = j.at("cfg_scale").get<double>();
    c.adaptive = j.at("adaptive").get<bool>();
    c.apply_on_deactivation = j.at("apply_on_deactivation").get<bool>();
    c.normalize_gradient = j.at("normalize_gradient").get<bool>();
    c.uae_depth = j.at("uae_depth").get<std::size_t>();
    r.x_star = detail::tensor_from_json(j.at("x_star"), "x_star");
    r.clean = detail::tensor_from_json(j.at("clean"), "clean");
    r.reference = detail::tensor_from_json(j.at("reference"), "reference");
    if (!j.at("reference_index").is_null()) r.reference_index = j.at("reference_index").get<std::size_t>();
    if (!j.at("error").is_null()) r.error = j.at("error").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed attack record: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed attack record: ") + e.what());
  }
}

inline void save_records(const std::vector<AttackRecord>& records, const std::string& path, bool with_trajectory) {
  std::string text;
  for (const auto& r : records) text += record_to_json(r, with_trajectory).dump() + "\n";
  binio::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline std::vector<AttackRecord> load_records(const std::string& path) {
  const auto bytes = binio::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<AttackRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline const char* kSummaryHeader = "count,successes,errors,asr,mean_guidance_steps,mean_passes,s,beta,t_start,n,seed";

inline std::string summary_csv(const BatchSummary& s, const AttackConfig& base) {
  std::string out = std::string(kSummaryHeader) + "\n";
  out += std::to_string(s.count) + "," + std::to_string(s.successes) + "," + std::to_string(s.errors) + "," +
         format_optional(s.asr) + "," + format_number(s.mean_guidance_steps) + "," +
         format_number(s.mean_passes) + "," + format_number(base.scale) + "," + format_number(base.beta) + "," +
         std::to_string(base.t_start) + "," + std::to_string(base.max_passes) + "," + std::to_string(base.seed) +
         "\n";
  return out;
}

inline const char* kMetricsHeader =
    "run_id,mode,direction,n,asr_white,asr_transfer,asr_purify,asr_advtrain,fd,ssim_median,is,s,beta,t_start,seed";

/// One metrics row; absent values are written as NA.
inline std::string metrics_csv_row(const std::string& run_id, const MetricReport& m, const AttackConfig& c,
                                   std::uint64_t seed) {
  return run_id + "," + mode_name(c.mode) + "," + direction_name(c.direction) + "," + std::to_string(m.n) + "," +
         format_number(m.asr_white) + "," + format_optional(m.asr_transfer) + "," + format_optional(m.asr_purify) +
         "," + format_optional(m.asr_advtrain) + "," + format_optional(m.frechet) + "," +
         format_optional(m.ssim_median) + "," + format_number(m.inception_score) + "," + format_number(c.scale) +
         "," + format_number(c.beta) + "," + std::to_string(c.t_start) + "," + std::to_string(seed);
}

}  // namespace venom
