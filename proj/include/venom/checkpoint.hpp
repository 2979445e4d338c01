#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "venom/binio.hpp"
#include "venom/errors.hpp"
#include "venom/nn.hpp"
#include "venom/tensor.hpp"

namespace venom {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "VNMC" container: a flat list of named float32 tensors. Model metadata
/// (schedule parameters, architecture tag) travels as named one-element
/// tensors alongside the weights.
inline std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& tensors) {
  binio::Writer w;
  w.magic("VNMC");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& e : tensors.entries()) {
    require(e.name.size() <= 0xFFFF, "tensor name too long");
    require(e.value.rank() <= 0xFF, "tensor rank too large");
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u8(static_cast<std::uint8_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : e.value.values()) w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

inline ParameterSet decode_checkpoint(std::vector<std::uint8_t> bytes) {
  binio::Reader r(std::move(bytes));
  r.expect_magic("VNMC");
  const std::size_t version_at = r.offset();
  if (r.read<std::uint32_t>("version") != kCheckpointVersion)
    throw FormatError("unsupported version at offset " + std::to_string(version_at));
  const auto count = r.read<std::uint32_t>("tensor count");
  ParameterSet out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.read<std::uint16_t>("name length");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "name");
    const std::size_t rank_at = r.offset();
    const auto rank = r.read<std::uint8_t>("rank");
    if (rank == 0) throw FormatError("zero rank at offset " + std::to_string(rank_at));
    Shape shape(rank);
    for (auto& d : shape) {
      const std::size_t at = r.offset();
      d = r.read<std::uint32_t>("dimension");
      if (d == 0) throw FormatError("zero extent at offset " + std::to_string(at));
    }
    if (shape_size(shape) * 4 > r.remaining())
      throw FormatError("truncated file: tensor " + name + " at offset " + std::to_string(r.offset()));
    Tensor t(shape);
    for (double& v : t.values()) v = r.read<float>("value");
    if (out.contains(name)) throw FormatError("duplicate tensor " + name + " at offset " + std::to_string(rank_at));
    out.add(std::move(name), std::move(t));
  }
  r.expect_end();
  return out;
}

inline void save_checkpoint(const ParameterSet& tensors, const std::string& path) {
  binio::write_file(path, encode_checkpoint(tensors));
}

inline ParameterSet load_checkpoint(const std::string& path) {
  return decode_checkpoint(binio::read_file(path));
}

/// Rounds every value to float32 precision, i.e. what a save/load cycle
/// would produce.
inline void round_to_float(ParameterSet& params) {
  for (auto& e : params.entries())
    for (double& v : e.value.values()) v = static_cast<double>(static_cast<float>(v));
}

inline double scalar_entry(const ParameterSet& ps, const std::string& name) {
  if (!ps.contains(name)) throw FormatError("checkpoint is missing " + name);
  return ps.get(name).item();
}

}  // namespace venom
