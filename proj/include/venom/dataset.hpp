#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "venom/binio.hpp"
#include "venom/errors.hpp"
#include "venom/rng.hpp"
#include "venom/tensor.hpp"

namespace venom {

inline constexpr std::size_t kImageSide = 16;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr std::size_t kNumClasses = 6;

enum class ShapeClass : int { kDisk = 0, kRing, kCross, kHBars, kVBars, kChecker };

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "disk", "ring", "cross", "hbars", "vbars", "checker"};

inline std::string_view class_name(int id) {
  require(id >= 0 && id < static_cast<int>(kNumClasses), "class id out of range: " + std::to_string(id));
  return kClassNames[static_cast<std::size_t>(id)];
}

inline int class_id(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i)
    if (kClassNames[i] == name) return static_cast<int>(i);
  throw ContractViolation("unknown class name " + std::string(name));
}

namespace detail {

inline bool inside(ShapeClass cls, double u, double v, double s) {
  const double r = std::hypot(u, v);
  switch (cls) {
    case ShapeClass::kDisk:
      return r <= 4.5 * s;
    case ShapeClass::kRing:
      return r >= 3.0 * s && r <= 5.5 * s;
    case ShapeClass::kCross:
      return (std::abs(u) <= 1.25 * s && std::abs(v) <= 5.5 * s) ||
             (std::abs(v) <= 1.25 * s && std::abs(u) <= 5.5 * s);
    case ShapeClass::kHBars:
      return std::abs(u) <= 5.5 * s && std::abs(v) <= 5.5 * s &&
             std::fmod(v + 5.5 * s, 4.0 * s) < 2.0 * s;
    case ShapeClass::kVBars:
      return std::abs(u) <= 5.5 * s && std::abs(v) <= 5.5 * s &&
             std::fmod(u + 5.5 * s, 4.0 * s) < 2.0 * s;
    case ShapeClass::kChecker: {
      const double cell = 4.0 * s;
      const auto a = static_cast<long>(std::floor(u / cell));
      const auto b = static_cast<long>(std::floor(v / cell));
      return ((a + b) % 2 + 2) % 2 == 0;
    }
  }
  return false;
}

}  // namespace detail

/// Renders one 16x16 sample in [-1, 1]. Deterministic in (class, jitter_seed):
/// center offset U[-2,2] px per axis, size scale U[0.8,1.2], 4x4 supersampled
/// coverage, additive N(0, 0.1^2) pixel noise, clipped. Values are rounded to
/// float precision so the on-disk format stores them exactly.
inline Tensor render_sample(int class_id_value, std::uint64_t jitter_seed) {
  require(class_id_value >= 0 && class_id_value < static_cast<int>(kNumClasses),
          "class id out of range: " + std::to_string(class_id_value));
  const auto cls = static_cast<ShapeClass>(class_id_value);
  Rng rng(jitter_seed);
  const double cx = 8.0 + rng.uniform(-2.0, 2.0);
  const double cy = 8.0 + rng.uniform(-2.0, 2.0);
  const double scale = rng.uniform(0.8, 1.2);

  Tensor img({kImageSide, kImageSide});
  constexpr int kSub = 4;
  for (std::size_t y = 0; y < kImageSide; ++y) {
    for (std::size_t x = 0; x < kImageSide; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy)
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / kSub;
          const double py = static_cast<double>(y) + (sy + 0.5) / kSub;
          hits += detail::inside(cls, px - cx, py - cy, scale) ? 1 : 0;
        }
      const double coverage = static_cast<double>(hits) / (kSub * kSub);
      const double value = -1.0 + 2.0 * coverage + 0.1 * rng.normal();
      img.at(y, x) = static_cast<double>(static_cast<float>(std::clamp(value, -1.0, 1.0)));
    }
  }
  return img;
}

enum class Split { kTrain, kTest, kUnspecified };

struct Dataset {
  Tensor images;  // [n, 16, 16]
  std::vector<int> labels;
  Split split = Split::kUnspecified;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }

  Tensor image(std::size_t i) const {
    require(i < size(), "image index out of range");
    Tensor out({kImageSide, kImageSide});
    std::copy_n(images.data() + i * kImagePixels, kImagePixels, out.data());
    return out;
  }

  /// Selected images flattened into a [count, 256] batch.
  Tensor batch(const std::vector<std::size_t>& indices) const {
    Tensor out({indices.size(), kImagePixels});
    for (std::size_t r = 0; r < indices.size(); ++r)
      std::copy_n(images.data() + indices[r] * kImagePixels, kImagePixels, out.data() + r * kImagePixels);
    return out;
  }

  /// The split tag is a naming convention (train.vnmd / test.vnmd) and is
  /// not part of the stored bytes, so it does not take part in equality.
  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.seed == b.seed && a.labels == b.labels && a.images == b.images;
  }
};

namespace detail {

inline std::uint64_t jitter_seed_for(std::uint64_t seed, Split split, std::size_t index) {
  // XOR with a per-seed mask is a bijection on (split, index), so the two
  // splits draw from disjoint jitter-seed sets.
  const std::uint64_t tag = split == Split::kTrain ? 0 : 1;
  return splitmix64(seed) ^ ((tag << 40) | static_cast<std::uint64_t>(index));
}

inline std::uint64_t fnv1a(const double* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* b = reinterpret_cast<const std::uint8_t*>(p);
  for (std::size_t i = 0; i < n * sizeof(double); ++i) {
    h ^= b[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline Dataset render_split(std::uint64_t seed, Split split, std::size_t n) {
  Dataset ds;
  ds.split = split;
  ds.seed = seed;
  ds.images = Tensor({n, kImageSide, kImageSide});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % kNumClasses);
    ds.labels[i] = label;
    const Tensor img = render_sample(label, jitter_seed_for(seed, split, i));
    std::copy_n(img.data(), kImagePixels, ds.images.data() + i * kImagePixels);
  }
  return ds;
}

}  // namespace detail

struct DatasetPair {
  Dataset train;
  Dataset test;
};

/// Class-balanced train (6*per_class) and test (6*ceil(per_class/5)) splits.
/// Throws if any image appears in both splits.
inline DatasetPair generate_dataset(std::uint64_t seed, std::size_t per_class) {
  require(per_class >= 1, "per_class must be at least 1");
  DatasetPair out;
  out.train = detail::render_split(seed, Split::kTrain, kNumClasses * per_class);
  out.test = detail::render_split(seed, Split::kTest, kNumClasses * ((per_class + 4) / 5));

  std::unordered_multimap<std::uint64_t, std::size_t> seen;
  for (std::size_t i = 0; i < out.train.size(); ++i)
    seen.emplace(detail::fnv1a(out.train.images.data() + i * kImagePixels, kImagePixels), i);
  for (std::size_t j = 0; j < out.test.size(); ++j) {
    const double* img = out.test.images.data() + j * kImagePixels;
    auto [lo, hi] = seen.equal_range(detail::fnv1a(img, kImagePixels));
    for (auto it = lo; it != hi; ++it)
      if (std::equal(img, img + kImagePixels, out.train.images.data() + it->second * kImagePixels))
        throw Error("test image " + std::to_string(j) + " duplicates train image " +
                    std::to_string(it->second));
  }
  return out;
}

inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  require(ds.images.size() == ds.size() * kImagePixels, "dataset image count does not match labels");
  binio::Writer w;
  w.magic("VNMD");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u16(kImageSide);
  w.u16(kImageSide);
  w.u16(kNumClasses);
  w.u64(ds.seed);
  for (int label : ds.labels) w.u16(static_cast<std::uint16_t>(label));
  for (double v : ds.images.values()) w.f32(static_cast<float>(v));
  return w.buffer();
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  binio::write_file(path, encode_dataset(ds));
}

inline Dataset decode_dataset(std::vector<std::uint8_t> bytes) {
  binio::Reader r(std::move(bytes));
  r.expect_magic("VNMD");
  const std::size_t version_at = r.offset();
  if (r.read<std::uint32_t>("version") != kDatasetVersion)
    throw FormatError("unsupported version at offset " + std::to_string(version_at));
  const auto n = r.read<std::uint32_t>("count");
  const std::size_t dims_at = r.offset();
  const auto h = r.read<std::uint16_t>("height");
  const auto w = r.read<std::uint16_t>("width");
  const auto classes = r.read<std::uint16_t>("classes");
  if (h != kImageSide || w != kImageSide || classes != kNumClasses)
    throw FormatError("unexpected geometry at offset " + std::to_string(dims_at));
  Dataset ds;
  ds.seed = r.read<std::uint64_t>("seed");
  if (n == 0) throw FormatError("empty dataset at offset 8");
  ds.labels.resize(n);
  for (auto& label : ds.labels) {
    const std::size_t at = r.offset();
    label = r.read<std::uint16_t>("label");
    if (label >= static_cast<int>(kNumClasses))
      throw FormatError("label out of range at offset " + std::to_string(at));
  }
  ds.images = Tensor({n, kImageSide, kImageSide});
  for (double& v : ds.images.values()) v = r.read<float>("pixel");
  r.expect_end();
  if (!ds.images.all_finite()) throw FormatError("non-finite pixel in dataset");
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  return decode_dataset(binio::read_file(path));
}

}  // namespace venom
