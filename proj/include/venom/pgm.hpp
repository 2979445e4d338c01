#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "venom/dataset.hpp"
#include "venom/errors.hpp"
#include "venom/tensor.hpp"

namespace venom {

struct GridSpec {
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Parses "RxC" with both parts positive.
inline GridSpec parse_grid(const std::string& s) {
  const std::size_t x = s.find('x');
  auto bad = [&] { return ConfigError("bad grid spec '" + s + "' (expected RxC)"); };
  if (x == std::string::npos || x == 0 || x + 1 == s.size()) throw bad();
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != x && !std::isdigit(static_cast<unsigned char>(s[i]))) throw bad();
  GridSpec g;
  try {
    std::size_t used = 0;
    g.rows = std::stoul(s.substr(0, x), &used);
    if (used != x) throw bad();
    g.cols = std::stoul(s.substr(x + 1), &used);
    if (used != s.size() - x - 1) throw bad();
  } catch (const std::logic_error&) {
    throw bad();
  }
  if (g.rows == 0 || g.cols == 0) throw bad();
  return g;
}

inline std::uint8_t to_gray(double v) {
  const double u = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(u);
}

/// Binary PGM of 16x16 tiles in row-major order with 1-pixel separators of
/// value 128. Image side is (16+1)*n - 1 along each axis.
inline std::vector<std::uint8_t> render_grid(const std::vector<Tensor>& tiles, const GridSpec& g) {
  if (tiles.size() < g.rows * g.cols)
    throw ConfigError("grid " + std::to_string(g.rows) + "x" + std::to_string(g.cols) + " needs " +
                      std::to_string(g.rows * g.cols) + " images, only " + std::to_string(tiles.size()) +
                      " available");
  const std::size_t w = (kImageSide + 1) * g.cols - 1;
  const std::size_t h = (kImageSide + 1) * g.rows - 1;
  std::vector<std::uint8_t> pix(w * h, 128);
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c) {
      const Tensor& t = tiles[r * g.cols + c];
      require(t.size() == kImagePixels, "grid tiles must be 16x16");
      for (std::size_t y = 0; y < kImageSide; ++y)
        for (std::size_t x = 0; x < kImageSide; ++x)
          pix[(r * (kImageSide + 1) + y) * w + c * (kImageSide + 1) + x] = to_gray(t[y * kImageSide + x]);
    }
  const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), pix.begin(), pix.end());
  return out;
}

}  // namespace venom
