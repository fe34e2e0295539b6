#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace msamil::synth {

/// 8-bit interleaved RGB raster, row-major.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  Raster() = default;
  Raster(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  bool operator==(const Raster&) const = default;
};

/// Float RGB image produced by resampling; same layout as Raster.
struct FloatImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  double at(std::size_t x, std::size_t y, std::size_t c) const { return values[(y * width + x) * 3 + c]; }
  bool operator==(const FloatImage&) const = default;
};

FloatImage to_float(const Raster& r);
Raster to_raster(const FloatImage& img);  // round half up, clamp to [0, 255]

// Area-weighted downscale (fractional boxes allowed) when shrinking, bilinear
// with half-pixel centres when growing; identity when sizes match.
FloatImage resize(const FloatImage& src, std::size_t out_w, std::size_t out_h);
FloatImage resize(const Raster& src, std::size_t out_w, std::size_t out_h);

// Copy of the half-open window [x0, x0+w) x [y0, y0+h).
Raster crop(const Raster& src, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);

// Binary PPM (P6, maxval 255).
void write_ppm(const Raster& r, const std::filesystem::path& path);
Raster read_ppm(const std::filesystem::path& path);
Raster decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Raster& r);

}  // namespace msamil::synth
