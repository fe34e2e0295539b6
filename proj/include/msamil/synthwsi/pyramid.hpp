#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "msamil/synthwsi/raster.hpp"

namespace msamil::synth {

/// Multi-resolution stand-in for a whole-slide image. Level i holds the base
/// raster box-averaged by factors()[i] (dimensions rounded down); every level is
/// derived directly from level 0.
class PyramidImage {
 public:
  explicit PyramidImage(Raster level0, std::vector<std::size_t> factors = {1, 2, 4, 8, 16});

  std::size_t width() const { return levels_.front().width; }
  std::size_t height() const { return levels_.front().height; }
  std::size_t level_count() const { return levels_.size(); }
  std::size_t factor(std::size_t level) const { return factors_.at(level); }
  const Raster& level(std::size_t i) const { return levels_.at(i); }
  const Raster& base() const { return levels_.front(); }
  const std::string& magnification() const { return magnification_; }

  // Pixels of [x, x+w) x [y, y+h) in the given level's own coordinates.
  Raster region(std::size_t level, std::size_t x, std::size_t y, std::size_t w, std::size_t h) const;

 private:
  std::vector<std::size_t> factors_;
  std::vector<Raster> levels_;
  std::string magnification_ = "20x";
};

struct Thumbnail {
  Raster raster;  // 1024 x 1024
  double s1 = 1.0;  // W / 1024
  double s2 = 1.0;  // H / 1024
};

inline constexpr std::size_t kThumbnailSide = 1024;

Thumbnail thumbnail(const PyramidImage& image);

}  // namespace msamil::synth
