#include "msamil/synthwsi/pyramid.hpp"

#include <cmath>

#include "msamil/errors.hpp"

namespace msamil::synth {

namespace {

Raster box_downsample(const Raster& src, std::size_t f) {
  Raster out(src.width / f, src.height / f);
  const double area = static_cast<double>(f * f);
  std::vector<std::uint32_t> acc(out.width * 3);
  for (std::size_t oy = 0; oy < out.height; ++oy) {
    std::fill(acc.begin(), acc.end(), 0u);
    for (std::size_t y = oy * f; y < (oy + 1) * f; ++y) {
      const auto* row = src.pixels.data() + y * src.width * 3;
      for (std::size_t ox = 0; ox < out.width; ++ox)
        for (std::size_t x = ox * f; x < (ox + 1) * f; ++x)
          for (std::size_t c = 0; c < 3; ++c) acc[ox * 3 + c] += row[x * 3 + c];
    }
    for (std::size_t i = 0; i < acc.size(); ++i) {
      out.pixels[oy * out.width * 3 + i] = static_cast<std::uint8_t>(std::floor(acc[i] / area + 0.5));
    }
  }
  return out;
}

}  // namespace

PyramidImage::PyramidImage(Raster level0, std::vector<std::size_t> factors) : factors_(std::move(factors)) {
  if (factors_.empty() || factors_.front() != 1) throw Error(ErrorKind::Config, "pyramid must start at factor 1");
  if (level0.width == 0 || level0.height == 0) throw Error(ErrorKind::Size, "empty base raster");
  levels_.reserve(factors_.size());
  levels_.push_back(std::move(level0));
  for (std::size_t i = 1; i < factors_.size(); ++i) {
    if (factors_[i] == 0 || levels_.front().width / factors_[i] == 0 || levels_.front().height / factors_[i] == 0) {
      throw Error(ErrorKind::Size, "pyramid factor " + std::to_string(factors_[i]) + " too large");
    }
    levels_.push_back(box_downsample(levels_.front(), factors_[i]));
  }
}

Raster PyramidImage::region(std::size_t level, std::size_t x, std::size_t y, std::size_t w, std::size_t h) const {
  return crop(levels_.at(level), x, y, w, h);
}

Thumbnail thumbnail(const PyramidImage& image) {
  if (image.width() < kThumbnailSide || image.height() < kThumbnailSide) {
    throw Error(ErrorKind::Size, "image " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                                     " is smaller than the 1024 thumbnail");
  }
  Thumbnail t;
  t.s1 = static_cast<double>(image.width()) / static_cast<double>(kThumbnailSide);
  t.s2 = static_cast<double>(image.height()) / static_cast<double>(kThumbnailSide);
  t.raster = to_raster(resize(image.base(), kThumbnailSide, kThumbnailSide));
  return t;
}

}  // namespace msamil::synth
