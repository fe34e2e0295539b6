#include "msamil/synthwsi/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "msamil/errors.hpp"

namespace msamil::synth {

FloatImage to_float(const Raster& r) {
  FloatImage out{r.width, r.height, std::vector<double>(r.pixels.begin(), r.pixels.end())};
  return out;
}

Raster to_raster(const FloatImage& img) {
  Raster out(img.width, img.height);
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::floor(img.values[i] + 0.5), 0.0, 255.0));
  }
  return out;
}

namespace {

struct Tap {
  std::size_t index;
  double weight;
};

// Per output coordinate, the source samples and weights along one axis.
std::vector<std::vector<Tap>> area_taps(std::size_t in, std::size_t out) {
  std::vector<std::vector<Tap>> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  const bool integral = in % out == 0;
  for (std::size_t o = 0; o < out; ++o) {
    if (integral) {
      const std::size_t f = in / out;
      for (std::size_t i = o * f; i < (o + 1) * f; ++i) taps[o].push_back({i, 1.0});
      continue;
    }
    const double lo = static_cast<double>(o) * ratio;
    const double hi = static_cast<double>(o + 1) * ratio;
    for (auto i = static_cast<std::size_t>(std::floor(lo)); i < in && static_cast<double>(i) < hi; ++i) {
      const double w = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (w > 0) taps[o].push_back({i, w});
    }
  }
  return taps;
}

std::vector<std::vector<Tap>> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<std::vector<Tap>> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double pos = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double t = pos - static_cast<double>(i0);
    if (i1 == i0 || t == 0.0) {
      taps[o].push_back({i0, 1.0});
    } else {
      taps[o].push_back({i0, 1.0 - t});
      taps[o].push_back({i1, t});
    }
  }
  return taps;
}

template <typename Sample>
FloatImage resample(std::size_t in_w, std::size_t in_h, Sample sample, std::size_t out_w, std::size_t out_h) {
  const bool shrink_x = out_w <= in_w, shrink_y = out_h <= in_h;
  const auto tx = shrink_x ? area_taps(in_w, out_w) : bilinear_taps(in_w, out_w);
  const auto ty = shrink_y ? area_taps(in_h, out_h) : bilinear_taps(in_h, out_h);
  FloatImage out{out_w, out_h, std::vector<double>(out_w * out_h * 3, 0.0)};
  std::vector<double> rowbuf(out_w * 3);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    double* dst = out.values.data() + oy * out_w * 3;
    double wsum_y = 0.0;
    for (const auto& ty_tap : ty[oy]) {
      std::fill(rowbuf.begin(), rowbuf.end(), 0.0);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        for (const auto& tx_tap : tx[ox]) {
          for (std::size_t c = 0; c < 3; ++c) rowbuf[ox * 3 + c] += tx_tap.weight * sample(tx_tap.index, ty_tap.index, c);
        }
      }
      for (std::size_t i = 0; i < rowbuf.size(); ++i) dst[i] += ty_tap.weight * rowbuf[i];
      wsum_y += ty_tap.weight;
    }
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      double wsum_x = 0.0;
      for (const auto& t : tx[ox]) wsum_x += t.weight;
      const double norm = wsum_x * wsum_y;
      for (std::size_t c = 0; c < 3; ++c) dst[ox * 3 + c] /= norm;
    }
  }
  return out;
}

}  // namespace

FloatImage resize(const FloatImage& src, std::size_t out_w, std::size_t out_h) {
  if (out_w == src.width && out_h == src.height) return src;
  return resample(src.width, src.height, [&src](std::size_t x, std::size_t y, std::size_t c) { return src.at(x, y, c); },
                  out_w, out_h);
}

FloatImage resize(const Raster& src, std::size_t out_w, std::size_t out_h) {
  if (out_w == src.width && out_h == src.height) return to_float(src);
  return resample(src.width, src.height,
                  [&src](std::size_t x, std::size_t y, std::size_t c) { return static_cast<double>(src.at(x, y, c)); },
                  out_w, out_h);
}

Raster crop(const Raster& src, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (x0 + w > src.width || y0 + h > src.height) {
    throw Error(ErrorKind::Bounds, "crop window exceeds " + std::to_string(src.width) + "x" + std::to_string(src.height));
  }
  Raster out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* row = src.pixels.data() + ((y0 + y) * src.width + x0) * 3;
    std::copy_n(row, w * 3, out.pixels.data() + y * w * 3);
  }
  return out;
}

std::vector<std::uint8_t> encode_ppm(const Raster& r) {
  const std::string header = "P6\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), r.pixels.begin(), r.pixels.end());
  return out;
}

Raster decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto fail = [&pos](const std::string& what) -> void {
    throw Error(ErrorKind::Parse, "PPM " + what + " at byte offset " + std::to_string(pos));
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    skip_space();
    if (pos >= bytes.size()) fail("unexpected end of header");
    if (!std::isdigit(bytes[pos])) fail("expected decimal integer");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1u << 30)) fail("integer too large");
      ++pos;
    }
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') fail("missing P6 magic");
  pos = 2;
  const std::size_t w = read_uint();
  const std::size_t h = read_uint();
  const std::size_t maxval = read_uint();
  if (maxval != 255) fail("unsupported maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("expected single whitespace after maxval");
  ++pos;
  if (w == 0 || h == 0) fail("empty raster");
  const std::size_t need = w * h * 3;
  if (bytes.size() - pos < need) {
    pos = bytes.size();
    fail("truncated pixel data (expected " + std::to_string(need) + " bytes)");
  }
  Raster r(w, h);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), need, r.pixels.begin());
  return r;
}

void write_ppm(const Raster& r, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  const auto bytes = encode_ppm(r);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Raster read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

}  // namespace msamil::synth
