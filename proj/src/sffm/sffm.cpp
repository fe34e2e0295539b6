#include "msamil/sffm/sffm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "msamil/errors.hpp"

namespace msamil::sffm {

int scale_code_for(std::size_t d_k) {
  for (std::size_t i = 0; i < kPatchSides.size(); ++i)
    if (kPatchSides[i] == d_k) return static_cast<int>(i);
  throw Error(ErrorKind::Spec, "patch side " + std::to_string(d_k) + " is not one of 512/1024/2048");
}

std::size_t side_for(int scale_code) {
  if (scale_code < 0 || scale_code > 2) throw Error(ErrorKind::Spec, "scale code must be 0, 1 or 2");
  return kPatchSides[static_cast<std::size_t>(scale_code)];
}

bool sffm_order(const PatchRef& a, const PatchRef& b) {
  if (a.d_k != b.d_k) return a.d_k < b.d_k;
  if (a.y != b.y) return a.y < b.y;
  return a.x < b.x;
}

bool in_bounds(const PatchRef& ref, std::size_t width, std::size_t height) {
  const auto half = static_cast<std::int64_t>(ref.d_k / 2);
  return ref.x - half >= 0 && ref.y - half >= 0 && ref.x + half <= static_cast<std::int64_t>(width) &&
         ref.y + half <= static_cast<std::int64_t>(height);
}

PatchSet make_patch_set(std::string slide_id, std::vector<PatchRef> refs) {
  PatchSet set;
  set.slide_id = std::move(slide_id);
  std::sort(refs.begin(), refs.end(), sffm_order);
  for (const auto& r : refs) {
    switch (r.scale_code) {
      case 0: ++set.n1; break;
      case 1: ++set.n2; break;
      case 2: ++set.n3; break;
      default: throw Error(ErrorKind::Spec, "bad scale code " + std::to_string(r.scale_code));
    }
  }
  set.refs = std::move(refs);
  return set;
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> axis_bounds(double stride, std::size_t extent) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0;; ++i) {
    const double end = static_cast<double>(i + 1) * stride;
    if (end > static_cast<double>(extent)) break;
    out.emplace_back(static_cast<std::size_t>(std::floor(static_cast<double>(i) * stride)),
                     static_cast<std::size_t>(std::floor(end)));
  }
  return out;
}

}  // namespace

std::vector<Window> scan_grid(const synth::LesionMask& mask, double s1, double s2, std::size_t d_k) {
  if (!(s1 > 0) || !(s2 > 0)) throw Error(ErrorKind::Resolution, "scale factors must be positive");
  const double sx = static_cast<double>(d_k) / s1, sy = static_cast<double>(d_k) / s2;
  if (sx < 1.0 || sy < 1.0) {
    throw Error(ErrorKind::Resolution, "patch side " + std::to_string(d_k) + " maps to less than one mask pixel");
  }
  const auto xs = axis_bounds(sx, mask.raster.width);
  const auto ys = axis_bounds(sy, mask.raster.height);
  std::vector<Window> out;
  out.reserve(xs.size() * ys.size());
  for (const auto& [v0, v1] : ys)
    for (const auto& [u0, u1] : xs) out.push_back(Window{u0, v0, u1, v1});
  return out;
}

double red_fraction(const synth::LesionMask& mask, const Window& w) {
  if (w.u1 > mask.raster.width || w.v1 > mask.raster.height || w.u0 >= w.u1 || w.v0 >= w.v1) {
    throw Error(ErrorKind::Bounds, "window outside mask");
  }
  std::size_t red = 0;
  for (std::size_t v = w.v0; v < w.v1; ++v)
    for (std::size_t u = w.u0; u < w.u1; ++u) red += mask.red(u, v);
  return static_cast<double>(red) / static_cast<double>((w.u1 - w.u0) * (w.v1 - w.v0));
}

std::vector<PatchRef> filter_and_map(const synth::LesionMask& mask, std::span<const Window> windows, double s1,
                                     double s2, std::size_t d_k, std::size_t width, std::size_t height,
                                     double theta) {
  const int code = scale_code_for(d_k);
  std::vector<PatchRef> out;
  for (const auto& w : windows) {
    if (!(red_fraction(mask, w) > theta)) continue;
    const double u = 0.5 * static_cast<double>(w.u0 + w.u1);
    const double v = 0.5 * static_cast<double>(w.v0 + w.v1);
    PatchRef ref{static_cast<std::int64_t>(std::llround(u * s1)), static_cast<std::int64_t>(std::llround(v * s2)), d_k,
                 code};
    if (in_bounds(ref, width, height)) out.push_back(ref);
  }
  return out;
}

synth::Raster crop_patch(const synth::Raster& base, const PatchRef& ref) {
  if (!in_bounds(ref, base.width, base.height)) {
    throw Error(ErrorKind::Bounds, "patch (" + std::to_string(ref.x) + ", " + std::to_string(ref.y) + ", " +
                                       std::to_string(ref.d_k) + ") leaves the " + std::to_string(base.width) + "x" +
                                       std::to_string(base.height) + " image");
  }
  const auto half = static_cast<std::int64_t>(ref.d_k / 2);
  return synth::crop(base, static_cast<std::size_t>(ref.x - half), static_cast<std::size_t>(ref.y - half), ref.d_k,
                     ref.d_k);
}

synth::Raster crop_patch(const synth::PyramidImage& image, const PatchRef& ref) { return crop_patch(image.base(), ref); }

synth::LesionMask OracleMaskProvider::mask_for(const synth::SlideRecord& slide) const {
  return synth::generate_mask(spec_, slide.label, slide.seed);
}

synth::LesionMask FileMaskProvider::mask_for(const synth::SlideRecord& slide) const {
  const auto path = synth::slide_dir(root_, slide.id) / "mask.ppm";
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::MissingInput, "missing mask " + path.string());
  synth::LesionMask mask;
  mask.raster = synth::read_ppm(path);
  mask.provenance = synth::LesionMask::Provenance::File;
  synth::validate_mask(mask);
  return mask;
}

PatchSet filter_mask(const synth::LesionMask& mask, std::size_t width, std::size_t height,
                     std::span<const std::size_t> sides, double theta, std::string slide_id) {
  if (!(theta > 0.0 && theta < 1.0)) throw Error(ErrorKind::Config, "red-fraction threshold must lie in (0, 1)");
  if (width < synth::kThumbnailSide || height < synth::kThumbnailSide) {
    throw Error(ErrorKind::Size, "slide smaller than the 1024 mask");
  }
  const double s1 = static_cast<double>(width) / static_cast<double>(synth::kThumbnailSide);
  const double s2 = static_cast<double>(height) / static_cast<double>(synth::kThumbnailSide);
  std::vector<PatchRef> refs;
  for (auto d_k : sides) {
    const auto windows = scan_grid(mask, s1, s2, d_k);
    auto kept = filter_and_map(mask, windows, s1, s2, d_k, width, height, theta);
    refs.insert(refs.end(), kept.begin(), kept.end());
  }
  return make_patch_set(std::move(slide_id), std::move(refs));
}

PatchSet run_sffm(const synth::PyramidImage& image, const synth::SlideRecord& slide, const MaskProvider& provider,
                  std::span<const std::size_t> sides, double theta) {
  return filter_mask(provider.mask_for(slide), image.width(), image.height(), sides, theta, slide.id);
}

std::vector<PatchRef> full_grid(std::size_t width, std::size_t height, std::span<const std::size_t> sides) {
  std::vector<PatchRef> refs;
  for (auto d_k : sides) {
    const int code = scale_code_for(d_k);
    const auto half = static_cast<std::int64_t>(d_k / 2);
    for (std::size_t y = 0; y + d_k <= height; y += d_k)
      for (std::size_t x = 0; x + d_k <= width; x += d_k)
        refs.push_back(PatchRef{static_cast<std::int64_t>(x) + half, static_cast<std::int64_t>(y) + half, d_k, code});
  }
  std::sort(refs.begin(), refs.end(), sffm_order);
  return refs;
}

void write_refs(const std::vector<PatchRef>& refs, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& r : refs) os << r.x << ' ' << r.y << ' ' << r.d_k << ' ' << r.scale_code << '\n';
  if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::vector<PatchRef> read_refs(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::MissingInput, "cannot open " + path.string());
  std::vector<PatchRef> refs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    PatchRef r;
    std::string extra;
    if (!(ls >> r.x >> r.y >> r.d_k >> r.scale_code) || (ls >> extra)) {
      throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) + ": expected 'x y d_k scale_code'");
    }
    if (scale_code_for(r.d_k) != r.scale_code) {
      throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) + ": scale code does not match d_k");
    }
    refs.push_back(r);
  }
  return refs;
}

}  // namespace msamil::sffm
