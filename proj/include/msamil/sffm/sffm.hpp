#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "msamil/synthwsi/dataset.hpp"
#include "msamil/synthwsi/generator.hpp"
#include "msamil/synthwsi/pyramid.hpp"

namespace msamil::sffm {

inline constexpr std::array<std::size_t, 3> kPatchSides = {512, 1024, 2048};
inline constexpr double kRedThreshold = 0.7;

// 512 -> 0 (20x), 1024 -> 1 (10x), 2048 -> 2 (5x); anything else is a Spec error.
int scale_code_for(std::size_t d_k);
std::size_t side_for(int scale_code);

/// Half-open mask-space pixel window [u0, u1) x [v0, v1).
struct Window {
  std::size_t u0 = 0, v0 = 0, u1 = 0, v1 = 0;
  auto operator<=>(const Window&) const = default;
};

/// Crop descriptor: centre (x, y) and side d_k in base pixels.
struct PatchRef {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::size_t d_k = 512;
  int scale_code = 0;
  auto operator<=>(const PatchRef&) const = default;
};

// Run order: d_k, then y, then x.
bool sffm_order(const PatchRef& a, const PatchRef& b);
bool in_bounds(const PatchRef& ref, std::size_t width, std::size_t height);

struct PatchSet {
  std::string slide_id;
  std::vector<PatchRef> refs;
  std::size_t n1 = 0, n2 = 0, n3 = 0;

  std::size_t size() const { return refs.size(); }
  bool empty() const { return refs.empty(); }
};

// Tallies n1/n2/n3 and sorts refs into run order.
PatchSet make_patch_set(std::string slide_id, std::vector<PatchRef> refs);

/// Non-overlapping windows of side d_k/s1 x d_k/s2 mask pixels. Window i spans
/// [floor(i*stride), floor((i+1)*stride)); windows reaching past the mask edge are dropped.
std::vector<Window> scan_grid(const synth::LesionMask& mask, double s1, double s2, std::size_t d_k);

double red_fraction(const synth::LesionMask& mask, const Window& w);

/// Keeps windows with red fraction strictly above theta and maps their centre
/// to base pixels, x = round(u * s1). Refs whose crop would leave the W x H image are dropped.
std::vector<PatchRef> filter_and_map(const synth::LesionMask& mask, std::span<const Window> windows, double s1,
                                     double s2, std::size_t d_k, std::size_t width, std::size_t height,
                                     double theta = kRedThreshold);

// Level-0 copy of [x - d_k/2, x + d_k/2) x [y - d_k/2, y + d_k/2).
synth::Raster crop_patch(const synth::PyramidImage& image, const PatchRef& ref);
synth::Raster crop_patch(const synth::Raster& base, const PatchRef& ref);

class MaskProvider {
 public:
  virtual ~MaskProvider() = default;
  virtual synth::LesionMask mask_for(const synth::SlideRecord& slide) const = 0;
};

// Regenerates the planted lesion footprint; stands in for a trained segmenter.
class OracleMaskProvider final : public MaskProvider {
 public:
  explicit OracleMaskProvider(synth::SynthSpec spec) : spec_(std::move(spec)) {}
  synth::LesionMask mask_for(const synth::SlideRecord& slide) const override;

 private:
  synth::SynthSpec spec_;
};

// Reads <root>/slide_<id>/mask.ppm.
class FileMaskProvider final : public MaskProvider {
 public:
  explicit FileMaskProvider(std::filesystem::path root) : root_(std::move(root)) {}
  synth::LesionMask mask_for(const synth::SlideRecord& slide) const override;

 private:
  std::filesystem::path root_;
};

PatchSet filter_mask(const synth::LesionMask& mask, std::size_t width, std::size_t height,
                     std::span<const std::size_t> sides = kPatchSides, double theta = kRedThreshold,
                     std::string slide_id = {});

PatchSet run_sffm(const synth::PyramidImage& image, const synth::SlideRecord& slide, const MaskProvider& provider,
                  std::span<const std::size_t> sides = kPatchSides, double theta = kRedThreshold);

// Every grid position of the given sides, ignoring the mask.
std::vector<PatchRef> full_grid(std::size_t width, std::size_t height, std::span<const std::size_t> sides = kPatchSides);

// Ref dump: one "x y d_k scale_code" line per ref.
void write_refs(const std::vector<PatchRef>& refs, const std::filesystem::path& path);
std::vector<PatchRef> read_refs(const std::filesystem::path& path);

}  // namespace msamil::sffm
