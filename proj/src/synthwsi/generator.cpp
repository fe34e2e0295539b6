#include "msamil/synthwsi/generator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "msamil/errors.hpp"
#include "msamil/rng.hpp"

namespace msamil::synth {

namespace {

constexpr std::uint64_t kLayoutSalt = 0x1a70;
constexpr std::uint64_t kNoiseSalt = 0x401e;
constexpr int kLesionColor[3] = {150, 90, 160};
constexpr int kStromaColor[3] = {215, 160, 185};
constexpr std::size_t kQuadBlocks = 4;       // 2048 px window = 4x4 blocks
constexpr std::size_t kQuadFringe = 8;
constexpr double kQuadRed = 12.0;            // 8 core + 8 fringe
constexpr double kOtherQuadMaxRed = 11.0;    // stays at or below 0.7 * 16

int texture_sign(MicroTexture t, std::size_t x, std::size_t y, std::size_t half) {
  const std::size_t cx = (x / half) & 1u, cy = (y / half) & 1u;
  switch (t) {
    case MicroTexture::VerticalStripes: return cx ? -1 : 1;
    case MicroTexture::Checker: return (cx ^ cy) ? -1 : 1;
    case MicroTexture::HorizontalStripes: return cy ? -1 : 1;
  }
  return 0;
}

bool outline_cell(MacroShape s, std::size_t cell_x, std::size_t cell_y) {
  constexpr std::size_t half = kBlockSide / kCellSide / 2;
  switch (s) {
    case MacroShape::TopHalf: return cell_y < half;
    case MacroShape::LeftHalf: return cell_x < half;
    case MacroShape::DiagonalQuadrants: return (cell_x < half) == (cell_y < half);
  }
  return false;
}

}  // namespace

void validate(const SynthSpec& spec) {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::Spec, why); };
  if (spec.classes < 2) fail("need at least two classes");
  if (spec.micro.size() != spec.classes || spec.macro.size() != spec.classes) {
    fail("micro/macro tables must list one entry per class");
  }
  for (std::size_t c = 0; c < spec.classes; ++c) {
    if (spec.micro[c] < 0 || spec.micro[c] > 2) fail("unknown micro texture for class " + std::to_string(c));
    if (spec.macro[c] < 0 || spec.macro[c] > 2) fail("unknown macro shape for class " + std::to_string(c));
  }
  if (spec.lesion_fraction < 0.1 || spec.lesion_fraction > 0.5) fail("lesion fraction must lie in [0.1, 0.5]");
  if (spec.width < 1024 || spec.height < 1024 || spec.width % 1024 || spec.height % 1024) {
    fail("slide sides must be positive multiples of 1024");
  }
  if (spec.texture_period != 16) fail("texture period must be 16 px so it cancels under 16x and 32x shrinking");
  if (spec.texture_amplitude < 1 || spec.noise < 0) fail("amplitude must be positive and noise non-negative");
  const int lo = std::min(kLesionColor[1], kStromaColor[1]) - spec.texture_amplitude - spec.noise;
  const int hi = std::max(kStromaColor[0], kLesionColor[0]) + spec.texture_amplitude + spec.noise;
  if (lo < 0 || hi > 255) fail("amplitude plus noise would clip 8-bit pixels");

  bool micro_pair = false, macro_pair = false;
  for (std::size_t a = 0; a < spec.classes; ++a) {
    for (std::size_t b = a + 1; b < spec.classes; ++b) {
      const bool same_micro = spec.micro[a] == spec.micro[b];
      const bool same_macro = spec.macro[a] == spec.macro[b];
      if (same_micro && same_macro) fail("classes " + std::to_string(a) + " and " + std::to_string(b) + " are identical");
      micro_pair = micro_pair || (same_micro && !same_macro);
      macro_pair = macro_pair || (same_macro && !same_micro);
    }
  }
  if (spec.classes >= 4 && !(micro_pair && macro_pair)) {
    fail("need a micro-identical/macro-distinct pair and a macro-identical/micro-distinct pair");
  }
}

double single_scale_cap(const SynthSpec& spec) {
  const std::set<int> micro(spec.micro.begin(), spec.micro.end());
  const std::set<int> macro(spec.macro.begin(), spec.macro.end());
  const auto groups = std::max(micro.size(), macro.size());
  return static_cast<double>(groups) / static_cast<double>(spec.classes);
}

double LesionLayout::planned_fraction() const {
  double red = 0.0;
  for (auto b : blocks) red += b == BlockKind::Core ? 1.0 : b == BlockKind::Fringe ? 0.5 : 0.0;
  return red / static_cast<double>(blocks.size());
}

LesionLayout make_layout(const SynthSpec& spec, std::uint64_t seed) {
  LesionLayout layout;
  layout.grid_w = spec.width / kBlockSide;
  layout.grid_h = spec.height / kBlockSide;
  layout.blocks.assign(layout.grid_w * layout.grid_h, BlockKind::Stroma);
  Rng rng(mix_seed(seed, kLayoutSalt));

  const std::size_t qw = layout.grid_w / kQuadBlocks, qh = layout.grid_h / kQuadBlocks;
  auto quad_of = [&](std::size_t bx, std::size_t by) -> std::ptrdiff_t {
    const std::size_t qx = bx / kQuadBlocks, qy = by / kQuadBlocks;
    if (qx >= qw || qy >= qh) return -1;
    return static_cast<std::ptrdiff_t>(qy * qw + qx);
  };
  std::vector<double> quad_red(qw * qh, 0.0);
  std::vector<bool> quad_full(qw * qh, false);

  double remaining = spec.lesion_fraction * static_cast<double>(layout.blocks.size());
  std::vector<std::size_t> quads(qw * qh);
  for (std::size_t i = 0; i < quads.size(); ++i) quads[i] = i;
  rng.shuffle(quads);
  const auto full = std::min(quads.size(), static_cast<std::size_t>(std::floor(remaining / kQuadRed)));
  for (std::size_t k = 0; k < full; ++k) {
    const std::size_t q = quads[k];
    std::vector<std::size_t> cells(kQuadBlocks * kQuadBlocks);
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
    rng.shuffle(cells);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::size_t bx = (q % qw) * kQuadBlocks + cells[i] % kQuadBlocks;
      const std::size_t by = (q / qw) * kQuadBlocks + cells[i] / kQuadBlocks;
      layout.blocks[by * layout.grid_w + bx] = i < kQuadFringe ? BlockKind::Fringe : BlockKind::Core;
    }
    quad_red[q] = kQuadRed;
    quad_full[q] = true;
    remaining -= kQuadRed;
  }

  // Grow the rest as a blob attached to existing lesion, keeping every other
  // 2048 px window at or below the 0.7 threshold.
  auto allowed = [&](std::size_t bx, std::size_t by, double amount) {
    const auto q = quad_of(bx, by);
    if (q < 0) return true;
    if (quad_full[static_cast<std::size_t>(q)]) return false;
    return quad_red[static_cast<std::size_t>(q)] + amount <= kOtherQuadMaxRed;
  };
  auto is_lesion = [&](std::ptrdiff_t bx, std::ptrdiff_t by) {
    if (bx < 0 || by < 0 || bx >= static_cast<std::ptrdiff_t>(layout.grid_w) ||
        by >= static_cast<std::ptrdiff_t>(layout.grid_h)) {
      return false;
    }
    return layout.blocks[static_cast<std::size_t>(by) * layout.grid_w + static_cast<std::size_t>(bx)] != BlockKind::Stroma;
  };
  while (remaining >= 0.25) {
    const bool core = remaining >= 1.0 && rng.uniform() < 0.75;
    const double amount = core ? 1.0 : 0.5;
    std::vector<std::size_t> frontier, any;
    for (std::size_t by = 0; by < layout.grid_h; ++by) {
      for (std::size_t bx = 0; bx < layout.grid_w; ++bx) {
        if (layout.blocks[by * layout.grid_w + bx] != BlockKind::Stroma || !allowed(bx, by, amount)) continue;
        any.push_back(by * layout.grid_w + bx);
        const auto x = static_cast<std::ptrdiff_t>(bx), y = static_cast<std::ptrdiff_t>(by);
        if (is_lesion(x - 1, y) || is_lesion(x + 1, y) || is_lesion(x, y - 1) || is_lesion(x, y + 1)) {
          frontier.push_back(by * layout.grid_w + bx);
        }
      }
    }
    const auto& pool = frontier.empty() ? any : frontier;
    if (pool.empty()) break;
    const std::size_t pick = pool[rng.below(pool.size())];
    layout.blocks[pick] = core ? BlockKind::Core : BlockKind::Fringe;
    const auto q = quad_of(pick % layout.grid_w, pick / layout.grid_w);
    if (q >= 0) quad_red[static_cast<std::size_t>(q)] += amount;
    remaining -= amount;
  }
  return layout;
}

bool in_lesion(const LesionLayout& layout, MacroShape shape, std::size_t x, std::size_t y) {
  const std::size_t bx = x / kBlockSide, by = y / kBlockSide;
  if (bx >= layout.grid_w || by >= layout.grid_h) return false;
  switch (layout.at(bx, by)) {
    case BlockKind::Stroma: return false;
    case BlockKind::Core: return true;
    case BlockKind::Fringe: return outline_cell(shape, (x % kBlockSide) / kCellSide, (y % kBlockSide) / kCellSide);
  }
  return false;
}

double LesionMask::red_fraction() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < raster.pixels.size(); i += 3) n += raster.pixels[i] != 0;
  return static_cast<double>(n) / static_cast<double>(raster.width * raster.height);
}

void validate_mask(const LesionMask& mask) {
  if (mask.raster.width != kThumbnailSide || mask.raster.height != kThumbnailSide) {
    throw Error(ErrorKind::Spec, "lesion mask must be 1024x1024, got " + std::to_string(mask.raster.width) + "x" +
                                     std::to_string(mask.raster.height));
  }
  for (auto v : mask.raster.pixels)
    if (v > 1) throw Error(ErrorKind::Spec, "lesion mask values must be 0 or 1");
}

LesionMask generate_mask(const SynthSpec& spec, std::size_t label, std::uint64_t seed) {
  validate(spec);
  if (label >= spec.classes) throw Error(ErrorKind::Label, "label " + std::to_string(label) + " out of range");
  const auto layout = make_layout(spec, seed);
  const auto shape = static_cast<MacroShape>(spec.macro[label]);
  LesionMask mask;
  mask.raster = Raster(kThumbnailSide, kThumbnailSide, 0);
  const double s1 = static_cast<double>(spec.width) / kThumbnailSide;
  const double s2 = static_cast<double>(spec.height) / kThumbnailSide;
  for (std::size_t v = 0; v < kThumbnailSide; ++v) {
    const auto y = static_cast<std::size_t>(std::floor((static_cast<double>(v) + 0.5) * s2));
    for (std::size_t u = 0; u < kThumbnailSide; ++u) {
      const auto x = static_cast<std::size_t>(std::floor((static_cast<double>(u) + 0.5) * s1));
      if (in_lesion(layout, shape, x, y)) mask.raster.at(u, v, 0) = 1;
    }
  }
  return mask;
}

SyntheticSlide generate_wsi(const SynthSpec& spec, std::size_t label, std::uint64_t seed) {
  validate(spec);
  if (label >= spec.classes) throw Error(ErrorKind::Label, "label " + std::to_string(label) + " out of range");
  const auto layout = make_layout(spec, seed);
  const auto shape = static_cast<MacroShape>(spec.macro[label]);
  const auto texture = static_cast<MicroTexture>(spec.micro[label]);
  const std::size_t half = spec.texture_period / 2;
  const auto span = static_cast<std::uint64_t>(2 * spec.noise + 1);

  Raster base(spec.width, spec.height);
  Rng noise(mix_seed(seed, kNoiseSalt));
  for (std::size_t y = 0; y < spec.height; ++y) {
    std::uint8_t* row = base.pixels.data() + y * spec.width * 3;
    for (std::size_t x = 0; x < spec.width; ++x) {
      const bool lesion = in_lesion(layout, shape, x, y);
      const int tex = lesion ? spec.texture_amplitude * texture_sign(texture, x, y, half) : 0;
      const int* color = lesion ? kLesionColor : kStromaColor;
      for (std::size_t c = 0; c < 3; ++c) {
        const int v = color[c] + tex + static_cast<int>(noise.below(span)) - spec.noise;
        row[x * 3 + c] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
      }
    }
  }
  SyntheticSlide slide{PyramidImage(std::move(base)), generate_mask(spec, label, seed), label};
  return slide;
}

}  // namespace msamil::synth
