#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "msamil/synthwsi/pyramid.hpp"
#include "msamil/synthwsi/raster.hpp"

namespace msamil::synth {

enum class MicroTexture : int { VerticalStripes = 0, Checker = 1, HorizontalStripes = 2 };
enum class MacroShape : int { TopHalf = 0, LeftHalf = 1, DiagonalQuadrants = 2 };

/// Parameters of the planted two-scale classification task.
///
/// Lesion tissue carries a class micro texture: a +/-amplitude pattern with
/// texture_period-pixel period at level 0. It survives the 8x shrink of a
/// 512 px patch and cancels exactly under the 16x and 32x shrinks of the
/// larger patches. The class macro shape is the lesion outline inside "fringe"
/// blocks. A fringe block is exactly half lesion, so a 512 px window over it
/// never passes the 0.7 red-fraction filter. The outline shows only in 1024
/// and 2048 px patches.
struct SynthSpec {
  std::size_t classes = 4;
  std::vector<int> micro = {0, 0, 1, 2};  // MicroTexture per class
  std::vector<int> macro = {0, 1, 2, 2};  // MacroShape per class
  std::size_t texture_period = 16;
  int texture_amplitude = 20;
  double lesion_fraction = 0.3;
  int noise = 12;  // uniform integer noise in [-noise, noise]
  std::size_t width = 4096;
  std::size_t height = 4096;
};

// Throws ErrorKind::Spec when the spec breaks the separability construction.
void validate(const SynthSpec& spec);

// Best accuracy reachable from one scale alone: distinguishable groups / classes,
// taking the max over the micro view (20x) and the macro view (10x, 5x).
double single_scale_cap(const SynthSpec& spec);

inline constexpr std::size_t kBlockSide = 512;  // level-0 pixels per layout block
inline constexpr std::size_t kCellSide = 32;    // level-0 pixels per outline cell

enum class BlockKind : std::uint8_t { Stroma = 0, Core = 1, Fringe = 2 };

struct LesionLayout {
  std::size_t grid_w = 0;
  std::size_t grid_h = 0;
  std::vector<BlockKind> blocks;

  BlockKind at(std::size_t bx, std::size_t by) const { return blocks[by * grid_w + bx]; }
  double planned_fraction() const;
};

// Class-independent block layout for a seed.
LesionLayout make_layout(const SynthSpec& spec, std::uint64_t seed);

bool in_lesion(const LesionLayout& layout, MacroShape shape, std::size_t x, std::size_t y);

struct LesionMask {
  enum class Provenance { Oracle, File };
  Raster raster;  // 1024 x 1024, channel values in {0, 1}; red marks lesion
  Provenance provenance = Provenance::Oracle;

  bool red(std::size_t u, std::size_t v) const { return raster.at(u, v, 0) != 0; }
  double red_fraction() const;
};

// Throws ErrorKind::Spec unless every channel value is 0 or 1 and the raster is 1024 x 1024.
void validate_mask(const LesionMask& mask);

struct SyntheticSlide {
  PyramidImage image;
  LesionMask mask;
  std::size_t label = 0;
};

SyntheticSlide generate_wsi(const SynthSpec& spec, std::size_t label, std::uint64_t seed);
LesionMask generate_mask(const SynthSpec& spec, std::size_t label, std::uint64_t seed);

}  // namespace msamil::synth
