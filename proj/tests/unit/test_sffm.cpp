#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "msamil/errors.hpp"
#include "msamil/rng.hpp"
#include "msamil/sffm/sffm.hpp"
#include "msamil/synthwsi/dataset.hpp"
#include "../support/sffm_oracle.hpp"

using namespace msamil;
using namespace msamil::sffm;
using synth::LesionMask;
using namespace oracle;
namespace fs = std::filesystem;

namespace {

std::set<PatchRef> run_scale(const LesionMask& m, std::size_t W, std::size_t H, std::size_t d_k) {
  const double s1 = double(W) / 1024.0, s2 = double(H) / 1024.0;
  const auto windows = scan_grid(m, s1, s2, d_k);
  const auto refs = filter_and_map(m, windows, s1, s2, d_k, W, H);
  return {refs.begin(), refs.end()};
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::Input;
}

}  // namespace

TEST(ScaleCode, Mapping) {
  EXPECT_EQ(scale_code_for(512), 0);
  EXPECT_EQ(scale_code_for(1024), 1);
  EXPECT_EQ(scale_code_for(2048), 2);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(scale_code_for(side_for(c)), c);
  EXPECT_EQ(kind_of([] { scale_code_for(768); }), ErrorKind::Spec);
}

TEST(ScanGrid, WindowCounts) {
  const auto m = blank_mask();
  const auto small = scan_grid(m, 4, 4, 512);
  EXPECT_EQ(small.size(), 64u);
  for (const auto& w : small) {
    EXPECT_EQ(w.u1 - w.u0, 128u);
    EXPECT_EQ(w.v1 - w.v0, 128u);
  }
  const auto big = scan_grid(m, 4, 4, 2048);
  ASSERT_EQ(big.size(), 4u);
  EXPECT_EQ(big[3].u0, 512u);
  EXPECT_EQ(big[3].u1, 1024u);
}

TEST(ScanGrid, TrailingPartialWindowDiscarded) {
  // s1 = 5 gives 102.4 px windows; ten fit and the eleventh would overflow.
  const auto ws = scan_grid(blank_mask(), 5, 4, 512);
  std::set<std::size_t> us;
  for (const auto& w : ws) {
    us.insert(w.u0);
    EXPECT_LE(w.u1, 1024u);
  }
  EXPECT_EQ(us.size(), 10u);
  EXPECT_EQ(ws.size(), 10u * 8u);
  EXPECT_EQ(*us.rbegin(), 921u);  // floor(9 * 102.4)
}

TEST(ScanGrid, SubPixelStrideRaises) {
  EXPECT_EQ(kind_of([] { scan_grid(blank_mask(), 1024, 4, 512); }), ErrorKind::Resolution);
}

TEST(RedFraction, Basics) {
  const Window w{0, 0, 16, 16};
  EXPECT_EQ(red_fraction(full_mask(), w), 1.0);
  EXPECT_EQ(red_fraction(blank_mask(), w), 0.0);
  auto m = blank_mask();
  for (std::size_t v = 0; v < 16; ++v)
    for (std::size_t u = 0; u < 16; ++u) m.raster.at(u, v, 0) = (u + v) % 2;
  EXPECT_EQ(red_fraction(m, w), 0.5);
  // green and blue are ignored
  auto g = blank_mask();
  for (auto& p : g.raster.pixels) p = 1;
  for (std::size_t i = 0; i < g.raster.pixels.size(); i += 3) g.raster.pixels[i] = 0;
  EXPECT_EQ(red_fraction(g, w), 0.0);
}

TEST(FilterAndMap, ThresholdIsStrict) {
  auto m = blank_mask();
  const Window w{100, 100, 110, 110};
  paint(m, 100, 100, 110, 107);  // 70 of 100 pixels
  const Window ws[] = {w};
  EXPECT_EQ(red_fraction(m, w), 0.7);
  EXPECT_TRUE(filter_and_map(m, ws, 4, 4, 512, 4096, 4096).empty());
  m.raster.at(100, 107, 0) = 1;
  const auto kept = filter_and_map(m, ws, 4, 4, 512, 4096, 4096);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].x, 420);
  EXPECT_EQ(kept[0].y, 420);
}

TEST(FilterAndMap, FullMaskCentres) {
  const auto m = full_mask();
  const auto ws = scan_grid(m, 4, 4, 512);
  const auto refs = filter_and_map(m, ws, 4, 4, 512, 4096, 4096);
  std::set<PatchRef> got(refs.begin(), refs.end()), want;
  for (std::int64_t j = 0; j < 8; ++j)
    for (std::int64_t i = 0; i < 8; ++i) want.insert(PatchRef{256 + 512 * i, 256 + 512 * j, 512, 0});
  EXPECT_EQ(got, want);
}

TEST(FilterAndMap, EmptyMask) {
  const auto m = blank_mask();
  const auto ws = scan_grid(m, 4, 4, 1024);
  EXPECT_TRUE(filter_and_map(m, ws, 4, 4, 1024, 4096, 4096).empty());
}

TEST(CropPatch, Window) {
  Rng rng(1);
  synth::Raster base(2048, 2048);
  for (auto& p : base.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const auto patch = crop_patch(base, PatchRef{256, 256, 512, 0});
  ASSERT_EQ(patch.width, 512u);
  for (std::size_t y = 0; y < 512; y += 37)
    for (std::size_t x = 0; x < 512; x += 41) EXPECT_EQ(patch.at(x, y, 1), base.at(x, y, 1));
  EXPECT_EQ(crop_patch(base, PatchRef{700, 900, 1024, 1}), crop_patch(base, PatchRef{700, 900, 1024, 1}));
  const auto other = crop_patch(base, PatchRef{700, 900, 1024, 1});
  EXPECT_EQ(other.at(0, 0, 2), base.at(700 - 512, 900 - 512, 2));
}

TEST(CropPatch, ConstantImage) {
  const synth::PyramidImage img(synth::Raster(2048, 2048, 93));
  for (auto p : crop_patch(img, PatchRef{1024, 1024, 2048, 2}).pixels) EXPECT_EQ(p, 93);
}

TEST(CropPatch, OutOfBoundsNeverClamps) {
  const synth::Raster base(2048, 2048);
  EXPECT_EQ(kind_of([&] { crop_patch(base, PatchRef{255, 256, 512, 0}); }), ErrorKind::Bounds);
  EXPECT_EQ(kind_of([&] { crop_patch(base, PatchRef{1800, 1024, 512, 0}); }), ErrorKind::Bounds);
  EXPECT_EQ(kind_of([&] { crop_patch(base, PatchRef{1024, 1024, 4096, 2}); }), ErrorKind::Bounds);
}

TEST(FilterMask, FullMaskTallies) {
  const auto set = filter_mask(full_mask(), 4096, 4096);
  EXPECT_EQ(set.n1, 64u);
  EXPECT_EQ(set.n2, 16u);
  EXPECT_EQ(set.n3, 4u);
  EXPECT_EQ(set.size(), 84u);
  EXPECT_TRUE(std::is_sorted(set.refs.begin(), set.refs.end(), sffm_order));
  for (std::size_t i = 1; i < set.refs.size(); ++i) {
    const auto& a = set.refs[i - 1];
    const auto& b = set.refs[i];
    EXPECT_TRUE(std::tie(a.d_k, a.y, a.x) < std::tie(b.d_k, b.y, b.x));
  }
}

TEST(FilterMask, EmptyMask) {
  const auto set = filter_mask(blank_mask(), 4096, 4096);
  EXPECT_TRUE(set.empty());
  EXPECT_EQ(set.n1 + set.n2 + set.n3, 0u);
}

TEST(FilterMask, LeftHalfPlane) {
  auto m = blank_mask();
  paint(m, 0, 0, 512, 1024);
  const auto set = filter_mask(m, 4096, 4096);
  std::set<PatchRef> want;
  for (auto d : kPatchSides) want.merge(brute_force(m, 4096, 4096, d));
  EXPECT_EQ(std::set<PatchRef>(set.refs.begin(), set.refs.end()), want);
  EXPECT_EQ(set.n1, 32u);
  EXPECT_EQ(set.n2, 8u);
  EXPECT_EQ(set.n3, 2u);
}

TEST(FilterMask, BadArguments) {
  EXPECT_EQ(kind_of([] { filter_mask(blank_mask(), 4096, 4096, kPatchSides, 1.0); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { filter_mask(blank_mask(), 4096, 4096, kPatchSides, 0.0); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { filter_mask(blank_mask(), 1000, 4096); }), ErrorKind::Size);
}

TEST(Property, MatchesBruteForceOnRandomMasks) {
  Rng rng(2);
  const std::size_t dims[][2] = {{4096, 4096}, {5120, 4096}, {3072, 6144}};
  for (auto d : kPatchSides) {
    for (int trial = 0; trial < 50; ++trial) {
      const auto m = random_mask(rng);
      const auto& wh = dims[trial % 3];
      EXPECT_EQ(run_scale(m, wh[0], wh[1], d), brute_force(m, wh[0], wh[1], d)) << "d_k " << d << " trial " << trial;
    }
  }
}

TEST(Property, EmittedCropsInBounds) {
  Rng rng(3);
  const std::size_t dims[][2] = {{4096, 4096}, {5000, 4100}, {1100, 3000}, {2047, 2049}};
  for (int trial = 0; trial < 40; ++trial) {
    auto m = random_mask(rng);
    paint(m, 0, 0, 1024, 8);
    paint(m, 1016, 0, 1024, 1024);
    const auto& wh = dims[trial % 4];
    const auto set = filter_mask(m, wh[0], wh[1]);
    for (const auto& r : set.refs) {
      EXPECT_TRUE(in_bounds(r, wh[0], wh[1]));
      EXPECT_GE(r.x - std::int64_t(r.d_k / 2), 0);
      EXPECT_LE(r.y + std::int64_t(r.d_k / 2), std::int64_t(wh[1]));
    }
  }
}

TEST(Property, EnlargingRedNeverDropsRefs) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    auto m = random_mask(rng);
    const auto before = filter_mask(m, 4096, 4096);
    const std::size_t w = 1 + rng.below(300), h = 1 + rng.below(300);
    const std::size_t u = rng.below(1024 - w + 1), v = rng.below(1024 - h + 1);
    paint(m, u, v, u + w, v + h);
    const auto after = filter_mask(m, 4096, 4096);
    const std::set<PatchRef> a(after.refs.begin(), after.refs.end());
    for (const auto& r : before.refs) EXPECT_TRUE(a.count(r)) << trial;
  }
}

TEST(Property, LesionFractionEconomy) {
  synth::SynthSpec spec;
  const auto grid = full_grid(spec.width, spec.height).size();
  ASSERT_EQ(grid, 84u);
  for (double f : {0.1, 0.3, 0.5}) {
    spec.lesion_fraction = f;
    const OracleMaskProvider provider(spec);
    for (std::uint64_t seed : {5u, 6u}) {
      synth::SlideRecord rec{"x", seed % 4, seed, spec.width, spec.height, 0.75, f};
      const auto set = filter_mask(provider.mask_for(rec), spec.width, spec.height);
      EXPECT_LE(set.size(), grid);
      const double ratio = double(set.size()) / double(grid);
      EXPECT_GE(ratio, f - 0.15) << f;
      EXPECT_LE(ratio, f + 0.15) << f;
    }
  }
}

TEST(RunSffm, UsesProviderAndSlideSize) {
  synth::SynthSpec spec;
  spec.width = spec.height = 2048;
  const auto slide = synth::generate_wsi(spec, 1, 3);
  synth::SlideRecord rec{"0001", 1, 3, 2048, 2048, 0.75, 0.3};
  const auto set = run_sffm(slide.image, rec, OracleMaskProvider(spec));
  EXPECT_EQ(set.slide_id, "0001");
  const auto direct = filter_mask(slide.mask, 2048, 2048, kPatchSides, 0.7, "0001");
  EXPECT_EQ(set.refs, direct.refs);
  EXPECT_FALSE(set.empty());
  EXPECT_EQ(set.n1 + set.n2 + set.n3, set.size());
}

TEST(FileProvider, MissingMask) {
  const FileMaskProvider p(fs::temp_directory_path() / "msamil_no_masks");
  synth::SlideRecord rec{"0000", 0, 1, 4096, 4096, 0.75, 0.3};
  EXPECT_EQ(kind_of([&] { p.mask_for(rec); }), ErrorKind::MissingInput);
}

TEST(RefDump, RoundTripAndErrors) {
  const auto dir = fs::temp_directory_path() / "msamil_refs";
  fs::create_directories(dir);
  const auto set = filter_mask(full_mask(), 4096, 4096);
  write_refs(set.refs, dir / "refs.txt");
  EXPECT_EQ(read_refs(dir / "refs.txt"), set.refs);
  {
    std::ifstream is(dir / "refs.txt");
    std::string first;
    std::getline(is, first);
    EXPECT_EQ(first, "256 256 512 0");
  }
  {
    std::ofstream os(dir / "bad.txt");
    os << "256 256 512 0\n256 256 512 1\n";
  }
  try {
    read_refs(dir / "bad.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos);
  }
  EXPECT_EQ(kind_of([&] { read_refs(dir / "absent.txt"); }), ErrorKind::MissingInput);
  fs::remove_all(dir);
}
