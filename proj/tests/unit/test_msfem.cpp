#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "msamil/errors.hpp"
#include "msamil/msfem/encoder.hpp"
#include "msamil/numcore/gradcheck.hpp"
#include "msamil/numcore/ops.hpp"

using namespace msamil;
using namespace msamil::msfem;
using namespace msamil::numcore;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.input_side = 16;
  cfg.widths = {3, 4};
  cfg.token_dim = 6;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;
  return cfg;
}

ParamStore make_store(const EncoderConfig& cfg, std::uint64_t seed) {
  ParamStore store;
  Rng rng(seed);
  init_encoder(store, cfg, rng);
  return store;
}

Tensor random_input(std::size_t side, Rng& rng) {
  Tensor t({side, side, 3});
  for (auto& v : t.mutable_data()) v = rng.uniform(-2, 2);
  return t;
}

synth::Raster random_raster(std::size_t side, Rng& rng) {
  synth::Raster r(side, side);
  for (auto& p : r.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return r;
}

void randomize_biases(ParamStore& store, Rng& rng) {
  for (const auto& e : store.entries()) {
    if (e.name.ends_with(".b")) {
      Tensor t = e.tensor;
      for (auto& v : t.mutable_data()) v = rng.uniform(-0.5, 0.5);
    }
  }
}

}  // namespace

TEST(EncoderConfig, DesiredShapes) {
  const EncoderConfig cfg;
  EXPECT_EQ(cfg.feature_side(), 4u);
  EXPECT_EQ(cfg.feature_channels(), 96u);
  EXPECT_NO_THROW(validate(cfg));
  EncoderConfig odd = cfg;
  odd.input_side = 60;  // 60 -> 30 -> 15 -> not halvable
  EXPECT_THROW(validate(odd), Error);
  EncoderConfig heads = cfg;
  heads.heads = 5;
  EXPECT_THROW(validate(heads), Error);
}

TEST(ResizePatch, IdentityConstantCheckerboard) {
  Rng rng(1);
  const auto r = random_raster(8, rng);
  EXPECT_EQ(resize_patch(r, 8), synth::to_float(r));
  synth::Raster flat(512, 512, 200);
  for (double v : resize_patch(flat, 64).values) EXPECT_NEAR(v, 200.0, 1e-12);
  synth::Raster cb(2, 2);
  for (std::size_t c = 0; c < 3; ++c) {
    cb.at(0, 0, c) = 255;
    cb.at(1, 1, c) = 255;
  }
  const auto one = resize_patch(cb, 1);
  for (double v : one.values) EXPECT_DOUBLE_EQ(v, 127.5);
}

TEST(ToInput, Normalization) {
  synth::FloatImage img{1, 1, {128, 192, 0}};
  const auto t = to_input(img);
  EXPECT_EQ(t.shape(), (Shape{1, 1, 3}));
  EXPECT_EQ(t.data()[0], 0.0);
  EXPECT_EQ(t.data()[1], 1.0);
  EXPECT_EQ(t.data()[2], -2.0);
}

TEST(Backbone, ZeroInputZeroBiasGivesZeroMap) {
  const EncoderConfig cfg;
  const auto store = make_store(cfg, 2);
  const Tensor map = backbone(Tensor({64, 64, 3}), store, cfg);
  EXPECT_EQ(map.shape(), (Shape{4, 4, 96}));
  for (double v : map.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, WrongInputRaises) {
  const EncoderConfig cfg;
  const auto store = make_store(cfg, 2);
  try {
    backbone(Tensor({32, 32, 3}), store, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Dimension);
  }
}

TEST(Backbone, TranslationByOneStrideShiftsOneCell) {
  EncoderConfig cfg;
  cfg.input_side = 128;
  auto store = make_store(cfg, 3);
  Rng rng(4);
  randomize_biases(store, rng);
  const std::size_t stride = 16;
  Tensor a({128, 128, 3}), b({128, 128, 3});
  auto put = [](Tensor& t, std::size_t x, std::size_t y, double v) {
    for (std::size_t c = 0; c < 3; ++c) t.mutable_data()[(y * 128 + x) * 3 + c] = v * double(c + 1);
  };
  put(a, 50, 53, 3.0);
  put(a, 57, 49, -2.0);
  put(b, 50 + stride, 53 + stride, 3.0);
  put(b, 57 + stride, 49 + stride, -2.0);
  const Tensor fa = backbone(a, store, cfg), fb = backbone(b, store, cfg);
  const std::size_t m = 8, c = 96;
  double moved = 0;
  for (std::size_t i = 2; i + 3 < m; ++i)
    for (std::size_t j = 2; j + 3 < m; ++j)
      for (std::size_t k = 0; k < c; ++k) {
        const double va = fa.data()[(i * m + j) * c + k];
        const double vb = fb.data()[((i + 1) * m + j + 1) * c + k];
        EXPECT_NEAR(va, vb, 1e-12);
        moved += std::abs(va - fa.data()[((i + 1) * m + j + 1) * c + k]);
      }
  EXPECT_GT(moved, 0.0) << "impulse response should not be flat";
}

TEST(Backbone, GradientCheck) {
  const auto cfg = tiny_config();
  auto store = make_store(cfg, 5);
  Rng rng(6);
  randomize_biases(store, rng);
  const Tensor input = random_input(16, rng);
  std::vector<Tensor> ps;
  for (const auto& e : store.entries())
    if (e.name.starts_with("enc.conv")) ps.push_back(e.tensor);
  const auto res = finite_diff_check([&] { return sum(backbone(input, store, cfg)); }, ps);
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(Tokenize, RowMajorPlusSinusoid) {
  Tensor map({2, 2, 4});
  for (std::size_t i = 0; i < 16; ++i) map.mutable_data()[i] = double(i) * 10.0;
  const Tensor seq = tokenize(map);
  ASSERT_EQ(seq.shape(), (Shape{4, 4}));
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t k = 0; k < 4; ++k) {
      const double angle = double(p) / std::pow(10000.0, double(k - k % 2) / 4.0);
      const double e = k % 2 ? std::cos(angle) : std::sin(angle);
      EXPECT_NEAR(seq.at(p, k), double(p * 4 + k) * 10.0 + e, 1e-12);
    }
  const Tensor table = sinusoid_table(1, 6);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(table.data()[k], k % 2 ? 1.0 : 0.0);
  EXPECT_TRUE(std::memcmp(tokenize(map).data().data(), seq.data().data(), seq.size() * sizeof(double)) == 0);
}

TEST(Encode, DepthZeroReturnsTokenProjection) {
  EncoderConfig cfg = tiny_config();
  cfg.depth = 0;
  const auto store = make_store(cfg, 7);
  Rng rng(8);
  Tensor seq({16, 4});
  for (auto& v : seq.mutable_data()) v = rng.uniform(-1, 1);
  const Tensor out = encode(seq, store, cfg);
  const Tensor& cls = store.get("enc.cls");
  const Tensor& w = store.get("enc.proj.w");
  ASSERT_EQ(out.shape(), (Shape{1, 6}));
  for (std::size_t j = 0; j < 6; ++j) {
    double s = 0;
    for (std::size_t k = 0; k < 4; ++k) s += cls.data()[k] * w.at(k, j);
    EXPECT_NEAR(out.data()[j], s, 1e-14);
  }
}

TEST(Encode, GradientCheck) {
  const auto cfg = tiny_config();
  auto store = make_store(cfg, 9);
  Rng rng(10);
  randomize_biases(store, rng);
  Tensor seq({5, 4});
  for (auto& v : seq.mutable_data()) v = rng.uniform(-1, 1);
  seq.set_requires_grad(true);
  std::vector<Tensor> ps{seq};
  for (const auto& e : store.entries())
    if (!e.name.starts_with("enc.conv")) ps.push_back(e.tensor);
  Tensor probe({1, 6});
  for (auto& v : probe.mutable_data()) v = rng.uniform(-1, 1);
  const auto res = finite_diff_check([&] { return sum(mul(encode(seq, store, cfg), probe)); }, ps);
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(Encode, TokenOrderMatters) {
  const EncoderConfig cfg;
  const auto store = make_store(cfg, 11);
  Rng rng(12);
  const Tensor map = backbone(random_input(64, rng), store, cfg);
  const Tensor seq = tokenize(map);
  std::vector<std::size_t> perm{3, 0, 1, 2, 5, 4, 6, 7, 8, 9, 10, 11, 12, 13, 15, 14};
  Tensor shuffled = tokenize(reshape(gather_rows(reshape(map, {16, 96}), perm), {4, 4, 96}));
  const Tensor a = encode(seq, store, cfg), b = encode(shuffled, store, cfg);
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a.data()[i] - b.data()[i]);
  EXPECT_GT(diff, 1e-9);
}

TEST(Extract, SharedAcrossScales) {
  const EncoderConfig cfg;
  const auto store = make_store(cfg, 13);
  Rng rng(14);
  const auto pixels = random_raster(512, rng);
  const auto f0 = extract(sffm::PatchRef{256, 256, 512, 0}, pixels, store, cfg);
  const auto f2 = extract(sffm::PatchRef{1024, 1024, 2048, 2}, pixels, store, cfg);
  const auto again = extract(sffm::PatchRef{256, 256, 512, 0}, pixels, store, cfg);
  ASSERT_EQ(f0.values.shape(), (Shape{1, 64}));
  EXPECT_EQ(std::memcmp(f0.values.data().data(), f2.values.data().data(), 64 * sizeof(double)), 0);
  EXPECT_EQ(std::memcmp(f0.values.data().data(), again.values.data().data(), 64 * sizeof(double)), 0);
  EXPECT_EQ(f2.origin.scale_code, 2);
  for (double v : f0.values.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Extract, InferenceLeavesParametersUntouched) {
  const EncoderConfig cfg;
  const auto store = make_store(cfg, 15);
  const auto before = params_hash(store);
  Rng rng(16);
  for (int i = 0; i < 3; ++i) extract(sffm::PatchRef{512, 512, 1024, 1}, random_raster(1024, rng), store, cfg);
  EXPECT_EQ(params_hash(store), before);
  for (const auto& e : store.entries()) EXPECT_FALSE(e.tensor.has_grad()) << e.name;
}

// Every encoder parameter at desk shapes; a seeded subset of coordinates per tensor.
TEST(Extract, EndToEndGradientAtDeskShapes) {
  const EncoderConfig cfg;
  auto store = make_store(cfg, 17);
  Rng rng(18);
  randomize_biases(store, rng);
  const Tensor input = random_input(64, rng);
  auto ps = store.tensors();
  const auto res = finite_diff_check([&] { return sum(extract_input(input, store, cfg)); }, ps, 1e-4, 4, 19);
  EXPECT_LT(res.max_rel_error, 1e-4) << "param " << store.entries()[res.worst_param].name;
  EXPECT_GE(res.coords_checked, ps.size());
}
