#include "msamil/msfem/encoder.hpp"

#include <cmath>

#include "msamil/errors.hpp"
#include "msamil/numcore/ops.hpp"

namespace msamil::msfem {

using numcore::Tensor;

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kStride = 2;
constexpr std::size_t kPad = 1;

std::string stage(std::size_t i) { return "enc.conv" + std::to_string(i); }
std::string block(std::size_t l) { return "enc.block" + std::to_string(l); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return numcore::add_bias(numcore::matmul(x, w), b); }

Tensor self_attention(const Tensor& x, const numcore::ParamStore& store, const std::string& p, std::size_t heads) {
  const std::size_t width = x.cols(), dh = width / heads;
  const Tensor q = numcore::matmul(x, store.get(p + ".wq"));
  const Tensor k = numcore::matmul(x, store.get(p + ".wk"));
  const Tensor v = numcore::matmul(x, store.get(p + ".wv"));
  const double temp = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = numcore::slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = numcore::slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = numcore::slice_cols(v, h * dh, (h + 1) * dh);
    const Tensor att = numcore::softmax_rows(numcore::scale(numcore::matmul(qh, numcore::transpose(kh)), temp));
    outs.push_back(numcore::matmul(att, vh));
  }
  const Tensor merged = heads == 1 ? outs.front() : numcore::concat_cols(outs);
  return linear(merged, store.get(p + ".wo"), store.get(p + ".bo"));
}

}  // namespace

std::size_t EncoderConfig::feature_side() const {
  std::size_t side = input_side;
  for (std::size_t i = 0; i < widths.size(); ++i) side = numcore::conv_out_size(side, kKernel, kStride, kPad);
  return side;
}

std::size_t EncoderConfig::feature_channels() const { return widths.empty() ? 3 : widths.back(); }

void validate(const EncoderConfig& cfg) {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::Config, "encoder: " + why); };
  if (cfg.input_side < 1) fail("input side must be positive");
  if (cfg.widths.empty()) fail("backbone needs at least one stage");
  for (auto w : cfg.widths)
    if (w == 0) fail("zero channel width");
  std::size_t side = cfg.input_side;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    if (side < 2 || side % 2) fail("input side " + std::to_string(cfg.input_side) + " does not halve evenly through " +
                                   std::to_string(cfg.widths.size()) + " stages");
    side = numcore::conv_out_size(side, kKernel, kStride, kPad);
  }
  if (cfg.token_dim == 0) fail("token dim must be positive");
  if (cfg.heads == 0 || cfg.feature_channels() % cfg.heads) fail("heads must divide the feature channels");
  if (cfg.mlp_ratio == 0) fail("mlp ratio must be positive");
}

void init_encoder(numcore::ParamStore& store, const EncoderConfig& cfg, Rng& rng) {
  validate(cfg);
  std::size_t cin = 3;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    const std::size_t fan_in = kKernel * kKernel * cin;
    store.add(stage(i) + ".w", numcore::he_uniform({fan_in, cfg.widths[i]}, fan_in, rng));
    store.add(stage(i) + ".b", Tensor({cfg.widths[i]}));
    cin = cfg.widths[i];
  }
  const std::size_t c = cfg.feature_channels(), hidden = cfg.mlp_ratio * c;
  store.add("enc.cls", numcore::uniform_tensor({1, c}, 0.5, rng));
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const auto p = block(l);
    store.add(p + ".ln1.g", Tensor({c}, 1.0));
    store.add(p + ".ln1.b", Tensor({c}));
    for (const char* n : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"}) store.add(p + n, numcore::xavier_uniform(c, c, rng));
    store.add(p + ".attn.bo", Tensor({c}));
    store.add(p + ".ln2.g", Tensor({c}, 1.0));
    store.add(p + ".ln2.b", Tensor({c}));
    store.add(p + ".mlp.w1", numcore::xavier_uniform(c, hidden, rng));
    store.add(p + ".mlp.b1", Tensor({hidden}));
    store.add(p + ".mlp.w2", numcore::xavier_uniform(hidden, c, rng));
    store.add(p + ".mlp.b2", Tensor({c}));
  }
  store.add("enc.proj.w", numcore::xavier_uniform(c, cfg.token_dim, rng));
  store.add("enc.proj.b", Tensor({cfg.token_dim}));
}

synth::FloatImage resize_patch(const synth::Raster& patch, std::size_t side) { return synth::resize(patch, side, side); }

Tensor to_input(const synth::FloatImage& img) {
  std::vector<double> v(img.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (img.values[i] - 128.0) / 64.0;
  return Tensor({img.height, img.width, 3}, std::move(v));
}

Tensor backbone(const Tensor& input, const numcore::ParamStore& store, const EncoderConfig& cfg) {
  if (input.rank() != 3 || input.dim(0) != cfg.input_side || input.dim(1) != cfg.input_side || input.dim(2) != 3) {
    throw Error(ErrorKind::Dimension, "backbone: expected " + std::to_string(cfg.input_side) + "x" +
                                          std::to_string(cfg.input_side) + "x3 input, got " + numcore::shape_str(input.shape()));
  }
  Tensor x = input;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    x = numcore::silu(numcore::conv2d(x, store.get(stage(i) + ".w"), store.get(stage(i) + ".b"), kKernel, kStride, kPad));
  }
  if (x.dim(0) != x.dim(1)) throw Error(ErrorKind::Config, "backbone produced a non-square map");
  return x;
}

Tensor sinusoid_table(std::size_t positions, std::size_t dim) {
  std::vector<double> e(positions * dim);
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
      const double a = static_cast<double>(p) * rate;
      e[p * dim + i] = i % 2 == 0 ? std::sin(a) : std::cos(a);
    }
  }
  return Tensor({positions, dim}, std::move(e));
}

Tensor tokenize(const Tensor& map) {
  if (map.rank() != 3) throw Error(ErrorKind::Dimension, "tokenize: expected m x m x c map");
  const std::size_t n = map.dim(0) * map.dim(1), c = map.dim(2);
  return numcore::add(numcore::reshape(map, {n, c}), sinusoid_table(n, c));
}

Tensor encode(const Tensor& seq, const numcore::ParamStore& store, const EncoderConfig& cfg) {
  if (seq.rank() != 2 || seq.rows() == 0) throw Error(ErrorKind::Dimension, "encode: empty sequence");
  const Tensor parts[] = {store.get("enc.cls"), seq};
  Tensor x = numcore::concat_rows(parts);
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const auto p = block(l);
    const Tensor a = numcore::layer_norm(x, store.get(p + ".ln1.g"), store.get(p + ".ln1.b"));
    x = numcore::add(x, self_attention(a, store, p + ".attn", cfg.heads));
    const Tensor b = numcore::layer_norm(x, store.get(p + ".ln2.g"), store.get(p + ".ln2.b"));
    const Tensor hmid = numcore::silu(linear(b, store.get(p + ".mlp.w1"), store.get(p + ".mlp.b1")));
    x = numcore::add(x, linear(hmid, store.get(p + ".mlp.w2"), store.get(p + ".mlp.b2")));
  }
  return linear(numcore::slice_rows(x, 0, 1), store.get("enc.proj.w"), store.get("enc.proj.b"));
}

Tensor extract_input(const Tensor& input, const numcore::ParamStore& store, const EncoderConfig& cfg) {
  return encode(tokenize(backbone(input, store, cfg)), store, cfg);
}

FeatureVec extract(const sffm::PatchRef& ref, const synth::Raster& pixels, const numcore::ParamStore& store,
                   const EncoderConfig& cfg) {
  return FeatureVec{extract_input(to_input(resize_patch(pixels, cfg.input_side)), store, cfg), ref};
}

}  // namespace msamil::msfem
