#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "msamil/numcore/params.hpp"
#include "msamil/numcore/tensor.hpp"
#include "msamil/rng.hpp"
#include "msamil/sffm/sffm.hpp"
#include "msamil/synthwsi/raster.hpp"

namespace msamil::msfem {

/// Shared patch encoder shape. Each backbone stage is a 3x3 stride-2 conv
/// followed by SiLU, so the feature map side is S / 2^stages.
struct EncoderConfig {
  std::size_t input_side = 64;                 // S
  std::vector<std::size_t> widths = {8, 16, 32, 96};
  std::size_t token_dim = 64;                  // d
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;

  std::size_t feature_side() const;            // m
  std::size_t feature_channels() const;        // c_f
};

// Throws Config when the shape is inconsistent.
void validate(const EncoderConfig& cfg);

// Parameters live under "enc." in the store.
void init_encoder(numcore::ParamStore& store, const EncoderConfig& cfg, Rng& rng);

/// Area-average shrink or bilinear grow to S x S; returns float pixel values.
synth::FloatImage resize_patch(const synth::Raster& patch, std::size_t side);

// S x S x 3 tensor with values (v - 128) / 64.
numcore::Tensor to_input(const synth::FloatImage& img);

numcore::Tensor backbone(const numcore::Tensor& input, const numcore::ParamStore& store, const EncoderConfig& cfg);

// Standard transformer sinusoid: E[p, 2i] = sin(p / 10000^(2i/dim)), E[p, 2i+1] = cos(same).
numcore::Tensor sinusoid_table(std::size_t positions, std::size_t dim);

// m x m x c_f map -> (m*m) x c_f row-major sequence plus position encoding.
numcore::Tensor tokenize(const numcore::Tensor& map);

// Prepends the learnable token, runs the encoder blocks and projects the token row to 1 x d.
numcore::Tensor encode(const numcore::Tensor& seq, const numcore::ParamStore& store, const EncoderConfig& cfg);

struct FeatureVec {
  numcore::Tensor values;  // 1 x d
  sffm::PatchRef origin;
};

numcore::Tensor extract_input(const numcore::Tensor& input, const numcore::ParamStore& store, const EncoderConfig& cfg);

// resize_patch -> backbone -> tokenize -> encode. The scale code plays no part.
FeatureVec extract(const sffm::PatchRef& ref, const synth::Raster& pixels, const numcore::ParamStore& store,
                   const EncoderConfig& cfg);

}  // namespace msamil::msfem
