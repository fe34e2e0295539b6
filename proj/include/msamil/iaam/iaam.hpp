#pragma once

#include <cstddef>
#include <vector>

#include "msamil/numcore/params.hpp"
#include "msamil/numcore/tensor.hpp"
#include "msamil/rng.hpp"

namespace msamil::iaam {

struct IaamConfig {
  std::size_t dim = 64;        // d
  std::size_t heads = 2;       // h; each head has rank r and d/h value columns
  std::size_t rank = 8;        // r
  std::size_t layers = 1;      // L
  std::size_t queries = 10;    // q
  std::size_t classes = 4;     // C
  std::size_t mlp_ratio = 4;
  bool residual = false;       // skip connection around each low-rank layer
  bool index_encoding = true;  // add E[i] in inject_encodings
};

void validate(const IaamConfig& cfg);

// Parameters live under "mil." in the store.
void init_iaam(numcore::ParamStore& store, const IaamConfig& cfg, Rng& rng);

struct InstancePos {
  double x = 0.0;   // base pixels
  double y = 0.0;
  int scale = 0;    // 0, 1, 2
};

struct Bag {
  numcore::Tensor features;         // N x d
  std::vector<InstancePos> pos;     // N entries aligned with feature rows
  double width = 1.0;               // base image W, for coordinate normalization
  double height = 1.0;
  std::size_t label = 0;

  std::size_t size() const { return pos.size(); }
};

// Stable sort by (x, y, scale); feature rows follow through a differentiable gather.
Bag order_instances(const Bag& bag);

// T' = T + fc_pos([x/W, y/H, scale]) + E.
numcore::Tensor inject_encodings(const Bag& bag, const numcore::ParamStore& store, const IaamConfig& cfg);

struct MlaTrace {
  std::vector<numcore::Tensor> attention;  // one N x N matrix per head
};

// MLP(LayerNorm(merge(concat_h A_h (T' W_V,h)))), A_h = softmax(T'W_Q,h (T'W_K,h)^T / sqrt(r)).
numcore::Tensor mla_layer(const numcore::Tensor& t, const numcore::ParamStore& store, const IaamConfig& cfg,
                          std::size_t layer, MlaTrace* trace = nullptr);

// Z' = softmax((Z W_Q)(T W_K)^T / sqrt(d)) (T W_V); optional attention output is q x N.
numcore::Tensor dmq_cross_attention(const numcore::Tensor& t, const numcore::ParamStore& store, const IaamConfig& cfg,
                                    numcore::Tensor* attention = nullptr);

// F_bag = sum_i sigmoid(Z'_i w_g + b_g) Z'_i; optional gates output is q x 1.
numcore::Tensor gated_pool(const numcore::Tensor& z, const numcore::ParamStore& store,
                           numcore::Tensor* gates = nullptr);

numcore::Tensor class_logits(const numcore::Tensor& f_bag, const numcore::ParamStore& store);
numcore::Tensor classify(const numcore::Tensor& f_bag, const numcore::ParamStore& store);

struct IaamOutput {
  numcore::Tensor logits;     // 1 x C
  numcore::Tensor probs;      // 1 x C
  numcore::Tensor gates;      // q x 1
  numcore::Tensor attention;  // DMQ attention, q x N over the ordered bag
  Bag ordered;                // bag after order_instances
};

IaamOutput iaam_forward(const Bag& bag, const numcore::ParamStore& store, const IaamConfig& cfg);

}  // namespace msamil::iaam
