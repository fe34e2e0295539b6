#include "msamil/iaam/iaam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msamil/errors.hpp"
#include "msamil/msfem/encoder.hpp"
#include "msamil/numcore/ops.hpp"

namespace msamil::iaam {

using numcore::Tensor;

namespace {

std::string layer_prefix(std::size_t l) { return "mil.mla" + std::to_string(l); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return numcore::add_bias(numcore::matmul(x, w), b); }

}  // namespace

void validate(const IaamConfig& cfg) {
  if (cfg.dim == 0 || cfg.heads == 0 || cfg.queries == 0 || cfg.classes < 2 || cfg.mlp_ratio == 0) {
    throw Error(ErrorKind::Config, "mil: dim, heads, queries and mlp ratio must be positive and classes >= 2");
  }
  if (cfg.rank == 0 || cfg.rank > cfg.dim) {
    throw Error(ErrorKind::Rank, "rank " + std::to_string(cfg.rank) + " must lie in [1, " + std::to_string(cfg.dim) + "]");
  }
  if (cfg.dim % cfg.heads) throw Error(ErrorKind::Config, "mil: heads must divide dim");
}

void init_iaam(numcore::ParamStore& store, const IaamConfig& cfg, Rng& rng) {
  validate(cfg);
  const std::size_t d = cfg.dim, hr = cfg.heads * cfg.rank, hidden = cfg.mlp_ratio * d;
  store.add("mil.fc_pos.w", numcore::xavier_uniform(3, d, rng));
  store.add("mil.fc_pos.b", Tensor({d}));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto p = layer_prefix(l);
    store.add(p + ".wq_low", numcore::xavier_uniform(d, hr, rng));
    store.add(p + ".wk_low", numcore::xavier_uniform(d, hr, rng));
    store.add(p + ".wv", numcore::xavier_uniform(d, d, rng));
    if (cfg.heads > 1) store.add(p + ".merge", numcore::xavier_uniform(d, d, rng));
    store.add(p + ".ln.g", Tensor({d}, 1.0));
    store.add(p + ".ln.b", Tensor({d}));
    store.add(p + ".mlp.w1", numcore::xavier_uniform(d, hidden, rng));
    store.add(p + ".mlp.b1", Tensor({hidden}));
    store.add(p + ".mlp.w2", numcore::xavier_uniform(hidden, d, rng));
    store.add(p + ".mlp.b2", Tensor({d}));
  }
  store.add("mil.dmq.z", numcore::uniform_tensor({cfg.queries, d}, 1.0, rng));
  store.add("mil.dmq.wq", numcore::xavier_uniform(d, d, rng));
  store.add("mil.dmq.wk", numcore::xavier_uniform(d, d, rng));
  store.add("mil.dmq.wv", numcore::xavier_uniform(d, d, rng));
  store.add("mil.gate.w", numcore::xavier_uniform(d, 1, rng));
  store.add("mil.gate.b", Tensor({1}));
  store.add("mil.head.w", numcore::xavier_uniform(d, cfg.classes, rng));
  store.add("mil.head.b", Tensor({cfg.classes}));
}

Bag order_instances(const Bag& bag) {
  if (bag.features.rank() != 2 || bag.features.rows() != bag.pos.size()) {
    throw Error(ErrorKind::Dimension, "bag: " + std::to_string(bag.pos.size()) + " positions for features " +
                                          numcore::shape_str(bag.features.shape()));
  }
  std::vector<std::size_t> perm(bag.pos.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = bag.pos[a];
    const auto& pb = bag.pos[b];
    if (pa.x != pb.x) return pa.x < pb.x;
    if (pa.y != pb.y) return pa.y < pb.y;
    return pa.scale < pb.scale;
  });
  Bag out;
  out.width = bag.width;
  out.height = bag.height;
  out.label = bag.label;
  out.pos.reserve(perm.size());
  for (auto i : perm) out.pos.push_back(bag.pos[i]);
  out.features = std::is_sorted(perm.begin(), perm.end()) ? bag.features : numcore::gather_rows(bag.features, perm);
  return out;
}

Tensor inject_encodings(const Bag& bag, const numcore::ParamStore& store, const IaamConfig& cfg) {
  const std::size_t n = bag.size();
  if (n == 0) throw Error(ErrorKind::Input, "bag is empty");
  if (bag.features.cols() != cfg.dim) {
    throw Error(ErrorKind::Dimension, "bag features have width " + std::to_string(bag.features.cols()) +
                                          ", mil expects " + std::to_string(cfg.dim));
  }
  std::vector<double> coords(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    coords[i * 3] = bag.pos[i].x / bag.width;
    coords[i * 3 + 1] = bag.pos[i].y / bag.height;
    coords[i * 3 + 2] = static_cast<double>(bag.pos[i].scale);
  }
  const Tensor pos = linear(Tensor({n, 3}, std::move(coords)), store.get("mil.fc_pos.w"), store.get("mil.fc_pos.b"));
  Tensor out = numcore::add(bag.features, pos);
  if (cfg.index_encoding) out = numcore::add(out, msfem::sinusoid_table(n, cfg.dim));
  return out;
}

Tensor mla_layer(const Tensor& t, const numcore::ParamStore& store, const IaamConfig& cfg, std::size_t layer,
                 MlaTrace* trace) {
  validate(cfg);
  const auto p = layer_prefix(layer);
  const std::size_t r = cfg.rank, dh = cfg.dim / cfg.heads;
  const Tensor q = numcore::matmul(t, store.get(p + ".wq_low"));
  const Tensor k = numcore::matmul(t, store.get(p + ".wk_low"));
  const Tensor v = numcore::matmul(t, store.get(p + ".wv"));
  const double temp = 1.0 / std::sqrt(static_cast<double>(r));
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const Tensor qh = cfg.heads == 1 ? q : numcore::slice_cols(q, h * r, (h + 1) * r);
    const Tensor kh = cfg.heads == 1 ? k : numcore::slice_cols(k, h * r, (h + 1) * r);
    const Tensor vh = cfg.heads == 1 ? v : numcore::slice_cols(v, h * dh, (h + 1) * dh);
    const Tensor att = numcore::softmax_rows(numcore::scale(numcore::matmul(qh, numcore::transpose(kh)), temp));
    if (trace) trace->attention.push_back(att);
    heads.push_back(numcore::matmul(att, vh));
  }
  const Tensor mixed = cfg.heads == 1 ? heads.front()
                                      : numcore::matmul(numcore::concat_cols(heads), store.get(p + ".merge"));
  const Tensor normed = numcore::layer_norm(mixed, store.get(p + ".ln.g"), store.get(p + ".ln.b"));
  const Tensor hidden = numcore::silu(linear(normed, store.get(p + ".mlp.w1"), store.get(p + ".mlp.b1")));
  const Tensor out = linear(hidden, store.get(p + ".mlp.w2"), store.get(p + ".mlp.b2"));
  return cfg.residual ? numcore::add(t, out) : out;
}

Tensor dmq_cross_attention(const Tensor& t, const numcore::ParamStore& store, const IaamConfig& cfg,
                           Tensor* attention) {
  const Tensor qz = numcore::matmul(store.get("mil.dmq.z"), store.get("mil.dmq.wq"));
  const Tensor k = numcore::matmul(t, store.get("mil.dmq.wk"));
  const Tensor v = numcore::matmul(t, store.get("mil.dmq.wv"));
  const double temp = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  const Tensor att = numcore::softmax_rows(numcore::scale(numcore::matmul(qz, numcore::transpose(k)), temp));
  if (attention) *attention = att;
  return numcore::matmul(att, v);
}

Tensor gated_pool(const Tensor& z, const numcore::ParamStore& store, Tensor* gates) {
  const Tensor g = numcore::sigmoid(linear(z, store.get("mil.gate.w"), store.get("mil.gate.b")));
  if (gates) *gates = g;
  return numcore::matmul(numcore::transpose(g), z);
}

Tensor class_logits(const Tensor& f_bag, const numcore::ParamStore& store) {
  return linear(f_bag, store.get("mil.head.w"), store.get("mil.head.b"));
}

Tensor classify(const Tensor& f_bag, const numcore::ParamStore& store) {
  return numcore::softmax_rows(class_logits(f_bag, store));
}

IaamOutput iaam_forward(const Bag& bag, const numcore::ParamStore& store, const IaamConfig& cfg) {
  validate(cfg);
  IaamOutput out;
  out.ordered = order_instances(bag);
  Tensor t = inject_encodings(out.ordered, store, cfg);
  for (std::size_t l = 0; l < cfg.layers; ++l) t = mla_layer(t, store, cfg, l);
  const Tensor z = dmq_cross_attention(t, store, cfg, &out.attention);
  const Tensor f = gated_pool(z, store, &out.gates);
  out.logits = class_logits(f, store);
  out.probs = numcore::softmax_rows(out.logits);
  return out;
}

}  // namespace msamil::iaam
