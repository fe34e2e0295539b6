#include "msamil/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msamil/errors.hpp"

namespace msamil::numcore {

using detail::make_result;

namespace kernels {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn_acc(const double* a, const double* d, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* __restrict drow = d + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* __restrict crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * drow[j];
    }
  }
}

void gemm_nt_acc(const double* d, const double* b, double* c, std::size_t m, std::size_t n,
                 std::size_t k) {
  std::vector<double> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm(d, bt.data(), c, m, n, k, true);
}

}  // namespace kernels

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw Error(ErrorKind::Dimension, std::string(op) + ": expected matrix, got " + shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::Dimension,
                std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
}

std::size_t vector_length(const Tensor& v, const char* op) {
  if (v.rank() == 1) return v.dim(0);
  if (v.rank() == 2 && v.dim(0) == 1) return v.dim(1);
  throw Error(ErrorKind::Dimension, std::string(op) + ": expected vector, got " + shape_str(v.shape()));
}

inline void acc(TensorImpl& t, std::size_t i, double v) { t.ensure_grad()[i] += v; }

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw Error(ErrorKind::Dimension,
                "matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  auto ai = a.impl(), bi = b.impl();
  return make_result({m, n}, std::move(out), {a, b}, [ai, bi, m, k, n](const TensorImpl& o) {
    if (ai->requires_grad)
      kernels::gemm_nt_acc(o.grad.data(), bi->data.data(), ai->ensure_grad().data(), m, n, k);
    if (bi->requires_grad)
      kernels::gemm_tn_acc(ai->data.data(), o.grad.data(), bi->ensure_grad().data(), m, k, n);
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto src = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = src[i * c + j];
  auto ai = a.impl();
  return make_result({c, r}, std::move(out), {a}, [ai, r, c](const TensorImpl& o) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result(a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    for (auto* t : {ai.get(), bi.get()}) {
      if (!t->requires_grad) continue;
      auto& g = t->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result(a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    if (ai->requires_grad) {
      auto& g = ai->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (bi->requires_grad) {
      auto& g = bi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result(a.shape(), std::move(out), {a, b}, [ai, bi](const TensorImpl& o) {
    if (ai->requires_grad) {
      auto& g = ai->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bi->data[i];
    }
    if (bi->requires_grad) {
      auto& g = bi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ai->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  auto ai = a.impl();
  return make_result(a.shape(), std::move(out), {a}, [ai, s](const TensorImpl& o) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * s;
  });
}

Tensor add_bias(const Tensor& m, const Tensor& bias) {
  require_matrix(m, "add_bias");
  const std::size_t r = m.rows(), c = m.cols();
  if (vector_length(bias, "add_bias") != c) {
    throw Error(ErrorKind::Dimension,
                "add_bias: " + shape_str(m.shape()) + " with bias " + shape_str(bias.shape()));
  }
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m.data()[i * c + j] + bias.data()[j];
  auto mi = m.impl(), bi = bias.impl();
  return make_result({r, c}, std::move(out), {m, bias}, [mi, bi, r, c](const TensorImpl& o) {
    if (mi->requires_grad) {
      auto& g = mi->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (bi->requires_grad) {
      auto& g = bi->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += o.grad[i * c + j];
    }
  });
}

Tensor silu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * sigmoid_scalar(a.data()[i]);
  auto ai = a.impl();
  return make_result(a.shape(), std::move(out), {a}, [ai](const TensorImpl& o) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = ai->data[i];
      const double s = sigmoid_scalar(x);
      g[i] += o.grad[i] * s * (1.0 + x * (1.0 - s));
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(a.data()[i]);
  auto ai = a.impl();
  return make_result(a.shape(), out, {a}, [ai, out](const TensorImpl& o) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * out[i] * (1.0 - out[i]);
  });
}

Tensor softmax_rows(const Tensor& m) {
  require_matrix(m, "softmax_rows");
  const std::size_t r = m.rows(), c = m.cols();
  const auto x = m.data();
  std::vector<double> y(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      const double v = x[i * c + j];
      if (std::isnan(v)) throw Error(ErrorKind::Numeric, "softmax_rows: NaN input at row " + std::to_string(i));
      mx = std::max(mx, v);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += (y[i * c + j] = std::exp(x[i * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] /= total;
  }
  auto mi = m.impl();
  return make_result({r, c}, y, {m}, [mi, y, r, c](const TensorImpl& o) {
    auto& g = mi->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += o.grad[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[i * c + j] * (o.grad[i * c + j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& m, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(m, "layer_norm");
  const std::size_t r = m.rows(), c = m.cols();
  if (c < 2) throw Error(ErrorKind::Dimension, "layer_norm: degenerate row of width " + std::to_string(c));
  if (vector_length(gain, "layer_norm") != c || vector_length(bias, "layer_norm") != c) {
    throw Error(ErrorKind::Dimension, "layer_norm: gain/bias do not match width " + std::to_string(c));
  }
  if (!(eps > 0)) throw Error(ErrorKind::Numeric, "layer_norm: eps must be positive");
  const auto x = m.data();
  std::vector<double> xhat(r * c), rstd(r), y(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += x[i * c + j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x[i * c + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (x[i * c + j] - mean) * rstd[i];
      y[i * c + j] = xhat[i * c + j] * gain.data()[j] + bias.data()[j];
    }
  }
  auto mi = m.impl(), gi = gain.impl(), bi = bias.impl();
  return make_result({r, c}, std::move(y), {m, gain, bias},
                     [mi, gi, bi, xhat = std::move(xhat), rstd = std::move(rstd), r, c](const TensorImpl& o) {
    const double inv_c = 1.0 / static_cast<double>(c);
    if (mi->requires_grad) {
      auto& g = mi->ensure_grad();
      std::vector<double> dxhat(c);
      for (std::size_t i = 0; i < r; ++i) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          dxhat[j] = o.grad[i * c + j] * gi->data[j];
          mean_d += dxhat[j];
          mean_dx += dxhat[j] * xhat[i * c + j];
        }
        mean_d *= inv_c;
        mean_dx *= inv_c;
        for (std::size_t j = 0; j < c; ++j)
          g[i * c + j] += rstd[i] * (dxhat[j] - mean_d - xhat[i * c + j] * mean_dx);
      }
    }
    if (gi->requires_grad) {
      auto& g = gi->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += o.grad[i * c + j] * xhat[i * c + j];
    }
    if (bi->requires_grad) {
      auto& g = bi->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += o.grad[i * c + j];
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  const std::size_t n = vector_length(logits, "cross_entropy");
  if (label >= n) {
    throw Error(ErrorKind::Label, "label " + std::to_string(label) + " out of range for " +
                                      std::to_string(n) + " classes");
  }
  const auto z = logits.data();
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : z) {
    if (std::isnan(v)) throw Error(ErrorKind::Numeric, "cross_entropy: NaN logit");
    mx = std::max(mx, v);
  }
  std::vector<double> p(n);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) total += (p[j] = std::exp(z[j] - mx));
  for (auto& v : p) v /= total;
  const double loss = std::log(total) + mx - z[label];
  auto li = logits.impl();
  return make_result({}, {loss}, {logits}, [li, p = std::move(p), label](const TensorImpl& o) {
    auto& g = li->ensure_grad();
    const double up = o.grad[0];
    for (std::size_t j = 0; j < p.size(); ++j) g[j] += up * (p[j] - (j == label ? 1.0 : 0.0));
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  auto ai = a.impl();
  return make_result({}, {total}, {a}, [ai](const TensorImpl& o) {
    auto& g = ai->ensure_grad();
    for (auto& v : g) v += o.grad[0];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorKind::Dimension, "concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw Error(ErrorKind::Dimension, "concat_rows: " + shape_str(parts[0].shape()) + " vs " +
                                            shape_str(p.shape()));
    }
    r += p.rows();
  }
  std::vector<double> out;
  out.reserve(r * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result({r, c}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                     [impls](const TensorImpl& o) {
    std::size_t off = 0;
    for (const auto& t : impls) {
      const std::size_t len = t->data.size();
      if (t->requires_grad) {
        auto& g = t->ensure_grad();
        for (std::size_t i = 0; i < len; ++i) g[i] += o.grad[off + i];
      }
      off += len;
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorKind::Dimension, "concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw Error(ErrorKind::Dimension, "concat_cols: " + shape_str(parts[0].shape()) + " vs " +
                                            shape_str(p.shape()));
    }
    c += p.cols();
  }
  std::vector<double> out(r * c);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(p.data().data() + i * pc, pc, out.data() + i * c + off);
    off += pc;
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result({r, c}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                     [impls, r, c](const TensorImpl& o) {
    std::size_t col = 0;
    for (const auto& t : impls) {
      const std::size_t pc = t->shape[1];
      if (t->requires_grad) {
        auto& g = t->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < pc; ++j) g[i * pc + j] += o.grad[i * c + col + j];
      }
      col += pc;
    }
  });
}

Tensor slice_rows(const Tensor& m, std::size_t begin, std::size_t end) {
  require_matrix(m, "slice_rows");
  if (begin > end || end > m.rows()) throw Error(ErrorKind::Dimension, "slice_rows: bad range");
  const std::size_t c = m.cols();
  std::vector<double> out(m.data().begin() + begin * c, m.data().begin() + end * c);
  auto mi = m.impl();
  return make_result({end - begin, c}, std::move(out), {m}, [mi, begin, c](const TensorImpl& o) {
    auto& g = mi->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * c + i] += o.grad[i];
  });
}

Tensor slice_cols(const Tensor& m, std::size_t begin, std::size_t end) {
  require_matrix(m, "slice_cols");
  if (begin > end || end > m.cols()) throw Error(ErrorKind::Dimension, "slice_cols: bad range");
  const std::size_t r = m.rows(), c = m.cols(), w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(m.data().data() + i * c + begin, w, out.data() + i * w);
  auto mi = m.impl();
  return make_result({r, w}, std::move(out), {m}, [mi, begin, r, c, w](const TensorImpl& o) {
    auto& g = mi->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += o.grad[i * w + j];
  });
}

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> index) {
  require_matrix(m, "gather_rows");
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<double> out(index.size() * c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= r) throw Error(ErrorKind::Dimension, "gather_rows: index out of range");
    std::copy_n(m.data().data() + index[i] * c, c, out.data() + i * c);
  }
  auto mi = m.impl();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result({idx.size(), c}, std::move(out), {m}, [mi, idx, c](const TensorImpl& o) {
    auto& g = mi->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += o.grad[i * c + j];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw Error(ErrorKind::Dimension, "reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  auto ai = a.impl();
  return make_result(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()), {a},
                     [ai](const TensorImpl& o) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < kernel || stride == 0) return 0;
  return (in + 2 * pad - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t kernel,
              std::size_t stride, std::size_t pad) {
  if (x.rank() != 3) throw Error(ErrorKind::Dimension, "conv2d: expected HxWxC, got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const std::size_t patch = kernel * kernel * cin;
  require_matrix(weight, "conv2d");
  if (weight.rows() != patch) {
    throw Error(ErrorKind::Dimension,
                "conv2d: weight " + shape_str(weight.shape()) + " for input " + shape_str(x.shape()));
  }
  const std::size_t cout = weight.cols();
  if (vector_length(bias, "conv2d") != cout) throw Error(ErrorKind::Dimension, "conv2d: bias length");
  const std::size_t ho = conv_out_size(h, kernel, stride, pad), wo = conv_out_size(w, kernel, stride, pad);
  if (ho == 0 || wo == 0) throw Error(ErrorKind::Dimension, "conv2d: empty output for " + shape_str(x.shape()));

  // im2col: one row per output pixel.
  std::vector<double> cols(ho * wo * patch, 0.0);
  const auto src = x.data();
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* row = cols.data() + (oy * wo + ox) * patch;
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          std::copy_n(src.data() + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin, cin,
                      row + (ky * kernel + kx) * cin);
        }
      }
    }
  }
  std::vector<double> out(ho * wo * cout);
  for (std::size_t p = 0; p < ho * wo; ++p) std::copy_n(bias.data().data(), cout, out.data() + p * cout);
  kernels::gemm(cols.data(), weight.data().data(), out.data(), ho * wo, patch, cout, true);

  auto xi = x.impl(), wi = weight.impl(), bi = bias.impl();
  return make_result({ho, wo, cout}, std::move(out), {x, weight, bias},
                     [xi, wi, bi, cols = std::move(cols), h, w, cin, ho, wo, cout, patch, kernel, stride,
                      pad](const TensorImpl& o) {
    const std::size_t npix = ho * wo;
    if (wi->requires_grad) kernels::gemm_tn_acc(cols.data(), o.grad.data(), wi->ensure_grad().data(), npix, patch, cout);
    if (bi->requires_grad) {
      auto& g = bi->ensure_grad();
      for (std::size_t p = 0; p < npix; ++p)
        for (std::size_t j = 0; j < cout; ++j) g[j] += o.grad[p * cout + j];
    }
    if (xi->requires_grad) {
      std::vector<double> dcols(npix * patch, 0.0);
      kernels::gemm_nt_acc(o.grad.data(), wi->data.data(), dcols.data(), npix, cout, patch);
      auto& g = xi->ensure_grad();
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const double* row = dcols.data() + (oy * wo + ox) * patch;
          for (std::size_t ky = 0; ky < kernel; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kernel; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              double* dst = g.data() + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
              const double* s = row + (ky * kernel + kx) * cin;
              for (std::size_t c = 0; c < cin; ++c) dst[c] += s[c];
            }
          }
        }
      }
    }
  });
}

}  // namespace msamil::numcore
