#include "supcl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "supcl/error.hpp"

namespace supcl {

namespace {

using detail::Node;

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    fail(ErrorKind::shape, std::string(op) + ": expected rank " + std::to_string(rank) +
                               ", got shape " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::shape, std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                               " vs " + shape_str(b.shape()));
  }
}

std::size_t last_dim(const Tensor& t, const char* op) {
  if (t.rank() == 0) fail(ErrorKind::shape, std::string(op) + ": scalar input");
  return t.shape().back();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    fail(ErrorKind::shape, "matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                               " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) gemm_nt(m, n, k, self.grad.data(), pb.value.data(), pa.grad_buffer().data());
    if (pb.requires_grad) gemm_tn(m, k, n, pa.value.data(), self.grad.data(), pb.grad_buffer().data());
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != batch || bk != k) {
    fail(ErrorKind::shape, "bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                               shape_str(b.shape()) + (transpose_b ? " (b transposed)" : ""));
  }
  std::vector<double> out(batch * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    if (transpose_b) {
      gemm_nt(m, k, n, ad + s * m * k, bd + s * n * k, out.data() + s * m * n);
    } else {
      gemm_nn(m, k, n, ad + s * m * k, bd + s * k * n, out.data() + s * m * n);
    }
  }
  return Tensor::make_result(
      {batch, m, n}, std::move(out), {a, b}, [batch, m, k, n, transpose_b](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const double* g = self.grad.data();
        double* ga = pa.requires_grad ? pa.grad_buffer().data() : nullptr;
        double* gb = pb.requires_grad ? pb.grad_buffer().data() : nullptr;
        for (std::size_t s = 0; s < batch; ++s) {
          const double* gs = g + s * m * n;
          const double* as = pa.value.data() + s * m * k;
          const double* bs = pb.value.data() + s * k * n;
          if (transpose_b) {
            if (ga) gemm_nn(m, n, k, gs, bs, ga + s * m * k);
            if (gb) gemm_tn(m, n, k, gs, as, gb + s * n * k);
          } else {
            if (ga) gemm_nt(m, n, k, gs, bs, ga + s * m * k);
            if (gb) gemm_tn(m, k, n, as, gs, gb + s * k * n);
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto in = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  return Tensor::make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      auto g = parent->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t n = last_dim(a, "add_bias");
  if (bias.rank() != 1 || bias.dim(0) != n) {
    fail(ErrorKind::shape, "add_bias: bias " + shape_str(bias.shape()) +
                               " does not match rows of " + shape_str(a.shape()));
  }
  const std::size_t rows = a.size() / n;
  std::vector<double> out(a.size());
  auto ad = a.data(), bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = ad[r * n + j] + bd[j];
  return Tensor::make_result(a.shape(), std::move(out), {a, bias}, [rows, n](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto g = self.parents[1]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[r * n + j];
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return Tensor::make_result({}, {total}, {a}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) fail(ErrorKind::shape, "mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * in[i] * (1.0 + std::erf(in[i] * std::numbers::sqrt2 / 2.0));
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    Node& px = *self.parents[0];
    auto g = px.grad_buffer();
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = px.value[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = last_dim(x, "layernorm");
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    fail(ErrorKind::shape, "layernorm: gain/bias must be [" + std::to_string(d) + "]");
  }
  const std::size_t rows = x.size() / d;
  auto in = x.data();
  auto gd = gain.data(), bd = bias.data();
  std::vector<double> normalized(x.size()), inv_std(rows), out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * inv_std[r];
      normalized[r * d + j] = xh;
      out[r * d + j] = xh * gd[j] + bd[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const double* g = self.grad.data();
        if (pg.requires_grad) {
          auto gg = pg.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * normalized[r * d + j];
        }
        if (pb.requires_grad) {
          auto gb = pb.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
        if (px.requires_grad) {
          auto gx = px.grad_buffer();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[r * d + j] * pg.value[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * normalized[r * d + j];
            }
            mean_dxh *= inv_d;
            mean_dxh_xh *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[r * d + j] * pg.value[j];
              gx[r * d + j] +=
                  inv_std[r] * (dxh - mean_dxh - normalized[r * d + j] * mean_dxh_xh);
            }
          }
        }
      });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    fail(ErrorKind::shape, "softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  if (n == 0) fail(ErrorKind::shape, "softmax over an empty axis");
  auto in = x.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[base + j * inner]);
      if (!std::isfinite(mx)) fail(ErrorKind::numeric, "softmax: non-finite input");
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(in[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  return Tensor::make_result(s, std::move(out), {x}, [outer, inner, n](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * n * inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          dot += self.value[base + j * inner] * self.grad[base + j * inner];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t at = base + j * inner;
          g[at] += self.value[at] * (self.grad[at] - dot);
        }
      }
    }
  });
}

Tensor masked_log_softmax(const Tensor& x, std::span<const std::uint8_t> include) {
  require_rank(x, 2, "masked_log_softmax");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (include.size() != m * n) fail(ErrorKind::shape, "masked_log_softmax: mask size mismatch");
  auto in = x.data();
  std::vector<double> out(m * n, 0.0);
  std::vector<double> probs(m * n, 0.0);
  std::vector<std::uint8_t> mask(include.begin(), include.end());
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (mask[i * n + j]) mx = std::max(mx, in[i * n + j]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      fail(ErrorKind::degenerate_input, "masked_log_softmax: row " + std::to_string(i) + " has no entries");
    }
    if (!std::isfinite(mx)) fail(ErrorKind::numeric, "masked_log_softmax: non-finite input");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (mask[i * n + j]) total += std::exp(in[i * n + j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask[i * n + j]) continue;
      out[i * n + j] = in[i * n + j] - lse;
      probs[i * n + j] = std::exp(out[i * n + j]);
    }
  }
  return Tensor::make_result(
      {m, n}, std::move(out), {x},
      [m, n, mask = std::move(mask), probs = std::move(probs)](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          double row_grad = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            if (mask[i * n + j]) row_grad += self.grad[i * n + j];
          for (std::size_t j = 0; j < n; ++j) {
            if (!mask[i * n + j]) continue;
            g[i * n + j] += self.grad[i * n + j] - probs[i * n + j] * row_grad;
          }
        }
      });
}

Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  if (weights.size() != x.size()) fail(ErrorKind::shape, "weighted_sum: weight count mismatch");
  auto in = x.data();
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] != 0.0) total += weights[i] * in[i];
  }
  std::vector<double> w(weights.begin(), weights.end());
  return Tensor::make_result({}, {total}, {x}, [w = std::move(w)](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += w[i] * self.grad[0];
  });
}

Tensor dropout(const Tensor& x, double p, const RngStream& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) {
    fail(ErrorKind::invalid_probability, "dropout probability must lie in [0,1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  auto engine = rng.engine();
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> factor(x.size());
  for (double& f : factor) f = uniform01(engine) < p ? 0.0 : keep_scale;
  auto in = x.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * factor[i];
  return Tensor::make_result(x.shape(), std::move(out), {x}, [factor = std::move(factor)](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor[i];
  });
}

Tensor l2_normalize(const Tensor& x) {
  const std::size_t d = last_dim(x, "l2_normalize");
  const std::size_t rows = d == 0 ? 0 : x.size() / d;
  auto in = x.data();
  std::vector<double> out(x.size()), norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += in[r * d + j] * in[r * d + j];
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) fail(ErrorKind::numeric, "l2_normalize: non-finite row " + std::to_string(r));
    if (norm < kNormFloor) {
      fail(ErrorKind::degenerate_embedding,
           "l2_normalize: row " + std::to_string(r) + " has norm below 1e-12");
    }
    norms[r] = norm;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = in[r * d + j] / norm;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, d, norms = std::move(norms)](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += self.value[r * d + j] * self.grad[r * d + j];
      for (std::size_t j = 0; j < d; ++j) {
        g[r * d + j] += (self.grad[r * d + j] - self.value[r * d + j] * dot) / norms[r];
      }
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t m = logits.dim(0), c = logits.dim(1);
  if (labels.size() != m) {
    fail(ErrorKind::shape, "cross_entropy: " + std::to_string(labels.size()) +
                               " labels for " + std::to_string(m) + " rows");
  }
  if (m == 0) fail(ErrorKind::shape, "cross_entropy: empty batch");
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] >= c) {
      fail(ErrorKind::label, "cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                                 std::to_string(i) + " outside [0," + std::to_string(c) + ")");
    }
  }
  auto in = logits.data();
  std::vector<double> probs(m * c);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = in.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    if (!std::isfinite(mx)) fail(ErrorKind::numeric, "cross_entropy: non-finite logits");
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
    total += lse - row[labels[i]];
  }
  std::vector<std::size_t> targets(labels.begin(), labels.end());
  return Tensor::make_result(
      {}, {total / static_cast<double>(m)}, {logits},
      [m, c, probs = std::move(probs), targets = std::move(targets)](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        const double up = self.grad[0] / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            g[i * c + j] += up * (probs[i * c + j] - (j == targets[i] ? 1.0 : 0.0));
          }
        }
      });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  require_rank(table, 2, "gather_rows");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  auto td = table.data();
  std::vector<double> out(indices.size() * d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows) {
      fail(ErrorKind::shape, "gather_rows: index " + std::to_string(indices[r]) +
                                 " out of range for " + shape_str(table.shape()));
    }
    std::copy_n(td.data() + indices[r] * d, d, out.data() + r * d);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Tensor::make_result({indices.size(), d}, std::move(out), {table}, [d, idx = std::move(idx)](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) g[idx[r] * d + j] += self.grad[r * d + j];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorKind::shape, "concat_rows: no inputs");
  const std::size_t d = parts.front().rank() == 2 ? parts.front().dim(1) : 0;
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(1) != d) {
      fail(ErrorKind::shape, "concat_rows: incompatible part " + shape_str(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * d);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor::make_result({rows, d}, std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (auto& parent : self.parents) {
      const std::size_t n = parent->value.size();
      if (parent->requires_grad) {
        auto g = parent->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

Tensor split_heads(const Tensor& x, std::size_t batch, std::size_t seq, std::size_t heads) {
  require_rank(x, 2, "split_heads");
  const std::size_t d = x.dim(1);
  if (x.dim(0) != batch * seq || heads == 0 || d % heads != 0) {
    fail(ErrorKind::shape, "split_heads: cannot split " + shape_str(x.shape()));
  }
  const std::size_t hd = d / heads;
  auto in = x.data();
  std::vector<double> out(x.size());
  // out[(b*H + h), l, e] = x[b*L + l, h*hd + e]
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t l = 0; l < seq; ++l)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(in.data() + (b * seq + l) * d + h * hd, hd,
                    out.data() + ((b * heads + h) * seq + l) * hd);
  return Tensor::make_result({batch * heads, seq, hd}, std::move(out), {x}, [batch, seq, heads, hd, d](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t l = 0; l < seq; ++l)
        for (std::size_t h = 0; h < heads; ++h) {
          const double* src = self.grad.data() + ((b * heads + h) * seq + l) * hd;
          double* dst = g.data() + (b * seq + l) * d + h * hd;
          for (std::size_t e = 0; e < hd; ++e) dst[e] += src[e];
        }
  });
}

Tensor merge_heads(const Tensor& x, std::size_t batch, std::size_t seq, std::size_t heads) {
  require_rank(x, 3, "merge_heads");
  if (x.dim(0) != batch * heads || x.dim(1) != seq) {
    fail(ErrorKind::shape, "merge_heads: cannot merge " + shape_str(x.shape()));
  }
  const std::size_t hd = x.dim(2), d = heads * hd;
  auto in = x.data();
  std::vector<double> out(x.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t l = 0; l < seq; ++l)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(in.data() + ((b * heads + h) * seq + l) * hd, hd,
                    out.data() + (b * seq + l) * d + h * hd);
  return Tensor::make_result({batch * seq, d}, std::move(out), {x}, [batch, seq, heads, hd, d](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t l = 0; l < seq; ++l)
        for (std::size_t h = 0; h < heads; ++h) {
          const double* src = self.grad.data() + (b * seq + l) * d + h * hd;
          double* dst = g.data() + ((b * heads + h) * seq + l) * hd;
          for (std::size_t e = 0; e < hd; ++e) dst[e] += src[e];
        }
  });
}

}  // namespace supcl
