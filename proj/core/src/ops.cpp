// Copyright 2026 The conmamba Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "conmamba/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "conmamba/autodiff.hpp"
#include "conmamba/errors.hpp"

namespace conmamba::ops {
namespace {

// Parallel loops only kick in above this many scalar multiply-adds.
constexpr std::size_t kParallelWork = 1 << 15;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_string(t.shape()));
  }
}

// C[m×n] += A[m×k] · B[k×n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m×k] += G[m×n] · B[k×n]ᵀ
void gemm_nt(const double* g, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// C[k×n] += A[m×k]ᵀ · G[m×n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  const auto cols = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t pp = 0; pp < cols; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    double* crow = c + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* grow = g + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

enum class Broadcast { kNone, kScalarLeft, kScalarRight };

Broadcast resolve_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (a.numel() == 1) return Broadcast::kScalarLeft;
  if (b.numel() == 1) return Broadcast::kScalarRight;
  throw DimensionError(std::string(op) + ": shape mismatch " +
                       shape_string(a.shape()) + " vs " +
                       shape_string(b.shape()));
}

// Shared plumbing for binary elementwise ops. `fwd(x, y)` computes the value;
// `dx(x, y)` and `dy(x, y)` its partial derivatives.
template <typename Fwd, typename Dx, typename Dy>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
              Dx dx, Dy dy) {
  const Broadcast mode = resolve_broadcast(a, b, name);
  const Tensor& shape_src = mode == Broadcast::kScalarLeft ? b : a;
  const std::size_t n = shape_src.numel();
  auto ad = a.data();
  auto bd = b.data();
  auto lhs = [&](std::size_t i) { return mode == Broadcast::kScalarLeft ? ad[0] : ad[i]; };
  auto rhs = [&](std::size_t i) { return mode == Broadcast::kScalarRight ? bd[0] : bd[i]; };

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(lhs(i), rhs(i));
  Tensor result(shape_src.shape(), std::move(out));

  record_op(name, {a, b}, result,
            [a, b, mode, n, dx, dy](std::span<const double> g) mutable {
              auto ad = a.data();
              auto bd = b.data();
              auto lhs = [&](std::size_t i) { return mode == Broadcast::kScalarLeft ? ad[0] : ad[i]; };
              auto rhs = [&](std::size_t i) { return mode == Broadcast::kScalarRight ? bd[0] : bd[i]; };
              if (a.requires_grad()) {
                std::vector<double> ga(a.numel(), 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                  ga[mode == Broadcast::kScalarLeft ? 0 : i] +=
                      g[i] * dx(lhs(i), rhs(i));
                }
                a.accumulate_grad(ga);
              }
              if (b.requires_grad()) {
                std::vector<double> gb(b.numel(), 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                  gb[mode == Broadcast::kScalarRight ? 0 : i] +=
                      g[i] * dy(lhs(i), rhs(i));
                }
                b.accumulate_grad(gb);
              }
            });
  return result;
}

// Elementwise unary op where the derivative is expressed through the input
// `x` and the output `y`.
template <typename Fwd, typename Deriv>
Tensor unary(const char* name, const Tensor& t, Fwd fwd, Deriv deriv) {
  auto td = t.data();
  std::vector<double> out(td.size());
  for (std::size_t i = 0; i < td.size(); ++i) out[i] = fwd(td[i]);
  Tensor result(t.shape(), std::move(out));
  Tensor y = result;
  record_op(name, {t}, result, [t, y, deriv](std::span<const double> g) mutable {
    auto xd = t.data();
    auto yd = y.data();
    std::vector<double> gx(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) gx[i] = g[i] * deriv(xd[i], yd[i]);
    t.accumulate_grad(gx);
  });
  return result;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
  Shape reduced;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " invalid for shape " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) s.reduced.push_back(shape[i]);
  }
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  Tensor result({m, n}, std::move(out));
  record_op("matmul", {a, b}, result,
            [a, b, m, k, n](std::span<const double> g) mutable {
              if (a.requires_grad()) {
                std::vector<double> ga(m * k, 0.0);
                gemm_nt(g.data(), b.data().data(), ga.data(), m, n, k);
                a.accumulate_grad(ga);
              }
              if (b.requires_grad()) {
                std::vector<double> gb(k * n, 0.0);
                gemm_tn(a.data().data(), g.data(), gb.data(), m, k, n);
                b.accumulate_grad(gb);
              }
            });
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& t, double factor) {
  return unary(
      "scale", t, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& t, double value) {
  return unary(
      "add_scalar", t, [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& t) {
  return unary(
      "neg", t, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& t) {
  return unary(
      "exp", t, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& t) {
  for (double v : t.data()) {
    if (!(v > 0.0)) {
      throw DomainError("log of non-positive value " + std::to_string(v));
    }
  }
  return unary(
      "log", t, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor softplus(const Tensor& t) {
  return unary("softplus", t, stable_softplus,
               [](double x, double) { return stable_sigmoid(x); });
}

Tensor sigmoid(const Tensor& t) {
  return unary("sigmoid", t, stable_sigmoid,
               [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& t) {
  return unary(
      "tanh", t, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor silu(const Tensor& t) {
  return unary(
      "silu", t, [](double x) { return x * stable_sigmoid(x); },
      [](double x, double) {
        const double s = stable_sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor square(const Tensor& t) {
  return unary(
      "square", t, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.data()) acc += v;
  Tensor result = Tensor::scalar(acc);
  const std::size_t n = t.numel();
  record_op("sum", {t}, result, [t, n](std::span<const double> g) mutable {
    t.accumulate_grad(std::vector<double>(n, g[0]));
  });
  return result;
}

Tensor mean(const Tensor& t) {
  const std::size_t n = t.numel();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  double acc = 0.0;
  for (double v : t.data()) acc += v;
  Tensor result = Tensor::scalar(acc / static_cast<double>(n));
  record_op("mean", {t}, result, [t, n](std::span<const double> g) mutable {
    t.accumulate_grad(std::vector<double>(n, g[0] / static_cast<double>(n)));
  });
  return result;
}

namespace {

Tensor reduce_axis(const char* name, const Tensor& t, std::size_t axis,
                   bool average) {
  const AxisSplit s = split_axis(t.shape(), axis, name);
  if (s.extent == 0) throw DimensionError(std::string(name) + ": empty axis");
  auto td = t.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const double* src = td.data() + (o * s.extent + e) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  const double factor = average ? 1.0 / static_cast<double>(s.extent) : 1.0;
  if (average) {
    for (double& v : out) v *= factor;
  }
  Tensor result(s.reduced, std::move(out));
  record_op(name, {t}, result, [t, s, factor](std::span<const double> g) mutable {
    std::vector<double> gx(t.numel());
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t e = 0; e < s.extent; ++e) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          gx[(o * s.extent + e) * s.inner + i] = g[o * s.inner + i] * factor;
        }
      }
    }
    t.accumulate_grad(gx);
  });
  return result;
}

}  // namespace

Tensor sum(const Tensor& t, std::size_t axis) {
  return reduce_axis("sum_axis", t, axis, false);
}

Tensor mean(const Tensor& t, std::size_t axis) {
  return reduce_axis("mean_axis", t, axis, true);
}

Tensor max(const Tensor& t) {
  auto td = t.data();
  if (td.empty()) throw DimensionError("max of an empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < td.size(); ++i) {
    if (td[i] > td[best]) best = i;
  }
  Tensor result = Tensor::scalar(td[best]);
  record_op("max", {t}, result, [t, best](std::span<const double> g) mutable {
    std::vector<double> gx(t.numel(), 0.0);
    gx[best] = g[0];
    t.accumulate_grad(gx);
  });
  return result;
}

Tensor max(const Tensor& t, std::size_t axis) {
  const AxisSplit s = split_axis(t.shape(), axis, "max_axis");
  if (s.extent == 0) throw DimensionError("max_axis: empty axis");
  auto td = t.data();
  std::vector<double> out(s.outer * s.inner);
  std::vector<std::size_t> arg(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = o * s.extent * s.inner + i;
      for (std::size_t e = 1; e < s.extent; ++e) {
        const std::size_t idx = (o * s.extent + e) * s.inner + i;
        if (td[idx] > td[best]) best = idx;
      }
      out[o * s.inner + i] = td[best];
      arg[o * s.inner + i] = best;
    }
  }
  Tensor result(s.reduced, std::move(out));
  record_op("max_axis", {t}, result, [t, arg](std::span<const double> g) mutable {
    std::vector<double> gx(t.numel(), 0.0);
    for (std::size_t k = 0; k < arg.size(); ++k) gx[arg[k]] += g[k];
    t.accumulate_grad(gx);
  });
  return result;
}

Tensor l2_normalize(const Tensor& t) {
  if (t.rank() != 1 && t.rank() != 2) {
    throw DimensionError("l2_normalize: expected a vector or matrix, got " +
                         shape_string(t.shape()));
  }
  const std::size_t rows = t.rank() == 2 ? t.dim(0) : 1;
  const std::size_t cols = t.rank() == 2 ? t.dim(1) : t.dim(0);
  auto td = t.data();
  std::vector<double> out(td.size());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < cols; ++c) ss += td[r * cols + c] * td[r * cols + c];
    const double norm = std::sqrt(ss);
    if (!(norm > 1e-12)) {
      throw DomainError("l2_normalize: degenerate embedding, row " +
                        std::to_string(r) + " has norm " + std::to_string(norm));
    }
    norms[r] = norm;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = td[r * cols + c] / norm;
  }
  Tensor result(t.shape(), std::move(out));
  Tensor y = result;
  record_op("l2_normalize", {t}, result,
            [t, y, norms, rows, cols](std::span<const double> g) mutable {
              auto yd = y.data();
              std::vector<double> gx(rows * cols);
              for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < cols; ++c) dot += yd[r * cols + c] * g[r * cols + c];
                for (std::size_t c = 0; c < cols; ++c) {
                  const std::size_t i = r * cols + c;
                  gx[i] = (g[i] - yd[i] * dot) / norms[r];
                }
              }
              t.accumulate_grad(gx);
            });
  return result;
}

Tensor reshape(const Tensor& t, Shape shape) {
  if (shape_numel(shape) != t.numel()) {
    throw DimensionError("reshape: " + shape_string(t.shape()) + " to " +
                         shape_string(shape));
  }
  auto td = t.data();
  Tensor result(std::move(shape), std::vector<double>(td.begin(), td.end()));
  record_op("reshape", {t}, result, [t](std::span<const double> g) mutable {
    t.accumulate_grad(g);
  });
  return result;
}

Tensor transpose(const Tensor& t) {
  require_rank(t, 2, "transpose");
  const std::size_t m = t.dim(0), n = t.dim(1);
  auto td = t.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = td[i * n + j];
  }
  Tensor result({n, m}, std::move(out));
  record_op("transpose", {t}, result, [t, m, n](std::span<const double> g) mutable {
    std::vector<double> gx(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] = g[j * m + i];
    }
    t.accumulate_grad(gx);
  });
  return result;
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  require_rank(top, 2, "concat_rows");
  require_rank(bottom, 2, "concat_rows");
  if (top.dim(1) != bottom.dim(1)) {
    throw DimensionError("concat_rows: column mismatch " +
                         shape_string(top.shape()) + " vs " +
                         shape_string(bottom.shape()));
  }
  std::vector<double> out(top.data().begin(), top.data().end());
  out.insert(out.end(), bottom.data().begin(), bottom.data().end());
  Tensor result({top.dim(0) + bottom.dim(0), top.dim(1)}, std::move(out));
  record_op("concat_rows", {top, bottom}, result,
            [top, bottom](std::span<const double> g) mutable {
              const std::size_t split = top.numel();
              if (top.requires_grad()) top.accumulate_grad(g.subspan(0, split));
              if (bottom.requires_grad()) bottom.accumulate_grad(g.subspan(split));
            });
  return result;
}

Tensor concat_cols(const Tensor& left, const Tensor& right) {
  require_rank(left, 2, "concat_cols");
  require_rank(right, 2, "concat_cols");
  const std::size_t m = left.dim(0), nl = left.dim(1), nr = right.dim(1);
  if (right.dim(0) != m) {
    throw DimensionError("concat_cols: row mismatch " +
                         shape_string(left.shape()) + " vs " +
                         shape_string(right.shape()));
  }
  const std::size_t n = nl + nr;
  auto ld = left.data();
  auto rd = right.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(ld.data() + i * nl, nl, out.data() + i * n);
    std::copy_n(rd.data() + i * nr, nr, out.data() + i * n + nl);
  }
  Tensor result({m, n}, std::move(out));
  record_op("concat_cols", {left, right}, result,
            [left, right, m, nl, nr, n](std::span<const double> g) mutable {
              if (left.requires_grad()) {
                std::vector<double> gl(m * nl);
                for (std::size_t i = 0; i < m; ++i) {
                  std::copy_n(g.data() + i * n, nl, gl.data() + i * nl);
                }
                left.accumulate_grad(gl);
              }
              if (right.requires_grad()) {
                std::vector<double> gr(m * nr);
                for (std::size_t i = 0; i < m; ++i) {
                  std::copy_n(g.data() + i * n + nl, nr, gr.data() + i * nr);
                }
                right.accumulate_grad(gr);
              }
            });
  return result;
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  require_rank(t, 2, "slice_rows");
  if (begin > end || end > t.dim(0)) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " +
                         shape_string(t.shape()));
  }
  const std::size_t n = t.dim(1);
  auto td = t.data();
  Tensor result({end - begin, n},
                std::vector<double>(td.begin() + static_cast<std::ptrdiff_t>(begin * n),
                                    td.begin() + static_cast<std::ptrdiff_t>(end * n)));
  record_op("slice_rows", {t}, result,
            [t, begin, n](std::span<const double> g) mutable {
              std::vector<double> gx(t.numel(), 0.0);
              std::copy(g.begin(), g.end(), gx.begin() + static_cast<std::ptrdiff_t>(begin * n));
              t.accumulate_grad(gx);
            });
  return result;
}

Tensor reverse_blocks(const Tensor& t, std::size_t block) {
  require_rank(t, 2, "reverse_blocks");
  const std::size_t rows = t.dim(0), n = t.dim(1);
  if (block == 0 || rows % block != 0) {
    throw DimensionError("reverse_blocks: " + std::to_string(rows) +
                         " rows are not a multiple of block " +
                         std::to_string(block));
  }
  auto permute = [rows, n, block](std::span<const double> src) {
    std::vector<double> dst(rows * n);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = (r / block) * block;
      const std::size_t mirrored = base + (block - 1 - (r - base));
      std::copy_n(src.data() + mirrored * n, n, dst.data() + r * n);
    }
    return dst;
  };
  Tensor result(t.shape(), permute(t.data()));
  record_op("reverse_blocks", {t}, result, [t, permute](std::span<const double> g) mutable {
    t.accumulate_grad(permute(g));  // the permutation is its own inverse
  });
  return result;
}

Tensor add_tiled(const Tensor& x, const Tensor& v) {
  require_rank(x, 2, "add_tiled");
  const std::size_t rows = x.dim(0), n = x.dim(1);
  const std::size_t k = v.rank() == 1 ? 1 : v.dim(0);
  const std::size_t vn = v.rank() == 1 ? v.dim(0) : v.dim(1);
  if (v.rank() > 2 || vn != n || k == 0 || rows % k != 0) {
    throw DimensionError("add_tiled: cannot tile " + shape_string(v.shape()) +
                         " over " + shape_string(x.shape()));
  }
  auto xd = x.data();
  auto vd = v.data();
  std::vector<double> out(rows * n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* vrow = vd.data() + (r % k) * n;
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xd[r * n + j] + vrow[j];
  }
  Tensor result(x.shape(), std::move(out));
  record_op("add_tiled", {x, v}, result,
            [x, v, rows, n, k](std::span<const double> g) mutable {
              if (x.requires_grad()) x.accumulate_grad(g);
              if (v.requires_grad()) {
                std::vector<double> gv(k * n, 0.0);
                for (std::size_t r = 0; r < rows; ++r) {
                  double* dst = gv.data() + (r % k) * n;
                  for (std::size_t j = 0; j < n; ++j) dst[j] += g[r * n + j];
                }
                v.accumulate_grad(gv);
              }
            });
  return result;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_tiled(matmul(x, w), b);
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
  require_rank(x, 2, "rms_norm");
  const std::size_t rows = x.dim(0), n = x.dim(1);
  if (gain.numel() != n) {
    throw DimensionError("rms_norm: gain " + shape_string(gain.shape()) +
                         " for input " + shape_string(x.shape()));
  }
  auto xd = x.data();
  auto gd = gain.data();
  std::vector<double> inv_rms(rows);
  std::vector<double> out(rows * n);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += xd[r * n + j] * xd[r * n + j];
    inv_rms[r] = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xd[r * n + j] * inv_rms[r] * gd[j];
  }
  Tensor result(x.shape(), std::move(out));
  record_op("rms_norm", {x, gain}, result,
            [x, gain, inv_rms, rows, n](std::span<const double> g) mutable {
              auto xd = x.data();
              auto gd = gain.data();
              std::vector<double> ggain(n, 0.0);
              std::vector<double> gx(rows * n);
              for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;  // mean(dxhat ⊙ xhat)
                for (std::size_t j = 0; j < n; ++j) {
                  const std::size_t i = r * n + j;
                  const double xhat = xd[i] * inv_rms[r];
                  ggain[j] += g[i] * xhat;
                  dot += g[i] * gd[j] * xhat;
                }
                dot /= static_cast<double>(n);
                for (std::size_t j = 0; j < n; ++j) {
                  const std::size_t i = r * n + j;
                  const double xhat = xd[i] * inv_rms[r];
                  gx[i] = (g[i] * gd[j] - xhat * dot) * inv_rms[r];
                }
              }
              if (x.requires_grad()) x.accumulate_grad(gx);
              if (gain.requires_grad()) gain.accumulate_grad(ggain);
            });
  return result;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(rows) + " rows");
  }
  if (rows == 0) throw DimensionError("cross_entropy: empty batch");
  auto ld = logits.data();
  std::vector<double> probs(rows * classes);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DimensionError("cross_entropy: label " + std::to_string(y) +
                           " outside [0, " + std::to_string(classes) + ")");
    }
    const double* row = ld.data() + r * classes;
    const double peak = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - peak);
    for (std::size_t c = 0; c < classes; ++c) {
      probs[r * classes + c] = std::exp(row[c] - peak) / z;
    }
    total += peak + std::log(z) - row[static_cast<std::size_t>(y)];
  }
  Tensor result = Tensor::scalar(total / static_cast<double>(rows));
  std::vector<int> owned(labels.begin(), labels.end());
  record_op("cross_entropy", {logits}, result,
            [logits, probs, owned, rows, classes](std::span<const double> g) mutable {
              std::vector<double> gx(probs);
              const double s = g[0] / static_cast<double>(rows);
              for (std::size_t r = 0; r < rows; ++r) {
                gx[r * classes + static_cast<std::size_t>(owned[r])] -= 1.0;
              }
              for (double& v : gx) v *= s;
              logits.accumulate_grad(gx);
            });
  return result;
}

}  // namespace conmamba::ops
