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

#include "conmamba/ssm.hpp"

#include <algorithm>
#include <cmath>

#include "conmamba/autodiff.hpp"
#include "conmamba/errors.hpp"
#include "conmamba/ops.hpp"

namespace conmamba::ssm {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw DimensionError(message);
}

// Readout y_t = C_t·h_t + D ⊙ x_t for one sequence whose states are in `h`.
void readout(std::span<const double> h, const double* c, const double* x,
             std::span<const double> d_skip, double* y, std::size_t length,
             std::size_t d_inner, std::size_t n_state) {
  for (std::size_t t = 0; t < length; ++t) {
    const double* ct = c + t * n_state;
    for (std::size_t ch = 0; ch < d_inner; ++ch) {
      const double* ht = h.data() + (t * d_inner + ch) * n_state;
      double acc = 0.0;
      for (std::size_t s = 0; s < n_state; ++s) acc += ct[s] * ht[s];
      y[t * d_inner + ch] = acc + d_skip[ch] * x[t * d_inner + ch];
    }
  }
}

void check_scan_inputs(const DiscreteSteps& steps, const Tensor& c,
                       const Tensor& x, const Tensor& d_skip) {
  const std::size_t width = steps.d_inner * steps.n_state;
  require(steps.a_bar.size() == steps.length * width &&
              steps.b_bar_x.size() == steps.length * width,
          "scan: discrete step arrays do not match their declared shape");
  require(x.rank() == 2 && x.dim(0) == steps.length && x.dim(1) == steps.d_inner,
          "scan: x " + shape_string(x.shape()) + " does not match steps");
  require(c.rank() == 2 && c.dim(0) == steps.length && c.dim(1) == steps.n_state,
          "scan: c " + shape_string(c.shape()) + " does not match steps");
  require(d_skip.numel() == steps.d_inner,
          "scan: d_skip " + shape_string(d_skip.shape()) + " does not match steps");
}

template <typename Recurrence>
Tensor scan_with(const DiscreteSteps& steps, const Tensor& c, const Tensor& x,
                 const Tensor& d_skip, Recurrence recurrence) {
  check_scan_inputs(steps, c, x, d_skip);
  const std::size_t width = steps.d_inner * steps.n_state;
  std::vector<double> h(steps.length * width);
  recurrence(steps.a_bar, steps.b_bar_x, h, steps.length, width);
  std::vector<double> y(steps.length * steps.d_inner);
  readout(h, c.data().data(), x.data().data(), d_skip.data(), y.data(),
          steps.length, steps.d_inner, steps.n_state);
  return Tensor({steps.length, steps.d_inner}, std::move(y));
}

}  // namespace

ZohCoefficient zoh_input_coefficient(double a, double delta) {
  const double u = delta * a;
  if (std::abs(u) < kTaylorThreshold) {
    // (e^u - 1)/u = 1 + u/2 + O(u²)
    return {delta * (1.0 + 0.5 * u), 1.0 + u, 0.5 * delta * delta};
  }
  const double em1 = std::expm1(u);
  const double e = em1 + 1.0;
  return {em1 / a, e, delta * delta * (u * e - em1) / (u * u)};
}

ZohStep discretize_zoh(double a, double b, double delta) {
  if (!(delta > 0.0)) {
    throw ContractError("discretize_zoh: step size must be positive, got " +
                        std::to_string(delta));
  }
  if (!(a < 0.0)) {
    throw ContractError("discretize_zoh: state matrix entry must be negative, got " +
                        std::to_string(a));
  }
  return {std::exp(delta * a), zoh_input_coefficient(a, delta).value * b};
}

DiscreteStep discretize_zoh(const Tensor& a, const Tensor& b_t,
                            const Tensor& delta_t) {
  require(a.rank() == 2, "discretize_zoh: a must be [d_inner × n_state]");
  const std::size_t d = a.dim(0), n = a.dim(1);
  require(b_t.numel() == n && delta_t.numel() == d,
          "discretize_zoh: b_t " + shape_string(b_t.shape()) + " / delta_t " +
              shape_string(delta_t.shape()) + " do not match a " +
              shape_string(a.shape()));
  std::vector<double> a_bar(d * n), b_bar(d * n);
  for (std::size_t ch = 0; ch < d; ++ch) {
    for (std::size_t s = 0; s < n; ++s) {
      const ZohStep step = discretize_zoh(a[ch * n + s], b_t[s], delta_t[ch]);
      a_bar[ch * n + s] = step.a_bar;
      b_bar[ch * n + s] = step.b_bar;
    }
  }
  return {Tensor({d, n}, std::move(a_bar)), Tensor({d, n}, std::move(b_bar))};
}

SelectiveSSMParams SelectiveSSMParams::initialize(std::size_t d_inner,
                                                  std::size_t n_state,
                                                  Rng& rng) {
  SelectiveSSMParams p;
  std::vector<double> a_log(d_inner * n_state);
  for (std::size_t ch = 0; ch < d_inner; ++ch) {
    for (std::size_t s = 0; s < n_state; ++s) {
      a_log[ch * n_state + s] = std::log(static_cast<double>(s + 1));
    }
  }
  p.a_log = Tensor({d_inner, n_state}, std::move(a_log));
  p.d_skip = Tensor::full({d_inner}, 1.0);

  const double bound = 1.0 / std::sqrt(static_cast<double>(d_inner));
  auto uniform_matrix = [&](std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (double& e : v) e = uniform(rng, -bound, bound);
    return Tensor({rows, cols}, std::move(v));
  };
  p.w_delta = uniform_matrix(d_inner, d_inner);
  // softplus(bias) = 0.05
  p.delta_bias = Tensor::full({d_inner}, std::log(std::expm1(0.05)));
  p.w_b = uniform_matrix(d_inner, n_state);
  p.w_c = uniform_matrix(d_inner, n_state);
  return p;
}

std::vector<std::pair<std::string, Tensor>> SelectiveSSMParams::named_tensors() const {
  return {{"a_log", a_log}, {"d_skip", d_skip},         {"w_delta", w_delta},
          {"delta_bias", delta_bias}, {"w_b", w_b}, {"w_c", w_c}};
}

Tensor SelectiveSSMParams::state_matrix() const {
  std::vector<double> a(a_log.numel());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(a_log[i]);
  return Tensor(a_log.shape(), std::move(a));
}

SelectiveProjections selective_params(const Tensor& x,
                                      const SelectiveSSMParams& params) {
  require(x.rank() == 2 && x.dim(1) == params.d_inner(),
          "selective_params: x " + shape_string(x.shape()) +
              " does not match d_inner " + std::to_string(params.d_inner()));
  SelectiveProjections out;
  out.delta = ops::softplus(ops::linear(x, params.w_delta, params.delta_bias));
  out.b = ops::matmul(x, params.w_b);
  out.c = ops::matmul(x, params.w_c);
  return out;
}

DiscreteSteps discretize_sequence(const Tensor& a, const Tensor& delta,
                                  const Tensor& b, const Tensor& x) {
  require(a.rank() == 2 && delta.rank() == 2 && b.rank() == 2 && x.rank() == 2,
          "discretize_sequence: all inputs must be matrices");
  const std::size_t d = a.dim(0), n = a.dim(1), length = x.dim(0);
  require(x.dim(1) == d && delta.shape() == x.shape() && b.dim(0) == length &&
              b.dim(1) == n,
          "discretize_sequence: inconsistent shapes a " + shape_string(a.shape()) +
              ", delta " + shape_string(delta.shape()) + ", b " +
              shape_string(b.shape()) + ", x " + shape_string(x.shape()));
  DiscreteSteps steps{length, d, n, std::vector<double>(length * d * n),
                      std::vector<double>(length * d * n)};
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t ch = 0; ch < d; ++ch) {
      const double dt = delta[t * d + ch];
      if (!(dt > 0.0)) {
        throw ContractError("discretize_sequence: non-positive step size at token " +
                            std::to_string(t));
      }
      const double xv = x[t * d + ch];
      for (std::size_t s = 0; s < n; ++s) {
        const double av = a[ch * n + s];
        const std::size_t i = (t * d + ch) * n + s;
        steps.a_bar[i] = std::exp(dt * av);
        steps.b_bar_x[i] = zoh_input_coefficient(av, dt).value * b[t * n + s] * xv;
      }
    }
  }
  return steps;
}

void recurrence_sequential(std::span<const double> a, std::span<const double> b,
                           std::span<double> h, std::size_t length,
                           std::size_t width) {
  for (std::size_t t = 0; t < length; ++t) {
    const double* at = a.data() + t * width;
    const double* bt = b.data() + t * width;
    double* ht = h.data() + t * width;
    if (t == 0) {
      for (std::size_t k = 0; k < width; ++k) ht[k] = at[k] * 0.0 + bt[k];
    } else {
      const double* prev = ht - width;
      for (std::size_t k = 0; k < width; ++k) ht[k] = at[k] * prev[k] + bt[k];
    }
  }
}

void recurrence_parallel(std::span<const double> a, std::span<const double> b,
                         std::span<double> h, std::size_t length,
                         std::size_t width) {
  if (length == 0) return;
  std::size_t padded = 1;
  while (padded < length) padded <<= 1;

  // Node i holds the affine map (pa, pb); padding slots are the identity.
  std::vector<double> pa(padded * width, 1.0), pb(padded * width, 0.0);
  std::copy_n(a.data(), length * width, pa.data());
  std::copy_n(b.data(), length * width, pb.data());

  // Compose `earlier` into `later`: later ← later ∘ earlier.
  auto compose_into = [&](std::size_t later, std::size_t earlier) {
    double* la = pa.data() + later * width;
    double* lb = pb.data() + later * width;
    const double* ea = pa.data() + earlier * width;
    const double* eb = pb.data() + earlier * width;
    for (std::size_t k = 0; k < width; ++k) {
      lb[k] = la[k] * eb[k] + lb[k];
      la[k] = la[k] * ea[k];
    }
  };

  // Up-sweep: node i accumulates its left sibling subtree.
  for (std::size_t stride = 1; stride < padded; stride <<= 1) {
    const auto nodes = static_cast<std::ptrdiff_t>(padded / (2 * stride));
#pragma omp parallel for schedule(static) if (nodes * width > 4096)
    for (std::ptrdiff_t j = 0; j < nodes; ++j) {
      const std::size_t i = static_cast<std::size_t>(j) * 2 * stride + 2 * stride - 1;
      compose_into(i, i - stride);
    }
  }

  // Down-sweep to exclusive prefixes. Root gets the identity.
  std::fill_n(pa.data() + (padded - 1) * width, width, 1.0);
  std::fill_n(pb.data() + (padded - 1) * width, width, 0.0);
  for (std::size_t stride = padded >> 1; stride >= 1; stride >>= 1) {
    const auto nodes = static_cast<std::ptrdiff_t>(padded / (2 * stride));
#pragma omp parallel for schedule(static) if (nodes * width > 4096)
    for (std::ptrdiff_t j = 0; j < nodes; ++j) {
      const std::size_t right = static_cast<std::size_t>(j) * 2 * stride + 2 * stride - 1;
      const std::size_t left = right - stride;
      double* ra = pa.data() + right * width;
      double* rb = pb.data() + right * width;
      double* la = pa.data() + left * width;
      double* lb = pb.data() + left * width;
      for (std::size_t k = 0; k < width; ++k) {
        // left subtree aggregate t; left child inherits the parent prefix;
        // right child gets t ∘ prefix.
        const double ta = la[k], tb = lb[k];
        la[k] = ra[k];
        lb[k] = rb[k];
        rb[k] = ta * rb[k] + tb;
        ra[k] = ta * ra[k];
      }
    }
    if (stride == 1) break;
  }

  // Exclusive prefix state is pb[t]; inclusive h_t = a_t·h_{t-1} + b_t.
  const auto steps = static_cast<std::ptrdiff_t>(length);
#pragma omp parallel for schedule(static) if (length * width > 4096)
  for (std::ptrdiff_t tt = 0; tt < steps; ++tt) {
    const auto t = static_cast<std::size_t>(tt);
    const double* at = a.data() + t * width;
    const double* bt = b.data() + t * width;
    const double* prev = pb.data() + t * width;
    double* ht = h.data() + t * width;
    for (std::size_t k = 0; k < width; ++k) ht[k] = at[k] * prev[k] + bt[k];
  }
}

Tensor scan_sequential(const DiscreteSteps& steps, const Tensor& c,
                       const Tensor& x, const Tensor& d_skip) {
  check_scan_inputs(steps, c, x, d_skip);
  // Only the running state is kept, so memory is O(d·n) for any length.
  const std::size_t d = steps.d_inner, n = steps.n_state, width = d * n;
  std::vector<double> h(width, 0.0);
  std::vector<double> y(steps.length * d);
  const double* cd = c.data().data();
  const double* xd = x.data().data();
  const auto dd = d_skip.data();
  for (std::size_t t = 0; t < steps.length; ++t) {
    const double* at = steps.a_bar.data() + t * width;
    const double* bt = steps.b_bar_x.data() + t * width;
    const double* ct = cd + t * n;
    for (std::size_t ch = 0; ch < d; ++ch) {
      double* hc = h.data() + ch * n;
      double acc = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t k = ch * n + s;
        hc[s] = at[k] * hc[s] + bt[k];
        acc += ct[s] * hc[s];
      }
      y[t * d + ch] = acc + dd[ch] * xd[t * d + ch];
    }
  }
  return Tensor({steps.length, d}, std::move(y));
}

Tensor scan_sequential(const Tensor& a, const Tensor& delta, const Tensor& b,
                       const Tensor& c, const Tensor& x, const Tensor& d_skip) {
  require(a.rank() == 2 && delta.rank() == 2 && b.rank() == 2 && x.rank() == 2,
          "scan_sequential: all inputs must be matrices");
  const std::size_t d = a.dim(0), n = a.dim(1), length = x.dim(0);
  require(x.dim(1) == d && delta.shape() == x.shape() && b.dim(0) == length &&
              b.dim(1) == n && c.shape() == b.shape() && d_skip.numel() == d,
          "scan_sequential: inconsistent shapes a " + shape_string(a.shape()) +
              ", delta " + shape_string(delta.shape()) + ", b " + shape_string(b.shape()) +
              ", c " + shape_string(c.shape()) + ", x " + shape_string(x.shape()));
  std::vector<double> h(d * n, 0.0);
  std::vector<double> y(length * d);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t ch = 0; ch < d; ++ch) {
      const double dt = delta[t * d + ch];
      if (!(dt > 0.0)) {
        throw ContractError("scan_sequential: non-positive step size at token " +
                            std::to_string(t));
      }
      const double xv = x[t * d + ch];
      double acc = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const double av = a[ch * n + s];
        const double a_bar = std::exp(dt * av);
        const double b_bar_x = zoh_input_coefficient(av, dt).value * b[t * n + s] * xv;
        double& hs = h[ch * n + s];
        hs = a_bar * hs + b_bar_x;
        acc += c[t * n + s] * hs;
      }
      y[t * d + ch] = acc + d_skip[ch] * xv;
    }
  }
  return Tensor({length, d}, std::move(y));
}

Tensor scan_parallel(const DiscreteSteps& steps, const Tensor& c,
                     const Tensor& x, const Tensor& d_skip) {
  return scan_with(steps, c, x, d_skip, recurrence_parallel);
}

Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a_log,
                      const Tensor& b, const Tensor& c, const Tensor& d_skip,
                      std::size_t seq_len, ScanMode mode) {
  require(x.rank() == 2 && a_log.rank() == 2, "selective_scan: x and a_log must be matrices");
  const std::size_t rows = x.dim(0), d = x.dim(1), n = a_log.dim(1);
  require(seq_len > 0 && rows % seq_len == 0,
          "selective_scan: " + std::to_string(rows) +
              " rows are not a whole number of sequences of length " +
              std::to_string(seq_len));
  require(a_log.dim(0) == d && delta.shape() == x.shape() && b.rank() == 2 &&
              b.dim(0) == rows && b.dim(1) == n && c.shape() == b.shape() &&
              d_skip.numel() == d,
          "selective_scan: inconsistent shapes x " + shape_string(x.shape()) +
              ", delta " + shape_string(delta.shape()) + ", a_log " +
              shape_string(a_log.shape()) + ", b " + shape_string(b.shape()) +
              ", c " + shape_string(c.shape()));
  for (double v : delta.data()) {
    if (!(v > 0.0)) throw ContractError("selective_scan: non-positive step size");
  }

  const std::size_t n_seq = rows / seq_len;
  const std::size_t width = d * n;
  std::vector<double> a_mat(width);
  for (std::size_t i = 0; i < width; ++i) a_mat[i] = -std::exp(a_log[i]);
  Tensor a_tensor({d, n}, a_mat);

  const bool keep_states = should_record({&x, &delta, &a_log, &b, &c, &d_skip});
  std::vector<double> states(keep_states ? rows * width : 0);
  std::vector<double> y(rows * d);

  auto run_sequence = [&](std::size_t s, std::span<double> h) {
    const std::size_t r0 = s * seq_len;
    Tensor xs = ops::slice_rows(x, r0, r0 + seq_len);
    DiscreteSteps steps = discretize_sequence(
        a_tensor, ops::slice_rows(delta, r0, r0 + seq_len),
        ops::slice_rows(b, r0, r0 + seq_len), xs);
    if (mode == ScanMode::kParallel) {
      recurrence_parallel(steps.a_bar, steps.b_bar_x, h, seq_len, width);
    } else {
      recurrence_sequential(steps.a_bar, steps.b_bar_x, h, seq_len, width);
    }
    readout(h, c.data().data() + r0 * n, xs.data().data(), d_skip.data(),
            y.data() + r0 * d, seq_len, d, n);
  };

  {
    NoGradScope no_grad;  // slices above are bookkeeping, not graph nodes
    if (mode == ScanMode::kParallel) {
      for (std::size_t s = 0; s < n_seq; ++s) {
        std::vector<double> local(keep_states ? 0 : seq_len * width);
        std::span<double> h = keep_states
                                  ? std::span<double>(states).subspan(s * seq_len * width, seq_len * width)
                                  : std::span<double>(local);
        run_sequence(s, h);
      }
    } else {
      const auto count = static_cast<std::ptrdiff_t>(n_seq);
#pragma omp parallel for schedule(static) if (n_seq > 1 && rows * width > 4096)
      for (std::ptrdiff_t ss = 0; ss < count; ++ss) {
        const auto s = static_cast<std::size_t>(ss);
        std::vector<double> local(keep_states ? 0 : seq_len * width);
        std::span<double> h = keep_states
                                  ? std::span<double>(states).subspan(s * seq_len * width, seq_len * width)
                                  : std::span<double>(local);
        run_sequence(s, h);
      }
    }
  }

  Tensor result({rows, d}, std::move(y));
  record_op(
      "selective_scan", {x, delta, a_log, b, c, d_skip}, result,
      [x, delta, a_log, b, c, d_skip, a_mat = std::move(a_mat),
       states = std::move(states), seq_len, n_seq, d, n,
       width](std::span<const double> g) mutable {
        const std::size_t rows = n_seq * seq_len;
        auto xd = x.data();
        auto dd = delta.data();
        auto bd = b.data();
        auto cd = c.data();
        auto skip = d_skip.data();

        std::vector<double> gx(rows * d, 0.0), gdelta(rows * d, 0.0);
        std::vector<double> gb(rows * n, 0.0), gc(rows * n, 0.0);
        // Shared-parameter partials are kept per sequence and summed in
        // sequence order so the result does not depend on thread count.
        std::vector<double> ga_part(n_seq * width, 0.0), gskip_part(n_seq * d, 0.0);

        const auto count = static_cast<std::ptrdiff_t>(n_seq);
#pragma omp parallel for schedule(static) if (n_seq > 1 && rows * width > 4096)
        for (std::ptrdiff_t ss = 0; ss < count; ++ss) {
          const auto s = static_cast<std::size_t>(ss);
          const double* h = states.data() + s * seq_len * width;
          double* ga = ga_part.data() + s * width;
          double* gskip = gskip_part.data() + s * d;
          std::vector<double> dh(width, 0.0);
          for (std::size_t tt = seq_len; tt-- > 0;) {
            const std::size_t r = s * seq_len + tt;
            const double* ht = h + tt * width;
            const double* hprev = tt > 0 ? ht - width : nullptr;
            const double* ct = cd.data() + r * n;
            const double* bt = bd.data() + r * n;
            for (std::size_t ch = 0; ch < d; ++ch) {
              const double gy = g[r * d + ch];
              const double xv = xd[r * d + ch];
              const double dt = dd[r * d + ch];
              gskip[ch] += gy * xv;
              double gxv = gy * skip[ch];
              double gdt = 0.0;
              for (std::size_t st = 0; st < n; ++st) {
                const std::size_t k = ch * n + st;
                gc[r * n + st] += gy * ht[k];
                // dh_t = C_t·gy + Ā_{t+1}·dh_{t+1}; dh holds the latter.
                const double dhk = dh[k] + gy * ct[st];
                const double av = a_mat[k];
                const double abar = std::exp(dt * av);
                const ZohCoefficient coef = zoh_input_coefficient(av, dt);
                const double hp = hprev ? hprev[k] : 0.0;
                const double gabar = dhk * hp;
                const double gcoef = dhk * bt[st] * xv;
                gxv += dhk * coef.value * bt[st];
                gb[r * n + st] += dhk * coef.value * xv;
                gdt += gabar * abar * av + gcoef * coef.d_delta;
                ga[k] += gabar * abar * dt + gcoef * coef.d_a;
                dh[k] = dhk * abar;
              }
              gx[r * d + ch] += gxv;
              gdelta[r * d + ch] += gdt;
            }
          }
        }

        std::vector<double> ga_log(width, 0.0), gskip(d, 0.0);
        for (std::size_t s = 0; s < n_seq; ++s) {
          for (std::size_t k = 0; k < width; ++k) ga_log[k] += ga_part[s * width + k];
          for (std::size_t ch = 0; ch < d; ++ch) gskip[ch] += gskip_part[s * d + ch];
        }
        for (std::size_t k = 0; k < width; ++k) ga_log[k] *= a_mat[k];  // dA/da_log = A

        if (x.requires_grad()) x.accumulate_grad(gx);
        if (delta.requires_grad()) delta.accumulate_grad(gdelta);
        if (a_log.requires_grad()) a_log.accumulate_grad(ga_log);
        if (b.requires_grad()) b.accumulate_grad(gb);
        if (c.requires_grad()) c.accumulate_grad(gc);
        if (d_skip.requires_grad()) d_skip.accumulate_grad(gskip);
      });
  return result;
}

Tensor selective_ssm(const Tensor& x, const SelectiveSSMParams& params,
                     std::size_t seq_len, ScanMode mode) {
  const SelectiveProjections proj = selective_params(x, params);
  return selective_scan(x, proj.delta, params.a_log, proj.b, proj.c,
                        params.d_skip, seq_len, mode);
}

Tensor selective_ssm_reverse(const Tensor& x, const SelectiveSSMParams& params,
                             std::size_t seq_len, ScanMode mode) {
  return ops::reverse_blocks(
      selective_ssm(ops::reverse_blocks(x, seq_len), params, seq_len, mode),
      seq_len);
}

}  // namespace conmamba::ssm
