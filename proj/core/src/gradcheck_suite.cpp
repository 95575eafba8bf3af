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

#include "conmamba/gradcheck_suite.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "conmamba/autodiff.hpp"
#include "conmamba/encoder.hpp"
#include "conmamba/losses.hpp"
#include "conmamba/ops.hpp"
#include "conmamba/random.hpp"
#include "conmamba/ssm.hpp"

namespace conmamba {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = uniform(rng, lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Reduces an arbitrary output to a scalar with fixed random weights so every
// output element carries its own upstream gradient.
Tensor contract(const Tensor& out, std::uint64_t seed) {
  Rng rng(derive_seed({seed, 0xc0}));
  return ops::sum(ops::mul(out, random_tensor(out.shape(), rng)));
}

using Builder = std::function<Tensor(const std::vector<Tensor>&)>;

// One case: draws inputs from `make_inputs`, then grad-checks
// contract(build(inputs)) against every input.
GradCheckCase op_case(std::string name, std::function<std::vector<Tensor>(Rng&)> make_inputs,
                      Builder build, bool composite = false) {
  GradCheckCase c;
  c.name = name;
  c.composite = composite;
  c.run = [name, make_inputs, build](const GradCheckSuiteOptions& o) {
    Rng rng(derive_seed({o.seed, std::hash<std::string>{}(name)}));
    std::vector<Tensor> inputs = make_inputs(rng);
    const std::uint64_t wseed = derive_seed({o.seed, 0x77});
    auto f = [&] {
      Tensor out = build(inputs);
      return out.numel() == 1 && out.rank() == 0 ? out : contract(out, wseed);
    };
    return grad_check(f, inputs, o.eps);
  };
  return c;
}

auto shapes(std::vector<Shape> list, double lo = -1.0, double hi = 1.0) {
  return [list, lo, hi](Rng& rng) {
    std::vector<Tensor> out;
    for (const Shape& s : list) out.push_back(random_tensor(s, rng, lo, hi));
    return out;
  };
}

GradCheckCase unary(std::string name, Tensor (*fn)(const Tensor&), double lo = -1.5,
                    double hi = 1.5) {
  return op_case(std::move(name), shapes({{3, 4}}, lo, hi),
                 [fn](const std::vector<Tensor>& in) { return fn(in[0]); });
}

// x³ with the backward rule of x²; only registered on request.
Tensor faulty_cube(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] * x[i] * x[i];
  Tensor out(x.shape(), std::move(v));
  Tensor in = x;
  record_op("faulty_cube", {x}, out, [in](std::span<const double> g) mutable {
    std::vector<double> gx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = 2.0 * in[i] * g[i];
    in.accumulate_grad(gx);
  });
  return out;
}

struct Micro {
  EncoderConfig cfg;
  EncoderWeights weights;
  std::vector<Tensor> images;
  losses::UncertaintyParams u;
};

Micro micro_setup(std::uint64_t seed) {
  Micro m;
  m.cfg.image_size = 16;
  m.cfg.channels = 3;
  m.cfg.patch_size = 4;
  m.cfg.d_model = 8;
  m.cfg.n_blocks = 1;
  m.cfg.d_inner = 12;
  m.cfg.n_state = 4;
  m.cfg.proj_dim = 6;
  m.weights = EncoderWeights::initialize(m.cfg, seed);
  Rng rng(derive_seed({seed, 0x1a}));
  // Non-zero position embeddings so their gradient path is exercised.
  for (double& v : m.weights.pos.mutable_data()) v = uniform(rng, -0.1, 0.1);
  for (int i = 0; i < 4; ++i) m.images.push_back(random_tensor({3, 16, 16}, rng, 0.0, 1.0));
  m.u = losses::UncertaintyParams::initialize(0.1, -0.2);
  return m;
}

Tensor micro_loss(const Micro& m) {
  BatchEmbedding e = encode_batch(m.images, m.cfg, m.weights);
  losses::ContrastiveBatch b{ops::slice_rows(e.z, 0, 2), ops::slice_rows(e.z, 2, 4), {0, 1},
                             0.5, 0.5};
  return losses::total_loss(losses::intra_loss(b), losses::inter_loss(b).loss, m.u);
}

}  // namespace

std::vector<GradCheckCase> gradcheck_cases(const GradCheckSuiteOptions& options) {
  using V = std::vector<Tensor>;
  std::vector<GradCheckCase> cases;
  cases.push_back(op_case("matmul", shapes({{3, 4}, {4, 2}}),
                          [](const V& in) { return ops::matmul(in[0], in[1]); }));
  cases.push_back(op_case("add", shapes({{3, 4}, {3, 4}}),
                          [](const V& in) { return ops::add(in[0], in[1]); }));
  cases.push_back(op_case("add.broadcast", shapes({{3, 4}, {1}}),
                          [](const V& in) { return ops::add(in[0], in[1]); }));
  cases.push_back(op_case("sub", shapes({{3, 4}, {3, 4}}),
                          [](const V& in) { return ops::sub(in[0], in[1]); }));
  cases.push_back(op_case("mul", shapes({{3, 4}, {3, 4}}),
                          [](const V& in) { return ops::mul(in[0], in[1]); }));
  cases.push_back(op_case("mul.broadcast", shapes({{}, {3, 4}}),
                          [](const V& in) { return ops::mul(in[0], in[1]); }));
  cases.push_back(op_case("div", shapes({{3, 4}, {3, 4}}, 0.5, 2.0),
                          [](const V& in) { return ops::div(in[0], in[1]); }));
  cases.push_back(op_case("scale", shapes({{3, 4}}),
                          [](const V& in) { return ops::scale(in[0], -1.7); }));
  cases.push_back(op_case("add_scalar", shapes({{3, 4}}),
                          [](const V& in) { return ops::add_scalar(in[0], 0.3); }));
  cases.push_back(unary("neg", &ops::neg));
  cases.push_back(unary("exp", &ops::exp));
  cases.push_back(unary("log", &ops::log, 0.3, 2.0));
  cases.push_back(unary("softplus", &ops::softplus, -3.0, 3.0));
  cases.push_back(unary("sigmoid", &ops::sigmoid, -3.0, 3.0));
  cases.push_back(unary("tanh", &ops::tanh));
  cases.push_back(unary("silu", &ops::silu, -3.0, 3.0));
  cases.push_back(unary("square", &ops::square));
  cases.push_back(op_case("sum", shapes({{3, 4}}),
                          [](const V& in) { return ops::square(ops::sum(in[0])); }));
  cases.push_back(op_case("sum.axis0", shapes({{3, 4}}),
                          [](const V& in) { return ops::sum(in[0], 0); }));
  cases.push_back(op_case("sum.axis1", shapes({{3, 4}}),
                          [](const V& in) { return ops::sum(in[0], 1); }));
  cases.push_back(op_case("mean", shapes({{3, 4}}),
                          [](const V& in) { return ops::square(ops::mean(in[0])); }));
  cases.push_back(op_case("mean.axis0", shapes({{3, 4}}),
                          [](const V& in) { return ops::mean(in[0], 0); }));
  cases.push_back(op_case("mean.axis1", shapes({{3, 4}}),
                          [](const V& in) { return ops::mean(in[0], 1); }));
  cases.push_back(op_case("max", shapes({{3, 4}}),
                          [](const V& in) { return ops::square(ops::max(in[0])); }));
  cases.push_back(op_case("max.axis0", shapes({{3, 4}}),
                          [](const V& in) { return ops::max(in[0], 0); }));
  cases.push_back(op_case("max.axis1", shapes({{3, 4}}),
                          [](const V& in) { return ops::max(in[0], 1); }));
  cases.push_back(op_case("l2_normalize.vector", shapes({{5}}),
                          [](const V& in) { return ops::l2_normalize(in[0]); }));
  cases.push_back(op_case("l2_normalize.rows", shapes({{3, 4}}),
                          [](const V& in) { return ops::l2_normalize(in[0]); }));
  cases.push_back(op_case("reshape", shapes({{3, 4}}),
                          [](const V& in) { return ops::reshape(in[0], {2, 6}); }));
  cases.push_back(op_case("transpose", shapes({{3, 4}}),
                          [](const V& in) { return ops::transpose(in[0]); }));
  cases.push_back(op_case("concat_rows", shapes({{2, 4}, {3, 4}}),
                          [](const V& in) { return ops::concat_rows(in[0], in[1]); }));
  cases.push_back(op_case("concat_cols", shapes({{3, 2}, {3, 4}}),
                          [](const V& in) { return ops::concat_cols(in[0], in[1]); }));
  cases.push_back(op_case("slice_rows", shapes({{5, 3}}),
                          [](const V& in) { return ops::slice_rows(in[0], 1, 4); }));
  cases.push_back(op_case("reverse_blocks", shapes({{6, 2}}),
                          [](const V& in) { return ops::reverse_blocks(in[0], 3); }));
  cases.push_back(op_case("add_tiled.vector", shapes({{4, 3}, {3}}),
                          [](const V& in) { return ops::add_tiled(in[0], in[1]); }));
  cases.push_back(op_case("add_tiled.matrix", shapes({{6, 3}, {2, 3}}),
                          [](const V& in) { return ops::add_tiled(in[0], in[1]); }));
  cases.push_back(op_case("linear", shapes({{3, 4}, {4, 5}, {5}}),
                          [](const V& in) { return ops::linear(in[0], in[1], in[2]); }));
  cases.push_back(op_case("rms_norm", shapes({{3, 4}, {4}}),
                          [](const V& in) { return ops::rms_norm(in[0], in[1]); }));
  cases.push_back(op_case("cross_entropy", shapes({{4, 3}}, -2.0, 2.0), [](const V& in) {
    static const int labels[] = {0, 2, 1, 2};
    return ops::cross_entropy(in[0], labels);
  }));

  // Fused scan: two sequences of five tokens, d = 3, n = 2.
  auto scan_inputs = [](Rng& rng) {
    return V{random_tensor({10, 3}, rng),            // x
             random_tensor({10, 3}, rng, 0.05, 0.8),  // delta
             random_tensor({3, 2}, rng, -0.5, 1.0),   // a_log
             random_tensor({10, 2}, rng),            // b
             random_tensor({10, 2}, rng),            // c
             random_tensor({3}, rng)};               // d_skip
  };
  for (auto mode : {ssm::ScanMode::kSequential, ssm::ScanMode::kParallel}) {
    const char* label = mode == ssm::ScanMode::kSequential ? "selective_scan.sequential"
                                                           : "selective_scan.parallel";
    cases.push_back(op_case(label, scan_inputs, [mode](const V& in) {
      return ssm::selective_scan(in[0], in[1], in[2], in[3], in[4], in[5], 5, mode);
    }));
  }

  cases.push_back(op_case("intra_loss", shapes({{4, 5}, {4, 5}}), [](const V& in) {
    losses::ContrastiveBatch b{ops::l2_normalize(in[0]), ops::l2_normalize(in[1]),
                               {0, 1, 0, 1}, 0.5, 0.5};
    return losses::intra_loss(b);
  }));
  cases.push_back(op_case("inter_loss", shapes({{4, 5}, {4, 5}}), [](const V& in) {
    losses::ContrastiveBatch b{ops::l2_normalize(in[0]), ops::l2_normalize(in[1]),
                               {0, 1, 0, 1}, 0.5, 0.5};
    return losses::inter_loss(b).loss;
  }));
  cases.push_back(op_case("total_loss", shapes({{}, {}, {}, {}}, 0.2, 2.0), [](const V& in) {
    losses::UncertaintyParams u{in[2], in[3]};
    return losses::total_loss(in[0], in[1], u);
  }));

  GradCheckCase micro;
  micro.name = "micro_encoder";
  micro.composite = true;
  micro.run = [](const GradCheckSuiteOptions& o) {
    Micro m = micro_setup(o.seed);
    std::vector<Tensor> params = m.weights.tensors();
    params.push_back(m.u.log_sigma_intra);
    params.push_back(m.u.log_sigma_inter);
    return grad_check([&] { return micro_loss(m); }, params, o.eps);
  };
  cases.push_back(std::move(micro));

  if (options.inject_fault) {
    cases.push_back(op_case("faulty_cube", shapes({{3, 4}}),
                            [](const V& in) { return faulty_cube(in[0]); }));
  }
  return cases;
}

bool GradCheckReport::passed() const {
  for (const auto& r : rows) {
    if (!r.passed) return false;
  }
  return true;
}

std::vector<std::string> GradCheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (!r.passed) out.push_back(r.name);
  }
  return out;
}

std::string GradCheckReport::to_text() const {
  std::size_t w = 9;
  for (const auto& r : rows) w = std::max(w, r.name.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %14s %10s %s\n", static_cast<int>(w), "component",
                "max_rel_err", "threshold", "status");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %14.3e %10.0e %s\n", static_cast<int>(w),
                  r.name.c_str(), r.max_rel_error, r.threshold, r.passed ? "PASS" : "FAIL");
    out << buf;
  }
  return out.str();
}

GradCheckReport run_gradcheck_suite(const GradCheckSuiteOptions& options,
                                    const std::function<void(const GradCheckRow&)>& on_row) {
  const auto start = std::chrono::steady_clock::now();
  GradCheckReport report;
  for (const GradCheckCase& c : gradcheck_cases(options)) {
    GradCheckRow row;
    row.name = c.name;
    row.threshold = c.composite ? options.model_threshold : options.op_threshold;
    row.max_rel_error = c.run(options).max_rel_error;
    row.passed = row.max_rel_error < row.threshold;
    if (on_row) on_row(row);
    report.rows.push_back(row);
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace conmamba
