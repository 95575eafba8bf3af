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

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "conmamba/checkpoint.hpp"
#include "conmamba/errors.hpp"
#include "conmamba/gradcheck_suite.hpp"
#include "conmamba/metrics.hpp"
#include "conmamba/parallel.hpp"
#include "conmamba/probe.hpp"
#include "conmamba/random.hpp"
#include "conmamba/ssm.hpp"
#include "conmamba/train.hpp"

namespace conmamba::cli {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<double> tau;
  std::optional<double> margin;
  bool no_inter_loss = false;
  std::optional<int> threads;
  std::string data;
  std::string run;
  std::string resume;
  // gradcheck
  bool inject_fault = false;
  double eps = 1e-4;
  // bench-scan
  std::vector<std::size_t> lengths{1024, 2048, 4096, 8192, 16384};
  std::size_t repeats = 15;
  std::size_t d_inner = 8;
  std::size_t n_state = 8;
};

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

RunConfig resolve_config(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : parse_run_config(read_text(f.config));
  if (f.seed) c.train.seed = *f.seed;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.batch_size) c.train.batch_size = *f.batch_size;
  if (f.lr) c.train.optimizer.lr = *f.lr;
  if (f.tau) c.train.temperature = *f.tau;
  if (f.margin) c.train.margin = *f.margin;
  if (f.no_inter_loss) c.train.inter_loss_enabled = false;
  if (!f.data.empty()) {
    c.data.source = "folder";
    c.data.root = f.data;
  }
  c.validate();
  return c;
}

void apply_threads(const RunConfig& c, const Flags& f) {
  int n = 0;
  if (f.threads) {
    if (*f.threads < 1) throw ConfigError("must be >= 1", "device_threads");
    n = *f.threads;
  } else {
    n = threads_from_env(static_cast<int>(c.threads));
  }
  if (n > 0) set_num_threads(n);
}

fs::path prepare_out(const Flags& f, const RunConfig& c, const fs::path& fallback = {}) {
  fs::path out = f.out;
  if (out.empty()) out = fallback;
  if (out.empty()) out = fs::path("runs") / (timestamp() + "-seed" + std::to_string(c.train.seed));
  fs::create_directories(out);
  write_text(out / kConfigFile, to_json(c));
  return out;
}

fs::path require_file(const fs::path& path, const char* what) {
  if (!fs::exists(path)) {
    throw IoError("missing " + std::string(what) + ": " + path.string());
  }
  return path;
}

RunConfig run_config_of(const fs::path& run) {
  if (run.empty()) throw ConfigError("a run directory is required", "run");
  return parse_run_config(read_text(require_file(run / kConfigFile, "run config")));
}

int cmd_synth(const Flags& f, std::ostream& err) {
  RunConfig c = resolve_config(f);
  if (c.data.source != "synthetic") {
    throw ConfigError("synth needs a synthetic data source", "data.source");
  }
  const fs::path out = prepare_out(f, c);
  const fs::path dataset_dir = out / "dataset";
  Dataset d = load_dataset(c);
  write_folder_dataset(d, dataset_dir);
  err << "wrote " << d.images.size() << " images in " << d.manifest.num_classes()
      << " classes to " << dataset_dir.string() << "\n";
  return kExitOk;
}

int cmd_pretrain(const Flags& f, std::ostream& err) {
  RunConfig c = resolve_config(f);
  apply_threads(c, f);
  const fs::path out = prepare_out(f, c);
  const Dataset d = load_dataset(c);
  const LabeledImages train = d.subset(Split::kTrain);

  TrainState state;
  if (!f.resume.empty()) {
    state = load_checkpoint(require_file(f.resume, "checkpoint"));
    // Everything else comes from the checkpoint; the epoch budget may grow.
    state.train_config.epochs = c.train.epochs;
    err << "resuming from step " << state.step << " (epoch " << state.epoch << ")\n";
  } else {
    state = initial_train_state(c.train, c.encoder, c.augmentation);
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t interval = c.train.checkpoint_interval;
  const fs::path ckpt = out / kCheckpointFile;
  std::size_t last_epoch = state.epoch;
  state = pretrain(std::move(state), train, [&](const TrainState& s, const LossRecord& r) {
    if (interval > 0 && s.step % interval == 0) save_checkpoint(s, ckpt);
    if (s.epoch != last_epoch || s.epoch >= s.train_config.epochs) {
      last_epoch = s.epoch;
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      char buf[200];
      std::snprintf(buf, sizeof buf,
                    "epoch %zu/%zu step %zu l_intra %.4f l_inter %.4f sigma %.3f/%.3f "
                    "l_total %.4f (%.1fs)\n",
                    r.epoch + 1, s.train_config.epochs, r.step + 1, r.l_intra, r.l_inter,
                    r.sigma_intra, r.sigma_inter, r.l_total, secs);
      err << buf;
    }
  });
  save_checkpoint(state, ckpt);
  write_loss_history(state.history, out / kLossFile);
  err << "wrote " << ckpt.string() << " and " << (out / kLossFile).string() << "\n";
  return kExitOk;
}

int cmd_probe(const Flags& f, std::ostream& err) {
  const fs::path run = f.run;
  RunConfig c = run_config_of(run);
  apply_threads(c, f);
  const TrainState state = load_checkpoint(require_file(run / kCheckpointFile, "checkpoint"));
  const fs::path out = f.out.empty() ? run : prepare_out(f, c);
  const Dataset d = load_dataset(c);
  const LabeledImages train = d.subset(Split::kTrain);
  ProbeHead head = train_probe(state.encoder_config, state.weights, train,
                               d.manifest.num_classes(), c.probe);
  save_probe_head(head, d.manifest.class_names, out / kProbeFile);
  err << "wrote " << (out / kProbeFile).string() << "\n";
  return kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& err) {
  const fs::path run = f.run;
  RunConfig c = run_config_of(run);
  apply_threads(c, f);
  const TrainState state = load_checkpoint(require_file(run / kCheckpointFile, "checkpoint"));
  std::vector<std::string> names;
  const ProbeHead head = load_probe_head(require_file(run / kProbeFile, "checkpoint"), &names);
  const fs::path out = f.out.empty() ? run : prepare_out(f, c);
  const Dataset d = load_dataset(c);
  const LabeledImages test = d.subset(Split::kTest);
  const MetricsReport report = evaluate(head, state.encoder_config, state.weights, test);
  write_text(out / kMetricsFile, report.to_json());
  write_text(out / kMetricsTableFile, report.to_table(names));
  err << report.to_table(names);
  return kExitOk;
}

int cmd_embed(const Flags& f, std::ostream& err) {
  const fs::path run = f.run;
  RunConfig c = run_config_of(run);
  apply_threads(c, f);
  const TrainState state = load_checkpoint(require_file(run / kCheckpointFile, "checkpoint"));
  const fs::path out = f.out.empty() ? run : prepare_out(f, c);
  const Dataset d = load_dataset(c);
  export_embeddings(state.encoder_config, state.weights, d.all(), out / kEmbeddingsFile);
  err << "wrote " << (out / kEmbeddingsFile).string() << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Flags& f, std::ostream& out, std::ostream& err) {
  GradCheckSuiteOptions o;
  if (f.seed) o.seed = *f.seed;
  o.eps = f.eps;
  o.inject_fault = f.inject_fault;
  const GradCheckReport report = run_gradcheck_suite(o);
  out << report.to_text();
  if (!report.passed()) {
    std::string list;
    for (const auto& name : report.failures()) list += (list.empty() ? "" : ",") + name;
    err << "error: gradcheck: threshold exceeded by " << list << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_bench_scan(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.threads) set_num_threads(*f.threads);
  const auto rows =
      bench_scan(f.lengths, f.repeats, f.d_inner, f.n_state, f.seed.value_or(0));
  const std::string csv = bench_scan_csv(rows);
  if (f.out.empty()) {
    out << csv;
  } else {
    write_text(f.out, csv);
    err << "wrote " << f.out << "\n";
  }
  return kExitOk;
}

void add_run_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "global seed");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--device-threads", f.threads, "worker threads (else CONMAMBA_THREADS)");
}

}  // namespace

Dataset load_dataset(const RunConfig& c) {
  if (c.data.source == "synthetic") {
    SyntheticSpec s;
    s.n_classes = c.data.n_classes;
    s.per_class = c.data.per_class;
    s.image_size = c.encoder.image_size;
    s.channels = c.encoder.channels;
    s.seed = c.train.seed;
    s.train_fraction = c.data.train_fraction;
    return generate_synthetic(s);
  }
  return load_folder_dataset(c.data.root, c.encoder.image_size, c.encoder.channels,
                             c.data.train_fraction, c.train.seed);
}

std::vector<ScanBenchRow> bench_scan(const std::vector<std::size_t>& lengths, std::size_t repeats,
                                     std::size_t d_inner, std::size_t n_state,
                                     std::uint64_t seed) {
  if (repeats == 0) throw ConfigError("must be >= 1", "repeats");
  if (lengths.empty()) throw ConfigError("at least one length is required", "lengths");
  if (d_inner == 0 || n_state == 0) throw ConfigError("must be >= 1", "d_inner/n_state");
  struct Inputs {
    Tensor a, delta, b, c, x, d_skip;
  };
  std::vector<Inputs> inputs;
  std::vector<ScanBenchRow> rows;
  for (std::size_t len : lengths) {
    if (len == 0) throw ConfigError("lengths must be >= 1", "lengths");
    Rng rng(derive_seed({seed, len}));
    auto random = [&](Shape s, double lo, double hi) {
      std::vector<double> v(shape_numel(s));
      for (double& x : v) x = uniform(rng, lo, hi);
      return Tensor(std::move(s), std::move(v));
    };
    Inputs in;
    in.a = random({d_inner, n_state}, -2.0, -0.1);
    in.delta = random({len, d_inner}, 0.01, 0.2);
    in.b = random({len, n_state}, -1.0, 1.0);
    in.c = random({len, n_state}, -1.0, 1.0);
    in.x = random({len, d_inner}, -1.0, 1.0);
    in.d_skip = random({d_inner}, -1.0, 1.0);
    inputs.push_back(std::move(in));
    ScanBenchRow row;
    row.length = len;
    row.sequential_ns = row.parallel_ns = std::numeric_limits<double>::infinity();
    rows.push_back(row);
  }
  // Rounds visit every length in turn, so slow drifts in machine speed hit
  // all lengths alike. Both timings start from the continuous inputs.
  using Clock = std::chrono::steady_clock;
  for (std::size_t r = 0; r < repeats; ++r) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Inputs& in = inputs[i];
      const auto t0 = Clock::now();
      const Tensor ys = ssm::scan_sequential(in.a, in.delta, in.b, in.c, in.x, in.d_skip);
      const auto t1 = Clock::now();
      const Tensor yp = ssm::scan_parallel(ssm::discretize_sequence(in.a, in.delta, in.b, in.x),
                                           in.c, in.x, in.d_skip);
      const auto t2 = Clock::now();
      ScanBenchRow& row = rows[i];
      row.sequential_ns =
          std::min(row.sequential_ns, std::chrono::duration<double, std::nano>(t1 - t0).count());
      row.parallel_ns =
          std::min(row.parallel_ns, std::chrono::duration<double, std::nano>(t2 - t1).count());
      for (std::size_t k = 0; k < ys.numel(); ++k) {
        row.max_abs_diff = std::max(row.max_abs_diff, std::abs(ys[k] - yp[k]));
      }
    }
  }
  return rows;
}

std::string bench_scan_csv(const std::vector<ScanBenchRow>& rows) {
  std::ostringstream s;
  s << "L,sequential_ns,parallel_ns,max_abs_diff\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.0f,%.0f,%.3e\n", r.length, r.sequential_ns,
                  r.parallel_ns, r.max_abs_diff);
    s << buf;
  }
  return s.str();
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"conmamba: contrastive bidirectional state-space image encoder", "conmamba"};
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset as PNG folders");
  add_run_flags(synth, f);

  auto* pretrain_cmd = app.add_subcommand("pretrain", "contrastive pretraining");
  add_run_flags(pretrain_cmd, f);
  pretrain_cmd->add_option("--epochs", f.epochs, "pretraining epochs");
  pretrain_cmd->add_option("--batch-size", f.batch_size, "images per batch");
  pretrain_cmd->add_option("--lr", f.lr, "learning rate");
  pretrain_cmd->add_option("--tau", f.tau, "NT-Xent temperature");
  pretrain_cmd->add_option("--margin", f.margin, "inter-class hinge margin");
  pretrain_cmd->add_flag("--no-inter-loss", f.no_inter_loss, "train on the intra loss only");
  pretrain_cmd->add_option("--data", f.data, "class-per-directory PNG dataset")
      ->check(CLI::ExistingDirectory);
  pretrain_cmd->add_option("--resume", f.resume, "checkpoint to continue from");

  for (auto [name, help] : {std::pair{"probe", "train the linear probe on frozen features"},
                            std::pair{"eval", "evaluate the probe on the test split"},
                            std::pair{"embed", "export pre-projection embeddings as CSV"}}) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--run", f.run, "pretraining run directory")->required();
    sub->add_option("--out", f.out, "output directory (default: the run directory)");
    sub->add_option("--device-threads", f.threads, "worker threads (else CONMAMBA_THREADS)");
  }

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--seed", f.seed, "seed for the random test inputs");
  gradcheck->add_option("--eps", f.eps, "finite-difference step");
  gradcheck->add_flag("--inject-fault", f.inject_fault,
                      "register an op with a wrong backward rule (harness self-test)");

  auto* bench = app.add_subcommand("bench-scan", "sequential vs parallel scan timing");
  bench->add_option("--lengths", f.lengths, "sequence lengths")->delimiter(',');
  bench->add_option("--repeats", f.repeats, "timed repetitions per length");
  bench->add_option("--d-inner", f.d_inner, "channels");
  bench->add_option("--n-state", f.n_state, "state size per channel");
  bench->add_option("--seed", f.seed, "seed for the random inputs");
  bench->add_option("--out", f.out, "CSV path (default: stdout)");
  bench->add_option("--device-threads", f.threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    for (auto* sub : app.get_subcommands()) out << sub->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return kExitConfig;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") return cmd_synth(f, err);
    if (cmd == "pretrain") return cmd_pretrain(f, err);
    if (cmd == "probe") return cmd_probe(f, err);
    if (cmd == "eval") return cmd_eval(f, err);
    if (cmd == "embed") return cmd_embed(f, err);
    if (cmd == "gradcheck") return cmd_gradcheck(f, out, err);
    if (cmd == "bench-scan") return cmd_bench_scan(f, out, err);
  } catch (const ConfigError& e) {
    std::string message = e.what();
    const std::string prefix = e.field() + ": ";
    if (!e.field().empty() && message.rfind(prefix, 0) == 0) message.erase(0, prefix.size());
    err << "error: config: field=" << (e.field().empty() ? "<unknown>" : e.field()) << ": "
        << one_line(message) << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: runtime: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace conmamba::cli
