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

#include "conmamba/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "config_json.hpp"
#include "conmamba/errors.hpp"

namespace conmamba {

namespace {

using detail::Json;

constexpr std::array<char, 8> kMagic{'C', 'M', 'B', 'A', 'C', 'K', 'P', 'T'};
constexpr const char* kFormat = "conmamba-checkpoint";
constexpr std::size_t kHistoryCols = 7;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& what) {
  throw CheckpointError("checkpoint '" + path.string() + "': " + what);
}

}  // namespace

const Tensor& TensorArchive::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

void write_archive(const TensorArchive& archive, const std::filesystem::path& path) {
  Json header;
  header["format"] = kFormat;
  header["version"] = kCheckpointVersion;
  header["kind"] = archive.kind;
  header["meta"] = Json::parse(archive.meta_json);
  Json dir = Json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    const std::uint64_t length = t.numel() * 8;
    dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"length", length}});
    offset += length;
  }
  header["tensors"] = dir;
  header["payload_bytes"] = offset;
  const std::string text = header.dump();

  std::string bytes(kMagic.begin(), kMagic.end());
  put_u64(bytes, text.size());
  bytes += text;
  bytes.reserve(bytes.size() + offset);
  for (const auto& entry : archive.tensors) {
    for (double v : entry.second.data()) put_u64(bytes, std::bit_cast<std::uint64_t>(v));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint '" + path.string() + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for checkpoint '" + path.string() + "'");
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 16 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    corrupt(path, "not a checkpoint file (bad magic)");
  }
  const std::uint64_t header_len = get_u64(raw + 8);
  if (header_len > bytes.size() - 16) corrupt(path, "truncated header");
  Json header;
  try {
    header = Json::parse(bytes.substr(16, header_len));
  } catch (const Json::exception& e) {
    corrupt(path, std::string("malformed header: ") + e.what());
  }
  try {
    if (header.at("format") != kFormat) corrupt(path, "unknown format");
    const Json& version = header.at("version");
    if (!version.is_number_unsigned() || version.get<std::uint64_t>() != kCheckpointVersion) {
      corrupt(path, "incompatible format version " + version.dump() + " (this build reads " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint64_t payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
    const std::uint64_t available = bytes.size() - 16 - header_len;
    if (available < payload_bytes) {
      corrupt(path, "truncated payload: " + std::to_string(available) + " of " +
                        std::to_string(payload_bytes) + " bytes present");
    }
    if (available > payload_bytes) corrupt(path, "trailing bytes after payload");
    const unsigned char* payload = raw + 16 + header_len;

    TensorArchive archive;
    archive.kind = header.at("kind").get<std::string>();
    archive.meta_json = header.at("meta").dump();
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
    for (const Json& e : header.at("tensors")) {
      const std::string name = e.at("name").get<std::string>();
      const Shape shape = e.at("shape").get<Shape>();
      const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
      const std::uint64_t length = e.at("length").get<std::uint64_t>();
      if (length != shape_numel(shape) * 8) {
        corrupt(path, "tensor '" + name + "' length does not match its shape");
      }
      if (offset % 8 != 0 || offset > payload_bytes || length > payload_bytes - offset) {
        corrupt(path, "tensor '" + name + "' lies outside the payload");
      }
      ranges.emplace_back(offset, length);
      std::vector<double> values(shape_numel(shape));
      for (std::size_t k = 0; k < values.size(); ++k) {
        values[k] = std::bit_cast<double>(get_u64(payload + offset + 8 * k));
      }
      archive.tensors.emplace_back(name, Tensor(shape, std::move(values)));
    }
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i) {
      if (ranges[i - 1].first + ranges[i - 1].second > ranges[i].first) {
        corrupt(path, "overlapping tensor ranges");
      }
    }
    return archive;
  } catch (const Json::exception& e) {
    corrupt(path, std::string("malformed header: ") + e.what());
  }
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  TensorArchive a;
  a.kind = "train_state";
  Json meta;
  meta["step"] = state.step;
  meta["epoch"] = state.epoch;
  meta["batch_in_epoch"] = state.batch_in_epoch;
  meta["seed"] = state.seed;
  meta["optimizer_steps"] = state.optimizer.steps;
  meta["encoder"] = detail::encoder_to_json(state.encoder_config);
  meta["train"] = detail::train_to_json(state.train_config);
  meta["augmentation"] = detail::augmentation_to_json(state.augmentation);
  a.meta_json = meta.dump();

  const auto named = state.weights.named_tensors();
  for (const auto& [name, t] : named) a.tensors.emplace_back("enc/" + name, t);
  a.tensors.emplace_back("unc/log_sigma_intra", state.uncertainty.log_sigma_intra);
  a.tensors.emplace_back("unc/log_sigma_inter", state.uncertainty.log_sigma_inter);
  const auto& m = state.optimizer.first_moment;
  const auto& v = state.optimizer.second_moment;
  if (!m.empty()) {
    if (m.size() != named.size() || v.size() != named.size()) {
      throw ContractError("optimizer moments do not match the encoder weights");
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
      a.tensors.emplace_back("opt/m/" + named[i].first, Tensor(named[i].second.shape(), m[i]));
      a.tensors.emplace_back("opt/v/" + named[i].first, Tensor(named[i].second.shape(), v[i]));
    }
  }
  std::vector<double> hist;
  hist.reserve(state.history.size() * kHistoryCols);
  for (const LossRecord& r : state.history) {
    hist.insert(hist.end(), {static_cast<double>(r.step), static_cast<double>(r.epoch), r.l_intra,
                             r.l_inter, r.sigma_intra, r.sigma_inter, r.l_total});
  }
  a.tensors.emplace_back("history", Tensor({state.history.size(), kHistoryCols}, std::move(hist)));
  write_archive(a, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const TensorArchive a = read_archive(path);
  if (a.kind != "train_state") corrupt(path, "holds a '" + a.kind + "', not a training state");
  TrainState s;
  try {
    const Json meta = Json::parse(a.meta_json);
    s.step = meta.at("step").get<std::size_t>();
    s.epoch = meta.at("epoch").get<std::size_t>();
    s.batch_in_epoch = meta.at("batch_in_epoch").get<std::size_t>();
    s.seed = meta.at("seed").get<std::uint64_t>();
    s.optimizer.steps = meta.at("optimizer_steps").get<std::size_t>();
    detail::encoder_from_json(meta.at("encoder"), s.encoder_config, "encoder");
    detail::train_from_json(meta.at("train"), s.train_config, "train");
    detail::augmentation_from_json(meta.at("augmentation"), s.augmentation, "augmentation");
  } catch (const Json::exception& e) {
    corrupt(path, std::string("malformed metadata: ") + e.what());
  } catch (const ConfigError& e) {
    corrupt(path, std::string("bad config echo: ") + e.what());
  }

  auto fill = [&](const std::string& name, Tensor& dst) {
    const Tensor& src = a.get(name);
    if (src.shape() != dst.shape()) {
      corrupt(path, "tensor '" + name + "' has shape " + shape_string(src.shape()) +
                        ", the configured model expects " + shape_string(dst.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
  };

  s.weights = EncoderWeights::initialize(s.encoder_config, 0);
  const auto named = s.weights.named_tensors();
  for (auto [name, t] : named) fill("enc/" + name, t);
  s.uncertainty = losses::UncertaintyParams::initialize();
  fill("unc/log_sigma_intra", s.uncertainty.log_sigma_intra);
  fill("unc/log_sigma_inter", s.uncertainty.log_sigma_inter);

  const bool has_moments = std::any_of(a.tensors.begin(), a.tensors.end(), [](const auto& e) {
    return e.first.rfind("opt/", 0) == 0;
  });
  if (has_moments) {
    for (const auto& [name, t] : named) {
      const Tensor& m = a.get("opt/m/" + name);
      const Tensor& v = a.get("opt/v/" + name);
      if (m.shape() != t.shape() || v.shape() != t.shape()) {
        corrupt(path, "optimizer moments for '" + name + "' have the wrong shape");
      }
      s.optimizer.first_moment.emplace_back(m.data().begin(), m.data().end());
      s.optimizer.second_moment.emplace_back(v.data().begin(), v.data().end());
    }
  }

  const Tensor& hist = a.get("history");
  if (hist.rank() != 2 || hist.dim(1) != kHistoryCols) corrupt(path, "malformed loss history");
  for (std::size_t i = 0; i < hist.dim(0); ++i) {
    LossRecord r;
    r.step = static_cast<std::size_t>(hist.at(i, 0));
    r.epoch = static_cast<std::size_t>(hist.at(i, 1));
    r.l_intra = hist.at(i, 2);
    r.l_inter = hist.at(i, 3);
    r.sigma_intra = hist.at(i, 4);
    r.sigma_inter = hist.at(i, 5);
    r.l_total = hist.at(i, 6);
    s.history.push_back(r);
  }
  s.train_config.seed = s.seed;
  return s;
}

void save_probe_head(const ProbeHead& head, const std::vector<std::string>& class_names,
                     const std::filesystem::path& path) {
  TensorArchive a;
  a.kind = "probe_head";
  Json meta;
  meta["n_classes"] = head.num_classes();
  meta["dim"] = head.dim();
  meta["class_names"] = class_names;
  a.meta_json = meta.dump();
  a.tensors.emplace_back("weight", head.weight);
  a.tensors.emplace_back("bias", head.bias);
  write_archive(a, path);
}

ProbeHead load_probe_head(const std::filesystem::path& path,
                          std::vector<std::string>* class_names) {
  const TensorArchive a = read_archive(path);
  if (a.kind != "probe_head") corrupt(path, "holds a '" + a.kind + "', not a probe head");
  ProbeHead head{a.get("weight").clone(), a.get("bias").clone()};
  if (head.weight.rank() != 2 || head.bias.rank() != 1 ||
      head.weight.dim(0) != head.bias.numel()) {
    corrupt(path, "probe head tensors have inconsistent shapes");
  }
  if (class_names) {
    try {
      *class_names = Json::parse(a.meta_json).at("class_names").get<std::vector<std::string>>();
    } catch (const Json::exception& e) {
      corrupt(path, std::string("malformed metadata: ") + e.what());
    }
  }
  return head;
}

}  // namespace conmamba
