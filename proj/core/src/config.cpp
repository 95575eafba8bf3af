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

#include "conmamba/config.hpp"

#include <cmath>
#include <initializer_list>
#include <set>
#include <type_traits>

#include "config_json.hpp"
#include "conmamba/errors.hpp"

namespace conmamba {
namespace detail {

namespace {

// Seeds go through the size_t reader.
static_assert(std::is_same_v<std::uint64_t, std::size_t>);

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError("expected an object", path);
}

void reject_unknown(const Json& j, const std::string& path,
                    std::initializer_list<const char*> known) {
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) throw ConfigError("unknown field", join(path, item.key()));
  }
}

void read(const Json& j, const char* key, const std::string& path, std::size_t& out) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError("expected a non-negative integer", join(path, key));
  }
  out = v.get<std::size_t>();
}

void read(const Json& j, const char* key, const std::string& path, double& out) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if (!v.is_number()) throw ConfigError("expected a number", join(path, key));
  out = v.get<double>();
}

void read(const Json& j, const char* key, const std::string& path, bool& out) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError("expected true or false", join(path, key));
  out = v.get<bool>();
}

void read(const Json& j, const char* key, const std::string& path, std::string& out) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if (!v.is_string()) throw ConfigError("expected a string", join(path, key));
  out = v.get<std::string>();
}

}  // namespace

Json encoder_to_json(const EncoderConfig& c) {
  Json j;
  j["image_size"] = c.image_size;
  j["channels"] = c.channels;
  j["patch_size"] = c.patch_size;
  j["d_model"] = c.d_model;
  j["n_blocks"] = c.n_blocks;
  j["d_inner"] = c.d_inner;
  j["n_state"] = c.n_state;
  j["proj_dim"] = c.proj_dim;
  j["scan_mode"] = c.scan_mode == ssm::ScanMode::kParallel ? "parallel" : "sequential";
  return j;
}

void encoder_from_json(const Json& j, EncoderConfig& c, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path, {"image_size", "channels", "patch_size", "d_model", "n_blocks",
                           "d_inner", "n_state", "proj_dim", "scan_mode"});
  read(j, "image_size", path, c.image_size);
  read(j, "channels", path, c.channels);
  read(j, "patch_size", path, c.patch_size);
  read(j, "d_model", path, c.d_model);
  read(j, "n_blocks", path, c.n_blocks);
  read(j, "d_inner", path, c.d_inner);
  read(j, "n_state", path, c.n_state);
  read(j, "proj_dim", path, c.proj_dim);
  std::string mode = c.scan_mode == ssm::ScanMode::kParallel ? "parallel" : "sequential";
  read(j, "scan_mode", path, mode);
  if (mode == "parallel") {
    c.scan_mode = ssm::ScanMode::kParallel;
  } else if (mode == "sequential") {
    c.scan_mode = ssm::ScanMode::kSequential;
  } else {
    throw ConfigError("expected \"sequential\" or \"parallel\"", join(path, "scan_mode"));
  }
}

Json train_to_json(const TrainConfig& c) {
  Json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["optimizer"] = c.optimizer.kind == OptimizerKind::kSgd ? "sgd" : "adam";
  j["lr"] = c.optimizer.lr;
  j["beta1"] = c.optimizer.beta1;
  j["beta2"] = c.optimizer.beta2;
  j["adam_eps"] = c.optimizer.eps;
  if (c.uncertainty_lr < 0.0) {
    j["uncertainty_lr"] = nullptr;
  } else {
    j["uncertainty_lr"] = c.uncertainty_lr;
  }
  j["temperature"] = c.temperature;
  j["margin"] = c.margin;
  j["init_log_sigma_intra"] = c.init_log_sigma_intra;
  j["init_log_sigma_inter"] = c.init_log_sigma_inter;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["inter_loss_enabled"] = c.inter_loss_enabled;
  j["grad_clip"] = c.grad_clip;
  return j;
}

void train_from_json(const Json& j, TrainConfig& c, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path,
                 {"epochs", "batch_size", "optimizer", "lr", "beta1", "beta2", "adam_eps",
                  "uncertainty_lr", "temperature", "margin", "init_log_sigma_intra",
                  "init_log_sigma_inter", "checkpoint_interval", "inter_loss_enabled",
                  "grad_clip"});
  read(j, "epochs", path, c.epochs);
  read(j, "batch_size", path, c.batch_size);
  std::string kind = c.optimizer.kind == OptimizerKind::kSgd ? "sgd" : "adam";
  read(j, "optimizer", path, kind);
  if (kind == "sgd") {
    c.optimizer.kind = OptimizerKind::kSgd;
  } else if (kind == "adam") {
    c.optimizer.kind = OptimizerKind::kAdam;
  } else {
    throw ConfigError("expected \"sgd\" or \"adam\"", join(path, "optimizer"));
  }
  read(j, "lr", path, c.optimizer.lr);
  read(j, "beta1", path, c.optimizer.beta1);
  read(j, "beta2", path, c.optimizer.beta2);
  read(j, "adam_eps", path, c.optimizer.eps);
  if (j.contains("uncertainty_lr") && j.at("uncertainty_lr").is_null()) {
    c.uncertainty_lr = -1.0;
  } else {
    read(j, "uncertainty_lr", path, c.uncertainty_lr);
    if (j.contains("uncertainty_lr") && !(c.uncertainty_lr > 0.0)) {
      throw ConfigError("must be > 0 or null", join(path, "uncertainty_lr"));
    }
  }
  read(j, "temperature", path, c.temperature);
  read(j, "margin", path, c.margin);
  read(j, "init_log_sigma_intra", path, c.init_log_sigma_intra);
  read(j, "init_log_sigma_inter", path, c.init_log_sigma_inter);
  read(j, "checkpoint_interval", path, c.checkpoint_interval);
  read(j, "inter_loss_enabled", path, c.inter_loss_enabled);
  read(j, "grad_clip", path, c.grad_clip);
}

Json augmentation_to_json(const AugmentationSpec& c) {
  Json j;
  j["crop_scale"] = {c.crop_min, c.crop_max};
  j["flip_prob"] = c.flip_prob;
  j["brightness"] = c.brightness;
  j["contrast"] = c.contrast;
  j["noise_sigma"] = c.noise_sigma;
  Json rot = Json::array();
  for (int k : c.quarter_turns) rot.push_back(90 * k);
  j["rotations"] = rot;
  return j;
}

void augmentation_from_json(const Json& j, AugmentationSpec& c, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path,
                 {"crop_scale", "flip_prob", "brightness", "contrast", "noise_sigma", "rotations"});
  if (j.contains("crop_scale")) {
    const Json& v = j.at("crop_scale");
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ConfigError("expected [min, max]", join(path, "crop_scale"));
    }
    c.crop_min = v[0].get<double>();
    c.crop_max = v[1].get<double>();
  }
  read(j, "flip_prob", path, c.flip_prob);
  read(j, "brightness", path, c.brightness);
  read(j, "contrast", path, c.contrast);
  read(j, "noise_sigma", path, c.noise_sigma);
  if (j.contains("rotations")) {
    const Json& v = j.at("rotations");
    if (!v.is_array()) throw ConfigError("expected a list of degrees", join(path, "rotations"));
    c.quarter_turns.clear();
    for (const Json& d : v) {
      if (!d.is_number_integer() || d.get<long long>() % 90 != 0) {
        throw ConfigError("rotations must be multiples of 90 degrees", join(path, "rotations"));
      }
      c.quarter_turns.push_back(static_cast<int>(d.get<long long>() / 90));
    }
  }
}

Json probe_to_json(const ProbeConfig& c) {
  Json j;
  j["steps"] = c.steps;
  j["lr"] = c.lr;
  return j;
}

void probe_from_json(const Json& j, ProbeConfig& c, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path, {"steps", "lr"});
  read(j, "steps", path, c.steps);
  read(j, "lr", path, c.lr);
}

Json data_to_json(const DataConfig& c) {
  Json j;
  j["source"] = c.source;
  j["root"] = c.root;
  j["n_classes"] = c.n_classes;
  j["per_class"] = c.per_class;
  j["train_fraction"] = c.train_fraction;
  return j;
}

void data_from_json(const Json& j, DataConfig& c, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path, {"source", "root", "n_classes", "per_class", "train_fraction"});
  if (!j.contains("source")) throw ConfigError("missing required field", join(path, "source"));
  read(j, "source", path, c.source);
  read(j, "root", path, c.root);
  if (c.source == "folder" && !j.contains("root")) {
    throw ConfigError("missing required field", join(path, "root"));
  }
  read(j, "n_classes", path, c.n_classes);
  read(j, "per_class", path, c.per_class);
  read(j, "train_fraction", path, c.train_fraction);
}

}  // namespace detail

void RunConfig::validate() const {
  encoder.validate();
  train.validate();
  augmentation.validate();
  probe.validate();
  if (data.source != "synthetic" && data.source != "folder") {
    throw ConfigError("expected \"synthetic\" or \"folder\"", "data.source");
  }
  if (data.source == "folder" && data.root.empty()) {
    throw ConfigError("must name a directory", "data.root");
  }
  if (data.source == "synthetic") {
    if (data.n_classes < 2) throw ConfigError("must be >= 2", "data.n_classes");
    if (data.per_class < 1) throw ConfigError("must be >= 1", "data.per_class");
  }
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
    throw ConfigError("must lie in (0, 1)", "data.train_fraction");
  }
}

RunConfig parse_run_config(const std::string& json_text) {
  detail::Json j;
  try {
    j = detail::Json::parse(json_text);
  } catch (const detail::Json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what(), "<config>");
  }
  detail::require_object(j, "<config>");
  detail::reject_unknown(j, "",
                         {"seed", "threads", "encoder", "train", "augmentation", "probe", "data"});
  RunConfig c;
  detail::read(j, "seed", "", c.train.seed);
  detail::read(j, "threads", "", c.threads);
  if (j.contains("encoder")) detail::encoder_from_json(j["encoder"], c.encoder, "encoder");
  if (j.contains("train")) detail::train_from_json(j["train"], c.train, "train");
  if (j.contains("augmentation")) {
    detail::augmentation_from_json(j["augmentation"], c.augmentation, "augmentation");
  }
  if (j.contains("probe")) detail::probe_from_json(j["probe"], c.probe, "probe");
  if (j.contains("data")) detail::data_from_json(j["data"], c.data, "data");
  c.validate();
  return c;
}

std::string to_json(const RunConfig& c) {
  detail::Json j;
  j["seed"] = c.train.seed;
  j["threads"] = c.threads;
  j["encoder"] = detail::encoder_to_json(c.encoder);
  j["train"] = detail::train_to_json(c.train);
  j["augmentation"] = detail::augmentation_to_json(c.augmentation);
  j["probe"] = detail::probe_to_json(c.probe);
  j["data"] = detail::data_to_json(c.data);
  return j.dump(2) + "\n";
}

}  // namespace conmamba
