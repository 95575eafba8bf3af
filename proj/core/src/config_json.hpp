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

// JSON mapping of the config structs, shared by config.cpp and
// checkpoint.cpp. Not installed.

#pragma once

#include <json.hpp>

#include "conmamba/config.hpp"

namespace conmamba::detail {

using Json = nlohmann::ordered_json;

Json encoder_to_json(const EncoderConfig& c);
Json train_to_json(const TrainConfig& c);
Json augmentation_to_json(const AugmentationSpec& c);
Json probe_to_json(const ProbeConfig& c);
Json data_to_json(const DataConfig& c);

// Each reader starts from `into` and overwrites the fields present in `j`.
// `path` is the dotted prefix used in error messages.
void encoder_from_json(const Json& j, EncoderConfig& into, const std::string& path);
void train_from_json(const Json& j, TrainConfig& into, const std::string& path);
void augmentation_from_json(const Json& j, AugmentationSpec& into, const std::string& path);
void probe_from_json(const Json& j, ProbeConfig& into, const std::string& path);
void data_from_json(const Json& j, DataConfig& into, const std::string& path);

}  // namespace conmamba::detail
