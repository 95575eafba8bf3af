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

#pragma once

#include <stdexcept>
#include <string>

namespace conmamba {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes that do not agree, or an axis out of range.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value outside the mathematical domain of an operation (log of a
/// non-positive number, near-zero row in a normalization).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration. `field()` holds the dotted path of the offending
/// field when one is known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string field = {})
      : Error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// File-system or decode failure. The message always names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint that cannot be loaded: wrong version, truncated payload, or a
/// malformed tensor directory.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value detected during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace conmamba
