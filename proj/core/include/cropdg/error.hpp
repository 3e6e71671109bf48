// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace cropdg {

enum class ErrorKind {
  argument,
  shape,
  config,
  manifest,
  integrity,
  lookup,
  numeric,
  divergence,
  io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Base of every error thrown by the library. The kind lets front ends map
/// failures onto exit codes without a catch clause per subclass.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define CROPDG_DEFINE_ERROR(Name, Kind)                                    \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  }

CROPDG_DEFINE_ERROR(ArgumentError, argument);
CROPDG_DEFINE_ERROR(ShapeError, shape);
CROPDG_DEFINE_ERROR(ConfigError, config);
CROPDG_DEFINE_ERROR(ManifestError, manifest);
CROPDG_DEFINE_ERROR(IntegrityError, integrity);
CROPDG_DEFINE_ERROR(LookupError, lookup);
CROPDG_DEFINE_ERROR(NumericError, numeric);
CROPDG_DEFINE_ERROR(DivergenceError, divergence);
CROPDG_DEFINE_ERROR(IoError, io);

#undef CROPDG_DEFINE_ERROR

}  // namespace cropdg
