// Copyright 2026 The voxfuse Authors
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

namespace voxfuse {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kEmptyInput,
  kOutOfRange,
  // serialization
  kIo,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kMissingField,
  kUnknownClass,
  kUnknownEnum,
  // geometry
  kNotOrthonormal,
  kSingular,
  kBehindCamera,
  kTooFewPoints,
  kDegenerate,
};

const char* to_string(ErrorCode code) noexcept;

// Every recoverable failure in the library is reported through this type; the
// code lets callers (and the CLI exit status) distinguish failure classes
// without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // I/O failures (missing files, short reads) as opposed to bad content.
  bool is_io() const noexcept { return code_ == ErrorCode::kIo; }

 private:
  ErrorCode code_;
};

}  // namespace voxfuse
