// Copyright (c) the r2i project authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef R2I_COMMON_HPP_
#define R2I_COMMON_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace r2i {

// Bad caller input: shape mismatches, out-of-range values, unusable configs.
class ArgError : public std::invalid_argument {
 public:
  explicit ArgError(const std::string& msg) : std::invalid_argument(msg) {}
};

// File or stream contents violate the format (truncation, bad magic).
class CorruptError : public std::runtime_error {
 public:
  explicit CorruptError(const std::string& msg) : std::runtime_error(msg) {}
};

// Stream/model pairing failure (weight digest mismatch).
class IntegrityError : public std::runtime_error {
 public:
  explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

// I/O failure (missing file, unreadable image, write error).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure during optimization (non-finite loss).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

#define R2I_CHECK_ARG(cond, msg)            \
  do {                                      \
    if (!(cond)) throw ::r2i::ArgError(msg); \
  } while (0)

}  // namespace r2i

#endif  // R2I_COMMON_HPP_
