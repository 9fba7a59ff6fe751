/*
 * Copyright 2026 The selfex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace selfex {

// Coarse failure classes. They map one-to-one onto CLI exit codes.
enum class ErrorKind {
  kUsage = 1,      // bad arguments, bad config, contract violations
  kInvariant = 2,  // invariant/bound failure, divergence
  kIo = 3,         // filesystem, corruption, version
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SELFEX_DEFINE_ERROR(Name, Kind)                \
  class Name : public Error {                          \
   public:                                             \
    explicit Name(const std::string& what)             \
        : Error(ErrorKind::Kind, what) {}              \
  };

// Operand shapes do not conform.
SELFEX_DEFINE_ERROR(DimensionError, kUsage)
// Caller broke a documented precondition.
SELFEX_DEFINE_ERROR(ContractError, kUsage)
SELFEX_DEFINE_ERROR(ConfigError, kUsage)
// Exponential enumeration requested beyond its budget.
SELFEX_DEFINE_ERROR(BudgetError, kUsage)
SELFEX_DEFINE_ERROR(RoleError, kUsage)
// Quantity is mathematically undefined for the given input (zero variance, zero norm).
SELFEX_DEFINE_ERROR(UndefinedError, kUsage)
SELFEX_DEFINE_ERROR(SingularSystemError, kInvariant)
SELFEX_DEFINE_ERROR(NumericError, kInvariant)
SELFEX_DEFINE_ERROR(DivergenceError, kInvariant)
SELFEX_DEFINE_ERROR(InvariantViolation, kInvariant)
SELFEX_DEFINE_ERROR(IoError, kIo)
SELFEX_DEFINE_ERROR(CorruptionError, kIo)
SELFEX_DEFINE_ERROR(VersionError, kIo)

#undef SELFEX_DEFINE_ERROR

}  // namespace selfex
