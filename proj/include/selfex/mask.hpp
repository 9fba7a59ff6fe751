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

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace selfex {

// Subset of the d feature tokens kept visible to the model (1 = retained).
// The class token has no bit: it is never removed.
class Mask {
 public:
  Mask() = default;
  explicit Mask(std::vector<std::uint8_t> bits);

  static Mask full(std::size_t d);
  static Mask empty(std::size_t d);
  // Little-endian: bit i of `bits` is feature i. Requires d <= 64.
  static Mask from_bits(std::uint64_t bits, std::size_t d);

  std::size_t size() const { return bits_.size(); }
  std::size_t count() const;
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool keep) { bits_[i] = keep ? 1 : 0; }

  Mask complement() const;
  std::uint64_t to_bits() const;
  std::string to_string() const;  // "1011..." feature 0 first

  const std::vector<std::uint8_t>& bits() const { return bits_; }
  bool operator==(const Mask& other) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

}  // namespace selfex
