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

#include "selfex/mask.hpp"

#include <algorithm>

#include "selfex/errors.hpp"

namespace selfex {

Mask::Mask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_) b = b ? 1 : 0;
}

Mask Mask::full(std::size_t d) {
  return Mask(std::vector<std::uint8_t>(d, 1));
}

Mask Mask::empty(std::size_t d) {
  return Mask(std::vector<std::uint8_t>(d, 0));
}

Mask Mask::from_bits(std::uint64_t bits, std::size_t d) {
  if (d > 64) throw ContractError("Mask::from_bits supports d <= 64");
  std::vector<std::uint8_t> v(d);
  for (std::size_t i = 0; i < d; ++i) v[i] = (bits >> i) & 1U;
  return Mask(std::move(v));
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

Mask Mask::complement() const {
  std::vector<std::uint8_t> v(bits_.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = bits_[i] ? 0 : 1;
  return Mask(std::move(v));
}

std::uint64_t Mask::to_bits() const {
  if (bits_.size() > 64) throw ContractError("Mask::to_bits supports d <= 64");
  std::uint64_t out = 0;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out |= std::uint64_t{1} << i;
  }
  return out;
}

std::string Mask::to_string() const {
  std::string s(bits_.size(), '0');
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) s[i] = '1';
  }
  return s;
}

}  // namespace selfex
