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

// Dense row-major float tensors with tape-free reverse-mode differentiation.
//
// Every op result keeps shared references to its operands and a closure that
// pushes the result gradient back into them; `Tensor::backward` sorts the
// reachable graph topologically and runs each closure exactly once. Leaves
// with requires_grad() == false never receive gradient, which is how frozen
// parameters are expressed.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace selfex {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  // Returns the gradient buffer, allocating zeros on first use.
  float* grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const float> data() const;
  // Writable view for leaves (parameter initialisation, optimizer updates).
  std::span<float> mutable_data();
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const float> grad() const;
  void zero_grad();

  // New leaf holding a copy of the values, detached from any graph.
  Tensor detach() const;
  // Deep copy that keeps the requires_grad flag.
  Tensor clone() const;

  // Seeds d(this)/d(this) = 1 and accumulates into every reachable leaf that
  // requires gradient. Intermediate gradients are reset first, so several
  // losses sharing one forward graph may be differentiated in turn.
  void backward() const;

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Gradient recording switch. Ops executed while disabled produce plain leaves.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---------------------------------------------------------------------------
// Operations. Binary elementwise ops broadcast numpy-style (trailing
// alignment, size-1 axes stretch). Reductions accumulate in double.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor add_scalar(const Tensor& a, float value);
Tensor square(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor gelu(const Tensor& a);

// a: [..., k] treated as rows, b: [k, n]  ->  [..., n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a: [B, m, k], b: [B, k, n] (or [B, n, k] with transpose_b)  ->  [B, m, n]
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor softmax(const Tensor& a);      // over the last axis
Tensor log_softmax(const Tensor& a);  // over the last axis
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

// Adds `fill` wherever mask == 0; mask broadcasts against a and is constant.
Tensor masked_fill_add(const Tensor& a, const Tensor& mask, float fill);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& order);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t length);
// Gathers rows along `axis` in the listed order.
Tensor index_select(const Tensor& a, std::size_t axis,
                    const std::vector<std::size_t>& indices);

Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar
Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim = true);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace selfex
