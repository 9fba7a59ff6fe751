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

#include "selfex/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "kernels.hpp"
#include "selfex/errors.hpp"

namespace selfex {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

float* TensorNode::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad.data();
}

namespace {

thread_local bool g_grad_enabled = true;

const TensorNode& node_of(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw ContractError(std::string(op) + ": undefined tensor operand");
  }
  return *t.node();
}

void check_finite(const std::vector<float>& data, const char* op) {
  // Branch-free exponent test so the scan vectorises.
  constexpr std::uint32_t kExponent = 0x7f800000u;
  std::uint32_t bad = 0;
  for (float v : data) {
    bad |= static_cast<std::uint32_t>((std::bit_cast<std::uint32_t>(v) & kExponent) ==
                                      kExponent);
  }
  if (bad) throw NumericError(std::string(op) + ": produced a non-finite value");
}

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t->node()->requires_grad) return true;
  }
  return false;
}

// Wraps freshly computed data into a result tensor, wiring the graph edge
// only when some operand needs gradient.
Tensor make_result(Shape shape, std::vector<float> data, const char* op,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(TensorNode&)> backward) {
  check_finite(data, op);
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  if (wants_grad(inputs)) {
    node->requires_grad = true;
    node->is_leaf = false;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Adds src into the parent's gradient if the parent takes gradient.
void accumulate(TensorNode& parent, std::span<const float> src) {
  if (!parent.requires_grad) return;
  float* g = parent.grad_buffer();
  for (std::size_t i = 0; i < src.size(); ++i) g[i] += src[i];
}

// ---------------------------------------------------------------------------
// Broadcasting.

struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_strides;  // in element units, 0 on stretched axes
  std::vector<std::size_t> b_strides;
  enum class Kind { kSame, kTrailing, kGeneral } kind = Kind::kGeneral;
};

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    plan.kind = Broadcast::Kind::kSame;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (rank - b.size()));
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " +
                           shape_to_string(a) + " with " + shape_to_string(b));
    }
    plan.out[i] = pa[i] == 1 ? pb[i] : pa[i];
  }
  const auto sa = contiguous_strides(pa);
  const auto sb = contiguous_strides(pb);
  plan.a_strides.resize(rank);
  plan.b_strides.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    plan.a_strides[i] = pa[i] == 1 ? 0 : sa[i];
    plan.b_strides[i] = pb[i] == 1 ? 0 : sb[i];
  }
  // b repeats over the leading axes of an unstretched a (bias rows).
  if (pa == plan.out) {
    std::size_t lead = 0;
    while (lead < rank && pb[lead] == 1) ++lead;
    bool trailing = true;
    for (std::size_t i = lead; i < rank; ++i) trailing &= pb[i] == plan.out[i];
    if (trailing) plan.kind = Broadcast::Kind::kTrailing;
  }
  return plan;
}

// Calls fn(out_index, a_index, b_index) over the broadcast domain.
template <typename Fn>
void for_each_broadcast(const Broadcast& plan, std::size_t na, std::size_t nb,
                        Fn&& fn) {
  const std::size_t total = shape_numel(plan.out);
  if (plan.kind == Broadcast::Kind::kSame) {
    for (std::size_t i = 0; i < total; ++i) fn(i, i, i);
    return;
  }
  if (plan.kind == Broadcast::Kind::kTrailing) {
    (void)na;
    for (std::size_t i = 0, j = 0; i < total; ++i) {
      fn(i, i, j);
      if (++j == nb) j = 0;
    }
    return;
  }
  const std::size_t rank = plan.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < total; ++i) {
    fn(i, ia, ib);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      ia += plan.a_strides[ax];
      ib += plan.b_strides[ax];
      if (idx[ax] < plan.out[ax]) break;
      ia -= plan.a_strides[ax] * idx[ax];
      ib -= plan.b_strides[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

enum class BinaryOp { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryOp kind,
              const char* op) {
  const TensorNode& na = node_of(a, op);
  const TensorNode& nb = node_of(b, op);
  Broadcast plan = plan_broadcast(na.shape, nb.shape, op);
  std::vector<float> out(shape_numel(plan.out));
  const float* pa = na.data.data();
  const float* pb = nb.data.data();
  switch (kind) {
    case BinaryOp::kAdd:
      for_each_broadcast(plan, na.data.size(), nb.data.size(),
                         [&](std::size_t i, std::size_t ia, std::size_t ib) {
                           out[i] = pa[ia] + pb[ib];
                         });
      break;
    case BinaryOp::kSub:
      for_each_broadcast(plan, na.data.size(), nb.data.size(),
                         [&](std::size_t i, std::size_t ia, std::size_t ib) {
                           out[i] = pa[ia] - pb[ib];
                         });
      break;
    case BinaryOp::kMul:
      for_each_broadcast(plan, na.data.size(), nb.data.size(),
                         [&](std::size_t i, std::size_t ia, std::size_t ib) {
                           out[i] = pa[ia] * pb[ib];
                         });
      break;
  }
  Shape shape = plan.out;
  return make_result(
      std::move(shape), std::move(out), op, {&a, &b},
      [plan, kind](TensorNode& self) {
        TensorNode& ga = *self.parents[0];
        TensorNode& gb = *self.parents[1];
        const float* g = self.grad.data();
        float* da = ga.requires_grad ? ga.grad_buffer() : nullptr;
        float* db = gb.requires_grad ? gb.grad_buffer() : nullptr;
        const float* va = ga.data.data();
        const float* vb = gb.data.data();
        for_each_broadcast(
            plan, ga.data.size(), gb.data.size(),
            [&](std::size_t i, std::size_t ia, std::size_t ib) {
              switch (kind) {
                case BinaryOp::kAdd:
                  if (da) da[ia] += g[i];
                  if (db) db[ib] += g[i];
                  break;
                case BinaryOp::kSub:
                  if (da) da[ia] += g[i];
                  if (db) db[ib] -= g[i];
                  break;
                case BinaryOp::kMul:
                  if (da) da[ia] += g[i] * vb[ib];
                  if (db) db[ib] += g[i] * va[ia];
                  break;
              }
            });
      });
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, const char* op, Forward f, Derivative df) {
  const TensorNode& na = node_of(a, op);
  std::vector<float> out(na.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(na.data[i]);
  return make_result(na.shape, std::move(out), op, {&a},
                     [df](TensorNode& self) {
                       TensorNode& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       float* dp = p.grad_buffer();
                       for (std::size_t i = 0; i < self.data.size(); ++i) {
                         dp[i] += self.grad[i] * df(p.data[i], self.data[i]);
                       }
                     });
}

std::size_t last_dim(const TensorNode& n, const char* op) {
  if (n.shape.empty()) {
    throw DimensionError(std::string(op) + ": needs rank >= 1, got scalar");
  }
  return n.shape.back();
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data,
                         bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("from_data: shape " + shape_to_string(shape) +
                         " holds " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
  check_finite(data, "from_data");
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value) { return full({}, value); }

const Shape& Tensor::shape() const { return node_of(*this, "shape").shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("dim: axis " + std::to_string(axis) +
                         " out of range for " + shape_to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return node_of(*this, "numel").data.size(); }

std::span<const float> Tensor::data() const {
  return node_of(*this, "data").data;
}

std::span<float> Tensor::mutable_data() {
  if (!node_of(*this, "mutable_data").is_leaf) {
    throw ContractError("mutable_data: only leaves may be written in place");
  }
  return node_->data;
}

float Tensor::item() const {
  const TensorNode& n = node_of(*this, "item");
  if (n.data.size() != 1) {
    throw DimensionError("item: expected one element, got shape " +
                         shape_to_string(n.shape));
  }
  return n.data[0];
}

bool Tensor::requires_grad() const {
  return node_of(*this, "requires_grad").requires_grad;
}

void Tensor::set_requires_grad(bool value) {
  if (!node_of(*this, "set_requires_grad").is_leaf) {
    throw ContractError("set_requires_grad: only leaves can be (un)frozen");
  }
  node_->requires_grad = value;
  if (!value) node_->grad.clear();
}

bool Tensor::is_leaf() const { return node_of(*this, "is_leaf").is_leaf; }

bool Tensor::has_grad() const { return !node_of(*this, "has_grad").grad.empty(); }

std::span<const float> Tensor::grad() const {
  return node_of(*this, "grad").grad;
}

void Tensor::zero_grad() {
  node_of(*this, "zero_grad");
  node_->grad.clear();
}

Tensor Tensor::detach() const {
  const TensorNode& n = node_of(*this, "detach");
  auto node = std::make_shared<TensorNode>();
  node->shape = n.shape;
  node->data = n.data;
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  Tensor copy = detach();
  copy.node_->requires_grad = node_->requires_grad;
  return copy;
}

void Tensor::backward() const {
  const TensorNode& root = node_of(*this, "backward");
  if (root.data.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_to_string(root.shape));
  }
  if (!root.requires_grad) {
    throw ContractError("backward: loss does not depend on any trainable leaf");
  }
  // Iterative post-order DFS; `order` ends up with parents before children.
  std::vector<TensorNode*> order;
  std::unordered_set<const TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next++].get();
      if (parent->requires_grad && !parent->is_leaf &&
          seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }
  for (TensorNode* n : order) n->grad.assign(n->data.size(), 0.0f);
  node_->grad[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinaryOp::kAdd, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinaryOp::kSub, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinaryOp::kMul, "mul");
}

Tensor scale(const Tensor& a, float factor) {
  return unary(
      a, "scale", [factor](float x) { return x * factor; },
      [factor](float, float) { return factor; });
}

Tensor add_scalar(const Tensor& a, float value) {
  return unary(
      a, "add_scalar", [value](float x) { return x + value; },
      [](float, float) { return 1.0f; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](float x) { return x * x; },
      [](float x, float) { return 2.0f * x; });
}

Tensor log(const Tensor& a) {
  for (float v : node_of(a, "log").data) {
    if (!(v > 0.0f)) throw NumericError("log: argument must be positive");
  }
  return unary(
      a, "log", [](float x) { return std::log(x); },
      [](float x, float) { return 1.0f / x; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](float x) { return std::exp(x); },
      [](float, float y) { return y; });
}

Tensor gelu(const Tensor& a) {
  constexpr float kInvSqrt2 = 0.70710678118654752440f;
  constexpr float kInvSqrt2Pi = 0.39894228040143267794f;
  return unary(
      a, "gelu",
      [](float x) { return 0.5f * x * (1.0f + std::erf(x * kInvSqrt2)); },
      [](float x, float) {
        const float cdf = 0.5f * (1.0f + std::erf(x * kInvSqrt2));
        const float pdf = kInvSqrt2Pi * std::exp(-0.5f * x * x);
        return cdf + x * pdf;
      });
}

Tensor masked_fill_add(const Tensor& a, const Tensor& mask, float fill) {
  const TensorNode& na = node_of(a, "masked_fill_add");
  const TensorNode& nm = node_of(mask, "masked_fill_add");
  if (nm.requires_grad) {
    throw ContractError("masked_fill_add: mask must be a constant");
  }
  Broadcast plan = plan_broadcast(na.shape, nm.shape, "masked_fill_add");
  if (plan.out != na.shape) {
    throw DimensionError("masked_fill_add: mask " + shape_to_string(nm.shape) +
                         " must broadcast into " + shape_to_string(na.shape));
  }
  std::vector<float> out(na.data.size());
  for_each_broadcast(plan, na.data.size(), nm.data.size(),
                     [&](std::size_t i, std::size_t ia, std::size_t im) {
                       out[i] = nm.data[im] == 0.0f ? na.data[ia] + fill
                                                    : na.data[ia];
                     });
  return make_result(na.shape, std::move(out), "masked_fill_add", {&a},
                     [](TensorNode& self) {
                       accumulate(*self.parents[0], self.grad);
                     });
}

// ---------------------------------------------------------------------------
// Products

Tensor matmul(const Tensor& a, const Tensor& b) {
  const TensorNode& na = node_of(a, "matmul");
  const TensorNode& nb = node_of(b, "matmul");
  if (na.shape.empty() || nb.shape.size() != 2 ||
      na.shape.back() != nb.shape[0]) {
    throw DimensionError("matmul: cannot multiply " +
                         shape_to_string(na.shape) + " by " +
                         shape_to_string(nb.shape));
  }
  const std::size_t k = nb.shape[0];
  const std::size_t n = nb.shape[1];
  const std::size_t m = na.data.size() / k;
  std::vector<float> out(m * n);
  kernels::gemm_nn_acc(m, k, n, na.data.data(), nb.data.data(), out.data());
  Shape shape = na.shape;
  shape.back() = n;
  return make_result(std::move(shape), std::move(out), "matmul", {&a, &b},
                     [m, k, n](TensorNode& self) {
                       TensorNode& pa = *self.parents[0];
                       TensorNode& pb = *self.parents[1];
                       if (pa.requires_grad) {
                         // dA += dC * B^T
                         kernels::gemm_nt_acc(m, n, k, self.grad.data(),
                                              pb.data.data(), pa.grad_buffer());
                       }
                       if (pb.requires_grad) {
                         // dB += A^T * dC
                         kernels::gemm_tn_acc(k, m, n, pa.data.data(),
                                              self.grad.data(),
                                              pb.grad_buffer());
                       }
                     });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  const TensorNode& na = node_of(a, "bmm");
  const TensorNode& nb = node_of(b, "bmm");
  const bool ranks_ok = na.shape.size() == 3 && nb.shape.size() == 3 &&
                        na.shape[0] == nb.shape[0];
  const std::size_t inner_b = transpose_b ? 2 : 1;
  if (!ranks_ok || na.shape[2] != nb.shape[inner_b]) {
    throw DimensionError(std::string("bmm: cannot multiply ") +
                         shape_to_string(na.shape) + " by " +
                         shape_to_string(nb.shape) +
                         (transpose_b ? " (transposed)" : ""));
  }
  const std::size_t batch = na.shape[0];
  const std::size_t m = na.shape[1];
  const std::size_t k = na.shape[2];
  const std::size_t n = transpose_b ? nb.shape[1] : nb.shape[2];
  std::vector<float> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    const float* pa = na.data.data() + i * m * k;
    const float* pb = nb.data.data() + i * k * n;
    float* pc = out.data() + i * m * n;
    if (transpose_b) {
      std::fill(pc, pc + m * n, 0.0f);
      kernels::gemm_nt_acc(m, k, n, pa, pb, pc);
    } else {
      kernels::gemm_nn(m, k, n, pa, pb, pc);
    }
  }
  return make_result(
      {batch, m, n}, std::move(out), "bmm", {&a, &b},
      [batch, m, k, n, transpose_b](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        float* da = pa.requires_grad ? pa.grad_buffer() : nullptr;
        float* db = pb.requires_grad ? pb.grad_buffer() : nullptr;
        for (std::size_t i = 0; i < batch; ++i) {
          const float* g = self.grad.data() + i * m * n;
          const float* va = pa.data.data() + i * m * k;
          const float* vb = pb.data.data() + i * k * n;
          if (transpose_b) {
            // C = A B^T with B: [n, k]
            if (da) kernels::gemm_nn_acc(m, n, k, g, vb, da + i * m * k);
            if (db) kernels::gemm_tn_acc(n, m, k, g, va, db + i * k * n);
          } else {
            if (da) kernels::gemm_nt_acc(m, n, k, g, vb, da + i * m * k);
            if (db) kernels::gemm_tn_acc(k, m, n, va, g, db + i * k * n);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalisations

Tensor softmax(const Tensor& a) {
  const TensorNode& na = node_of(a, "softmax");
  const std::size_t n = last_dim(na, "softmax");
  const std::size_t rows = n ? na.data.size() / n : 0;
  std::vector<float> out(na.data.size());
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::softmax_row(na.data.data() + r * n, out.data() + r * n, n);
  }
  return make_result(na.shape, std::move(out), "softmax", {&a},
                     [rows, n](TensorNode& self) {
                       TensorNode& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       float* dp = p.grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const float* y = self.data.data() + r * n;
                         const float* g = self.grad.data() + r * n;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += double(g[j]) * y[j];
                         for (std::size_t j = 0; j < n; ++j) {
                           dp[r * n + j] += static_cast<float>(y[j] * (g[j] - dot));
                         }
                       }
                     });
}

Tensor log_softmax(const Tensor& a) {
  const TensorNode& na = node_of(a, "log_softmax");
  const std::size_t n = last_dim(na, "log_softmax");
  const std::size_t rows = n ? na.data.size() / n : 0;
  std::vector<float> out(na.data.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = na.data.data() + r * n;
    const double lse = kernels::log_sum_exp(x, n);
    for (std::size_t j = 0; j < n; ++j) {
      out[r * n + j] = static_cast<float>(x[j] - lse);
    }
  }
  return make_result(na.shape, std::move(out), "log_softmax", {&a},
                     [rows, n](TensorNode& self) {
                       TensorNode& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       float* dp = p.grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const float* y = self.data.data() + r * n;
                         const float* g = self.grad.data() + r * n;
                         double total = 0.0;
                         for (std::size_t j = 0; j < n; ++j) total += g[j];
                         for (std::size_t j = 0; j < n; ++j) {
                           dp[r * n + j] += static_cast<float>(
                               g[j] - std::exp(double(y[j])) * total);
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps) {
  const TensorNode& nx = node_of(x, "layer_norm");
  const TensorNode& ng = node_of(gamma, "layer_norm");
  const TensorNode& nbeta = node_of(beta, "layer_norm");
  const std::size_t n = last_dim(nx, "layer_norm");
  if (ng.shape != Shape{n} || nbeta.shape != Shape{n}) {
    throw DimensionError("layer_norm: gamma/beta " + shape_to_string(ng.shape) +
                         "/" + shape_to_string(nbeta.shape) +
                         " do not match feature size " + std::to_string(n));
  }
  const std::size_t rows = nx.data.size() / n;
  std::vector<float> out(nx.data.size());
  // Normalised activations and inverse deviations, kept for backward.
  auto xhat = std::make_shared<std::vector<float>>(nx.data.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = nx.data.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= double(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = row[j] - mu;
      var += c * c;
    }
    var /= double(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const float h = static_cast<float>((row[j] - mu) * is);
      (*xhat)[r * n + j] = h;
      out[r * n + j] = h * ng.data[j] + nbeta.data[j];
    }
  }
  return make_result(
      nx.shape, std::move(out), "layer_norm", {&x, &gamma, &beta},
      [rows, n, xhat, inv_std](TensorNode& self) {
        TensorNode& px = *self.parents[0];
        TensorNode& pg = *self.parents[1];
        TensorNode& pb = *self.parents[2];
        float* dx = px.requires_grad ? px.grad_buffer() : nullptr;
        float* dg = pg.requires_grad ? pg.grad_buffer() : nullptr;
        float* db = pb.requires_grad ? pb.grad_buffer() : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
          const float* g = self.grad.data() + r * n;
          const float* h = xhat->data() + r * n;
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = double(g[j]) * pg.data[j];
            mean_dh += dh;
            mean_dh_h += dh * h[j];
            if (dg) dg[j] += g[j] * h[j];
            if (db) db[j] += g[j];
          }
          mean_dh /= double(n);
          mean_dh_h /= double(n);
          if (!dx) continue;
          const double is = (*inv_std)[r];
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = double(g[j]) * pg.data[j];
            dx[r * n + j] +=
                static_cast<float>(is * (dh - mean_dh - h[j] * mean_dh_h));
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& a, Shape shape) {
  const TensorNode& na = node_of(a, "reshape");
  if (shape_numel(shape) != na.data.size()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(na.shape) +
                         " as " + shape_to_string(shape));
  }
  return make_result(std::move(shape), na.data, "reshape", {&a},
                     [](TensorNode& self) {
                       accumulate(*self.parents[0], self.grad);
                     });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& order) {
  const TensorNode& na = node_of(a, "permute");
  const std::size_t rank = na.shape.size();
  std::vector<bool> used(rank, false);
  bool valid = order.size() == rank;
  for (std::size_t ax : order) {
    valid = valid && ax < rank && !used[ax];
    if (ax < rank) used[ax] = true;
  }
  if (!valid) {
    throw DimensionError("permute: invalid axis order for " +
                         shape_to_string(na.shape));
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = na.shape[order[i]];
  const auto in_strides = contiguous_strides(na.shape);
  // src_strides[i]: input stride of output axis i.
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) src_strides[i] = in_strides[order[i]];
  auto gather_index = std::make_shared<std::vector<std::size_t>>(na.data.size());
  {
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t i = 0; i < na.data.size(); ++i) {
      (*gather_index)[i] = src;
      for (std::size_t ax = rank; ax-- > 0;) {
        ++idx[ax];
        src += src_strides[ax];
        if (idx[ax] < out_shape[ax]) break;
        src -= src_strides[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }
  std::vector<float> out(na.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = na.data[(*gather_index)[i]];
  }
  return make_result(std::move(out_shape), std::move(out), "permute", {&a},
                     [gather_index](TensorNode& self) {
                       TensorNode& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       float* dp = p.grad_buffer();
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         dp[(*gather_index)[i]] += self.grad[i];
                       }
                     });
}

namespace {

// Splits a shape around `axis` into (outer, axis, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  const Shape& first = node_of(parts[0], "concat").shape;
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) +
                         " out of range for " + shape_to_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const Tensor& p : parts) {
    const Shape& s = node_of(p, "concat").shape;
    Shape probe = s, ref = first;
    if (s.size() != first.size()) {
      throw DimensionError("concat: rank mismatch " + shape_to_string(first) +
                           " vs " + shape_to_string(s));
    }
    probe[axis] = ref[axis] = 0;
    if (probe != ref) {
      throw DimensionError("concat: shapes " + shape_to_string(first) +
                           " and " + shape_to_string(s) +
                           " differ off the concat axis");
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const AxisSplit out_split = split_at(out_shape, axis);
  std::vector<float> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& src = parts[p].node()->data;
    const std::size_t chunk = extents[p] * out_split.inner;
    for (std::size_t o = 0; o < out_split.outer; ++o) {
      std::copy_n(src.data() + o * chunk, chunk,
                  out.data() + o * out_split.extent * out_split.inner +
                      offset * out_split.inner);
    }
    offset += extents[p];
  }
  check_finite(out, "concat");
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(out_shape);
  node->data = std::move(out);
  node->op = "concat";
  bool need = false;
  if (g_grad_enabled) {
    for (const Tensor& p : parts) need |= p.node()->requires_grad;
  }
  if (need) {
    node->requires_grad = true;
    node->is_leaf = false;
    for (const Tensor& p : parts) node->parents.push_back(p.node());
    node->backward = [extents, out_split](TensorNode& self) {
      std::size_t off = 0;
      for (std::size_t p = 0; p < self.parents.size(); ++p) {
        TensorNode& parent = *self.parents[p];
        const std::size_t chunk = extents[p] * out_split.inner;
        if (parent.requires_grad) {
          float* dp = parent.grad_buffer();
          for (std::size_t o = 0; o < out_split.outer; ++o) {
            const float* g = self.grad.data() +
                             o * out_split.extent * out_split.inner +
                             off * out_split.inner;
            for (std::size_t i = 0; i < chunk; ++i) dp[o * chunk + i] += g[i];
          }
        }
        off += extents[p];
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t length) {
  const TensorNode& na = node_of(a, "slice");
  if (axis >= na.shape.size() || start + length > na.shape[axis]) {
    throw DimensionError("slice: [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") on axis " +
                         std::to_string(axis) + " of " +
                         shape_to_string(na.shape));
  }
  std::vector<std::size_t> indices(length);
  std::iota(indices.begin(), indices.end(), start);
  return index_select(a, axis, indices);
}

Tensor index_select(const Tensor& a, std::size_t axis,
                    const std::vector<std::size_t>& indices) {
  const TensorNode& na = node_of(a, "index_select");
  if (axis >= na.shape.size()) {
    throw DimensionError("index_select: axis " + std::to_string(axis) +
                         " out of range for " + shape_to_string(na.shape));
  }
  for (std::size_t i : indices) {
    if (i >= na.shape[axis]) {
      throw DimensionError("index_select: index " + std::to_string(i) +
                           " out of range for " + shape_to_string(na.shape));
    }
  }
  const AxisSplit in = split_at(na.shape, axis);
  Shape out_shape = na.shape;
  out_shape[axis] = indices.size();
  std::vector<float> out(in.outer * indices.size() * in.inner);
  for (std::size_t o = 0; o < in.outer; ++o) {
    for (std::size_t r = 0; r < indices.size(); ++r) {
      std::copy_n(na.data.data() + (o * in.extent + indices[r]) * in.inner,
                  in.inner,
                  out.data() + (o * indices.size() + r) * in.inner);
    }
  }
  return make_result(std::move(out_shape), std::move(out), "index_select",
                     {&a}, [in, indices](TensorNode& self) {
                       TensorNode& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       float* dp = p.grad_buffer();
                       for (std::size_t o = 0; o < in.outer; ++o) {
                         for (std::size_t r = 0; r < indices.size(); ++r) {
                           const float* g = self.grad.data() +
                                            (o * indices.size() + r) * in.inner;
                           float* d = dp + (o * in.extent + indices[r]) * in.inner;
                           for (std::size_t i = 0; i < in.inner; ++i) d[i] += g[i];
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  const TensorNode& na = node_of(a, "sum");
  double total = 0.0;
  for (float v : na.data) total += v;
  return make_result({}, {static_cast<float>(total)}, "sum", {&a},
                     [](TensorNode& self) {
                       TensorNode& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       float* dp = p.grad_buffer();
                       for (std::size_t i = 0; i < p.data.size(); ++i) {
                         dp[i] += self.grad[0];
                       }
                     });
}

Tensor mean(const Tensor& a) {
  const TensorNode& na = node_of(a, "mean");
  if (na.data.empty()) throw ContractError("mean: empty tensor");
  double total = 0.0;
  for (float v : na.data) total += v;
  const double count = double(na.data.size());
  return make_result({}, {static_cast<float>(total / count)}, "mean", {&a},
                     [count](TensorNode& self) {
                       TensorNode& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       float* dp = p.grad_buffer();
                       const float g = static_cast<float>(self.grad[0] / count);
                       for (std::size_t i = 0; i < p.data.size(); ++i) dp[i] += g;
                     });
}

Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim) {
  const TensorNode& na = node_of(a, "sum_axis");
  if (axis >= na.shape.size()) {
    throw DimensionError("sum_axis: axis " + std::to_string(axis) +
                         " out of range for " + shape_to_string(na.shape));
  }
  const AxisSplit s = split_at(na.shape, axis);
  std::vector<double> acc(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const float* row = na.data.data() + (o * s.extent + e) * s.inner;
      double* dst = acc.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += row[i];
    }
  }
  std::vector<float> out(acc.begin(), acc.end());
  Shape shape = na.shape;
  if (keepdim) {
    shape[axis] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return make_result(std::move(shape), std::move(out), "sum_axis", {&a},
                     [s](TensorNode& self) {
                       TensorNode& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       float* dp = p.grad_buffer();
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t e = 0; e < s.extent; ++e) {
                           float* d = dp + (o * s.extent + e) * s.inner;
                           const float* g = self.grad.data() + o * s.inner;
                           for (std::size_t i = 0; i < s.inner; ++i) d[i] += g[i];
                         }
                       }
                     });
}

}  // namespace selfex
