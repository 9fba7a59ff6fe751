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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "selfex/errors.hpp"
#include "selfex/optim.hpp"
#include "selfex/tensor.hpp"
#include "support/gradcheck.hpp"

namespace selfex {
namespace {

using testing::grad_check;
using testing::random_tensor;

std::vector<float> values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

TEST(TensorOps, MatmulByIdentity) {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(values(matmul(a, eye)), (std::vector<float>{1, 2, 3, 4}));
}

TEST(TensorOps, MatmulShapeMismatchNamesShapes) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 2});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2, 3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[2, 2]"), std::string::npos);
  }
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})),
               DimensionError);
}

TEST(TensorOps, SoftmaxOfZerosIsUniform) {
  Tensor p = softmax(Tensor::zeros({3}));
  for (float v : p.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
}

TEST(TensorOps, SoftmaxRowsSumToOne) {
  Rng rng(3);
  Tensor p = softmax(random_tensor({5, 7}, rng, false, 4.0));
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) s += p.data()[r * 7 + c];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(TensorOps, GeluMatchesScalarReference) {
  Rng rng(11);
  Tensor x = random_tensor({3, 4}, rng, false, 2.0);
  Tensor y = gelu(x);
  for (std::size_t i = 0; i < 12; ++i) {
    const double v = x.data()[i];
    // Independent form: x * Phi(x) with Phi via erfc.
    const double ref = v * 0.5 * std::erfc(-v / std::sqrt(2.0));
    EXPECT_NEAR(y.data()[i], ref, 1e-6);
  }
}

TEST(TensorOps, LayerNormMatchesScalarReference) {
  Rng rng(12);
  Tensor x = random_tensor({3, 4}, rng, false, 3.0);
  Tensor gamma = random_tensor({4}, rng, false);
  Tensor beta = random_tensor({4}, rng, false);
  Tensor y = layer_norm(x, gamma, beta);
  for (std::size_t r = 0; r < 3; ++r) {
    double mu = 0, var = 0;
    for (std::size_t c = 0; c < 4; ++c) mu += x.data()[r * 4 + c];
    mu /= 4;
    for (std::size_t c = 0; c < 4; ++c) {
      const double dv = x.data()[r * 4 + c] - mu;
      var += dv * dv;
    }
    var /= 4;
    for (std::size_t c = 0; c < 4; ++c) {
      const double ref = (x.data()[r * 4 + c] - mu) / std::sqrt(var + 1e-5) *
                             gamma.data()[c] +
                         beta.data()[c];
      EXPECT_NEAR(y.data()[r * 4 + c], ref, 1e-5);
    }
  }
}

TEST(TensorOps, MaskedFillGivesExactZeroProbability) {
  Tensor scores = Tensor::from_data({1, 3}, {0.3f, 2.0f, -1.0f});
  Tensor mask = Tensor::from_data({1, 3}, {1, 0, 1});
  Tensor p = softmax(masked_fill_add(scores, mask, -1e9f));
  EXPECT_EQ(p.data()[1], 0.0f);
  EXPECT_NEAR(p.data()[0] + p.data()[2], 1.0, 1e-7);
}

TEST(TensorOps, NonFiniteResultRaises) {
  EXPECT_THROW(log(Tensor::from_data({2}, {1.0f, 0.0f})), NumericError);
  EXPECT_THROW(exp(Tensor::from_data({1}, {1000.0f})), NumericError);
}

TEST(Backward, SumGivesOnes) {
  Tensor w = Tensor::from_data({2, 3}, {1, -2, 3, 4, 5, -6}, true);
  sum(w).backward();
  for (float g : w.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(Backward, HalfSquaredNormGivesValue) {
  Tensor w = Tensor::from_data({4}, {0.5f, -1.5f, 2.0f, 3.25f}, true);
  scale(sum(square(w)), 0.5f).backward();
  EXPECT_EQ(values(w), std::vector<float>(w.grad().begin(), w.grad().end()));
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor w = Tensor::zeros({2}, true);
  EXPECT_THROW(square(w).backward(), ContractError);
}

TEST(Backward, FrozenLeafUntouched) {
  Tensor frozen = Tensor::from_data({2}, {1, 2}, false);
  Tensor live = Tensor::from_data({2}, {3, 4}, true);
  sum(mul(frozen, live)).backward();
  EXPECT_FALSE(frozen.has_grad());
  EXPECT_EQ(values(live), (std::vector<float>{3, 4}));
  EXPECT_EQ(std::vector<float>(live.grad().begin(), live.grad().end()),
            (std::vector<float>{1, 2}));
}

TEST(Backward, SharedGraphSupportsTwoLosses) {
  Tensor w = Tensor::from_data({2}, {1, 2}, true);
  Tensor h = square(w);
  Tensor l1 = sum(h);
  Tensor l2 = sum(scale(h, 3.0f));
  l1.backward();
  w.zero_grad();
  l2.backward();
  EXPECT_FLOAT_EQ(w.grad()[0], 6.0f);
  EXPECT_FLOAT_EQ(w.grad()[1], 12.0f);
}

TEST(Backward, TwoLayerNetMatchesFiniteDifferences) {
  Rng rng(5);
  Tensor x = random_tensor({6, 5}, rng, false);
  Tensor w1 = random_tensor({5, 8}, rng, true, 0.5);
  Tensor b1 = random_tensor({8}, rng, true, 0.1);
  Tensor w2 = random_tensor({8, 3}, rng, true, 0.5);
  Tensor target = softmax(random_tensor({6, 3}, rng, false));
  std::vector<Tensor> leaves{w1, b1, w2};
  auto loss = [&] {
    Tensor logits = matmul(gelu(add(matmul(x, w1), b1)), w2);
    return scale(sum(mul(target, log_softmax(logits))), -1.0f / 6.0f);
  };
  auto r = grad_check(leaves, loss, 1e-3);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst;
}

TEST(Backward, AttentionShapedOpsMatchFiniteDifferences) {
  Rng rng(6);
  Tensor q = random_tensor({2, 3, 4}, rng, true);
  Tensor k = random_tensor({2, 3, 4}, rng, true);
  Tensor v = random_tensor({2, 3, 4}, rng, true);
  Tensor mask = Tensor::from_data({2, 1, 3}, {1, 0, 1, 1, 1, 0});
  Tensor w = random_tensor({2, 4, 3}, rng, false);
  std::vector<Tensor> leaves{q, k, v};
  auto loss = [&] {
    Tensor s = masked_fill_add(bmm(q, k, true), mask, -1e9f);
    Tensor out = permute(bmm(softmax(s), v), {0, 2, 1});
    return sum(mul(out, w));
  };
  auto r = grad_check(leaves, loss);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst;
}

TEST(Backward, RandomGraphsMatchFiniteDifferences) {
  Rng rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    auto g = testing::make_random_graph(rng);
    auto r = grad_check(g.leaves, [&] { return g.loss(); });
    EXPECT_LT(r.max_relative_error, 1e-3) << "trial " << trial << ": " << r.worst;
  }
}

TEST(Optimizer, PlainGdStep) {
  Tensor p = Tensor::from_data({1}, {1.0f}, true);
  Optimizer opt({{"p", p}}, {.step_size = 0.1, .scheme = OptimizerScheme::kPlainGd});
  scale(sum(p), 0.5f).backward();
  opt.step();
  EXPECT_FLOAT_EQ(p.data()[0], 0.95f);
}

TEST(Optimizer, QuadraticClosedForm) {
  // L = mu/2 * b^2 with mu = 1, alpha = 1/2: every iterate is an exact power
  // of two, so the float trajectory equals (1 - mu*alpha)^t b0 exactly.
  Tensor b = Tensor::from_data({1}, {8.0f}, true);
  Optimizer opt({{"b", b}}, {.step_size = 0.5, .scheme = OptimizerScheme::kPlainGd});
  for (int t = 1; t <= 20; ++t) {
    opt.zero_grad();
    scale(sum(square(b)), 0.5f).backward();
    opt.step();
    EXPECT_NEAR(b.data()[0], 8.0 * std::pow(0.5, t), 1e-9);
  }
}

TEST(Optimizer, AdamFirstStepMovesByStepSize) {
  Tensor p = Tensor::from_data({2}, {1.0f, -1.0f}, true);
  Optimizer opt({{"p", p}}, {.step_size = 0.01});
  sum(mul(p, Tensor::from_data({2}, {3.0f, -0.5f}))).backward();
  opt.step();
  // Bias correction makes the first update alpha * g / |g|.
  EXPECT_NEAR(p.data()[0], 0.99, 1e-6);
  EXPECT_NEAR(p.data()[1], -0.99, 1e-6);
}

TEST(Optimizer, MissingGradientIsContractError) {
  Tensor p = Tensor::from_data({1}, {1.0f}, true);
  Optimizer opt({{"p", p}}, {});
  EXPECT_THROW(opt.step(), ContractError);
}

TEST(Optimizer, FrozenParameterUnchanged) {
  Tensor frozen = Tensor::from_data({2}, {0.25f, -4.0f}, false);
  Tensor live = Tensor::from_data({2}, {1.0f, 1.0f}, true);
  Optimizer opt({{"live", live}}, {.step_size = 0.1});
  for (int i = 0; i < 10; ++i) {
    opt.zero_grad();
    sum(square(mul(frozen, live))).backward();
    opt.step();
  }
  EXPECT_EQ(values(frozen), (std::vector<float>{0.25f, -4.0f}));
}

TEST(Optimizer, NonPositiveStepSizeRejected) {
  Tensor p = Tensor::zeros({1}, true);
  EXPECT_THROW(Optimizer({{"p", p}}, {.step_size = 0.0}), ConfigError);
}

TEST(Optimizer, DeterministicTrajectories) {
  auto run = [] {
    Rng rng(77);
    Tensor w = random_tensor({4, 3}, rng, true);
    Tensor x = random_tensor({5, 4}, rng, false);
    Optimizer opt({{"w", w}}, {.step_size = 0.05});
    for (int i = 0; i < 20; ++i) {
      opt.zero_grad();
      mean(square(gelu(matmul(x, w)))).backward();
      opt.step();
    }
    return values(w);
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace selfex
