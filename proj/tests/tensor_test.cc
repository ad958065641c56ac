// Copyright 2026 The mobpriv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "mobpriv/errors.h"
#include "mobpriv/tensor.h"
#include "test_util.h"

namespace mobpriv {
namespace {

using testing::max_gradient_error;
using testing::random_tensor;

TEST(MatmulTest, IdentityLeavesMatrixUnchanged) {
  Tape tape;
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto out = matmul(tape, eye, m);
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()),
            (std::vector<double>{1, 2, 3, 4}));
}

TEST(MatmulTest, MatchesHandProduct) {
  Tape tape;
  auto out = matmul(tape, Tensor::from({2, 2}, {1, 2, 3, 4}),
                    Tensor::from({2, 2}, {5, 6, 7, 8}));
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()),
            (std::vector<double>{19, 22, 43, 50}));
}

TEST(MatmulTest, MatchesTripleLoopOnRandomShapes) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.uniform_int(7), k = 1 + rng.uniform_int(7),
                      n = 1 + rng.uniform_int(7);
    auto a = random_tensor({m, k}, rng, -1, 1, false);
    auto b = random_tensor({k, n}, rng, -1, 1, false);
    Tape tape;
    auto c = matmul(tape, a, b);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t t = 0; t < k; ++t) s += a.at(i, t) * b.at(t, j);
        EXPECT_NEAR(c.at(i, j), s, 1e-12);
      }
    }
  }
}

TEST(MatmulTest, InnerMismatchNamesBothShapes) {
  Tape tape;
  try {
    matmul(tape, Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x2"), std::string::npos) << msg;
  }
}

TEST(ActivationTest, KnownValues) {
  Tape tape;
  EXPECT_DOUBLE_EQ(sigmoid(tape, Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_NEAR(tanh(tape, Tensor::scalar(1.0)).item(), 0.7615941559557649,
              1e-15);
  auto s = softmax(tape, Tensor::from({1, 3}, {0, 0, 0}));
  for (double v : s.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(ActivationTest, SoftmaxRowsSumToOne) {
  Rng rng(5);
  Tape tape;
  auto s = softmax(tape, random_tensor({16, 9}, rng, -30, 30, false));
  for (std::size_t r = 0; r < 16; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 9; ++c) sum += s.at(r, c);
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(CrossEntropyTest, KnownValues) {
  Tape tape;
  const std::vector<int> t0 = {0};
  EXPECT_DOUBLE_EQ(
      cross_entropy(tape, Tensor::from({1, 3}, {1, 0, 0}), t0).item(), 0.0);
  const std::vector<int> t2 = {2};
  EXPECT_NEAR(
      cross_entropy(tape, Tensor::from({1, 4}, {.25, .25, .25, .25}), t2)
          .item(),
      std::log(4.0), 1e-15);
  EXPECT_NEAR(
      cross_entropy(tape, Tensor::from({1, 2}, {.5, .5}), t0).item(),
      0.6931471805599453, 1e-15);
}

TEST(CrossEntropyTest, ClampsZeroProbability) {
  Tape tape;
  const std::vector<int> t = {1};
  EXPECT_NEAR(cross_entropy(tape, Tensor::from({1, 2}, {1, 0}), t).item(),
              -std::log(kLogClamp), 1e-9);
}

TEST(CrossEntropyTest, TargetOutOfRangeThrows) {
  Tape tape;
  const std::vector<int> t = {3};
  EXPECT_THROW(cross_entropy(tape, Tensor::from({1, 3}, {1, 0, 0}), t),
               IndexError);
}

TEST(MseTest, KnownValues) {
  Tape tape;
  EXPECT_DOUBLE_EQ(
      mse(tape, Tensor::from({1, 2}, {0, 0}), Tensor::from({1, 2}, {3, 4}))
          .item(),
      12.5);
  EXPECT_DOUBLE_EQ(mse(tape, Tensor::scalar(1), Tensor::scalar(4)).item(), 9);
  auto x = Tensor::from({2, 2}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(mse(tape, x, x).item(), 0);
  EXPECT_THROW(mse(tape, x, Tensor::zeros({1, 4})), ShapeError);
}

TEST(BackwardTest, SquareHasGradientSix) {
  auto x = Tensor::scalar(3.0, true);
  Tape tape;
  tape.backward(mul(tape, x, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(BackwardTest, SoftmaxCrossEntropyGradientIsProbsMinusOneHot) {
  Rng rng(11);
  auto logits = random_tensor({1, 5}, rng, -2, 2);
  Tape tape;
  auto p = softmax(tape, logits);
  const std::vector<int> t = {3};
  tape.backward(cross_entropy(tape, p, t));
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_NEAR(logits.grad()[c], p[c] - (c == 3 ? 1.0 : 0.0), 1e-12);
  }
}

TEST(BackwardTest, GradientsAccumulateAcrossUses) {
  auto x = Tensor::scalar(2.0, true);
  Tape tape;
  auto y = add(tape, scale(tape, x, 3.0), mul(tape, x, x));
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0 + 4.0);
}

TEST(BackwardTest, RejectsNonScalarLoss) {
  Tape tape;
  auto x = Tensor::zeros({2, 2}, true);
  EXPECT_THROW(tape.backward(scale(tape, x, 1.0)), ContractError);
}

TEST(BackwardTest, SecondReplayWithoutClearThrows) {
  auto x = Tensor::scalar(2.0, true);
  Tape tape;
  auto y = mul(tape, x, x);
  tape.backward(y);
  EXPECT_THROW(tape.backward(y), ContractError);
  tape.clear();
  x.zero_grad();
  auto z = mul(tape, x, x);
  tape.backward(z);
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
}

TEST(BackwardTest, NoGradTapeRecordsNothing) {
  auto x = Tensor::scalar(2.0, true);
  Tape tape(Tape::Mode::kNoGrad);
  mul(tape, x, x);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(GradientCheckTest, TwoLayerNetworkMatchesFiniteDifferences) {
  Rng rng(7);
  auto x = random_tensor({4, 5}, rng, -1, 1, false);
  auto w1 = random_tensor({5, 6}, rng);
  auto b1 = random_tensor({1, 6}, rng);
  auto w2 = random_tensor({6, 3}, rng);
  auto b2 = random_tensor({1, 3}, rng);
  const std::vector<int> labels = {0, 2, 1, 2};
  auto loss = [&](Tape& t) {
    auto h = tanh(t, affine(t, x, w1, b1));
    return cross_entropy(t, softmax(t, affine(t, h, w2, b2)), labels);
  };
  EXPECT_LT(max_gradient_error({w1, b1, w2, b2}, loss), 1e-4);
}

TEST(GradientCheckTest, EveryPrimitiveMatchesFiniteDifferences) {
  Rng rng(9);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto target = random_tensor({6, 2}, rng, 0, 1, false);
  const std::vector<int> labels = {1, 0, 3};
  auto loss = [&](Tape& t) {
    auto s = sigmoid(t, mul(t, a, b));
    auto parts = std::vector<Tensor>{slice_cols(t, s, 0, 2),
                                     slice_cols(t, a, 2, 4)};
    auto stacked = stack_rows(t, parts);
    auto m = mean_of(t, std::vector<Tensor>{a, scale(t, b, -0.5)});
    auto l1 = mse(t, stacked, target);
    auto l2 = cross_entropy(t, softmax(t, m), labels);
    const std::vector<Tensor> losses = {l1, l2};
    const std::vector<double> coeffs = {0.7, -1.3};
    return weighted_sum(t, losses, coeffs);
  };
  EXPECT_LT(max_gradient_error({a, b}, loss), 1e-4);
}

TEST(DeterminismTest, SameInputsGiveBitIdenticalResults) {
  auto run = [] {
    Rng rng(21);
    auto w = random_tensor({8, 8}, rng);
    auto x = random_tensor({5, 8}, rng, -1, 1, false);
    Tape tape;
    auto y = tanh(tape, matmul(tape, x, w));
    tape.backward(mse(tape, y, Tensor::zeros({5, 8})));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace mobpriv
