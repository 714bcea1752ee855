#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cfpl/ops.hpp"
#include "test_util.hpp"

using namespace cfpl;
using cfpl::testing::expect_gradients_match;
using cfpl::testing::random_tensor;

namespace {

std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

}  // namespace

TEST(Tensor, FactoryValidation) {
    EXPECT_THROW(Tensor::from_values({2, 0}, {}), std::invalid_argument);
    EXPECT_THROW(Tensor::from_values({2, 2}, {1, 2, 3}), std::invalid_argument);
    auto t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.at({1, 2}), 6.0);
    EXPECT_THROW(t.at({2, 0}), std::out_of_range);
    EXPECT_THROW(t.item(), std::logic_error);
}

TEST(Tensor, F32ModeRoundsStorage) {
    const double third = 1.0 / 3.0;
    {
        PrecisionGuard g(Precision::f32);
        EXPECT_EQ(Tensor::scalar(third).item(), static_cast<double>(static_cast<float>(third)));
    }
    PrecisionGuard g(Precision::f64);
    EXPECT_EQ(Tensor::scalar(third).item(), third);
}

TEST(Tensor, FiniteChecksCatchNaN) {
    set_finite_checks(true);
    auto x = Tensor::from_values({2}, {-1.0, 4.0});
    EXPECT_THROW(log(x), std::runtime_error);
    set_finite_checks(false);
    EXPECT_NO_THROW(log(x));
}

TEST(Tensor, NoGradGuardSkipsGraph) {
    auto x = Tensor::from_values({2}, {1.0, 2.0}, true);
    {
        NoGradGuard ng;
        EXPECT_FALSE(square(x).requires_grad());
    }
    EXPECT_TRUE(square(x).requires_grad());
}

TEST(Tensor, NonLeafIsReadOnly) {
    auto x = Tensor::from_values({2}, {1.0, 2.0}, true);
    auto y = square(x);
    EXPECT_THROW(y.values_mut(), std::logic_error);
}

TEST(Tensor, GradientAccumulatesOverSharedUse) {
    PrecisionGuard g(Precision::f64);
    auto x = Tensor::scalar(3.0, true);
    sum_all(add(mul(x, x), x)).backward();  // d/dx (x^2 + x) = 7
    EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Ops, SquareGradientAtThree) {
    PrecisionGuard g(Precision::f64);
    auto x = Tensor::scalar(3.0, true);
    square(x).backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Ops, SoftmaxOfLogs) {
    PrecisionGuard g(Precision::f64);
    auto s = softmax(Tensor::from_values({2}, {std::log(1.0), std::log(3.0)}), 0);
    EXPECT_NEAR(s.values()[0], 0.25, 1e-15);
    EXPECT_NEAR(s.values()[1], 0.75, 1e-15);
}

TEST(Ops, SoftmaxIsShiftInvariantAndStable) {
    PrecisionGuard g(Precision::f64);
    auto a = softmax(Tensor::from_values({3}, {1000.0, 1001.0, 1002.0}), 0);
    auto b = softmax(Tensor::from_values({3}, {0.0, 1.0, 2.0}), 0);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-15);
}

TEST(Ops, LayerNormPair) {
    PrecisionGuard g(Precision::f64);
    auto y = layer_norm(Tensor::from_values({1, 2}, {1.0, 3.0}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-5);
    // var = 1, so the output is +-1 / sqrt(1 + 1e-5)
    EXPECT_NEAR(y.values()[0], -1.0, 1e-5);
    EXPECT_NEAR(y.values()[1], 1.0, 1e-5);
    EXPECT_NEAR(y.values()[1], 1.0 / std::sqrt(1.0 + 1e-5), 1e-15);
}

TEST(Ops, CrossEntropyExample) {
    PrecisionGuard g(Precision::f64);
    const std::vector<int> labels{0};
    auto l = cross_entropy(Tensor::from_values({1, 2}, {1.0, 2.0}), labels);
    EXPECT_NEAR(l.item(), std::log(1.0 + std::exp(1.0)), 1e-15);
    EXPECT_NEAR(l.item(), 1.3133, 1e-4);
}

TEST(Ops, CrossEntropyRejectsBadLabels) {
    const std::vector<int> labels{2};
    EXPECT_THROW(cross_entropy(Tensor::from_values({1, 2}, {1.0, 2.0}), labels), std::out_of_range);
}

TEST(Ops, BroadcastAdd) {
    auto a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = Tensor::from_values({3}, {10, 20, 30});
    EXPECT_EQ(add(a, b).to_vector(), (std::vector<double>{11, 22, 33, 14, 25, 36}));
    auto c = Tensor::from_values({2, 1}, {100, 200});
    EXPECT_EQ(add(a, c).to_vector(), (std::vector<double>{101, 102, 103, 204, 205, 206}));
    EXPECT_THROW(add(a, Tensor::zeros({2})), std::invalid_argument);
}

TEST(Ops, MatmulMatchesNaiveLoops) {
    PrecisionGuard g(Precision::f64);
    Rng rng(1);
    auto a = random_tensor({2, 3, 4}, rng);
    auto b = random_tensor({4, 5}, rng);
    auto c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{2, 3, 5}));
    const auto av = a.to_vector();
    for (std::size_t batch = 0; batch < 2; ++batch) {
        std::vector<double> slice(av.begin() + batch * 12, av.begin() + (batch + 1) * 12);
        const auto ref = naive_matmul(slice, b.to_vector(), 3, 4, 5);
        for (std::size_t i = 0; i < 15; ++i) EXPECT_NEAR(c.values()[batch * 15 + i], ref[i], 1e-12);
    }
    auto bt = transpose(b, 0, 1);
    auto c2 = matmul_nt(a, bt);
    for (std::size_t i = 0; i < c.numel(); ++i) EXPECT_NEAR(c.values()[i], c2.values()[i], 1e-12);
    EXPECT_THROW(matmul(a, random_tensor({3, 5}, rng)), std::invalid_argument);
}

TEST(Ops, PermuteAndReshape) {
    auto x = Tensor::from_values({2, 3}, {0, 1, 2, 3, 4, 5});
    auto t = permute(x, {1, 0});
    EXPECT_EQ(t.shape(), (Shape{3, 2}));
    EXPECT_EQ(t.to_vector(), (std::vector<double>{0, 3, 1, 4, 2, 5}));
    EXPECT_EQ(reshape(x, {3, 2}).to_vector(), x.to_vector());
    EXPECT_THROW(reshape(x, {4, 2}), std::invalid_argument);
}

TEST(Ops, ConcatNarrowIndexSelect) {
    auto a = Tensor::from_values({1, 2}, {1, 2});
    auto b = Tensor::from_values({2, 2}, {3, 4, 5, 6});
    auto c = concat({a, b}, 0);
    EXPECT_EQ(c.to_vector(), (std::vector<double>{1, 2, 3, 4, 5, 6}));
    EXPECT_EQ(narrow(c, 0, 1, 2).to_vector(), b.to_vector());
    const std::vector<std::size_t> idx{2, 0};
    EXPECT_EQ(index_select(c, 0, idx).to_vector(), (std::vector<double>{5, 6, 1, 2}));
}

TEST(Ops, GeluReferencePoints) {
    PrecisionGuard g(Precision::f64);
    auto y = gelu(Tensor::from_values({3}, {0.0, 1.0, -1.0}));
    const double k = std::sqrt(2.0 / std::numbers::pi);
    auto ref = [&](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x))); };
    EXPECT_EQ(y.values()[0], 0.0);
    EXPECT_NEAR(y.values()[1], ref(1.0), 1e-15);
    EXPECT_NEAR(y.values()[2], ref(-1.0), 1e-15);
}

// Finite-difference properties of every differentiable op.

TEST(OpGradients, Elementwise) {
    Rng rng(2);
    auto a = random_tensor({2, 3}, rng);
    auto b = random_tensor({3}, rng);
    expect_gradients_match([](auto& in) { return add(in[0], in[1]); }, {a, b});
    expect_gradients_match([](auto& in) { return sub(in[0], in[1]); }, {a, b});
    expect_gradients_match([](auto& in) { return mul(in[0], in[1]); }, {a, b});
    expect_gradients_match([](auto& in) { return div(in[0], add_scalar(square(in[1]), 1.0)); }, {a, b});
    expect_gradients_match([](auto& in) { return exp(in[0]); }, {a});
    expect_gradients_match([](auto& in) { return log(add_scalar(square(in[0]), 0.5)); }, {a});
    expect_gradients_match([](auto& in) { return sqrt(add_scalar(square(in[0]), 0.5)); }, {a});
    expect_gradients_match([](auto& in) { return sigmoid(in[0]); }, {a});
    expect_gradients_match([](auto& in) { return gelu(in[0]); }, {a});
    expect_gradients_match([](auto& in) { return neg(mul_scalar(in[0], 3.0)); }, {a});
}

TEST(OpGradients, ReluAwayFromKink) {
    auto x = Tensor::from_values({4}, {-1.5, -0.3, 0.4, 2.0});
    expect_gradients_match([](auto& in) { return relu(in[0]); }, {x});
}

TEST(OpGradients, Reductions) {
    Rng rng(3);
    auto x = random_tensor({2, 3, 4}, rng);
    for (std::size_t axis = 0; axis < 3; ++axis) {
        expect_gradients_match([axis](auto& in) { return sum(in[0], axis); }, {x});
        expect_gradients_match([axis](auto& in) { return mean(in[0], axis, true); }, {x});
    }
    expect_gradients_match([](auto& in) { return mean_all(in[0]); }, {x});
}

TEST(OpGradients, ShapeOps) {
    Rng rng(4);
    auto x = random_tensor({2, 3, 4}, rng);
    auto y = random_tensor({1, 3, 4}, rng);
    const std::vector<std::size_t> idx{1, 1, 0};
    expect_gradients_match([](auto& in) { return permute(in[0], {2, 0, 1}); }, {x});
    expect_gradients_match([](auto& in) { return reshape(in[0], {6, 4}); }, {x});
    expect_gradients_match([](auto& in) { return expand(in[0], {5, 3, 4}); }, {y});
    expect_gradients_match([](auto& in) { return concat({in[0], in[1]}, 0); }, {x, y});
    expect_gradients_match([](auto& in) { return narrow(in[0], 2, 1, 2); }, {x});
    expect_gradients_match([&](auto& in) { return index_select(in[0], 1, idx); }, {x});
    expect_gradients_match([](auto& in) { return unsqueeze(in[0], 1); }, {x});
}

TEST(OpGradients, Products) {
    Rng rng(5);
    auto a = random_tensor({2, 3, 4}, rng);
    auto w = random_tensor({4, 5}, rng);
    auto wb = random_tensor({2, 4, 5}, rng);
    auto wt = random_tensor({5, 4}, rng);
    auto bias = random_tensor({5}, rng);
    expect_gradients_match([](auto& in) { return matmul(in[0], in[1]); }, {a, w});
    expect_gradients_match([](auto& in) { return matmul(in[0], in[1]); }, {a, wb});
    expect_gradients_match([](auto& in) { return matmul_nt(in[0], in[1]); }, {a, wt});
    expect_gradients_match([](auto& in) { return linear(in[0], in[1], in[2]); }, {a, wt, bias});
}

TEST(OpGradients, NormalizationAndLoss) {
    Rng rng(6);
    auto x = random_tensor({3, 5}, rng);
    auto gain = random_tensor({5}, rng);
    auto bias = random_tensor({5}, rng);
    const std::vector<int> labels{1, 0, 1};
    expect_gradients_match([](auto& in) { return softmax(in[0], 1); }, {x});
    expect_gradients_match([](auto& in) { return softmax(in[0], 0); }, {x});
    expect_gradients_match([](auto& in) { return log_softmax(in[0], 1); }, {x});
    expect_gradients_match([](auto& in) { return layer_norm(in[0], in[1], in[2], 1e-5); }, {x, gain, bias});
    auto logits = random_tensor({3, 2}, rng);
    expect_gradients_match([&](auto& in) { return cross_entropy(in[0], labels); }, {logits});
}
