#include <gtest/gtest.h>

#include <cmath>

#include "cfpl/style_content.hpp"
#include "test_util.hpp"

using namespace cfpl;
using cfpl::testing::expect_gradients_match;
using cfpl::testing::random_tensor;

namespace {

// Two-pass per-channel mean and std over tokens 1..n-1.
void reference_stats(const Tensor& t, std::vector<double>& mu, std::vector<double>& sigma) {
    const auto& s = t.shape();
    const std::size_t B = s[0], n = s[1], d = s[2];
    mu.assign(B * d, 0.0);
    sigma.assign(B * d, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < d; ++c) {
            double m = 0;
            for (std::size_t i = 1; i < n; ++i) m += t.at({b, i, c});
            m /= double(n - 1);
            double v = 0;
            for (std::size_t i = 1; i < n; ++i) v += (t.at({b, i, c}) - m) * (t.at({b, i, c}) - m);
            v /= double(n - 1);
            mu[b * d + c] = m;
            sigma[b * d + c] = std::sqrt(v + kStatEps);
        }
}

EncoderOutput fake_output(Rng& rng, std::size_t B, std::size_t n, std::size_t d, std::size_t layers) {
    EncoderOutput out;
    for (std::size_t l = 0; l < layers; ++l) out.layer_tokens.push_back(random_tensor({B, n, d}, rng));
    out.global_feature = narrow(out.layer_tokens.back(), 1, 0, 1);
    return out;
}

}  // namespace

TEST(StyleStats, TwoTokenExample) {
    PrecisionGuard g(Precision::f64);
    // Class token first (ignored), then tokens 1 and 3.
    auto t = Tensor::from_values({1, 3, 1}, {100.0, 1.0, 3.0});
    auto s = token_statistics(t);
    EXPECT_DOUBLE_EQ(s.mu.item(), 2.0);
    EXPECT_NEAR(s.sigma.item(), 1.0, 1e-5);
    EXPECT_DOUBLE_EQ(s.sigma.item(), std::sqrt(1.0 + kStatEps));
}

TEST(StyleStats, ConstantTokensGiveEpsFloor) {
    PrecisionGuard g(Precision::f64);
    auto s = token_statistics(Tensor::full({2, 5, 3}, 4.0));
    for (double v : s.sigma.values()) EXPECT_DOUBLE_EQ(v, std::sqrt(1e-5));
}

TEST(StyleStats, MatchesTwoPassOracle) {
    PrecisionGuard g(Precision::f64);
    Rng rng(1);
    auto t = random_tensor({3, 6, 4}, rng, 2.0);
    std::vector<double> mu, sigma;
    reference_stats(t, mu, sigma);
    auto s = token_statistics(t);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        EXPECT_NEAR(s.mu.values()[i], mu[i], 1e-12);
        EXPECT_NEAR(s.sigma.values()[i], sigma[i], 1e-12);
    }
}

TEST(StyleStats, Gradients) {
    Rng rng(2);
    expect_gradients_match(
        [](auto& in) {
            auto s = token_statistics(in[0]);
            return concat({s.mu, s.sigma}, 1);
        },
        {random_tensor({2, 4, 3}, rng)});
}

TEST(MixStatistics, LambdaEndpointsAndIdentity) {
    Rng rng(3);
    auto stats = token_statistics(random_tensor({4, 5, 3}, rng));
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    auto ones = mix_statistics(stats, perm, Tensor::full({4, 1}, 1.0));
    EXPECT_EQ(ones.mu.to_vector(), stats.mu.to_vector());
    EXPECT_EQ(ones.sigma.to_vector(), stats.sigma.to_vector());

    auto zeros = mix_statistics(stats, perm, Tensor::zeros({4, 1}));
    for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t c = 0; c < 3; ++c) {
            EXPECT_EQ(zeros.mu.at({b, c}), stats.mu.at({perm[b], c}));
            EXPECT_EQ(zeros.sigma.at({b, c}), stats.sigma.at({perm[b], c}));
        }

    std::vector<double> lam;
    for (int i = 0; i < 4; ++i) lam.push_back(uniform01(rng));
    auto same = mix_statistics(stats, {0, 1, 2, 3}, Tensor::from_values({4, 1}, lam));
    EXPECT_EQ(same.mu.to_vector(), stats.mu.to_vector());
    EXPECT_EQ(same.sigma.to_vector(), stats.sigma.to_vector());
}

TEST(MixStatistics, RejectsBadInputs) {
    Rng rng(4);
    auto stats = token_statistics(random_tensor({3, 4, 2}, rng));
    EXPECT_THROW(mix_statistics(stats, {0, 0, 1}, Tensor::full({3, 1}, 0.5)), std::invalid_argument);
    EXPECT_THROW(mix_statistics(stats, {0, 1, 2}, Tensor::full({3, 1}, 1.5)), std::invalid_argument);
    EXPECT_THROW(mix_statistics(stats, {0, 1}, Tensor::full({3, 1}, 0.5)), std::invalid_argument);
}

TEST(DrawStyleMix, ProbabilityAndRngUse) {
    DspConfig never;
    never.probability = 0.0;
    Rng a(5), b(5);
    EXPECT_FALSE(draw_style_mix(never, 4, a).has_value());
    b();  // a skipped exactly one draw, the Bernoulli trial
    EXPECT_EQ(a(), b());

    DspConfig off;
    off.active = false;
    Rng c(6), d(6);
    EXPECT_FALSE(draw_style_mix(off, 4, c).has_value());
    EXPECT_EQ(c(), d());  // inactive mixing consumes nothing

    DspConfig always;
    always.probability = 1.0;
    Rng e(7);
    auto m = draw_style_mix(always, 6, e);
    ASSERT_TRUE(m.has_value());
    auto sorted = m->permutation;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(sorted[i], i);
    EXPECT_EQ(m->lambda.shape(), (Shape{6, 1}));
}

TEST(DrawStyleMix, FiringRateMatchesProbability) {
    DspConfig dsp;
    Rng rng(8);
    int fired = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) fired += draw_style_mix(dsp, 4, rng).has_value();
    EXPECT_NEAR(double(fired) / n, 0.5, 0.015);
}

TEST(StyleFeature, AveragesLayers) {
    PrecisionGuard g(Precision::f64);
    Rng rng(9);
    auto out = fake_output(rng, 2, 5, 3, 3);
    auto f = style_feature(out, std::nullopt);
    ASSERT_EQ(f.shape(), (Shape{2, 6}));
    std::vector<double> acc(12, 0.0);
    for (const auto& t : out.layer_tokens) {
        std::vector<double> mu, sigma;
        reference_stats(t, mu, sigma);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t c = 0; c < 3; ++c) {
                acc[b * 6 + c] += mu[b * 3 + c] / 3.0;
                acc[b * 6 + 3 + c] += sigma[b * 3 + c] / 3.0;
            }
    }
    for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(f.values()[i], acc[i], 1e-12);
}

TEST(ContentFeature, NormalizedPerChannel) {
    PrecisionGuard g(Precision::f64);
    Rng rng(10);
    auto out = fake_output(rng, 2, 7, 4, 2);
    auto c = content_feature(out);
    ASSERT_EQ(c.shape(), (Shape{2, 7, 4}));
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t ch = 0; ch < 4; ++ch) {
            double m = 0, v = 0;
            for (std::size_t i = 0; i < 7; ++i) m += c.at({b, i, ch}) / 7.0;
            for (std::size_t i = 0; i < 7; ++i) v += (c.at({b, i, ch}) - m) * (c.at({b, i, ch}) - m) / 7.0;
            EXPECT_NEAR(m, 0.0, 1e-12);
            EXPECT_NEAR(v, 1.0, 1e-3);
        }
}

TEST(ContentFeature, UnaffectedByStyleDraw) {
    Rng rng(11);
    auto out = fake_output(rng, 4, 5, 3, 2);
    auto before = content_feature(out).to_vector();
    DspConfig dsp;
    dsp.probability = 1.0;
    Rng mix(12);
    auto mixed = style_feature(out, dsp, mix);
    auto plain = style_feature(out, std::nullopt);
    EXPECT_NE(mixed.to_vector(), plain.to_vector());
    EXPECT_EQ(content_feature(out).to_vector(), before);
}
