#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cfpl/ptm.hpp"
#include "test_util.hpp"

using namespace cfpl;
using cfpl::testing::random_tensor;

TEST(Descriptions, LabelTemplates) {
    auto d = render_descriptions({1, 0});
    EXPECT_EQ(d[0], "a photo of a live face.");
    EXPECT_EQ(d[1], "a photo of a fake face.");
    EXPECT_THROW(render_descriptions({2}), std::invalid_argument);
}

TEST(TextSupervision, MeanRepeated) {
    PrecisionGuard g(Precision::f64);
    Rng rng(1);
    auto e = random_tensor({2, 77, 4}, rng);
    auto s = text_supervision(e, 3);
    ASSERT_EQ(s.shape(), (Shape{2, 3, 4}));
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 4; ++c) {
            double m = 0;
            for (std::size_t i = 0; i < 77; ++i) m += e.at({b, i, c}) / 77.0;
            for (std::size_t q = 0; q < 3; ++q) EXPECT_NEAR(s.at({b, q, c}), m, 1e-12);
        }
}

TEST(Mining, PairForcesOtherIndex) {
    Rng rng(2);
    const std::vector<int> labels{1, 0};
    const std::vector<double> sim{0.9, -0.3, 0.1, 0.5};
    for (int i = 0; i < 100; ++i) {
        auto n = sample_negatives(sim, labels, rng);
        EXPECT_EQ(n.text_for_prompt, (std::vector<std::size_t>{1, 0}));
        EXPECT_EQ(n.prompt_for_text, (std::vector<std::size_t>{1, 0}));
    }
}

TEST(Mining, NeverPicksSameLabel) {
    Rng rng(3);
    const std::vector<int> labels{1, 0, 1, 0, 0, 1};
    std::vector<double> sim(36);
    for (auto& s : sim) s = 2 * uniform01(rng) - 1;
    for (int i = 0; i < 200; ++i) {
        auto n = sample_negatives(sim, labels, rng);
        for (std::size_t k = 0; k < 6; ++k) {
            EXPECT_NE(labels[n.text_for_prompt[k]], labels[k]);
            EXPECT_NE(labels[n.prompt_for_text[k]], labels[k]);
        }
    }
}

TEST(Mining, EqualSimilaritiesAreUniform) {
    // Prompt 0 (live) has three spoof candidates with equal similarity.
    Rng rng(4);
    const std::vector<int> labels{1, 0, 0, 0};
    const std::vector<double> sim(16, 0.2);
    std::vector<int> counts(4, 0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) counts[sample_negatives(sim, labels, rng).text_for_prompt[0]]++;
    EXPECT_EQ(counts[0], 0);
    double chi2 = 0;
    for (int k = 1; k < 4; ++k) chi2 += std::pow(counts[k] - n / 3.0, 2) / (n / 3.0);
    // 2 degrees of freedom; 13.8 is the 0.999 quantile.
    EXPECT_LT(chi2, 13.8);
}

TEST(Mining, LargeGapIsAlmostAlwaysChosen) {
    Rng rng(5);
    const std::vector<int> labels{1, 0, 0};
    std::vector<double> sim(9, 0.0);
    sim[0 * 3 + 1] = 10.0 * kMiningTemperature;  // gap of 10 in logit units
    int hit = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) hit += sample_negatives(sim, labels, rng).text_for_prompt[0] == 1;
    EXPECT_GT(double(hit) / n, 0.999);
}

TEST(Mining, SingleClassBatchRejected) {
    Rng rng(6);
    EXPECT_THROW(sample_negatives(std::vector<double>(4, 0.0), {1, 1}, rng), std::invalid_argument);
}

TEST(Similarity, CosineOfPooledFeatures) {
    PrecisionGuard g(Precision::f64);
    auto p = Tensor::from_values({2, 1, 2}, {1, 0, 0, 1});
    auto t = Tensor::from_values({2, 1, 2}, {2, 0, 1, 1});
    auto s = prompt_text_similarity(p, t);
    EXPECT_NEAR(s[0], 1.0, 1e-12);
    EXPECT_NEAR(s[1], 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(s[2], 0.0, 1e-12);
    EXPECT_NEAR(s[3], 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(JointPairs, ShapeAndLayout) {
    Rng rng(7);
    auto prompts = random_tensor({2, 16, 512}, rng);
    auto texts = random_tensor({2, 16, 512}, rng);
    NegativeIndices neg{{1, 0}, {1, 0}};
    auto m = build_joint_pairs(prompts, texts, neg);
    EXPECT_EQ(m.joint.shape(), (Shape{6, 16, 1024}));
    EXPECT_EQ(m.labels, (std::vector<int>{1, 1, 0, 0, 0, 0}));
    // Row 2 = [P_0 || S_1]; row 4 = [P_1 || S_0].
    EXPECT_EQ(m.joint.at({2, 3, 5}), prompts.at({0, 3, 5}));
    EXPECT_EQ(m.joint.at({2, 3, 512 + 5}), texts.at({1, 3, 5}));
    EXPECT_EQ(m.joint.at({4, 0, 0}), prompts.at({1, 0, 0}));
    EXPECT_EQ(m.joint.at({4, 0, 512}), texts.at({0, 0, 0}));
}

TEST(PtmLoss, ZeroHeadIsLn2) {
    Rng rng(8);
    ParameterRegistry reg;
    InitOptions init{&rng};
    auto head = Linear::create(reg, "fc_ptm", 16, 2, true, init, true);
    auto m = build_joint_pairs(random_tensor({3, 4, 8}, rng), random_tensor({3, 4, 8}, rng), {{1, 2, 0}, {2, 0, 1}});
    EXPECT_NEAR(ptm_loss(m, head).item(), std::numbers::ln2, 1e-7);
}

TEST(PtmLoss, RejectsMismatchedHead) {
    Rng rng(9);
    ParameterRegistry reg;
    InitOptions init{&rng};
    auto head = Linear::create(reg, "fc_ptm", 10, 2, true, init);
    auto m = build_joint_pairs(random_tensor({2, 4, 8}, rng), random_tensor({2, 4, 8}, rng), {{1, 0}, {1, 0}});
    EXPECT_THROW(ptm_loss(m, head), std::invalid_argument);
}

TEST(PtmLoss, Gradients) {
    Rng rng(10);
    ParameterRegistry reg;
    InitOptions init{&rng, 0.5};
    auto head = Linear::create(reg, "fc_ptm", 8, 2, true, init);
    cfpl::testing::expect_gradients_match(
        [&](auto& in) { return ptm_loss(build_joint_pairs(in[0], in[1], {{1, 0}, {1, 0}}), head); },
        {random_tensor({2, 3, 4}, rng), random_tensor({2, 3, 4}, rng)});
}
