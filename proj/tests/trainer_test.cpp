#include <gtest/gtest.h>

#include <cmath>

#include "cfpl/trainer.hpp"

using namespace cfpl;

namespace {

RunConfig quick_config(std::size_t steps = 6) {
    RunConfig c = RunConfig::tiny();
    c.train.max_steps = steps;
    c.train.batch = 6;
    return c;
}

const Dataset& small_data() {
    static const Dataset d = [] {
        SynthOptions o;
        o.domains = 2;
        o.per_class = 8;
        return synth_in_memory(o);
    }();
    return d;
}

}  // namespace

TEST(Schedule, CosineEndpoints) {
    TrainConfig t;
    for (std::size_t total : {2, 17, 500}) {
        EXPECT_NEAR(cosine_lr(t, 0, total), t.base_lr, 1e-9);
        EXPECT_NEAR(cosine_lr(t, total - 1, total), t.min_lr, 1e-9);
        for (std::size_t s = 1; s < total; ++s) EXPECT_LE(cosine_lr(t, s, total), cosine_lr(t, s - 1, total));
    }
}

TEST(Schedule, StepBudget) {
    TrainConfig t;
    t.batch = 12;
    t.epochs = 3;
    EXPECT_EQ(steps_per_epoch(25, 12), 3u);
    EXPECT_EQ(total_steps(t, 25), 9u);
    t.max_steps = 40;
    EXPECT_EQ(total_steps(t, 25), 40u);
}

TEST(AdamWTest, FirstStepMatchesHandComputation) {
    PrecisionGuard g(Precision::f64);
    ParameterRegistry reg;
    auto w = reg.add("w", Tensor::from_values({1, 2}, {1.0, -2.0}));
    auto b = reg.add("b", Tensor::from_values({2}, {0.5, 0.5}));
    sum_all(add(mul(w, Tensor::from_values({1, 2}, {3.0, -4.0})), b)).backward();
    TrainConfig t;
    AdamW opt(t);
    const double lr = 0.1;
    opt.step(reg.all(), lr);
    // Step 1: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
    auto upd = [&](double gval) { return lr * gval / (std::abs(gval) + t.adam_eps); };
    EXPECT_NEAR(w.values()[0], 1.0 * (1 - lr * t.weight_decay) - upd(3.0), 1e-15);
    EXPECT_NEAR(w.values()[1], -2.0 * (1 - lr * t.weight_decay) - upd(-4.0), 1e-15);
    // Vectors are not decayed.
    EXPECT_NEAR(b.values()[0], 0.5 - upd(1.0), 1e-15);
}

TEST(AdamWTest, SkipsFrozenAndGradless) {
    ParameterRegistry reg;
    auto a = reg.add("a", Tensor::from_values({2, 2}, {1, 2, 3, 4}), true);
    auto c = reg.add("c", Tensor::from_values({2, 2}, {1, 2, 3, 4}));
    AdamW opt(TrainConfig{});
    opt.step(reg.all(), 0.1);
    EXPECT_EQ(a.to_vector(), (std::vector<double>{1, 2, 3, 4}));
    EXPECT_EQ(c.to_vector(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Batches, BalancedAndDeterministic) {
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) labels.push_back(i % 3 == 0 ? 1 : 0);
    for (std::size_t step = 0; step < 20; ++step) {
        auto idx = plan_batch(labels, 12, 5, step);
        ASSERT_EQ(idx.size(), 12u);
        int live = 0;
        for (auto i : idx) live += labels[i];
        EXPECT_EQ(live, 6);
        EXPECT_EQ(idx, plan_batch(labels, 12, 5, step));
    }
    EXPECT_NE(plan_batch(labels, 12, 5, 0), plan_batch(labels, 12, 6, 0));
    EXPECT_THROW(plan_batch(std::vector<int>(10, 1), 4, 0, 0), std::invalid_argument);
}

TEST(Batches, EveryLiveSampleVisitedPerCycle) {
    std::vector<int> labels(20, 0);
    for (int i = 0; i < 10; ++i) labels[i] = 1;
    std::vector<int> seen(20, 0);
    for (std::size_t step = 0; step < 5; ++step)
        for (auto i : plan_batch(labels, 4, 9, step)) seen[i]++;
    for (int i = 0; i < 10; ++i) EXPECT_EQ(seen[i], 1) << i;
}

TEST(Training, DeterministicLossTrace) {
    auto a = train(quick_config(), small_data());
    auto b = train(quick_config(), small_data());
    ASSERT_EQ(a.log.size(), 6u);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        EXPECT_EQ(a.log[i].loss_cls, b.log[i].loss_cls);
        EXPECT_EQ(a.log[i].loss_ptm, b.log[i].loss_ptm);
        EXPECT_EQ(a.log[i].lr, b.log[i].lr);
    }
    EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
}

TEST(Training, TextEncoderUntouched) {
    const RunConfig c = quick_config();
    CfplModel init(c, ModelInit{c.train.seed});
    auto r = train(c, small_data());
    std::size_t checked = 0;
    for (const auto& p : init.parameters().all()) {
        const auto* after = r.checkpoint.find_parameter(p.name);
        ASSERT_NE(after, nullptr);
        if (p.name.rfind("text.", 0) == 0) {
            EXPECT_EQ(after->values, p.tensor.to_vector()) << p.name;
            ++checked;
        } else if (p.name == "fc_cls.weight" || p.name == "image.patch_embed.weight") {
            EXPECT_NE(after->values, p.tensor.to_vector()) << p.name;
        }
    }
    EXPECT_GT(checked, 0u);
}

TEST(Training, SingleClassRejected) {
    Dataset live_only = small_data();
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < live_only.size(); ++i)
        if (live_only.labels[i] == kLiveLabel) keep.push_back(i);
    EXPECT_THROW(train(quick_config(), live_only.subset(keep)), std::invalid_argument);
}

TEST(Training, LogLineFormat) {
    EXPECT_EQ(std::string(kLogHeader), "step,loss_cls,loss_ptm,lr");
    EXPECT_EQ(format_log_line({3, 0.5, 0.25, 1e-3}), "3,0.5,0.25,0.001");
}

TEST(Training, AblationsChangeTheLossTerms) {
    RunConfig c = quick_config(2);
    c.ablation.ptm = false;
    auto r = train(c, small_data());
    for (const auto& e : r.log) EXPECT_EQ(e.loss_ptm, 0.0);
    c.ablation = AblationToggles{false, false, false, ModulationMode::gate};
    EXPECT_NO_THROW(train(c, small_data()));
    c.ablation = AblationToggles{true, true, true, ModulationMode::mean};
    EXPECT_NO_THROW(train(c, small_data()));
}

TEST(Checkpoint, ByteStableRoundTrip) {
    auto r = train(quick_config(3), small_data());
    const auto bytes = encode_checkpoint(r.checkpoint);
    EXPECT_EQ(bytes.substr(0, 4), "CFPL");
    const auto back = decode_checkpoint(bytes);
    EXPECT_EQ(encode_checkpoint(back), bytes);
    EXPECT_EQ(back.step, 3u);
    EXPECT_FALSE(back.optimizer.empty());

    auto path = std::filesystem::temp_directory_path() / "cfpl_ckpt_test.bin";
    save_checkpoint(path, r.checkpoint);
    const auto loaded = load_checkpoint(path);
    EXPECT_EQ(evaluate_scores(loaded, small_data()).scores, evaluate_scores(r.checkpoint, small_data()).scores);
}

TEST(Checkpoint, CorruptInputsRejected) {
    auto r = train(quick_config(1), small_data());
    auto bytes = encode_checkpoint(r.checkpoint);
    EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), std::runtime_error);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), std::runtime_error);
    EXPECT_THROW(decode_checkpoint(bytes + "x"), std::runtime_error);
    EXPECT_THROW(load_checkpoint("no_such_checkpoint.bin"), std::runtime_error);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
    const RunConfig c = quick_config(6);
    auto full = train(c, small_data());
    Trainer first(c, small_data());
    for (int i = 0; i < 3; ++i) first.step();
    const auto mid = decode_checkpoint(encode_checkpoint(first.checkpoint()));
    Trainer second(mid, small_data());
    std::vector<TrainLogEntry> tail;
    while (!second.finished()) tail.push_back(second.step());
    ASSERT_EQ(tail.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(tail[i].loss_cls, full.log[3 + i].loss_cls);
    EXPECT_EQ(encode_checkpoint(second.checkpoint()), encode_checkpoint(full.checkpoint));
}

TEST(Evaluation, ScoresInRangeAndDuplicatesAgree) {
    auto r = train(quick_config(2), small_data());
    Dataset dup = small_data().subset({0, 5, 0, 5});
    auto s = evaluate_scores(r.checkpoint, dup);
    ASSERT_EQ(s.scores.size(), 4u);
    EXPECT_EQ(s.scores[0], s.scores[2]);
    EXPECT_EQ(s.scores[1], s.scores[3]);
    for (double v : evaluate_scores(r.checkpoint, small_data()).scores) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(s.domains[0], small_data().domains[0]);
}

TEST(Evaluation, BatchCompositionDoesNotMatter) {
    auto r = train(quick_config(2), small_data());
    auto all = evaluate_scores(r.checkpoint, small_data());
    auto one = evaluate_scores(r.checkpoint, small_data().subset({7}));
    EXPECT_EQ(one.scores[0], all.scores[7]);
}

TEST(Evaluation, Accuracy) {
    ScoreSet s{{0.9, 0.2, 0.6, 0.4}, {1, 0, 0, 0}, {}};
    EXPECT_DOUBLE_EQ(accuracy(s), 0.75);
}

TEST(GradCheckModel, CoversEveryGroup) {
    auto r = grad_check_model(RunConfig::tiny(), 21);
    ASSERT_EQ(r.groups.size(), 7u);
    for (const auto& g : r.groups) {
        EXPECT_EQ(g.coordinates, 3u) << g.group;
        EXPECT_LT(g.max_rel_error, 1e-4) << g.group;
        EXPECT_NE(g.group, "frozen");
    }
    for (const auto& e : r.detail.entries) EXPECT_NE(e.name.rfind("text.", 0), 0u);
}

TEST(GradCheckModel, StepSizesAgree) {
    auto a = grad_check_model(RunConfig::tiny(), 14, 1e-5);
    auto b = grad_check_model(RunConfig::tiny(), 14, 1e-6);
    ASSERT_EQ(a.detail.entries.size(), b.detail.entries.size());
    for (std::size_t i = 0; i < a.detail.entries.size(); ++i) {
        EXPECT_EQ(a.detail.entries[i].analytic, b.detail.entries[i].analytic);
    }
    // Both step sizes land within one order of magnitude of the 1e-4
    // tolerance, and their difference quotients agree to that level.
    EXPECT_LT(a.max_rel_error, 1e-3);
    EXPECT_LT(b.max_rel_error, 1e-3);
    for (std::size_t i = 0; i < a.detail.entries.size(); ++i) {
        EXPECT_LT(relative_error(a.detail.entries[i].numeric, b.detail.entries[i].numeric), 1e-3);
    }
}

TEST(GroupNames, Mapping) {
    EXPECT_EQ(parameter_group("image.blocks.0.attn.q.weight"), "image_encoder");
    EXPECT_EQ(parameter_group("cqf.queries"), "queries");
    EXPECT_EQ(parameter_group("sqf.block0.mlp.fc1.bias"), "sqf");
    EXPECT_EQ(parameter_group("text.positions"), "frozen");
    EXPECT_THROW(parameter_group("mystery"), std::invalid_argument);
}
