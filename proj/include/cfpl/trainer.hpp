#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cfpl/checkpoint.hpp"
#include "cfpl/config.hpp"
#include "cfpl/dataset.hpp"
#include "cfpl/gradcheck.hpp"
#include "cfpl/metrics.hpp"
#include "cfpl/model.hpp"

namespace cfpl {

struct TrainLogEntry {
    std::size_t step = 0;
    double loss_cls = 0.0;
    double loss_ptm = 0.0;
    double lr = 0.0;
};

inline constexpr const char* kLogHeader = "step,loss_cls,loss_ptm,lr";
std::string format_log_line(const TrainLogEntry& e);

std::size_t steps_per_epoch(std::size_t dataset_size, std::size_t batch);
// max_steps when set, otherwise epochs * ceil(N / B).
std::size_t total_steps(const TrainConfig& config, std::size_t dataset_size);
// Cosine decay from base_lr at step 0 to min_lr at step total - 1.
double cosine_lr(const TrainConfig& config, std::size_t step, std::size_t total);

// Adam with decoupled weight decay. Decay applies to matrices and larger
// tensors only; gains, biases and vectors are not decayed.
class AdamW {
public:
    explicit AdamW(const TrainConfig& config) : config_(config) {}
    void step(const std::vector<Parameter>& params, double lr);
    std::size_t steps_taken() const { return t_; }

    std::vector<TensorBlock> export_state(const std::vector<Parameter>& params) const;
    void import_state(const std::vector<Parameter>& params, const std::vector<TensorBlock>& blocks, std::size_t t);

private:
    TrainConfig config_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

// Dataset indices for a class-balanced batch: floor(B/2) live and the rest
// spoof, drawn without replacement from per-class shuffles that reshuffle
// once exhausted, then shuffled together. Pure function of (seed, step).
std::vector<std::size_t> plan_batch(const std::vector<int>& labels, std::size_t batch, std::uint64_t seed,
                                    std::size_t step);

// [B, 3, S, S] pixels. With `augment`, each slot gets a random resized crop
// and flip from an rng keyed on (seed, step, slot); otherwise a full-frame
// resize.
Tensor assemble_images(const Dataset& data, const std::vector<std::size_t>& indices, std::size_t size, bool augment,
                       double crop_scale_min, bool flip, std::uint64_t seed, std::size_t step);

class Trainer {
public:
    Trainer(const RunConfig& config, const Dataset& data);
    // Resumes from a checkpoint; continues bit-identically to an
    // uninterrupted run.
    Trainer(const Checkpoint& ckpt, const Dataset& data);

    TrainLogEntry step();
    bool finished() const { return step_ >= total_; }
    std::size_t current_step() const { return step_; }
    std::size_t planned_steps() const { return total_; }

    const CfplModel& model() const { return *model_; }
    Checkpoint checkpoint() const;

private:
    void check_data() const;

    RunConfig config_;
    const Dataset* data_;
    std::unique_ptr<CfplModel> model_;
    AdamW optimizer_;
    std::size_t step_ = 0;
    std::size_t total_ = 0;
};

struct TrainOptions {
    std::function<void(const TrainLogEntry&)> on_step;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TrainLogEntry> log;
};

TrainResult train(const RunConfig& config, const Dataset& data, const TrainOptions& options = {});

// Liveness scores with DSP off and a full-frame resize.
ScoreSet evaluate_scores(const CfplModel& model, const Dataset& data);
ScoreSet evaluate_scores(const Checkpoint& ckpt, const Dataset& data);
// Fraction classified correctly at score threshold 0.5.
double accuracy(const ScoreSet& scores);

// image_encoder, cqf, sqf, queries, fc_ptm, fc_cls, gate; "frozen" for the
// text tower.
std::string parameter_group(const std::string& name);
std::vector<std::string> trainable_groups();

struct GroupGradError {
    std::string group;
    std::size_t coordinates = 0;
    double max_rel_error = 0.0;
};

struct ModelGradCheck {
    std::vector<GroupGradError> groups;
    GradCheckReport detail;
    double max_rel_error = 0.0;
};

// Central-difference check of L_total on a small synthetic batch in f64 mode.
// Coordinates are spread round-robin over the trainable groups. Style mixing
// is forced on and its draws, like the mined negatives, are frozen after the
// first pass so the loss is a fixed function of the parameters.
ModelGradCheck grad_check_model(const RunConfig& config, std::size_t sample_count, double h = 1e-5,
                                std::uint64_t seed = 0);

}  // namespace cfpl
