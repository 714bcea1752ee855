#include "cfpl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace cfpl {

namespace {

// Streams for derive_seed; each consumer of training randomness gets its own.
enum TrainStream : std::uint64_t {
    kLiveOrder = 101,
    kSpoofOrder,
    kBatchShuffle,
    kAugment,
    kStyleMix,
    kMining,
    kCheckData,
    kCheckCoords,
};

constexpr std::size_t kEvalChunk = 32;
constexpr std::size_t kCheckBatch = 4;

std::vector<std::size_t> shuffled(std::vector<std::size_t> v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i)), i - 1);
        std::swap(v[i - 1], v[j]);
    }
    return v;
}

// The k-th draw (0-based, counting across steps) from a class pool that is
// reshuffled every time it runs dry.
std::size_t nth_draw(const std::vector<std::size_t>& pool, std::uint64_t seed, std::uint64_t stream, std::size_t k) {
    const std::size_t cycle = k / pool.size();
    Rng rng(derive_seed(seed, stream, cycle));
    return shuffled(pool, rng)[k % pool.size()];
}

double round_p(double v) { return round_to_precision(v); }

}  // namespace

std::string format_log_line(const TrainLogEntry& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g", e.step, e.loss_cls, e.loss_ptm, e.lr);
    return buf;
}

std::size_t steps_per_epoch(std::size_t dataset_size, std::size_t batch) {
    if (batch == 0) throw std::invalid_argument("batch must be positive");
    return (dataset_size + batch - 1) / batch;
}

std::size_t total_steps(const TrainConfig& config, std::size_t dataset_size) {
    if (config.max_steps > 0) return config.max_steps;
    return config.epochs * steps_per_epoch(dataset_size, config.batch);
}

double cosine_lr(const TrainConfig& config, std::size_t step, std::size_t total) {
    if (total <= 1) return config.base_lr;
    const double progress = static_cast<double>(std::min(step, total - 1)) / static_cast<double>(total - 1);
    return config.min_lr + 0.5 * (config.base_lr - config.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamW::step(const std::vector<Parameter>& params, double lr) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
    }
    if (m_.size() != params.size()) throw std::logic_error("optimizer bound to a different parameter list");
    ++t_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Parameter& p = params[i];
        if (p.frozen || !p.tensor.has_grad()) continue;
        Tensor t = p.tensor;
        auto g = t.grad();
        auto x = t.values_mut();
        auto& m = m_[i];
        auto& v = v_[i];
        if (m.empty()) {
            m.assign(x.size(), 0.0);
            v.assign(x.size(), 0.0);
        }
        const double decay = t.dim() >= 2 ? 1.0 - lr * config_.weight_decay : 1.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            m[k] = round_p(b1 * m[k] + (1.0 - b1) * g[k]);
            v[k] = round_p(b2 * v[k] + (1.0 - b2) * g[k] * g[k]);
            const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.adam_eps);
            x[k] = round_p(x[k] * decay - lr * update);
        }
    }
}

std::vector<TensorBlock> AdamW::export_state(const std::vector<Parameter>& params) const {
    std::vector<TensorBlock> out;
    for (std::size_t i = 0; i < m_.size() && i < params.size(); ++i) {
        if (m_[i].empty()) continue;
        out.push_back({"adam.m/" + params[i].name, params[i].tensor.shape(), m_[i]});
        out.push_back({"adam.v/" + params[i].name, params[i].tensor.shape(), v_[i]});
    }
    return out;
}

void AdamW::import_state(const std::vector<Parameter>& params, const std::vector<TensorBlock>& blocks, std::size_t t) {
    m_.assign(params.size(), {});
    v_.assign(params.size(), {});
    t_ = t;
    for (const auto& b : blocks) {
        const bool is_m = b.name.rfind("adam.m/", 0) == 0;
        const bool is_v = b.name.rfind("adam.v/", 0) == 0;
        if (!is_m && !is_v) throw std::runtime_error("unknown optimizer block " + b.name);
        const std::string target = b.name.substr(7);
        bool matched = false;
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i].name != target) continue;
            if (params[i].tensor.shape() != b.shape) throw std::runtime_error("optimizer shape mismatch for " + target);
            (is_m ? m_[i] : v_[i]) = b.values;
            matched = true;
            break;
        }
        if (!matched) throw std::runtime_error("optimizer state for unknown parameter " + target);
    }
}

std::vector<std::size_t> plan_batch(const std::vector<int>& labels, std::size_t batch, std::uint64_t seed,
                                    std::size_t step) {
    if (batch < 2) throw std::invalid_argument("batch must hold at least 2 samples");
    std::vector<std::size_t> live;
    std::vector<std::size_t> spoof;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == kLiveLabel ? live : spoof).push_back(i);
    if (live.empty() || spoof.empty()) throw std::invalid_argument("training data must contain both live and spoof samples");

    const std::size_t n_live = batch / 2;
    const std::size_t n_spoof = batch - n_live;
    std::vector<std::size_t> out;
    out.reserve(batch);
    for (std::size_t j = 0; j < n_live; ++j) out.push_back(nth_draw(live, seed, kLiveOrder, step * n_live + j));
    for (std::size_t j = 0; j < n_spoof; ++j) out.push_back(nth_draw(spoof, seed, kSpoofOrder, step * n_spoof + j));
    Rng rng(derive_seed(seed, kBatchShuffle, step));
    return shuffled(std::move(out), rng);
}

Tensor assemble_images(const Dataset& data, const std::vector<std::size_t>& indices, std::size_t size, bool augment,
                       double crop_scale_min, bool flip, std::uint64_t seed, std::size_t step) {
    const std::size_t plane = 3 * size * size;
    std::vector<double> pixels(indices.size() * plane);
    for (std::size_t slot = 0; slot < indices.size(); ++slot) {
        const RgbImage& img = data.images.at(indices[slot]);
        CropBox box = full_frame(img);
        if (augment) {
            Rng rng(derive_seed(seed, kAugment, step * indices.size() + slot));
            box = random_resized_crop(img, crop_scale_min, flip, rng);
        }
        resample_chw(img, box, size, pixels.data() + slot * plane);
    }
    return Tensor::from_values({indices.size(), 3, size, size}, std::move(pixels));
}

Trainer::Trainer(const RunConfig& config, const Dataset& data)
    : config_(config), data_(&data), optimizer_(config.train) {
    config_.validate();
    check_data();
    PrecisionGuard guard(config_.precision);
    model_ = std::make_unique<CfplModel>(config_, ModelInit{config_.train.seed});
    total_ = total_steps(config_.train, data.size());
}

Trainer::Trainer(const Checkpoint& ckpt, const Dataset& data)
    : config_(ckpt.config), data_(&data), optimizer_(ckpt.config.train) {
    config_.validate();
    check_data();
    PrecisionGuard guard(config_.precision);
    model_ = restore_model(ckpt);
    optimizer_.import_state(model_->parameters().all(), ckpt.optimizer, ckpt.step);
    step_ = ckpt.step;
    total_ = total_steps(config_.train, data.size());
}

void Trainer::check_data() const {
    if (data_->size() == 0) throw std::invalid_argument("training manifest is empty");
    bool live = false;
    bool spoof = false;
    for (int y : data_->labels) (y == kLiveLabel ? live : spoof) = true;
    if (!live || !spoof) throw std::invalid_argument("training manifest holds a single class; need live and spoof");
}

TrainLogEntry Trainer::step() {
    if (finished()) throw std::logic_error("training already finished");
    PrecisionGuard guard(config_.precision);
    const auto& tc = config_.train;
    const double lr = cosine_lr(tc, step_, total_);
    const auto idx = plan_batch(data_->labels, tc.batch, tc.seed, step_);
    std::vector<int> labels;
    for (auto i : idx) labels.push_back(data_->labels[i]);
    Tensor images = assemble_images(*data_, idx, config_.image.image_size, true, tc.crop_scale_min, tc.flip, tc.seed, step_);

    Rng mix_rng(derive_seed(tc.seed, kStyleMix, step_));
    Rng mining_rng(derive_seed(tc.seed, kMining, step_));
    ForwardRandomness rnd;
    rnd.style_mix = &mix_rng;
    rnd.mining = &mining_rng;

    auto& params = model_->parameters();
    params.zero_grad();
    ForwardResult r = model_->forward_train(images, labels, rnd);
    TrainLogEntry entry{step_, r.loss_cls.item(), r.loss_ptm.item(), lr};
    if (!std::isfinite(r.loss_total.item())) {
        throw std::runtime_error("non-finite loss at step " + std::to_string(step_) + ": " + format_log_line(entry));
    }
    r.loss_total.backward();
    optimizer_.step(params.all(), lr);
    params.zero_grad();
    ++step_;
    return entry;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint c;
    c.config = config_;
    c.step = step_;
    c.parameters = snapshot_parameters(*model_);
    c.optimizer = optimizer_.export_state(model_->parameters().all());
    return c;
}

TrainResult train(const RunConfig& config, const Dataset& data, const TrainOptions& options) {
    Trainer trainer(config, data);
    TrainResult result;
    while (!trainer.finished()) {
        auto entry = trainer.step();
        if (options.on_step) options.on_step(entry);
        result.log.push_back(entry);
    }
    result.checkpoint = trainer.checkpoint();
    return result;
}

ScoreSet evaluate_scores(const CfplModel& model, const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("evaluation set is empty");
    PrecisionGuard guard(model.config().precision);
    NoGradGuard no_grad;
    ScoreSet s;
    const std::size_t size = model.config().image.image_size;
    for (std::size_t start = 0; start < data.size(); start += kEvalChunk) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(data.size(), start + kEvalChunk); ++i) idx.push_back(i);
        const auto scores = model.liveness(assemble_images(data, idx, size, false, 1.0, false, 0, 0));
        s.scores.insert(s.scores.end(), scores.begin(), scores.end());
    }
    s.labels = data.labels;
    s.domains = data.domains;
    return s;
}

ScoreSet evaluate_scores(const Checkpoint& ckpt, const Dataset& data) {
    auto model = restore_model(ckpt);
    return evaluate_scores(*model, data);
}

double accuracy(const ScoreSet& scores) {
    if (scores.scores.empty()) throw std::invalid_argument("accuracy of an empty score set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.scores.size(); ++i) {
        const int predicted = scores.scores[i] >= 0.5 ? kLiveLabel : kSpoofLabel;
        if (predicted == scores.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.scores.size());
}

std::string parameter_group(const std::string& name) {
    auto starts = [&](const char* p) { return name.rfind(p, 0) == 0; };
    if (starts("image.")) return "image_encoder";
    if (starts("text.")) return "frozen";
    if (name == "cqf.queries" || name == "sqf.queries") return "queries";
    if (starts("cqf.")) return "cqf";
    if (starts("sqf.")) return "sqf";
    if (starts("fc_ptm.")) return "fc_ptm";
    if (starts("fc_cls.")) return "fc_cls";
    if (starts("gate.")) return "gate";
    throw std::invalid_argument("parameter " + name + " belongs to no group");
}

std::vector<std::string> trainable_groups() {
    return {"image_encoder", "cqf", "sqf", "queries", "fc_ptm", "fc_cls", "gate"};
}

ModelGradCheck grad_check_model(const RunConfig& config, std::size_t sample_count, double h, std::uint64_t seed) {
    RunConfig cfg = config;
    cfg.precision = Precision::f64;
    cfg.ablation = AblationToggles{};
    cfg.train.dsp.active = true;
    cfg.train.dsp.probability = 1.0;
    cfg.validate();
    PrecisionGuard guard(Precision::f64);

    CfplModel model(cfg, ModelInit{seed});
    SynthOptions so;
    so.domains = 2;
    so.per_class = 8;
    so.seed = derive_seed(seed, kCheckData);
    so.image_size = cfg.image.image_size;
    const Dataset data = synth_in_memory(so);
    const auto idx = plan_batch(data.labels, kCheckBatch, seed, 0);
    std::vector<int> labels;
    for (auto i : idx) labels.push_back(data.labels[i]);
    const Tensor images = assemble_images(data, idx, cfg.image.image_size, false, 1.0, false, seed, 0);

    Rng mix_rng(derive_seed(seed, kStyleMix));
    Rng mining_rng(derive_seed(seed, kMining));
    ForwardRandomness first;
    first.style_mix = &mix_rng;
    first.mining = &mining_rng;
    const ForwardResult probe = model.forward_train(images, labels, first);
    if (!probe.mix || !probe.negatives) throw std::logic_error("gradient check expects style mixing and PTM active");
    const std::optional<MixDraw> mix = probe.mix;
    const NegativeIndices negatives = *probe.negatives;
    ForwardRandomness pinned;
    pinned.mix_override = &mix;
    pinned.negatives_override = &negatives;
    auto loss = [&]() { return model.forward_train(images, labels, pinned).loss_total; };

    const auto groups = trainable_groups();
    std::vector<std::vector<const Parameter*>> members(groups.size());
    for (const auto& p : model.parameters().all()) {
        const std::string g = parameter_group(p.name);
        for (std::size_t k = 0; k < groups.size(); ++k) {
            if (groups[k] == g) members[k].push_back(&p);
        }
    }
    Rng coord_rng(derive_seed(seed, kCheckCoords));
    std::vector<GradCoordinate> coords;
    for (std::size_t i = 0; i < sample_count; ++i) {
        const auto& group = members[i % groups.size()];
        std::size_t total = 0;
        for (const Parameter* p : group) total += p->tensor.numel();
        std::size_t flat = std::min(static_cast<std::size_t>(uniform01(coord_rng) * static_cast<double>(total)), total - 1);
        for (const Parameter* p : group) {
            if (flat < p->tensor.numel()) {
                coords.push_back({p, flat});
                break;
            }
            flat -= p->tensor.numel();
        }
    }

    ModelGradCheck out;
    out.detail = finite_diff_gradcheck(loss, coords, h);
    out.max_rel_error = out.detail.max_rel_error;
    for (const auto& g : groups) out.groups.push_back({g, 0, 0.0});
    for (const auto& e : out.detail.entries) {
        const std::string g = parameter_group(e.name);
        for (auto& ge : out.groups) {
            if (ge.group == g) {
                ++ge.coordinates;
                ge.max_rel_error = std::max(ge.max_rel_error, e.rel_error);
            }
        }
    }
    model.parameters().zero_grad();
    return out;
}

}  // namespace cfpl
