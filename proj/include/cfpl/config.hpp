#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "cfpl/encoders.hpp"
#include "cfpl/qformer.hpp"
#include "cfpl/style_content.hpp"
#include "cfpl/tensor.hpp"

namespace cfpl {

enum class ModulationMode { gate, mean };

// Component switches for ablation runs. `pm` off feeds the raw visual
// feature to the classifier; `modulation` picks how weights are formed when
// `pm` is on.
struct AblationToggles {
    bool ptm = true;
    bool dsp = true;
    bool pm = true;
    ModulationMode modulation = ModulationMode::gate;
};

struct TrainConfig {
    std::size_t batch = 12;
    std::size_t epochs = 20;
    std::size_t max_steps = 0;  // 0: epochs decide the step budget
    double base_lr = 5e-5;
    double min_lr = 1e-6;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double crop_scale_min = 0.8;
    bool flip = true;
    std::uint64_t seed = 0;
    DspConfig dsp;
    double mining_temperature = 0.07;
};

// Every tunable of a run. Text form is flat `key = value` lines; unknown keys
// are rejected. A `preset = tiny|paper` line selects the base the other keys
// override.
struct RunConfig {
    EncoderConfig image;
    EncoderConfig text;
    std::size_t query_count = 16;
    std::size_t qformer_depth = 1;
    std::size_t qformer_heads = 8;
    std::size_t gate_reduction = 16;
    TrainConfig train;
    AblationToggles ablation;
    Precision precision = Precision::f32;

    std::size_t width() const { return image.width; }
    QFormerConfig content_qformer() const;
    QFormerConfig style_qformer() const;

    void validate() const;
    // All keys with resolved values in a fixed order; parse() inverts it.
    std::string canonical_text() const;

    static RunConfig paper_defaults();
    // Desk-scale preset used by the acceptance runs.
    static RunConfig tiny();
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    // Applies one key; throws std::invalid_argument for unknown keys or bad
    // values.
    void set(const std::string& key, const std::string& value);
};

}  // namespace cfpl
