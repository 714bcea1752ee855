#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cfpl/config.hpp"
#include "cfpl/encoders.hpp"
#include "cfpl/modulation.hpp"
#include "cfpl/ptm.hpp"
#include "cfpl/qformer.hpp"
#include "cfpl/style_content.hpp"

namespace cfpl {

struct ModelInit {
    std::uint64_t seed = 0;
    bool zero_heads = false;                // fc_ptm and fc_cls start at zero
    bool zero_qformer_outputs = false;      // Q-Former output projections start at zero
};

// Randomness consumed by a training forward pass. Overrides pin the draws so
// the loss becomes a deterministic function of the parameters.
struct ForwardRandomness {
    Rng* style_mix = nullptr;
    Rng* mining = nullptr;
    const std::optional<MixDraw>* mix_override = nullptr;
    const NegativeIndices* negatives_override = nullptr;
};

struct ForwardResult {
    Tensor logits;      // [B, 2]
    Tensor loss_cls;
    Tensor loss_ptm;    // zero scalar when PTM is disabled
    Tensor loss_total;
    Tensor content_feature;
    Tensor style_feature;
    Tensor visual_feature;
    std::optional<MixDraw> mix;
    std::optional<NegativeIndices> negatives;
};

// Image encoder -> content/style features -> CQF/SQF prompts -> PTM and
// prompt modulation -> live/spoof logits.
class CfplModel {
public:
    CfplModel(const RunConfig& config, const ModelInit& init);
    CfplModel(const CfplModel&) = delete;
    CfplModel& operator=(const CfplModel&) = delete;

    // Training pass with losses. Style mixing follows config.train.dsp when the
    // dsp toggle is on.
    ForwardResult forward_train(const Tensor& images, const std::vector<int>& labels, const ForwardRandomness& rnd) const;

    // Inference logits: no style mixing, no PTM branch.
    Tensor forward_eval(const Tensor& images) const;
    std::vector<double> liveness(const Tensor& images) const;

    const RunConfig& config() const { return config_; }
    ParameterRegistry& parameters() { return registry_; }
    const ParameterRegistry& parameters() const { return registry_; }

    const ImageEncoder& image_encoder() const { return image_; }
    const TextEncoder& text_encoder() const { return text_; }
    const QFormer& content_qformer() const { return cqf_; }
    const QFormer& style_qformer() const { return sqf_; }

private:
    Tensor classify(const EncoderOutput& enc, const Tensor& content_prompt, const Tensor& style_prompt) const;

    RunConfig config_;
    ParameterRegistry registry_;
    Rng image_rng_;
    Rng text_rng_;
    Rng cqf_rng_;
    Rng sqf_rng_;
    Rng head_rng_;
    ImageEncoder image_;
    TextEncoder text_;
    QFormer cqf_;
    QFormer sqf_;
    Linear fc_ptm_;
    Linear fc_cls_;
    GateParams gate_;
};

}  // namespace cfpl
