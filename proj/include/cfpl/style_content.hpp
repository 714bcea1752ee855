#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "cfpl/encoders.hpp"

namespace cfpl {

inline constexpr double kStatEps = 1e-5;

// Per-sample, per-channel token statistics of one layer.
struct StyleStats {
    Tensor mu;     // [B, d]
    Tensor sigma;  // [B, d], population std with eps inside the root
};

struct DspConfig {
    double alpha = 0.1;
    double probability = 0.5;
    bool active = true;

    void validate() const;
};

// Draws made once per batch when style mixing fires.
struct MixDraw {
    std::vector<std::size_t> permutation;
    Tensor lambda;  // [B, 1]
};

// Token-axis statistics of [B, n, d] tokens, skipping the class token at
// position 0.
StyleStats token_statistics(const Tensor& tokens);

// Convex mix of stats with their batch-permuted copies:
// sigma' = l*sigma + (1-l)*sigma[perm], mu' likewise.
StyleStats mix_statistics(const StyleStats& stats, const std::vector<std::size_t>& perm, const Tensor& lambda);

// One Bernoulli(p) draw; when it fires, a shared permutation and per-sample
// Beta(alpha, alpha) weights. Consumes no randomness when inactive.
std::optional<MixDraw> draw_style_mix(const DspConfig& dsp, std::size_t batch, Rng& rng);

// Mean over layers of [mu || sigma] -> [B, 2d]. With a mix draw, each
// layer's statistics are mixed before concatenation.
Tensor style_feature(const EncoderOutput& out, const std::optional<MixDraw>& mix);
Tensor style_feature(const EncoderOutput& out, const DspConfig& dsp, Rng& rng);

// Last-layer tokens normalized per sample and channel over all n tokens.
Tensor content_feature(const EncoderOutput& out);

}  // namespace cfpl
