#pragma once

#include <cstddef>
#include <vector>

#include "cfpl/nn.hpp"

namespace cfpl {

// Squeeze-excitation style gate without biases:
// w = sigmoid(W2 relu(W1 [t_c || t_s])), W1: [d/r x 2d], W2: [d x d/r].
struct GateParams {
    Tensor w1;
    Tensor w2;
    std::size_t reduction = 16;

    static GateParams create(ParameterRegistry& reg, const std::string& name, std::size_t width, std::size_t reduction,
                             Rng& rng, bool zero_init = false);
};

struct Classification {
    Tensor modulated;  // [B, d]
    Tensor logits;     // [B, 2]
};

inline constexpr std::size_t kLiveClass = 1;

Tensor modulation_factors(const Tensor& content_text, const Tensor& style_text, const GateParams& gate);
// Ablation variant: w = (t_c + t_s) / 2.
Tensor mean_modulation_factors(const Tensor& content_text, const Tensor& style_text);

Classification modulate_and_classify(const Tensor& visual, const Tensor& weights, const Linear& head);

// softmax(logits)[:, live] per row.
std::vector<double> liveness_scores(const Tensor& logits);

// L_cls + L_ptm; both must be finite scalars.
Tensor total_loss(const Tensor& cls_loss, const Tensor& ptm_loss);

}  // namespace cfpl
