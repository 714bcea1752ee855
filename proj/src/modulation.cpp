#include "cfpl/modulation.hpp"

#include <cmath>
#include <stdexcept>

namespace cfpl {

GateParams GateParams::create(ParameterRegistry& reg, const std::string& name, std::size_t width, std::size_t reduction,
                              Rng& rng, bool zero_init) {
    if (reduction == 0 || width % reduction != 0) {
        throw std::invalid_argument("width " + std::to_string(width) + " not divisible by reduction " +
                                    std::to_string(reduction));
    }
    const std::size_t hidden = width / reduction;
    GateParams g;
    g.reduction = reduction;
    g.w1 = reg.add(name + ".w1", zero_init ? Tensor::zeros({hidden, 2 * width}) : trunc_normal({hidden, 2 * width}, 0.02, rng));
    g.w2 = reg.add(name + ".w2", zero_init ? Tensor::zeros({width, hidden}) : trunc_normal({width, hidden}, 0.02, rng));
    return g;
}

Tensor modulation_factors(const Tensor& content_text, const Tensor& style_text, const GateParams& gate) {
    if (content_text.shape() != style_text.shape() || content_text.dim() != 2) {
        throw std::invalid_argument("text features must both be [B x d]");
    }
    if (gate.w1.size(1) != 2 * content_text.size(1)) throw std::invalid_argument("gate W1 does not accept [t_c || t_s]");
    Tensor t = concat({content_text, style_text}, 1);
    return sigmoid(matmul_nt(relu(matmul_nt(t, gate.w1)), gate.w2));
}

Tensor mean_modulation_factors(const Tensor& content_text, const Tensor& style_text) {
    return mul_scalar(add(content_text, style_text), 0.5);
}

Classification modulate_and_classify(const Tensor& visual, const Tensor& weights, const Linear& head) {
    if (visual.shape() != weights.shape()) {
        throw std::invalid_argument("modulation weights " + shape_str(weights.shape()) + " do not match visual feature " +
                                    shape_str(visual.shape()));
    }
    if (head.weight.size(0) != 2 || head.weight.size(1) != visual.size(1)) {
        throw std::invalid_argument("classifier head must map d -> 2");
    }
    Tensor modulated = mul(visual, weights);
    return {modulated, head(modulated)};
}

std::vector<double> liveness_scores(const Tensor& logits) {
    if (logits.dim() != 2 || logits.size(1) != 2) throw std::invalid_argument("liveness scores need [B x 2] logits");
    Tensor probs = softmax(logits.detach(), 1);
    std::vector<double> out(logits.size(0));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = probs.values()[i * 2 + kLiveClass];
    return out;
}

Tensor total_loss(const Tensor& cls_loss, const Tensor& ptm_loss) {
    if (cls_loss.numel() != 1 || ptm_loss.numel() != 1) throw std::invalid_argument("losses must be scalars");
    if (!std::isfinite(cls_loss.item()) || !std::isfinite(ptm_loss.item())) {
        throw std::runtime_error("non-finite loss component");
    }
    return add(cls_loss, ptm_loss);
}

}  // namespace cfpl
