#include "cfpl/model.hpp"

#include <stdexcept>

namespace cfpl {

namespace {

enum InitStream : std::uint64_t { kImageInit = 1, kTextInit, kContentInit, kStyleInit, kHeadInit };

}  // namespace

CfplModel::CfplModel(const RunConfig& config, const ModelInit& init)
    : config_(config),
      image_rng_(derive_seed(init.seed, kImageInit)),
      text_rng_(derive_seed(init.seed, kTextInit)),
      cqf_rng_(derive_seed(init.seed, kContentInit)),
      sqf_rng_(derive_seed(init.seed, kStyleInit)),
      head_rng_(derive_seed(init.seed, kHeadInit)),
      image_((config_.validate(), config_.image), registry_, image_rng_, "image"),
      text_(config_.text, registry_, text_rng_, "text"),
      cqf_(config_.content_qformer(), registry_, cqf_rng_, "cqf", init.zero_qformer_outputs),
      sqf_(config_.style_qformer(), registry_, sqf_rng_, "sqf", init.zero_qformer_outputs) {
    const std::size_t d = config_.width();
    InitOptions head_init{&head_rng_};
    fc_ptm_ = Linear::create(registry_, "fc_ptm", 2 * d, 2, true, head_init, init.zero_heads);
    fc_cls_ = Linear::create(registry_, "fc_cls", d, 2, true, head_init, init.zero_heads);
    gate_ = GateParams::create(registry_, "gate", d, config_.gate_reduction, head_rng_);
}

Tensor CfplModel::classify(const EncoderOutput& enc, const Tensor& content_prompt, const Tensor& style_prompt) const {
    if (!config_.ablation.pm) return fc_cls_(enc.global_feature);
    Tensor t_c = text_.encode_prompt(content_prompt);
    Tensor t_s = text_.encode_prompt(style_prompt);
    Tensor w = config_.ablation.modulation == ModulationMode::gate ? modulation_factors(t_c, t_s, gate_)
                                                                   : mean_modulation_factors(t_c, t_s);
    return modulate_and_classify(enc.global_feature, w, fc_cls_).logits;
}

ForwardResult CfplModel::forward_train(const Tensor& images, const std::vector<int>& labels,
                                       const ForwardRandomness& rnd) const {
    const std::size_t batch = images.size(0);
    if (labels.size() != batch) throw std::invalid_argument("label count differs from image batch");
    const auto& ab = config_.ablation;

    ForwardResult r;
    EncoderOutput enc = image_.encode_image(images);
    r.visual_feature = enc.global_feature;

    Tensor content_prompt;
    Tensor style_prompt;
    if (ab.pm || ab.ptm) {
        r.content_feature = content_feature(enc);
        content_prompt = cqf_.forward(r.content_feature);
    }
    if (ab.pm) {
        if (rnd.mix_override != nullptr) {
            r.mix = *rnd.mix_override;
        } else if (ab.dsp && config_.train.dsp.active) {
            if (rnd.style_mix == nullptr) throw std::invalid_argument("style mixing needs an rng");
            r.mix = draw_style_mix(config_.train.dsp, batch, *rnd.style_mix);
        }
        r.style_feature = style_feature(enc, r.mix);
        style_prompt = sqf_.forward(reshape(r.style_feature, {batch, 1, 2 * config_.width()}));
    }

    r.logits = classify(enc, content_prompt, style_prompt);
    r.loss_cls = cross_entropy(r.logits, labels);

    if (ab.ptm) {
        Tensor texts = text_supervision(text_.embed_text(render_descriptions(labels)), config_.query_count);
        if (rnd.negatives_override != nullptr) {
            r.negatives = *rnd.negatives_override;
        } else {
            if (rnd.mining == nullptr) throw std::invalid_argument("hard-negative mining needs an rng");
            r.negatives = mine_hard_negatives(content_prompt, texts, labels, *rnd.mining, config_.train.mining_temperature);
        }
        r.loss_ptm = ptm_loss(build_joint_pairs(content_prompt, texts, *r.negatives), fc_ptm_);
    } else {
        r.loss_ptm = Tensor::scalar(0.0);
    }
    r.loss_total = total_loss(r.loss_cls, r.loss_ptm);
    return r;
}

Tensor CfplModel::forward_eval(const Tensor& images) const {
    EncoderOutput enc = image_.encode_image(images);
    if (!config_.ablation.pm) return classify(enc, Tensor(), Tensor());
    const std::size_t batch = images.size(0);
    Tensor content_prompt = cqf_.forward(content_feature(enc));
    Tensor style = style_feature(enc, std::nullopt);
    Tensor style_prompt = sqf_.forward(reshape(style, {batch, 1, 2 * config_.width()}));
    return classify(enc, content_prompt, style_prompt);
}

std::vector<double> CfplModel::liveness(const Tensor& images) const { return liveness_scores(forward_eval(images)); }

}  // namespace cfpl
