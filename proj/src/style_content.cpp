#include "cfpl/style_content.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace cfpl {

namespace {

// Population std over `axis` with eps inside the root, keepdim.
std::pair<Tensor, Tensor> mean_std(const Tensor& x, std::size_t axis) {
    Tensor mu = mean(x, axis, true);
    Tensor centered = sub(x, mu);
    Tensor var = mean(square(centered), axis, true);
    return {mu, sqrt(add_scalar(var, kStatEps))};
}

}  // namespace

void DspConfig::validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("dsp alpha must be positive");
    if (!(probability >= 0.0 && probability <= 1.0)) throw std::invalid_argument("dsp probability must lie in [0, 1]");
}

StyleStats token_statistics(const Tensor& tokens) {
    if (tokens.dim() != 3) throw std::invalid_argument("token statistics expect [B x n x d], got " + shape_str(tokens.shape()));
    const std::size_t n = tokens.size(1);
    if (n < 2) throw std::invalid_argument("token statistics need at least one non-class token");
    Tensor spatial = narrow(tokens, 1, 1, n - 1);
    auto [mu, sigma] = mean_std(spatial, 1);
    const std::size_t batch = tokens.size(0);
    const std::size_t d = tokens.size(2);
    return {reshape(mu, {batch, d}), reshape(sigma, {batch, d})};
}

StyleStats mix_statistics(const StyleStats& stats, const std::vector<std::size_t>& perm, const Tensor& lambda) {
    const std::size_t batch = stats.mu.size(0);
    if (perm.size() != batch) throw std::invalid_argument("permutation length differs from batch");
    std::vector<bool> seen(batch, false);
    for (auto p : perm) {
        if (p >= batch || seen[p]) throw std::invalid_argument("permutation is not a bijection on batch indices");
        seen[p] = true;
    }
    if (lambda.shape() != Shape{batch, 1}) throw std::invalid_argument("lambda must be [B x 1]");
    for (double l : lambda.values()) {
        if (!(l >= 0.0 && l <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
    }
    // A row that maps to itself mixes with its own statistics; weighting it
    // fully keeps the result exact instead of l*x + (1-l)*x.
    std::vector<double> fixed(batch, 0.0);
    bool any_fixed = false;
    for (std::size_t i = 0; i < batch; ++i) {
        if (perm[i] == i) {
            fixed[i] = 1.0;
            any_fixed = true;
        }
    }
    Tensor weight = lambda;
    if (any_fixed) {
        std::vector<double> w(lambda.values().begin(), lambda.values().end());
        for (std::size_t i = 0; i < batch; ++i) {
            if (fixed[i] == 1.0) w[i] = 1.0;
        }
        weight = Tensor::from_values({batch, 1}, std::move(w));
    }
    Tensor one_minus = add_scalar(neg(weight), 1.0);
    auto mix = [&](const Tensor& x) {
        Tensor ref = index_select(x, 0, perm);
        return add(mul(weight, x), mul(one_minus, ref));
    };
    return {mix(stats.mu), mix(stats.sigma)};
}

std::optional<MixDraw> draw_style_mix(const DspConfig& dsp, std::size_t batch, Rng& rng) {
    dsp.validate();
    if (!dsp.active) return std::nullopt;
    if (uniform01(rng) >= dsp.probability) return std::nullopt;
    MixDraw draw;
    draw.permutation.resize(batch);
    std::iota(draw.permutation.begin(), draw.permutation.end(), std::size_t{0});
    // Fisher-Yates with our own uniform draws for cross-platform stability.
    for (std::size_t i = batch; i-- > 1;) {
        const auto j = std::min(i, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1)));
        std::swap(draw.permutation[i], draw.permutation[j]);
    }
    std::vector<double> lambdas(batch);
    for (double& l : lambdas) l = sample_beta(rng, dsp.alpha, dsp.alpha);
    draw.lambda = Tensor::from_values({batch, 1}, std::move(lambdas));
    return draw;
}

Tensor style_feature(const EncoderOutput& out, const std::optional<MixDraw>& mix) {
    if (out.layer_tokens.empty()) throw std::invalid_argument("style feature needs at least one layer");
    Tensor total;
    for (const auto& tokens : out.layer_tokens) {
        StyleStats stats = token_statistics(tokens);
        if (mix) stats = mix_statistics(stats, mix->permutation, mix->lambda);
        Tensor layer = concat({stats.mu, stats.sigma}, 1);
        total = total.defined() ? add(total, layer) : layer;
    }
    return mul_scalar(total, 1.0 / static_cast<double>(out.layer_tokens.size()));
}

Tensor style_feature(const EncoderOutput& out, const DspConfig& dsp, Rng& rng) {
    if (out.layer_tokens.empty()) throw std::invalid_argument("style feature needs at least one layer");
    return style_feature(out, draw_style_mix(dsp, out.layer_tokens.front().size(0), rng));
}

Tensor content_feature(const EncoderOutput& out) {
    if (out.layer_tokens.empty()) throw std::invalid_argument("content feature needs at least one layer");
    const Tensor& last = out.layer_tokens.back();
    if (last.dim() != 3) throw std::invalid_argument("content feature expects [B x n x d] tokens");
    auto [mu, sigma] = mean_std(last, 1);
    return div(sub(last, mu), sigma);
}

}  // namespace cfpl
