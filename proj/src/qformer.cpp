#include "cfpl/qformer.hpp"

#include <stdexcept>

namespace cfpl {

void QFormerConfig::validate() const {
    if (query_count == 0) throw std::invalid_argument("query count must be at least 1");
    if (depth == 0) throw std::invalid_argument("Q-Former depth must be at least 1");
    if (heads == 0 || width % heads != 0) {
        throw std::invalid_argument("Q-Former width " + std::to_string(width) + " not divisible by heads " +
                                    std::to_string(heads));
    }
    if (source_dim == 0 || mlp_ratio == 0) throw std::invalid_argument("invalid Q-Former source_dim or mlp_ratio");
}

std::size_t QFormerConfig::parameter_count() const {
    const std::size_t d = width;
    const std::size_t s = source_dim;
    const std::size_t h = mlp_ratio * d;
    const std::size_t layer_norms = 3 * (2 * d) + 2 * s;
    const std::size_t self_attn = 4 * (d * d + d);
    const std::size_t cross_attn = 2 * (d * d + d) + 2 * (s * d + d);
    const std::size_t mlp = (d * h + h) + (h * d + d);
    return query_count * d + depth * (layer_norms + self_attn + cross_attn + mlp);
}

QFormer::QFormer(const QFormerConfig& config, ParameterRegistry& registry, Rng& rng, const std::string& prefix,
                 bool zero_output_projections)
    : config_(config) {
    config_.validate();
    const std::size_t d = config_.width;
    InitOptions init{&rng};
    queries_ = registry.add(prefix + ".queries", trunc_normal({config_.query_count, d}, init.std, rng));
    for (std::size_t i = 0; i < config_.depth; ++i) {
        const std::string name = prefix + ".block" + std::to_string(i);
        Block b;
        b.ln_self = LayerNorm::create(registry, name + ".ln_self", d);
        b.self_attn = MultiHeadAttention::create(registry, name + ".self_attn", d, d, config_.heads, init,
                                                 zero_output_projections);
        b.ln_query = LayerNorm::create(registry, name + ".ln_query", d);
        b.ln_source = LayerNorm::create(registry, name + ".ln_source", config_.source_dim);
        b.cross_attn = MultiHeadAttention::create(registry, name + ".cross_attn", d, config_.source_dim, config_.heads,
                                                  init, zero_output_projections);
        b.ln_mlp = LayerNorm::create(registry, name + ".ln_mlp", d);
        b.mlp = Mlp::create(registry, name + ".mlp", d, config_.mlp_ratio * d, init, zero_output_projections);
        blocks_.push_back(std::move(b));
    }
}

Tensor QFormer::forward(const Tensor& source) const {
    if (source.dim() != 3 || source.size(2) != config_.source_dim) {
        throw std::invalid_argument("Q-Former source must be [B x m x " + std::to_string(config_.source_dim) + "], got " +
                                    shape_str(source.shape()));
    }
    const std::size_t batch = source.size(0);
    Tensor q = expand(reshape(queries_, {1, config_.query_count, config_.width}),
                      {batch, config_.query_count, config_.width});
    for (const auto& b : blocks_) {
        Tensor h = b.ln_self(q);
        q = add(q, b.self_attn(h, h));
        q = add(q, b.cross_attn(b.ln_query(q), b.ln_source(source)));
        q = add(q, b.mlp(b.ln_mlp(q)));
    }
    return q;
}

}  // namespace cfpl
