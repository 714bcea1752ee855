#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cfpl/nn.hpp"

namespace cfpl {

struct QFormerConfig {
    std::size_t query_count = 16;
    std::size_t width = 512;
    std::size_t depth = 1;
    std::size_t heads = 8;
    std::size_t source_dim = 512;
    std::size_t mlp_ratio = 4;

    void validate() const;
    // Closed-form scalar parameter count for this configuration.
    std::size_t parameter_count() const;
};

// Learnable queries refined by (self-attention, cross-attention, MLP)
// blocks, each pre-normalized and residual:
//   Q'  = Q  + MSA(LN(Q))
//   Q'' = Q' + MCA(LN(Q'), LN(source))
//   P   = Q'' + MLP(LN(Q''))
class QFormer {
public:
    // With `zero_output_projections` the MSA/MCA/MLP output layers start at
    // zero, making the initial forward pass the identity on the queries.
    QFormer(const QFormerConfig& config, ParameterRegistry& registry, Rng& rng, const std::string& prefix,
            bool zero_output_projections = false);

    // source [B, m, source_dim] -> prompts [B, N, d]
    Tensor forward(const Tensor& source) const;

    const QFormerConfig& config() const { return config_; }
    const Tensor& queries() const { return queries_; }

private:
    struct Block {
        LayerNorm ln_self;
        MultiHeadAttention self_attn;
        LayerNorm ln_query;
        LayerNorm ln_source;
        MultiHeadAttention cross_attn;
        LayerNorm ln_mlp;
        Mlp mlp;
    };

    QFormerConfig config_;
    Tensor queries_;
    std::vector<Block> blocks_;
};

}  // namespace cfpl
