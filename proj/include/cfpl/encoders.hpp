#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfpl/nn.hpp"

namespace cfpl {

struct EncoderConfig {
    std::size_t image_size = 224;
    std::size_t patch_size = 16;
    std::size_t width = 512;
    std::size_t layers = 4;
    std::size_t heads = 8;
    std::size_t context_length = 77;
    std::size_t mlp_ratio = 4;

    // Throws std::invalid_argument on violated invariants. `query_count` is
    // the prompt length the text tower must accommodate (0 to skip).
    void validate(std::size_t query_count = 0) const;
    // (image_size / patch_size)^2 + 1 class token.
    std::size_t token_count() const;
};

struct EncoderOutput {
    std::vector<Tensor> layer_tokens;  // L entries of [B, n, d]
    Tensor global_feature;             // [B, d], class token of the last layer
};

// ViT-style image tower: linear patch embedding, class token, learned
// positions, pre-LN transformer blocks. Trainable.
class ImageEncoder {
public:
    ImageEncoder(const EncoderConfig& config, ParameterRegistry& registry, Rng& rng, const std::string& prefix = "image");

    // images: [B, 3, H, W] with H = W = image_size, values in [0, 1].
    EncoderOutput encode_image(const Tensor& images) const;

    const EncoderConfig& config() const { return config_; }

private:
    EncoderConfig config_;
    Linear patch_embed_;
    Tensor class_token_;
    Tensor positions_;
    std::vector<TransformerBlock> blocks_;
};

// Word-level tokenizer over the closed description vocabulary.
class Tokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kStart = 1;
    static constexpr int kEnd = 2;

    Tokenizer();
    // Content tokens only (no start/end markers).
    std::vector<int> tokenize(const std::string& text) const;
    std::size_t vocab_size() const { return words_.size(); }
    const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> ids_;
};

// Causal text tower with frozen, randomly initialized weights.
class TextEncoder {
public:
    TextEncoder(const EncoderConfig& config, ParameterRegistry& registry, Rng& rng, const std::string& prefix = "text");

    // [B, context_length, d]: token plus positional embeddings, pad-filled.
    Tensor embed_text(const std::vector<std::string>& descriptions) const;

    // prompt [B, N, d] -> [B, d]. The prompt occupies positions 0..N-1 of a
    // zero-padded context. Under causal attention the padded tail cannot
    // influence position N-1, so only the prefix is evaluated unless
    // `full_context` is set.
    Tensor encode_prompt(const Tensor& prompt, bool full_context = false) const;

    const EncoderConfig& config() const { return config_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }

private:
    EncoderConfig config_;
    Tokenizer tokenizer_;
    Tensor token_embedding_;
    Tensor positions_;
    std::vector<TransformerBlock> blocks_;
    LayerNorm ln_final_;
    Linear projection_;
};

}  // namespace cfpl
