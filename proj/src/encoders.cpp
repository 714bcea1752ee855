#include "cfpl/encoders.hpp"

#include <cctype>
#include <stdexcept>

namespace cfpl {

void EncoderConfig::validate(std::size_t query_count) const {
    if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
        throw std::invalid_argument("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                                    std::to_string(patch_size));
    }
    if (heads == 0 || width == 0 || width % heads != 0) {
        throw std::invalid_argument("width " + std::to_string(width) + " not divisible by heads " + std::to_string(heads));
    }
    if (layers == 0) throw std::invalid_argument("encoder needs at least one layer");
    if (mlp_ratio == 0) throw std::invalid_argument("mlp_ratio must be positive");
    if (context_length < 3) throw std::invalid_argument("context_length too small");
    if (query_count > context_length) {
        throw std::invalid_argument("query count " + std::to_string(query_count) + " exceeds context length " +
                                    std::to_string(context_length));
    }
}

std::size_t EncoderConfig::token_count() const {
    const std::size_t grid = image_size / patch_size;
    return grid * grid + 1;
}

ImageEncoder::ImageEncoder(const EncoderConfig& config, ParameterRegistry& registry, Rng& rng, const std::string& prefix)
    : config_(config) {
    config_.validate();
    const std::size_t d = config_.width;
    const std::size_t patch_dim = 3 * config_.patch_size * config_.patch_size;
    InitOptions init{&rng};
    patch_embed_ = Linear::create(registry, prefix + ".patch_embed", patch_dim, d, true, init);
    class_token_ = registry.add(prefix + ".class_token", trunc_normal({d}, init.std, rng));
    positions_ = registry.add(prefix + ".positions", trunc_normal({config_.token_count(), d}, init.std, rng));
    for (std::size_t l = 0; l < config_.layers; ++l) {
        blocks_.push_back(TransformerBlock::create(registry, prefix + ".block" + std::to_string(l), d, config_.heads,
                                                   config_.mlp_ratio, init));
    }
}

EncoderOutput ImageEncoder::encode_image(const Tensor& images) const {
    const Shape& s = images.shape();
    const std::size_t size = config_.image_size;
    if (s.size() != 4 || s[1] != 3 || s[2] != size || s[3] != size) {
        throw std::invalid_argument("expected images [B x 3 x " + std::to_string(size) + " x " + std::to_string(size) +
                                    "], got " + shape_str(s));
    }
    for (double v : images.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("pixel values must lie in [0, 1]");
    }
    const std::size_t batch = s[0];
    const std::size_t p = config_.patch_size;
    const std::size_t grid = size / p;
    const std::size_t d = config_.width;

    // [B,3,g,p,g,p] -> [B,g,g,3,p,p] -> [B, g*g, 3*p*p]; pixels centered to [-1, 1].
    Tensor centered = add_scalar(mul_scalar(images, 2.0), -1.0);
    Tensor patches = reshape(centered, {batch, 3, grid, p, grid, p});
    patches = reshape(permute(patches, {0, 2, 4, 1, 3, 5}), {batch, grid * grid, 3 * p * p});
    Tensor tokens = patch_embed_(patches);
    Tensor cls = expand(reshape(class_token_, {1, 1, d}), {batch, 1, d});
    Tensor x = add(concat({cls, tokens}, 1), positions_);

    EncoderOutput out;
    for (const auto& block : blocks_) {
        x = block(x, false);
        out.layer_tokens.push_back(x);
    }
    out.global_feature = reshape(narrow(x, 1, 0, 1), {batch, d});
    return out;
}

Tokenizer::Tokenizer() {
    words_ = {"<pad>", "<start>", "<end>", "a", "photo", "of", "live", "fake", "face", "."};
    for (std::size_t i = 0; i < words_.size(); ++i) ids_.emplace(words_[i], static_cast<int>(i));
}

std::vector<int> Tokenizer::tokenize(const std::string& text) const {
    std::vector<std::string> pieces;
    std::string current;
    auto flush = [&]() {
        if (!current.empty()) pieces.push_back(std::move(current));
        current.clear();
    };
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            flush();
        } else if (std::ispunct(c)) {
            flush();
            pieces.emplace_back(1, raw);
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    std::vector<int> ids;
    ids.reserve(pieces.size());
    for (const auto& w : pieces) {
        auto it = ids_.find(w);
        if (it == ids_.end() || it->second <= kEnd) throw std::invalid_argument("word not in vocabulary: '" + w + "'");
        ids.push_back(it->second);
    }
    return ids;
}

TextEncoder::TextEncoder(const EncoderConfig& config, ParameterRegistry& registry, Rng& rng, const std::string& prefix)
    : config_(config) {
    if (config_.heads == 0 || config_.width % config_.heads != 0) {
        throw std::invalid_argument("text width not divisible by heads");
    }
    if (config_.layers == 0 || config_.context_length < 3) throw std::invalid_argument("invalid text encoder config");
    const std::size_t d = config_.width;
    InitOptions init{&rng, 0.02, true};
    token_embedding_ = registry.add(prefix + ".token_embedding", trunc_normal({tokenizer_.vocab_size(), d}, init.std, rng), true);
    positions_ = registry.add(prefix + ".positions", trunc_normal({config_.context_length, d}, init.std, rng), true);
    for (std::size_t l = 0; l < config_.layers; ++l) {
        blocks_.push_back(TransformerBlock::create(registry, prefix + ".block" + std::to_string(l), d, config_.heads,
                                                   config_.mlp_ratio, init));
    }
    ln_final_ = LayerNorm::create(registry, prefix + ".ln_final", d, true);
    projection_ = Linear::create(registry, prefix + ".projection", d, d, false, init);
}

Tensor TextEncoder::embed_text(const std::vector<std::string>& descriptions) const {
    if (descriptions.empty()) throw std::invalid_argument("embed_text needs at least one description");
    const std::size_t ctx = config_.context_length;
    std::vector<std::size_t> ids;
    ids.reserve(descriptions.size() * ctx);
    for (const auto& text : descriptions) {
        const auto tokens = tokenizer_.tokenize(text);
        if (tokens.size() > ctx - 2) {
            throw std::invalid_argument("description has " + std::to_string(tokens.size()) + " tokens; at most " +
                                        std::to_string(ctx - 2) + " allowed");
        }
        ids.push_back(Tokenizer::kStart);
        for (int t : tokens) ids.push_back(static_cast<std::size_t>(t));
        ids.push_back(Tokenizer::kEnd);
        while (ids.size() % ctx != 0) ids.push_back(Tokenizer::kPad);
    }
    const std::size_t batch = descriptions.size();
    Tensor tokens = reshape(index_select(token_embedding_, 0, ids), {batch, ctx, config_.width});
    return add(tokens, positions_);
}

Tensor TextEncoder::encode_prompt(const Tensor& prompt, bool full_context) const {
    const Shape& s = prompt.shape();
    const std::size_t d = config_.width;
    if (s.size() != 3 || s[2] != d) throw std::invalid_argument("prompt must be [B x N x " + std::to_string(d) + "]");
    const std::size_t batch = s[0];
    const std::size_t n = s[1];
    if (n > config_.context_length) {
        throw std::invalid_argument("prompt length " + std::to_string(n) + " exceeds context length " +
                                    std::to_string(config_.context_length));
    }
    Tensor x;
    if (full_context && n < config_.context_length) {
        Tensor pad = Tensor::zeros({batch, config_.context_length - n, d});
        x = add(concat({prompt, pad}, 1), positions_);
    } else {
        x = add(prompt, narrow(positions_, 0, 0, n));
    }
    for (const auto& block : blocks_) x = block(x, true);
    Tensor last = reshape(narrow(x, 1, n - 1, 1), {batch, d});
    return projection_(ln_final_(last));
}

}  // namespace cfpl
