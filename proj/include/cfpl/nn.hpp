#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cfpl/ops.hpp"
#include "cfpl/tensor.hpp"

namespace cfpl {

using Rng = std::mt19937_64;

// Mixes a base seed with a stream tag so independent consumers (init, data,
// mixing, mining) never share a sequence.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

double uniform01(Rng& rng);
double standard_normal(Rng& rng);
// Beta(alpha, alpha) via two gamma draws.
double sample_beta(Rng& rng, double alpha, double beta);

struct Parameter {
    std::string name;
    Tensor tensor;
    bool frozen = false;
};

// Owns the named parameter list of a model. Modules keep Tensor handles that
// share storage with the entries here.
class ParameterRegistry {
public:
    Tensor add(std::string name, Tensor value, bool frozen = false);

    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }
    const Parameter* find(const std::string& name) const;
    std::size_t scalar_count(bool include_frozen = true) const;
    void zero_grad();

private:
    std::vector<Parameter> params_;
};

// Normal(0, std) truncated to +-2 std by resampling.
Tensor trunc_normal(Shape shape, double std, Rng& rng);

struct InitOptions {
    Rng* rng = nullptr;
    double std = 0.02;
    bool frozen = false;
};

struct Linear {
    Tensor weight;  // [out, in]
    Tensor bias;    // [out], may be undefined

    static Linear create(ParameterRegistry& reg, const std::string& name, std::size_t in, std::size_t out, bool with_bias,
                         const InitOptions& init, bool zero_init = false);
    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct LayerNorm {
    Tensor gain;
    Tensor bias;
    double eps = 1e-5;

    static LayerNorm create(ParameterRegistry& reg, const std::string& name, std::size_t width, bool frozen = false);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
};

// Multi-head scaled dot-product attention. Keys/values come from `source`,
// whose width may differ from the query width.
struct MultiHeadAttention {
    Linear q_proj;
    Linear k_proj;
    Linear v_proj;
    Linear out_proj;
    std::size_t heads = 1;

    static MultiHeadAttention create(ParameterRegistry& reg, const std::string& name, std::size_t width,
                                     std::size_t source_width, std::size_t heads, const InitOptions& init,
                                     bool zero_output = false);
    // query [B, n, d], source [B, m, source_width] -> [B, n, d]
    Tensor operator()(const Tensor& query, const Tensor& source, bool causal = false) const;
};

struct Mlp {
    Linear fc1;
    Linear fc2;

    static Mlp create(ParameterRegistry& reg, const std::string& name, std::size_t width, std::size_t hidden,
                      const InitOptions& init, bool zero_output = false);
    Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
};

// Pre-LN transformer block: x + attn(ln1(x)), then + mlp(ln2(x)).
struct TransformerBlock {
    LayerNorm ln1;
    MultiHeadAttention attn;
    LayerNorm ln2;
    Mlp mlp;

    static TransformerBlock create(ParameterRegistry& reg, const std::string& name, std::size_t width, std::size_t heads,
                                   std::size_t mlp_ratio, const InitOptions& init);
    Tensor operator()(const Tensor& x, bool causal) const;
};

}  // namespace cfpl
