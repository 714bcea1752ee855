#include "cfpl/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace cfpl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Marsaglia-Tsang; shape < 1 handled by the boost U^(1/shape).
double sample_gamma(Rng& rng, double shape) {
    if (shape < 1.0) {
        const double u = uniform01(rng);
        return sample_gamma(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = standard_normal(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform01(rng);
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index);
}

double uniform01(Rng& rng) {
    // 53 random bits in (0, 1).
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
    const double u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

double sample_beta(Rng& rng, double alpha, double beta) {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("beta parameters must be positive");
    const double x = sample_gamma(rng, alpha);
    const double y = sample_gamma(rng, beta);
    if (x + y == 0.0) return uniform01(rng) < alpha / (alpha + beta) ? 1.0 : 0.0;
    return x / (x + y);
}

Tensor ParameterRegistry::add(std::string name, Tensor value, bool frozen) {
    if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
    value.set_requires_grad(!frozen);
    params_.push_back({std::move(name), value, frozen});
    return value;
}

const Parameter* ParameterRegistry::find(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

std::size_t ParameterRegistry::scalar_count(bool include_frozen) const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        if (include_frozen || !p.frozen) n += p.tensor.numel();
    }
    return n;
}

void ParameterRegistry::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

Tensor trunc_normal(Shape shape, double std, Rng& rng) {
    std::vector<double> values(numel_of(shape));
    for (double& v : values) {
        double z = standard_normal(rng);
        while (std::abs(z) > 2.0) z = standard_normal(rng);
        v = z * std;
    }
    return Tensor::from_values(std::move(shape), std::move(values));
}

Linear Linear::create(ParameterRegistry& reg, const std::string& name, std::size_t in, std::size_t out, bool with_bias,
                      const InitOptions& init, bool zero_init) {
    Linear l;
    Tensor w = zero_init ? Tensor::zeros({out, in}) : trunc_normal({out, in}, init.std, *init.rng);
    l.weight = reg.add(name + ".weight", w, init.frozen);
    if (with_bias) l.bias = reg.add(name + ".bias", Tensor::zeros({out}), init.frozen);
    return l;
}

LayerNorm LayerNorm::create(ParameterRegistry& reg, const std::string& name, std::size_t width, bool frozen) {
    LayerNorm ln;
    ln.gain = reg.add(name + ".gain", Tensor::full({width}, 1.0), frozen);
    ln.bias = reg.add(name + ".bias", Tensor::zeros({width}), frozen);
    return ln;
}

MultiHeadAttention MultiHeadAttention::create(ParameterRegistry& reg, const std::string& name, std::size_t width,
                                              std::size_t source_width, std::size_t heads, const InitOptions& init,
                                              bool zero_output) {
    if (heads == 0 || width % heads != 0) {
        throw std::invalid_argument("width " + std::to_string(width) + " not divisible by heads " + std::to_string(heads));
    }
    MultiHeadAttention a;
    a.heads = heads;
    a.q_proj = Linear::create(reg, name + ".q", width, width, true, init);
    a.k_proj = Linear::create(reg, name + ".k", source_width, width, true, init);
    a.v_proj = Linear::create(reg, name + ".v", source_width, width, true, init);
    a.out_proj = Linear::create(reg, name + ".out", width, width, true, init, zero_output);
    return a;
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& source, bool causal) const {
    const std::size_t batch = query.size(0);
    const std::size_t n = query.size(1);
    const std::size_t m = source.size(1);
    const std::size_t width = q_proj.weight.size(0);
    const std::size_t head_dim = width / heads;
    if (source.size(0) != batch) throw std::invalid_argument("attention batch mismatch");

    auto split = [&](const Tensor& t, std::size_t len) {
        // [B, len, d] -> [B*h, len, dh]
        Tensor r = reshape(t, {batch, len, heads, head_dim});
        return reshape(permute(r, {0, 2, 1, 3}), {batch * heads, len, head_dim});
    };
    Tensor q = split(q_proj(query), n);
    Tensor k = split(k_proj(source), m);
    Tensor v = split(v_proj(source), m);

    Tensor scores = mul_scalar(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(head_dim)));
    if (causal) {
        if (n != m) throw std::invalid_argument("causal attention needs equal query/key lengths");
        std::vector<double> mask(n * m, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) mask[i * m + j] = -1e30;
        }
        scores = add(scores, Tensor::from_values({n, m}, std::move(mask)));
    }
    Tensor attn = softmax(scores, 2);
    Tensor ctx = matmul(attn, v);  // [B*h, n, dh]
    ctx = reshape(permute(reshape(ctx, {batch, heads, n, head_dim}), {0, 2, 1, 3}), {batch, n, width});
    return out_proj(ctx);
}

Mlp Mlp::create(ParameterRegistry& reg, const std::string& name, std::size_t width, std::size_t hidden,
                const InitOptions& init, bool zero_output) {
    Mlp mlp;
    mlp.fc1 = Linear::create(reg, name + ".fc1", width, hidden, true, init);
    mlp.fc2 = Linear::create(reg, name + ".fc2", hidden, width, true, init, zero_output);
    return mlp;
}

TransformerBlock TransformerBlock::create(ParameterRegistry& reg, const std::string& name, std::size_t width,
                                          std::size_t heads, std::size_t mlp_ratio, const InitOptions& init) {
    TransformerBlock b;
    b.ln1 = LayerNorm::create(reg, name + ".ln1", width, init.frozen);
    b.attn = MultiHeadAttention::create(reg, name + ".attn", width, width, heads, init);
    b.ln2 = LayerNorm::create(reg, name + ".ln2", width, init.frozen);
    b.mlp = Mlp::create(reg, name + ".mlp", width, width * mlp_ratio, init);
    return b;
}

Tensor TransformerBlock::operator()(const Tensor& x, bool causal) const {
    Tensor h = ln1(x);
    Tensor y = add(x, attn(h, h, causal));
    return add(y, mlp(ln2(y)));
}

}  // namespace cfpl
