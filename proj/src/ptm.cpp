#include "cfpl/ptm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cfpl {

namespace {

// Row means over axis 1 of a [B, n, d] tensor, as plain values.
std::vector<double> pooled(const Tensor& x) {
    const std::size_t batch = x.size(0);
    const std::size_t n = x.size(1);
    const std::size_t d = x.size(2);
    auto v = x.values();
    std::vector<double> out(batch * d, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t c = 0; c < d; ++c) out[b * d + c] += v[(b * n + t) * d + c];
        }
        for (std::size_t c = 0; c < d; ++c) out[b * d + c] /= static_cast<double>(n);
    }
    return out;
}

std::size_t sample_weighted(const std::vector<std::size_t>& candidates, const std::vector<double>& logits, Rng& rng) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> cumulative(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        total += std::exp(logits[i] - mx);
        cumulative[i] = total;
    }
    const double u = uniform01(rng) * total;
    for (std::size_t i = 0; i < cumulative.size(); ++i) {
        if (u < cumulative[i]) return candidates[i];
    }
    return candidates.back();
}

}  // namespace

std::vector<std::string> render_descriptions(const std::vector<int>& labels) {
    std::vector<std::string> out;
    out.reserve(labels.size());
    for (int y : labels) {
        if (y == 1) {
            out.emplace_back("a photo of a live face.");
        } else if (y == 0) {
            out.emplace_back("a photo of a fake face.");
        } else {
            throw std::invalid_argument("description label must be 0 or 1, got " + std::to_string(y));
        }
    }
    return out;
}

Tensor text_supervision(const Tensor& embedded, std::size_t query_count) {
    if (embedded.dim() != 3) throw std::invalid_argument("text supervision expects [B x T x d]");
    if (query_count == 0 || query_count > embedded.size(1)) {
        throw std::invalid_argument("query count must lie in [1, " + std::to_string(embedded.size(1)) + "]");
    }
    const std::size_t batch = embedded.size(0);
    const std::size_t d = embedded.size(2);
    return expand(mean(embedded, 1, true), {batch, query_count, d});
}

std::vector<double> prompt_text_similarity(const Tensor& prompts, const Tensor& texts) {
    if (prompts.dim() != 3 || texts.dim() != 3 || prompts.size(0) != texts.size(0) || prompts.size(2) != texts.size(2)) {
        throw std::invalid_argument("prompts and texts must be [B x N x d] with matching B and d");
    }
    const std::size_t batch = prompts.size(0);
    const std::size_t d = prompts.size(2);
    auto p = pooled(prompts);
    auto s = pooled(texts);
    auto norm = [d](const double* v) {
        double n = 0.0;
        for (std::size_t c = 0; c < d; ++c) n += v[c] * v[c];
        return std::max(std::sqrt(n), 1e-12);
    };
    std::vector<double> sim(batch * batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const double np = norm(p.data() + i * d);
        for (std::size_t j = 0; j < batch; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += p[i * d + c] * s[j * d + c];
            sim[i * batch + j] = dot / (np * norm(s.data() + j * d));
        }
    }
    return sim;
}

NegativeIndices sample_negatives(const std::vector<double>& similarity, const std::vector<int>& labels, Rng& rng,
                                 double temperature) {
    const std::size_t batch = labels.size();
    if (similarity.size() != batch * batch) throw std::invalid_argument("similarity matrix must be B x B");
    if (!(temperature > 0.0)) throw std::invalid_argument("mining temperature must be positive");
    NegativeIndices out;
    out.text_for_prompt.resize(batch);
    out.prompt_for_text.resize(batch);
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t anchor = 0; anchor < batch; ++anchor) {
            std::vector<std::size_t> candidates;
            std::vector<double> logits;
            for (std::size_t other = 0; other < batch; ++other) {
                if (other == anchor || labels[other] == labels[anchor]) continue;
                const double s = pass == 0 ? similarity[anchor * batch + other] : similarity[other * batch + anchor];
                candidates.push_back(other);
                logits.push_back(s / temperature);
            }
            if (candidates.empty()) {
                throw std::invalid_argument("hard-negative mining needs both classes in the batch");
            }
            const std::size_t pick = sample_weighted(candidates, logits, rng);
            (pass == 0 ? out.text_for_prompt : out.prompt_for_text)[anchor] = pick;
        }
    }
    return out;
}

NegativeIndices mine_hard_negatives(const Tensor& prompts, const Tensor& texts, const std::vector<int>& labels, Rng& rng,
                                    double temperature) {
    if (labels.size() != prompts.size(0)) throw std::invalid_argument("label count differs from batch");
    return sample_negatives(prompt_text_similarity(prompts, texts), labels, rng, temperature);
}

MatchBatch build_joint_pairs(const Tensor& prompts, const Tensor& texts, const NegativeIndices& negatives) {
    const std::size_t batch = prompts.size(0);
    if (texts.shape() != prompts.shape()) throw std::invalid_argument("prompts and texts must share shape");
    if (negatives.text_for_prompt.size() != batch || negatives.prompt_for_text.size() != batch) {
        throw std::invalid_argument("negative index count differs from batch");
    }
    Tensor positives = concat({prompts, texts}, 2);
    Tensor prompt_neg = concat({prompts, index_select(texts, 0, negatives.text_for_prompt)}, 2);
    Tensor text_neg = concat({index_select(prompts, 0, negatives.prompt_for_text), texts}, 2);
    MatchBatch out;
    out.joint = concat({positives, prompt_neg, text_neg}, 0);
    out.labels.assign(3 * batch, 0);
    std::fill_n(out.labels.begin(), batch, 1);
    return out;
}

Tensor ptm_loss(const MatchBatch& batch, const Linear& head) {
    if (head.weight.size(0) != 2 || head.weight.size(1) != batch.joint.size(2)) {
        throw std::invalid_argument("PTM head must map " + std::to_string(batch.joint.size(2)) + " -> 2");
    }
    Tensor logits = mean(head(batch.joint), 1);  // [3B, 2]
    return cross_entropy(logits, batch.labels);
}

}  // namespace cfpl
