#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cfpl/nn.hpp"

namespace cfpl {

inline constexpr double kMiningTemperature = 0.07;

// The joint prompt-text features: B positives, then B prompt-mined
// negatives, then B text-mined negatives.
struct MatchBatch {
    Tensor joint;             // [3B, N, 2d]
    std::vector<int> labels;  // 1 for the first B rows, 0 after
};

struct NegativeIndices {
    std::vector<std::size_t> text_for_prompt;  // negative text j for prompt i
    std::vector<std::size_t> prompt_for_text;  // negative prompt i for text j
};

// label 1 -> "a photo of a live face.", label 0 -> "a photo of a fake face."
std::vector<std::string> render_descriptions(const std::vector<int>& labels);

// [B, 77, d] -> mean over tokens, repeated N times -> [B, N, d]
Tensor text_supervision(const Tensor& embedded, std::size_t query_count);

// Cosine similarity between query-mean-pooled prompts and token-mean-pooled
// texts: sim[i * B + j] = cos(mean(P[i]), mean(S[j])). Values only.
std::vector<double> prompt_text_similarity(const Tensor& prompts, const Tensor& texts);

// Samples, for each prompt i, a text j with labels[j] != labels[i] with
// probability proportional to exp(sim(i, j) / temperature), and symmetrically
// a prompt for each text. Throws when the batch holds a single class.
NegativeIndices sample_negatives(const std::vector<double>& similarity, const std::vector<int>& labels, Rng& rng,
                                 double temperature = kMiningTemperature);

NegativeIndices mine_hard_negatives(const Tensor& prompts, const Tensor& texts, const std::vector<int>& labels, Rng& rng,
                                    double temperature = kMiningTemperature);

MatchBatch build_joint_pairs(const Tensor& prompts, const Tensor& texts, const NegativeIndices& negatives);

// Linear head over each query row, logits averaged over the N queries, then
// mean cross-entropy over the 3B rows.
Tensor ptm_loss(const MatchBatch& batch, const Linear& head);

}  // namespace cfpl
