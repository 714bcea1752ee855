#include "cfpl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cfpl {

namespace {

struct ClassCounts {
    std::size_t live = 0;
    std::size_t spoof = 0;
};

ClassCounts count_classes(const ScoreSet& s) {
    ClassCounts c;
    for (int y : s.labels) (y == 1 ? c.live : c.spoof)++;
    return c;
}

// Indices sorted by score.
std::vector<std::size_t> order_by_score(const ScoreSet& s, bool descending) {
    std::vector<std::size_t> idx(s.scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return descending ? s.scores[a] > s.scores[b] : s.scores[a] < s.scores[b];
    });
    return idx;
}

}  // namespace

void ScoreSet::validate() const {
    if (scores.size() != labels.size() || (!domains.empty() && domains.size() != scores.size())) {
        throw std::invalid_argument("score set columns differ in length");
    }
    bool live = false;
    bool spoof = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("labels must be 0 (spoof) or 1 (live)");
        if (!std::isfinite(scores[i])) throw std::invalid_argument("scores must be finite");
        (labels[i] == 1 ? live : spoof) = true;
    }
    if (!live || !spoof) throw std::invalid_argument("metrics need at least one live and one spoof sample");
}

std::vector<RocPoint> roc_curve(const ScoreSet& s) {
    s.validate();
    const ClassCounts totals = count_classes(s);
    const auto idx = order_by_score(s, true);
    std::vector<RocPoint> roc{{0.0, 0.0}};
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < idx.size();) {
        const double threshold = s.scores[idx[i]];
        while (i < idx.size() && s.scores[idx[i]] == threshold) {
            (s.labels[idx[i]] == 1 ? tp : fp)++;
            ++i;
        }
        roc.push_back({static_cast<double>(fp) / static_cast<double>(totals.spoof),
                       static_cast<double>(tp) / static_cast<double>(totals.live)});
    }
    return roc;
}

double auc(const ScoreSet& s) {
    const auto roc = roc_curve(s);
    double area = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i) {
        area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) * 0.5;
    }
    return area;
}

double tpr_at_fpr(const std::vector<RocPoint>& roc, double target_fpr) {
    if (!(target_fpr > 0.0 && target_fpr <= 1.0)) throw std::invalid_argument("target FPR must lie in (0, 1]");
    if (roc.empty()) throw std::invalid_argument("empty ROC curve");
    std::size_t k = 0;
    for (std::size_t i = 0; i < roc.size(); ++i) {
        if (roc[i].fpr <= target_fpr) k = i;
    }
    if (roc[k].fpr == target_fpr || k + 1 == roc.size()) return roc[k].tpr;
    const RocPoint& a = roc[k];
    const RocPoint& b = roc[k + 1];
    return a.tpr + (b.tpr - a.tpr) * (target_fpr - a.fpr) / (b.fpr - a.fpr);
}

double tpr_at_fpr(const ScoreSet& s, double target_fpr) { return tpr_at_fpr(roc_curve(s), target_fpr); }

HterResult hter_at(const ScoreSet& s, double threshold) {
    s.validate();
    const ClassCounts totals = count_classes(s);
    std::size_t accepted_spoof = 0;
    std::size_t rejected_live = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        if (s.labels[i] == 0 && s.scores[i] >= threshold) ++accepted_spoof;
        if (s.labels[i] == 1 && s.scores[i] < threshold) ++rejected_live;
    }
    HterResult r;
    r.far = static_cast<double>(accepted_spoof) / static_cast<double>(totals.spoof);
    r.frr = static_cast<double>(rejected_live) / static_cast<double>(totals.live);
    r.hter = 0.5 * (r.far + r.frr);
    r.threshold = threshold;
    return r;
}

HterResult hter_eer(const ScoreSet& s) {
    s.validate();
    const ClassCounts totals = count_classes(s);
    const auto idx = order_by_score(s, false);
    std::vector<double> distinct;
    for (auto i : idx) {
        if (distinct.empty() || s.scores[i] != distinct.back()) distinct.push_back(s.scores[i]);
    }
    // Interval k accepts scores >= distinct[k]; k == distinct.size() accepts none.
    std::size_t spoof_at_or_below = 0;
    std::size_t live_at_or_below = 0;
    std::size_t cursor = 0;
    HterResult best;
    double best_gap = 0.0;
    bool have = false;
    for (std::size_t k = 0; k <= distinct.size(); ++k) {
        if (k > 0) {
            while (cursor < idx.size() && s.scores[idx[cursor]] <= distinct[k - 1]) {
                (s.labels[idx[cursor]] == 1 ? live_at_or_below : spoof_at_or_below)++;
                ++cursor;
            }
        }
        HterResult r;
        r.far = static_cast<double>(totals.spoof - spoof_at_or_below) / static_cast<double>(totals.spoof);
        r.frr = static_cast<double>(live_at_or_below) / static_cast<double>(totals.live);
        r.hter = 0.5 * (r.far + r.frr);
        const double lower = k == 0 ? distinct.front() - 1.0 : distinct[k - 1];
        const double upper = k == distinct.size() ? distinct.back() + 1.0 : distinct[k];
        r.threshold = 0.5 * (lower + upper);
        const double gap = std::abs(r.far - r.frr);
        if (!have || gap < best_gap || (gap == best_gap && r.hter < best.hter)) {
            best = r;
            best_gap = gap;
            have = true;
        }
    }
    return best;
}

HterResult hter(const ScoreSet& s, ThresholdPolicy policy, double fixed_threshold) {
    return policy == ThresholdPolicy::eer ? hter_eer(s) : hter_at(s, fixed_threshold);
}

std::string policy_name(ThresholdPolicy policy) { return policy == ThresholdPolicy::eer ? "eer" : "fixed"; }

}  // namespace cfpl
