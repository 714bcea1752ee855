#pragma once

#include <string>
#include <vector>

namespace cfpl {

// Higher score = more live. Labels: 0 spoof, 1 live.
struct ScoreSet {
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<std::string> domains;

    // Throws unless lengths agree, labels are 0/1, and both classes occur.
    void validate() const;
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

// One point per distinct score (accepting score >= threshold), walking the
// thresholds downward from above the maximum: starts at (0,0), ends at (1,1).
std::vector<RocPoint> roc_curve(const ScoreSet& s);

// Trapezoidal area under roc_curve.
double auc(const ScoreSet& s);

// TPR read off the ROC at `target_fpr` in (0, 1]: the last point with
// fpr <= target, linearly interpolated towards the next point when that
// point's fpr is below the target.
double tpr_at_fpr(const ScoreSet& s, double target_fpr);
double tpr_at_fpr(const std::vector<RocPoint>& roc, double target_fpr);

enum class ThresholdPolicy { fixed, eer };

struct HterResult {
    double hter = 0.0;
    double far = 0.0;  // spoof with score >= threshold
    double frr = 0.0;  // live with score < threshold
    double threshold = 0.0;
};

// Error rates at a fixed threshold.
HterResult hter_at(const ScoreSet& s, double threshold);

// Scans every threshold interval between consecutive distinct scores (plus
// the two open ends) and picks the one minimizing |FAR - FRR|; ties go to the
// smaller HTER, then the lower threshold. The reported threshold is the
// interval midpoint; the open ends are closed one unit beyond the extreme
// scores.
HterResult hter_eer(const ScoreSet& s);

HterResult hter(const ScoreSet& s, ThresholdPolicy policy, double fixed_threshold = 0.5);

std::string policy_name(ThresholdPolicy policy);

}  // namespace cfpl
