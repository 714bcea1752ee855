#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfpl/config.hpp"
#include "cfpl/dataset.hpp"
#include "cfpl/metrics.hpp"

namespace cfpl {

// Key = value file:
//   domains = A,B,C
//   manifest.A = a.csv        (relative paths resolve against the spec file)
//   config = run.cfg          (optional run config template)
struct ProtocolSpec {
    std::vector<std::string> domains;
    std::map<std::string, std::filesystem::path> manifests;
    std::optional<std::filesystem::path> config;

    void validate() const;
    static ProtocolSpec parse(const std::string& text, const std::filesystem::path& base_dir);
    static ProtocolSpec load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
    // Rows of every manifest; each row's domain is the spec's domain name.
    Dataset load_data() const;
};

struct ProtocolOptions {
    ThresholdPolicy policy = ThresholdPolicy::eer;
    double fixed_threshold = 0.5;
    std::function<void(const std::string& message)> progress;
};

struct ReportRow {
    std::string target;
    double hter = 0.0;
    double auc = 0.0;
    double tpr_at_fpr1 = 0.0;
    ThresholdPolicy policy = ThresholdPolicy::eer;
    std::uint64_t seed = 0;
};

struct ProtocolReport {
    std::vector<ReportRow> rows;  // one per target domain
    ReportRow average;            // target "average", arithmetic means
};

ReportRow score_target(const std::string& target, const ScoreSet& scores, const ProtocolOptions& options,
                       std::uint64_t seed);

// For each domain: train on every other domain in `domains`, score the held
// out one. `data` rows carry their domain tags.
ProtocolReport leave_one_out(const Dataset& data, const std::vector<std::string>& domains, const RunConfig& config,
                             const ProtocolOptions& options = {});
ProtocolReport leave_one_out(const ProtocolSpec& spec, const RunConfig& config, const ProtocolOptions& options = {});

// CSV `target,hter,auc,tpr_at_fpr1,threshold_policy,seed` at full precision.
std::string report_csv(const ProtocolReport& report);
// Fixed-width table in percent with two decimals.
std::string report_table(const ProtocolReport& report);

inline const std::vector<std::size_t> kSweepDepths = {1, 4, 8, 12};
inline const std::vector<std::size_t> kSweepQueryLengths = {8, 16, 32, 64};

struct SweepCell {
    std::size_t depth = 0;
    std::size_t query_count = 0;
    ReportRow result;
};

struct SweepResult {
    std::string target;
    std::vector<SweepCell> cells;  // row-major: depth outer, query length inner

    double hter(std::size_t depth, std::size_t query_count) const;
};

// One held-out split per cell: train on every domain but `target`, report the
// unseen-domain HTER.
SweepResult sweep(const Dataset& data, const std::vector<std::string>& domains, const std::string& target,
                  const RunConfig& config, const ProtocolOptions& options = {});

// Rows are depths, columns query lengths; values are HTER fractions at full
// precision.
std::string sweep_csv(const SweepResult& result);
std::string sweep_table(const SweepResult& result);

}  // namespace cfpl
