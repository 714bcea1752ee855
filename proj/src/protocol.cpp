#include "cfpl/protocol.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cfpl/trainer.hpp"

namespace cfpl {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string percent(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return buf;
}

void report(const ProtocolOptions& options, const std::string& message) {
    if (options.progress) options.progress(message);
}

ReportRow train_and_score(const Dataset& data, const std::vector<std::string>& domains, const std::string& target,
                          const RunConfig& config, const ProtocolOptions& options) {
    if (std::find(domains.begin(), domains.end(), target) == domains.end()) {
        throw std::invalid_argument("target domain " + target + " is not in the domain list");
    }
    std::vector<std::string> sources;
    for (const auto& d : domains) {
        if (d != target) sources.push_back(d);
    }
    const Dataset train_set = data.filter_domains(sources);
    const Dataset test_set = data.filter_domains({target});
    if (test_set.size() == 0) throw std::invalid_argument("no samples for target domain " + target);
    const TrainResult trained = train(config, train_set);
    const ScoreSet scores = evaluate_scores(trained.checkpoint, test_set);
    return score_target(target, scores, options, config.train.seed);
}

}  // namespace

void ProtocolSpec::validate() const {
    if (domains.size() < 2) throw std::invalid_argument("protocol needs at least 2 domains");
    for (std::size_t i = 0; i < domains.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (domains[i] == domains[j]) throw std::invalid_argument("duplicate domain " + domains[i]);
        }
        if (!manifests.count(domains[i])) throw std::invalid_argument("no manifest for domain " + domains[i]);
    }
    for (const auto& [name, path] : manifests) {
        if (std::find(domains.begin(), domains.end(), name) == domains.end()) {
            throw std::invalid_argument("manifest given for unlisted domain " + name);
        }
    }
}

ProtocolSpec ProtocolSpec::parse(const std::string& text, const std::filesystem::path& base_dir) {
    ProtocolSpec spec;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "domains") {
            spec.domains = split_list(value);
        } else if (key == "config") {
            spec.config = resolve(value);
        } else if (key.rfind("manifest.", 0) == 0 && key.size() > 9) {
            spec.manifests[key.substr(9)] = resolve(value);
        } else {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": unknown protocol key " + key);
        }
    }
    spec.validate();
    return spec;
}

ProtocolSpec ProtocolSpec::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open protocol spec: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse(ss.str(), path.parent_path());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

void ProtocolSpec::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write protocol spec: " + path.string());
    out << "domains = ";
    for (std::size_t i = 0; i < domains.size(); ++i) out << (i ? "," : "") << domains[i];
    out << '\n';
    const auto base = path.parent_path();
    for (const auto& d : domains) {
        const auto& m = manifests.at(d);
        out << "manifest." << d << " = " << (m.parent_path() == base ? m.filename() : m).string() << '\n';
    }
    if (config) out << "config = " << config->string() << '\n';
}

Dataset ProtocolSpec::load_data() const {
    validate();
    Dataset all;
    for (const auto& d : domains) {
        Dataset part = load_dataset(manifests.at(d));
        std::fill(part.domains.begin(), part.domains.end(), d);
        all.append(part);
    }
    return all;
}

ReportRow score_target(const std::string& target, const ScoreSet& scores, const ProtocolOptions& options,
                       std::uint64_t seed) {
    ReportRow row;
    row.target = target;
    row.hter = hter(scores, options.policy, options.fixed_threshold).hter;
    row.auc = auc(scores);
    row.tpr_at_fpr1 = tpr_at_fpr(scores, 0.01);
    row.policy = options.policy;
    row.seed = seed;
    return row;
}

ProtocolReport leave_one_out(const Dataset& data, const std::vector<std::string>& domains, const RunConfig& config,
                             const ProtocolOptions& options) {
    if (domains.size() < 2) throw std::invalid_argument("leave-one-out needs at least 2 domains");
    ProtocolReport out;
    for (const auto& target : domains) {
        report(options, "target " + target + ": training on the other " + std::to_string(domains.size() - 1) + " domains");
        out.rows.push_back(train_and_score(data, domains, target, config, options));
    }
    ReportRow& avg = out.average;
    avg.target = "average";
    avg.policy = options.policy;
    avg.seed = config.train.seed;
    for (const auto& r : out.rows) {
        avg.hter += r.hter;
        avg.auc += r.auc;
        avg.tpr_at_fpr1 += r.tpr_at_fpr1;
    }
    const double n = static_cast<double>(out.rows.size());
    avg.hter /= n;
    avg.auc /= n;
    avg.tpr_at_fpr1 /= n;
    return out;
}

ProtocolReport leave_one_out(const ProtocolSpec& spec, const RunConfig& config, const ProtocolOptions& options) {
    return leave_one_out(spec.load_data(), spec.domains, config, options);
}

std::string report_csv(const ProtocolReport& report) {
    std::ostringstream os;
    os << "target,hter,auc,tpr_at_fpr1,threshold_policy,seed\n";
    auto row = [&](const ReportRow& r) {
        os << r.target << ',' << full(r.hter) << ',' << full(r.auc) << ',' << full(r.tpr_at_fpr1) << ','
           << policy_name(r.policy) << ',' << r.seed << '\n';
    };
    for (const auto& r : report.rows) row(r);
    row(report.average);
    return os.str();
}

std::string report_table(const ProtocolReport& report) {
    std::ostringstream os;
    os << "# HTER(%) lower is better; AUC(%) and TPR@FPR=1%(%) higher is better.\n"
       << "# FAR counts spoof scores >= threshold as accepted; threshold policy: " << policy_name(report.average.policy)
       << "\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %9s %9s %14s\n", "target", "HTER", "AUC", "TPR@FPR=1%");
    os << buf;
    auto row = [&](const ReportRow& r) {
        std::snprintf(buf, sizeof buf, "%-12s %9s %9s %14s\n", r.target.c_str(), percent(r.hter).c_str(),
                      percent(r.auc).c_str(), percent(r.tpr_at_fpr1).c_str());
        os << buf;
    };
    for (const auto& r : report.rows) row(r);
    row(report.average);
    return os.str();
}

double SweepResult::hter(std::size_t depth, std::size_t query_count) const {
    for (const auto& c : cells) {
        if (c.depth == depth && c.query_count == query_count) return c.result.hter;
    }
    throw std::out_of_range("no sweep cell for depth " + std::to_string(depth) + ", queries " + std::to_string(query_count));
}

SweepResult sweep(const Dataset& data, const std::vector<std::string>& domains, const std::string& target,
                  const RunConfig& config, const ProtocolOptions& options) {
    SweepResult out;
    out.target = target;
    for (auto depth : kSweepDepths) {
        for (auto queries : kSweepQueryLengths) {
            RunConfig cell = config;
            cell.qformer_depth = depth;
            cell.query_count = queries;
            cell.validate();
            report(options, "depth " + std::to_string(depth) + ", queries " + std::to_string(queries));
            out.cells.push_back({depth, queries, train_and_score(data, domains, target, cell, options)});
        }
    }
    return out;
}

std::string sweep_csv(const SweepResult& result) {
    std::ostringstream os;
    os << "depth";
    for (auto q : kSweepQueryLengths) os << ",q" << q;
    os << '\n';
    for (auto d : kSweepDepths) {
        os << d;
        for (auto q : kSweepQueryLengths) os << ',' << full(result.hter(d, q));
        os << '\n';
    }
    return os.str();
}

std::string sweep_table(const SweepResult& result) {
    std::ostringstream os;
    os << "# HTER(%) on unseen domain " << result.target << "; rows: Q-Former depth, columns: query length\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-6s", "depth");
    os << buf;
    for (auto q : kSweepQueryLengths) {
        std::snprintf(buf, sizeof buf, " %8s", ("x" + std::to_string(q)).c_str());
        os << buf;
    }
    os << '\n';
    for (auto d : kSweepDepths) {
        std::snprintf(buf, sizeof buf, "%-6s", ("x" + std::to_string(d)).c_str());
        os << buf;
        for (auto q : kSweepQueryLengths) {
            std::snprintf(buf, sizeof buf, " %8s", percent(result.hter(d, q)).c_str());
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace cfpl
