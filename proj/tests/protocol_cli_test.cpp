#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cfpl/cli.hpp"
#include "cfpl/protocol.hpp"

using namespace cfpl;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("cfpl_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

// Three small synthetic domains written once for all CLI tests.
const fs::path& synth_root() {
    static const fs::path root = [] {
        auto dir = fresh_dir("data");
        auto r = cli({"synth", "--out", dir.string(), "--domains", "3", "--per-class", "8"});
        EXPECT_EQ(r.code, 0) << r.err;
        return dir;
    }();
    return root;
}

}  // namespace

TEST(ProtocolSpecFile, ParseAndValidate) {
    auto s = ProtocolSpec::parse("domains = A, B\nmanifest.A = a.csv\nmanifest.B = /abs/b.csv\n", "/base");
    EXPECT_EQ(s.domains, (std::vector<std::string>{"A", "B"}));
    EXPECT_EQ(s.manifests.at("A"), fs::path("/base/a.csv"));
    EXPECT_EQ(s.manifests.at("B"), fs::path("/abs/b.csv"));
    EXPECT_THROW(ProtocolSpec::parse("domains = A\nmanifest.A = a.csv\n", "."), std::invalid_argument);
    EXPECT_THROW(ProtocolSpec::parse("domains = A,B\nmanifest.A = a.csv\n", "."), std::invalid_argument);
    EXPECT_THROW(ProtocolSpec::parse("domains = A,B\nfoo = 1\n", "."), std::invalid_argument);
}

TEST(Report, AveragesAndCsvShape) {
    ProtocolReport r;
    r.rows = {{"A", 0.1, 0.9, 0.5, ThresholdPolicy::eer, 7}, {"B", 0.3, 0.7, 0.25, ThresholdPolicy::eer, 7}};
    r.average = {"average", 0.2, 0.8, 0.375, ThresholdPolicy::eer, 7};
    const auto csv = report_csv(r);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "target,hter,auc,tpr_at_fpr1,threshold_policy,seed");
    std::getline(in, line);
    EXPECT_EQ(line, "A,0.10000000000000001,0.90000000000000002,0.5,eer,7");
    const auto table = report_table(r);
    EXPECT_NE(table.find("20.00"), std::string::npos);
    EXPECT_NE(table.find("37.50"), std::string::npos);
}

TEST(Report, ScoreTargetUsesPolicy) {
    ScoreSet s{{0.9, 0.4, 0.6, 0.1}, {1, 1, 0, 0}, {}};
    ProtocolOptions fixed;
    fixed.policy = ThresholdPolicy::fixed;
    EXPECT_DOUBLE_EQ(score_target("X", s, fixed, 1).hter, 0.5);
    // EER interval (0.4, 0.6]: FAR = FRR = 0.5.
    EXPECT_DOUBLE_EQ(score_target("X", s, ProtocolOptions{}, 1).hter, 0.5);
    EXPECT_DOUBLE_EQ(score_target("X", s, ProtocolOptions{}, 1).auc, 0.75);
}

TEST(LeaveOneOut, ThreeDomainStructure) {
    SynthOptions o;
    o.domains = 3;
    o.per_class = 8;
    auto data = synth_in_memory(o);
    RunConfig c = RunConfig::tiny();
    c.train.max_steps = 2;
    c.train.batch = 4;
    auto r = leave_one_out(data, {"D0", "D1", "D2"}, c);
    ASSERT_EQ(r.rows.size(), 3u);
    EXPECT_EQ(r.rows[1].target, "D1");
    double h = 0, a = 0, t = 0;
    for (const auto& row : r.rows) {
        h += row.hter / 3;
        a += row.auc / 3;
        t += row.tpr_at_fpr1 / 3;
    }
    EXPECT_NEAR(r.average.hter, h, 1e-12);
    EXPECT_NEAR(r.average.auc, a, 1e-12);
    EXPECT_NEAR(r.average.tpr_at_fpr1, t, 1e-12);
    EXPECT_THROW(leave_one_out(data, {"D0"}, c), std::invalid_argument);
}

TEST(Cli, UsageErrorsExitTwo) {
    auto none = cli({});
    EXPECT_EQ(none.code, kExitUsage);
    EXPECT_NE(none.err.find("synth"), std::string::npos);
    EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
    EXPECT_EQ(cli({"train", "--bogus-flag"}).code, kExitUsage);
    EXPECT_EQ(cli({"gradcheck", "--out", "x", "--preset", "huge"}).code, kExitUsage);
    EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(Cli, MissingConfigNamesFile) {
    auto r = cli({"train", "--config", "missing.cfg", "--manifest", (synth_root() / "manifest.csv").string(), "--out",
                  fresh_dir("missing_cfg").string()});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("missing.cfg"), std::string::npos);
}

TEST(Cli, SynthWritesSpecAndConfig) {
    const auto& root = synth_root();
    EXPECT_TRUE(fs::exists(root / "protocol.cfg"));
    EXPECT_TRUE(fs::exists(root / "run.cfg"));
    EXPECT_TRUE(fs::exists(root / "D2.csv"));
    auto spec = ProtocolSpec::load(root / "protocol.cfg");
    EXPECT_EQ(spec.domains.size(), 3u);
    ASSERT_TRUE(spec.config.has_value());
    EXPECT_EQ(spec.load_data().size(), 48u);
}

TEST(Cli, TrainThenEval) {
    auto dir = fresh_dir("train");
    auto t = cli({"train", "--preset", "tiny", "--steps", "3", "--set", "batch=4", "--manifest",
                  (synth_root() / "D0.csv").string(), "--out", (dir / "run").string()});
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.bin"));
    auto cfg = RunConfig::load(dir / "run" / "config.cfg");
    EXPECT_EQ(cfg.train.max_steps, 3u);
    EXPECT_EQ(cfg.train.batch, 4u);
    std::istringstream log(slurp(dir / "run" / "train_log.csv"));
    std::string line;
    int lines = 0;
    std::getline(log, line);
    EXPECT_EQ(line, "step,loss_cls,loss_ptm,lr");
    while (std::getline(log, line)) ++lines;
    EXPECT_EQ(lines, 3);

    auto e = cli({"eval", "--checkpoint", (dir / "run" / "checkpoint.bin").string(), "--manifest",
                  (synth_root() / "D1.csv").string(), "--out", (dir / "eval").string()});
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_TRUE(fs::exists(dir / "eval" / "scores.csv"));
    EXPECT_TRUE(fs::exists(dir / "eval" / "metrics.csv"));
    EXPECT_TRUE(fs::exists(dir / "eval" / "config.cfg"));
}

TEST(Cli, ProtocolRepeatsIdentically) {
    auto a = fresh_dir("proto_a");
    auto b = fresh_dir("proto_b");
    const std::string spec = (synth_root() / "protocol.cfg").string();
    for (const auto& dir : {a, b}) {
        auto r = cli({"protocol", "--spec", spec, "--seed", "7", "--steps", "2", "--set", "batch=4", "--out",
                      dir.string()});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    EXPECT_EQ(slurp(a / "report.csv"), slurp(b / "report.csv"));
    EXPECT_EQ(slurp(a / "config.cfg"), slurp(b / "config.cfg"));
    EXPECT_EQ(RunConfig::load(a / "config.cfg").train.seed, 7u);
    std::istringstream in(slurp(a / "report.csv"));
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 5);  // header, 3 targets, average
}

TEST(Cli, GradcheckPasses) {
    auto dir = fresh_dir("gradcheck");
    auto r = cli({"gradcheck", "--samples", "14", "--out", dir.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "gradcheck.csv"));
    EXPECT_EQ(RunConfig::load(dir / "config.cfg").precision, Precision::f64);
}
