#include "cfpl/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>

#include "cfpl/protocol.hpp"
#include "cfpl/trainer.hpp"

namespace cfpl {

namespace fs = std::filesystem;

namespace {

// Flags shared by every command that resolves a RunConfig.
struct ConfigFlags {
    std::string config_path;
    std::string preset = "paper";
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "run config file (key = value lines)");
        app->add_option("--preset", preset, "base preset when no config file is given")
            ->check(CLI::IsMember({"paper", "tiny"}));
        app->add_option("--set", overrides, "override one config key, key=value (repeatable)");
        app->add_option("--seed", seed, "training seed");
        app->add_option("--steps", steps, "fixed optimizer step budget (max_steps)");
    }

    RunConfig resolve(const std::optional<fs::path>& fallback = std::nullopt) const {
        RunConfig c;
        if (!config_path.empty()) {
            c = RunConfig::load(config_path);
        } else if (fallback) {
            c = RunConfig::load(*fallback);
        } else {
            c = preset == "tiny" ? RunConfig::tiny() : RunConfig::paper_defaults();
        }
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + kv);
            c.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) c.train.seed = *seed;
        if (steps) c.train.max_steps = *steps;
        c.validate();
        return c;
    }
};

struct PolicyFlags {
    std::string policy = "eer";
    double threshold = 0.5;

    void attach(CLI::App* app) {
        app->add_option("--policy", policy, "HTER threshold policy")->check(CLI::IsMember({"eer", "fixed"}));
        app->add_option("--threshold", threshold, "threshold for the fixed policy");
    }
    ProtocolOptions options(std::ostream& out) const {
        ProtocolOptions o;
        o.policy = policy == "fixed" ? ThresholdPolicy::fixed : ThresholdPolicy::eer;
        o.fixed_threshold = threshold;
        o.progress = [&out](const std::string& m) { out << m << std::endl; };
        return o;
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

fs::path prepare_out(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Prompt-learning face anti-spoofing toolkit", "cfpl"};
    app.require_subcommand(1);

    std::string out_dir;

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic multi-domain dataset");
    SynthOptions synth_opts;
    synth_cmd->add_option("--out", out_dir, "output directory")->required();
    synth_cmd->add_option("--domains", synth_opts.domains, "number of domains");
    synth_cmd->add_option("--per-class", synth_opts.per_class, "images per class and domain");
    synth_cmd->add_option("--seed", synth_opts.seed, "generator seed");
    synth_cmd->add_option("--image-size", synth_opts.image_size, "image side in pixels");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model on a manifest");
    ConfigFlags train_flags;
    std::string train_manifest;
    train_flags.attach(train_cmd);
    train_cmd->add_option("--manifest", train_manifest, "training manifest CSV")->required();
    train_cmd->add_option("--out", out_dir, "output directory")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score a manifest with a checkpoint");
    std::string eval_ckpt;
    std::string eval_manifest;
    PolicyFlags eval_policy;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "evaluation manifest CSV")->required();
    eval_cmd->add_option("--out", out_dir, "output directory")->required();
    eval_policy.attach(eval_cmd);

    // protocol
    auto* protocol_cmd = app.add_subcommand("protocol", "leave-one-out cross-domain evaluation");
    ConfigFlags protocol_flags;
    PolicyFlags protocol_policy;
    std::string protocol_spec;
    protocol_flags.attach(protocol_cmd);
    protocol_policy.attach(protocol_cmd);
    protocol_cmd->add_option("--spec", protocol_spec, "protocol spec file")->required();
    protocol_cmd->add_option("--out", out_dir, "output directory")->required();

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check of the full loss");
    ConfigFlags grad_flags;
    grad_flags.preset = "tiny";
    std::size_t grad_samples = 100;
    double grad_h = 1e-5;
    grad_flags.attach(grad_cmd);
    grad_cmd->add_option("--samples", grad_samples, "number of sampled coordinates");
    grad_cmd->add_option("--step-size", grad_h, "central-difference step");
    grad_cmd->add_option("--out", out_dir, "output directory")->required();

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "HTER grid over Q-Former depth and query length");
    ConfigFlags sweep_flags;
    PolicyFlags sweep_policy;
    std::string sweep_spec;
    std::string sweep_target;
    sweep_flags.attach(sweep_cmd);
    sweep_policy.attach(sweep_cmd);
    sweep_cmd->add_option("--spec", sweep_spec, "protocol spec file")->required();
    sweep_cmd->add_option("--target", sweep_target, "held-out domain (default: last in the spec)");
    sweep_cmd->add_option("--out", out_dir, "output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (synth_cmd->parsed()) {
            const fs::path dir = prepare_out(out_dir);
            const Manifest m = synth_dataset(dir, synth_opts);
            ProtocolSpec spec;
            for (std::size_t d = 0; d < synth_opts.domains; ++d) {
                const std::string name = synth_domain_name(d);
                spec.domains.push_back(name);
                spec.manifests[name] = dir / (name + ".csv");
            }
            RunConfig run = RunConfig::tiny();
            run.image.image_size = synth_opts.image_size;
            run.validate();
            run.save(dir / "run.cfg");
            spec.config = "run.cfg";
            spec.save(dir / "protocol.cfg");
            write_text(dir / "synth.cfg", "domains = " + std::to_string(synth_opts.domains) + "\nper_class = " +
                                              std::to_string(synth_opts.per_class) + "\nseed = " +
                                              std::to_string(synth_opts.seed) + "\nimage_size = " +
                                              std::to_string(synth_opts.image_size) + "\n");
            out << "wrote " << m.rows.size() << " images to " << dir.string() << '\n';
        } else if (train_cmd->parsed()) {
            const RunConfig config = train_flags.resolve();
            const Dataset data = load_dataset(fs::path(train_manifest));
            const fs::path dir = prepare_out(out_dir);
            config.save(dir / "config.cfg");
            std::ofstream log(dir / "train_log.csv");
            if (!log) throw std::runtime_error("cannot write " + (dir / "train_log.csv").string());
            log << kLogHeader << '\n';
            TrainOptions options;
            options.on_step = [&](const TrainLogEntry& e) { log << format_log_line(e) << '\n'; };
            const TrainResult r = train(config, data, options);
            save_checkpoint(dir / "checkpoint.bin", r.checkpoint);
            const auto& last = r.log.back();
            out << "trained " << r.log.size() << " steps; final loss_cls " << fmt(last.loss_cls) << ", loss_ptm "
                << fmt(last.loss_ptm) << '\n';
        } else if (eval_cmd->parsed()) {
            const Checkpoint ckpt = load_checkpoint(eval_ckpt);
            const Dataset data = load_dataset(fs::path(eval_manifest));
            const fs::path dir = prepare_out(out_dir);
            ckpt.config.save(dir / "config.cfg");
            const ScoreSet s = evaluate_scores(ckpt, data);
            std::ofstream scores(dir / "scores.csv");
            scores << "index,score,label,domain\n";
            for (std::size_t i = 0; i < s.scores.size(); ++i) {
                scores << i << ',' << fmt(s.scores[i]) << ',' << s.labels[i] << ',' << s.domains[i] << '\n';
            }
            const ProtocolOptions po = eval_policy.options(out);
            const HterResult h = hter(s, po.policy, po.fixed_threshold);
            const ReportRow row = score_target("eval", s, po, ckpt.config.train.seed);
            write_text(dir / "metrics.csv", "hter,auc,tpr_at_fpr1,threshold,far,frr,threshold_policy\n" + fmt(row.hter) +
                                                 "," + fmt(row.auc) + "," + fmt(row.tpr_at_fpr1) + "," + fmt(h.threshold) +
                                                 "," + fmt(h.far) + "," + fmt(h.frr) + "," + policy_name(po.policy) + "\n");
            out << "HTER " << fmt(row.hter) << "  AUC " << fmt(row.auc) << "  TPR@FPR=1% " << fmt(row.tpr_at_fpr1) << '\n';
        } else if (protocol_cmd->parsed()) {
            const ProtocolSpec spec = ProtocolSpec::load(protocol_spec);
            const RunConfig config = protocol_flags.resolve(spec.config);
            const fs::path dir = prepare_out(out_dir);
            config.save(dir / "config.cfg");
            const ProtocolReport report = leave_one_out(spec, config, protocol_policy.options(out));
            write_text(dir / "report.csv", report_csv(report));
            write_text(dir / "report.txt", report_table(report));
            out << report_table(report);
        } else if (grad_cmd->parsed()) {
            const RunConfig config = grad_flags.resolve();
            const fs::path dir = prepare_out(out_dir);
            RunConfig resolved = config;
            resolved.precision = Precision::f64;
            resolved.save(dir / "config.cfg");
            const ModelGradCheck r = grad_check_model(config, grad_samples, grad_h, config.train.seed);
            std::string csv = "group,coordinates,max_rel_error\n";
            for (const auto& g : r.groups) {
                csv += g.group + "," + std::to_string(g.coordinates) + "," + fmt(g.max_rel_error) + "\n";
                out << g.group << ": " << g.coordinates << " coordinates, max rel error " << fmt(g.max_rel_error) << '\n';
            }
            write_text(dir / "gradcheck.csv", csv);
            out << "overall max rel error " << fmt(r.max_rel_error) << '\n';
            if (!(r.max_rel_error < 1e-4)) {
                err << "gradient check failed: max relative error " << fmt(r.max_rel_error) << " >= 1e-4\n";
                return kExitFailure;
            }
        } else if (sweep_cmd->parsed()) {
            const ProtocolSpec spec = ProtocolSpec::load(sweep_spec);
            const RunConfig config = sweep_flags.resolve(spec.config);
            const std::string target = sweep_target.empty() ? spec.domains.back() : sweep_target;
            const fs::path dir = prepare_out(out_dir);
            config.save(dir / "config.cfg");
            const SweepResult r = sweep(spec.load_data(), spec.domains, target, config, sweep_policy.options(out));
            write_text(dir / "sweep.csv", sweep_csv(r));
            write_text(dir / "sweep.txt", sweep_table(r));
            out << sweep_table(r);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitOk;
}

}  // namespace cfpl
