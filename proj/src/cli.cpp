#include "reid/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "reid/checkpoint.hpp"
#include "reid/config.hpp"
#include "reid/data.hpp"
#include "reid/errors.hpp"
#include "reid/evaluation.hpp"
#include "reid/model.hpp"
#include "reid/training.hpp"
#include "reid/util.hpp"
#include "reid/verify.hpp"

namespace fs = std::filesystem;

namespace reid {

namespace {

constexpr int kOk = 0;
constexpr int kValidationError = 1;
constexpr int kRuntimeError = 2;
constexpr int kVerifyFailure = 3;

struct CliOptions {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
};

void apply_options(RunConfig& cfg, const CliOptions& opts) {
    if (!opts.config_path.empty()) cfg.load_file(opts.config_path);
    for (const auto& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("override '" + kv + "' is not of the form key=value");
        }
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    atomic_write_text((fs::path(out_dir) / "config_resolved.txt").string(), cfg.echo());
}

// Splits, augments, and preprocesses the training partition; returns the
// preprocessed train set and its channel mean.
struct PreparedTraining {
    ReidDataset train;
    std::vector<float> mean;
};

PreparedTraining prepare_training(const RunConfig& cfg, const ReidDataset& raw,
                                  const ModelConfig& mc) {
    const EvalProtocol proto = cfg.protocol();
    auto [train_raw, test_raw] = split_identities(raw, proto.train_frac, Rng::mix(proto.seed, 0));
    (void)test_raw;
    ReidDataset train = cfg.get_bool("augment")
                            ? augment(train_raw, cfg.augment_config(),
                                      Rng::mix(static_cast<std::uint64_t>(cfg.get_int("seed")), 0xA06))
                            : std::move(train_raw);
    PreparedTraining prep;
    prep.mean = preprocess(train, mc.input_h, mc.input_w);
    prep.train = std::move(train);
    return prep;
}

int cmd_synth(const CliOptions& opts) {
    RunConfig cfg;
    apply_options(cfg, opts);
    const SynthConfig synth = cfg.synth_config();
    const std::string out = cfg.get("out");
    const ReidDataset ds = generate_synthetic(synth);
    export_dataset(ds, out);
    echo_config(cfg, out);
    std::cout << "wrote " << ds.records.size() << " images (" << synth.num_ids << " identities x "
              << synth.cams << " cameras x " << synth.shots_per_cam << " shots) to " << out
              << "\n";
    return kOk;
}

int cmd_train(const CliOptions& opts) {
    RunConfig cfg;
    apply_options(cfg, opts);
    const std::string dataset_dir = cfg.get("dataset");
    if (dataset_dir.empty()) throw ConfigError("train: 'dataset' is required");
    if (!fs::exists(fs::path(dataset_dir) / "manifest.txt")) {
        throw ConfigError("train: no manifest.txt under '" + dataset_dir + "'");
    }
    const std::string out = cfg.get("out");
    const TrainPlan plan = cfg.train_plan();

    const ReidDataset raw = load_directory(dataset_dir);
    const EvalProtocol proto = cfg.protocol();
    auto [train_probe, test_probe] = split_identities(raw, proto.train_frac, Rng::mix(proto.seed, 0));
    (void)test_probe;
    const auto num_classes = static_cast<std::size_t>(train_probe.num_identities());
    const ModelConfig mc = cfg.model_config(num_classes);

    PreparedTraining prep = prepare_training(cfg, raw, mc);
    EmbeddingModel model = build(mc, plan.seed);
    model.input_mean.values_mut() = prep.mean;

    echo_config(cfg, out);
    RunLog log = train(model, prep.train, plan);
    save_checkpoint(model, (fs::path(out) / "checkpoint.bin").string());
    log.to_csv((fs::path(out) / "runlog.csv").string());
    if (!log.records.empty()) {
        const auto& last = log.records.back();
        std::cout << "trained " << plan.iterations << " iterations on " << num_classes
                  << " identities; final L=" << last.total << " (L_I=" << last.ident
                  << ", L_C=" << last.center << ", L_F=" << last.frw << ")\n";
    }
    std::cout << "checkpoint: " << (fs::path(out) / "checkpoint.bin").string() << "\n";
    return kOk;
}

int cmd_finetune(const CliOptions& opts) {
    RunConfig cfg;
    apply_options(cfg, opts);
    const std::string ckpt = cfg.get("checkpoint");
    if (ckpt.empty()) throw ConfigError("finetune: 'checkpoint' is required");
    const std::string dataset_dir = cfg.get("dataset");
    if (dataset_dir.empty()) throw ConfigError("finetune: 'dataset' is required");
    const std::string out = cfg.get("out");

    EmbeddingModel model = load_checkpoint(ckpt);
    const ReidDataset raw = load_directory(dataset_dir);
    const EvalProtocol proto = cfg.protocol();
    auto [train_raw, test_raw] = split_identities(raw, proto.train_frac, Rng::mix(proto.seed, 0));
    (void)test_raw;
    ReidDataset small = cfg.get_bool("augment")
                            ? augment(train_raw, cfg.augment_config(),
                                      Rng::mix(static_cast<std::uint64_t>(cfg.get_int("seed")), 0xA06))
                            : std::move(train_raw);
    // reuse the pretrained input mean so embeddings stay calibrated
    preprocess_with_mean(small, model.cfg.input_h, model.cfg.input_w, model.input_mean.values());

    TrainPlan plan1 = cfg.train_plan();
    plan1.iterations = static_cast<int>(cfg.get_int("phase1_iterations"));
    plan1.early_stop = cfg.get_bool("phase1_early_stop");
    TrainPlan plan2 = cfg.train_plan();
    plan2.iterations = static_cast<int>(cfg.get_int("phase2_iterations"));

    echo_config(cfg, out);
    const FinetuneResult result = two_step_finetune(model, small, plan1, plan2);
    save_checkpoint(model, (fs::path(out) / "checkpoint.bin").string());
    result.log.to_csv((fs::path(out) / "runlog.csv").string(), /*with_phase=*/true);

    std::cout << "phase-1 frozen-parameter checksum: " << std::hex << result.backbone_before
              << " -> " << result.backbone_after_phase1 << std::dec
              << (result.backbone_before == result.backbone_after_phase1 ? " (unchanged)"
                                                                         : " (CHANGED!)")
              << "\n";
    std::cout << "checkpoint: " << (fs::path(out) / "checkpoint.bin").string() << "\n";
    return result.backbone_before == result.backbone_after_phase1 ? kOk : kRuntimeError;
}

int cmd_eval(const CliOptions& opts) {
    RunConfig cfg;
    apply_options(cfg, opts);
    const std::string ckpt = cfg.get("checkpoint");
    if (ckpt.empty()) throw ConfigError("eval: 'checkpoint' is required");
    const std::string dataset_dir = cfg.get("dataset");
    if (dataset_dir.empty()) throw ConfigError("eval: 'dataset' is required");
    const std::string out = cfg.get("out");

    EmbeddingModel model = load_checkpoint(ckpt);
    ReidDataset ds = load_directory(dataset_dir);
    preprocess_with_mean(ds, model.cfg.input_h, model.cfg.input_w, model.input_mean.values());

    const EvalProtocol proto = cfg.protocol();
    model.set_mode(Mode::eval);
    const CMCurve curve = evaluate_splits(model_embedder(model), ds, proto);
    echo_config(cfg, out);
    write_cmc_csv(curve, (fs::path(out) / "cmc.csv").string());
    std::cout << std::fixed << std::setprecision(4);
    std::cout << "rank-1  " << curve.rank(1) << "\n";
    if (proto.max_rank >= 5) std::cout << "rank-5  " << curve.rank(5) << "\n";
    if (proto.max_rank >= 10) std::cout << "rank-10 " << curve.rank(10) << "\n";
    std::cout << "(" << curve.num_probes << " probes, " << curve.num_splits << " split"
              << (curve.num_splits == 1 ? "" : "s") << ")\n";
    return kOk;
}

int cmd_compare(const CliOptions& opts) {
    RunConfig cfg;
    apply_options(cfg, opts);
    const std::string dataset_dir = cfg.get("dataset");
    if (dataset_dir.empty()) throw ConfigError("compare: 'dataset' is required");
    const std::string out = cfg.get("out");

    const ReidDataset raw = load_directory(dataset_dir);
    const EvalProtocol proto = cfg.protocol();

    std::vector<LossMode> modes;
    {
        std::stringstream ss(cfg.get("compare_modes"));
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) modes.push_back(loss_mode_from_name(item));
        }
    }
    std::vector<std::uint64_t> seeds;
    const auto base_seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    for (long long s = 0; s < cfg.get_int("compare_seeds"); ++s)
        seeds.push_back(base_seed + static_cast<std::uint64_t>(s));

    TrainPlan plan = cfg.train_plan();
    plan.iterations = static_cast<int>(cfg.get_int("budget"));
    plan.lr_decay_step = std::max(1, plan.iterations * 4 / 5);

    // the comparison baselines pit identification+center against
    // identification+verification without the reweighting layer
    ModelConfig mc = cfg.model_config(2);
    mc.frw_enabled = cfg.is_set("frw_enabled") ? cfg.get_bool("frw_enabled") : false;
    mc.validate();

    echo_config(cfg, out);
    const CompareReport report =
        compare_losses(raw, proto, mc, plan, modes, seeds, cfg.augment_config());
    report.to_csv((fs::path(out) / "compare.csv").string());

    std::cout << std::fixed << std::setprecision(4);
    std::cout << "mode    rank1    rank5    rank10   sec/iter\n";
    for (const auto& arm : report.arms) {
        std::cout << std::left << std::setw(8) << loss_mode_name(arm.mode) << std::setw(9)
                  << arm.mean(arm.rank1) << std::setw(9) << arm.mean(arm.rank5) << std::setw(9)
                  << arm.mean(arm.rank10) << arm.sec_per_iter << "\n";
    }
    return kOk;
}

int cmd_verify() {
    const auto suites = run_verification();
    std::cout << std::left << std::setw(24) << "suite" << std::setw(14) << "max_error"
              << std::setw(12) << "threshold" << "status\n";
    for (const auto& s : suites) {
        std::cout << std::left << std::setw(24) << s.name << std::setw(14) << std::scientific
                  << std::setprecision(3) << s.max_error << std::setw(12) << s.threshold
                  << (s.pass ? "pass" : "FAIL");
        if (!s.detail.empty()) std::cout << "  (" << s.detail << ")";
        std::cout << "\n" << std::defaultfloat;
    }
    return all_passed(suites) ? kOk : kVerifyFailure;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"metric-embedding training and single-shot CMC evaluation"};
    app.require_subcommand(1);

    CliOptions opts;

    // frequently used keys get dedicated flags; everything funnels into the
    // same RunConfig override list
    auto add_key_flag = [&](CLI::App* cmd, const std::string& flag, const std::string& key,
                            const std::string& help) {
        auto holder = std::make_shared<std::string>();
        cmd->add_option_function<std::string>(
               flag,
               [&opts, key, holder](const std::string& v) { opts.overrides.push_back(key + "=" + v); },
               help)
            ->expected(1);
    };
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "key = value config file")
            ->check(CLI::ExistingFile);
        cmd->add_option("--set", opts.overrides,
                        "override a config key (key=value, repeatable)");
        add_key_flag(cmd, "--seed", "seed", "run seed");
        add_key_flag(cmd, "--out", "out", "output directory");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic identity dataset");
    add_common(synth);
    add_key_flag(synth, "--ids", "synth_ids", "identity count");
    add_key_flag(synth, "--cams", "synth_cams", "camera count");
    add_key_flag(synth, "--shots", "synth_shots", "shots per identity per camera");

    auto* train = app.add_subcommand("train", "train a model on a dataset directory");
    add_common(train);
    add_key_flag(train, "--dataset", "dataset", "dataset directory");
    add_key_flag(train, "--iters", "iterations", "training iterations");
    add_key_flag(train, "--batch", "batch_size", "batch size");
    add_key_flag(train, "--loss-mode", "loss_mode", "IC | I | IV");
    add_key_flag(train, "--preset", "preset", "desk | paper | custom");
    add_key_flag(train, "--train-frac", "train_frac", "identity fraction used for training");
    add_key_flag(train, "--protocol-seed", "protocol_seed", "identity partition seed");

    auto* finetune = app.add_subcommand("finetune", "two-stepped fine-tuning from a checkpoint");
    add_common(finetune);
    add_key_flag(finetune, "--checkpoint", "checkpoint", "pretrained checkpoint");
    add_key_flag(finetune, "--dataset", "dataset", "small dataset directory");
    add_key_flag(finetune, "--phase1-iters", "phase1_iterations", "head-only iterations");
    add_key_flag(finetune, "--phase2-iters", "phase2_iterations", "all-parameter iterations");

    auto* eval = app.add_subcommand("eval", "CMC evaluation of a checkpoint");
    add_common(eval);
    add_key_flag(eval, "--checkpoint", "checkpoint", "checkpoint to evaluate");
    add_key_flag(eval, "--dataset", "dataset", "dataset directory");
    add_key_flag(eval, "--splits", "num_splits", "number of random splits");
    add_key_flag(eval, "--train-frac", "train_frac", "identity fraction excluded as training");
    add_key_flag(eval, "--protocol-seed", "protocol_seed", "identity partition seed");
    add_key_flag(eval, "--max-rank", "max_rank", "CMC ranks reported");

    auto* compare = app.add_subcommand("compare", "convergence-speed comparison across loss modes");
    add_common(compare);
    add_key_flag(compare, "--dataset", "dataset", "dataset directory");
    add_key_flag(compare, "--budget", "budget", "iteration budget per arm");
    add_key_flag(compare, "--seeds", "compare_seeds", "seeds per arm");
    add_key_flag(compare, "--modes", "compare_modes", "comma list of modes");

    app.add_subcommand("verify", "run the numeric property suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kValidationError;
    }

    try {
        if (app.got_subcommand("synth")) return cmd_synth(opts);
        if (app.got_subcommand("train")) return cmd_train(opts);
        if (app.got_subcommand("finetune")) return cmd_finetune(opts);
        if (app.got_subcommand("eval")) return cmd_eval(opts);
        if (app.got_subcommand("compare")) return cmd_compare(opts);
        if (app.got_subcommand("verify")) return cmd_verify();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationError;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kValidationError;
}

}  // namespace reid
