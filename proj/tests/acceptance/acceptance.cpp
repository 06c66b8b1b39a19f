// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 6, 7 and 9 train real models and take a few minutes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "reid/checkpoint.hpp"
#include "reid/evaluation.hpp"
#include "reid/training.hpp"
#include "reid/verify.hpp"

using namespace reid;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int criterion, const std::string& title, bool pass, const std::string& detail) {
    std::printf("criterion %2d [%s] %-28s %s\n", criterion, pass ? "PASS" : "FAIL", title.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

const VerifySuite& suite_named(const std::vector<VerifySuite>& suites, const std::string& name) {
    for (const auto& s : suites)
        if (s.name == name) return s;
    throw std::runtime_error("missing suite " + name);
}

struct DeskRun {
    double rank1 = 0.0;
    double seconds = 0.0;
    std::vector<double> center_dev;  // criterion 9 trace, 5 checkpoints
    bool centers_clean = false;
};

// One end-to-end desk-scale run: 50 synthetic identities, holdout split,
// augmentation, identification + center training with the default
// coefficients, evaluation on the held-out identities.
DeskRun desk_run(std::uint64_t seed, int iterations) {
    const ReidDataset raw = generate_synthetic(SynthConfig::standard50());
    EvalProtocol proto;
    proto.train_frac = 0.8;
    proto.seed = 11;
    proto.num_splits = 1;
    proto.max_rank = 10;

    auto [train_raw, test_raw] = split_identities(raw, proto.train_frac, Rng::mix(proto.seed, 0));
    (void)test_raw;
    AugmentConfig aug;
    ReidDataset train_set = augment(train_raw, aug, Rng::mix(seed, 0xA06));
    const std::vector<float> mean = preprocess(train_set, 32, 16);
    ReidDataset eval_full = raw;
    preprocess_with_mean(eval_full, 32, 16, mean);

    // fixed probe batch for the intra-class variance trend: one camera-0
    // image per identity, withheld from the training sampler
    ReidDataset probe_set;
    probe_set.channels = train_set.channels;
    probe_set.height = train_set.height;
    probe_set.width = train_set.width;
    {
        std::vector<bool> taken(static_cast<std::size_t>(train_set.num_identities()), false);
        std::vector<bool> drop(train_set.records.size(), false);
        for (std::size_t i = 0; i < train_set.records.size(); ++i) {
            const auto& r = train_set.records[i];
            if (r.camera == 0 && !taken[static_cast<std::size_t>(r.identity)]) {
                taken[static_cast<std::size_t>(r.identity)] = true;
                drop[i] = true;
                probe_set.records.push_back(r);
            }
        }
        ReidDataset rest;
        rest.channels = train_set.channels;
        rest.height = train_set.height;
        rest.width = train_set.width;
        rest.channel_mean = train_set.channel_mean;
        rest.mean_subtracted = true;
        for (std::size_t i = 0; i < train_set.records.size(); ++i)
            if (!drop[i]) rest.records.push_back(train_set.records[i]);
        train_set = std::move(rest);
    }

    ModelConfig cfg = ModelConfig::desk_preset(
        static_cast<std::size_t>(train_set.num_identities()));
    EmbeddingModel model = build(cfg, seed);

    TrainPlan plan;
    plan.iterations = iterations;
    plan.batch_size = 32;
    plan.lr0 = 0.001;
    plan.lr_decay_factor = 0.1;
    plan.lr_decay_step = iterations * 4 / 5;
    plan.weight_decay = 0.001;
    plan.loss = LossConfig{0.01, 0.001, 200.0};
    plan.alpha = 0.5;
    plan.mode = LossMode::IC;
    plan.seed = seed;
    plan.log_every = 200;

    DeskRun run;
    std::vector<std::size_t> probe_idx(probe_set.records.size());
    for (std::size_t i = 0; i < probe_idx.size(); ++i) probe_idx[i] = i;
    std::vector<int> probe_labels(probe_set.records.size());
    for (std::size_t i = 0; i < probe_labels.size(); ++i)
        probe_labels[i] = probe_set.records[i].identity;

    TrainHooks hooks;
    hooks.probe_every = iterations / 5;
    hooks.probe = [&](int, EmbeddingModel& m) {
        m.set_mode(Mode::eval);
        Tensor<float> images = batch_images(probe_set, probe_idx);
        Tensor<float> emb = embed(m, images);
        const auto& ev = emb.values();
        const auto& cv = m.centers.centers.values();
        const std::size_t d = m.cfg.embedding_dim;
        double acc = 0.0;
        for (std::size_t i = 0; i < probe_labels.size(); ++i) {
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = ev[i * d + k] -
                                    cv[static_cast<std::size_t>(probe_labels[i]) * d + k];
                acc += diff * diff;
            }
        }
        run.center_dev.push_back(acc / static_cast<double>(probe_labels.size()));
    };

    const auto t0 = std::chrono::steady_clock::now();
    train(model, train_set, plan, hooks);
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.centers_clean = !model.centers.centers.has_grad();

    model.set_mode(Mode::eval);
    const CMCurve curve = evaluate_splits(model_embedder(model), eval_full, proto);
    run.rank1 = curve.rank(1);
    return run;
}

}  // namespace

int main() {
    std::printf("acceptance suite\n================\n");

    // ---- criteria 1-5: numeric property suites -------------------------
    const auto t_verify = std::chrono::steady_clock::now();
    const auto suites = run_verification();
    const double verify_secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_verify).count();

    {
        const auto& s = suite_named(suites, "gradient-checks");
        report(1, "gradient correctness",
               s.pass && verify_secs < 60.0,
               "max rel err " + fmt(s.max_error, 3) + " < 1e-4, 20 seeds, " +
                   fmt(verify_secs, 3) + "s");
    }
    {
        const auto& s = suite_named(suites, "fold-identity");
        report(2, "softmax/frw decomposition", s.pass,
               "max logit dev " + fmt(s.max_error, 3) + " < 1e-10, argmax exact, 100 triples");
    }
    {
        const auto& s = suite_named(suites, "center-update-oracle");
        report(3, "center update oracle", s.pass,
               "50 batches exact (max dev " + fmt(s.max_error, 3) + "), absent classes untouched");
    }
    {
        const auto& s = suite_named(suites, "no-backprop-contract");
        report(4, "centers outside backprop", s.pass, s.detail);
    }
    {
        const auto& s = suite_named(suites, "cmc-oracle");
        report(5, "cmc enumeration oracle", s.pass,
               "1000 galleries exact; 3x3 example CMC(1)=2/3, CMC(2)=1");
    }

    // ---- criterion 8: initial loss equals ln N -------------------------
    {
        bool pass = true;
        std::string detail;
        for (std::size_t n : {std::size_t(10), std::size_t(50)}) {
            SynthConfig sc;
            sc.num_ids = n;
            sc.cams = 2;
            sc.shots_per_cam = 2;
            sc.seed = 23;
            ReidDataset ds = generate_synthetic(sc);
            preprocess(ds, 32, 16);
            EmbeddingModel m = build(ModelConfig::desk_preset(n), 81);
            std::vector<std::size_t> idx;
            std::vector<int> labels;
            for (std::size_t i = 0; i < std::min<std::size_t>(2 * n, ds.records.size()); ++i) {
                idx.push_back(i);
                labels.push_back(ds.records[i].identity);
            }
            Tensor<float> emb = forward_embedding(m, batch_images(ds, idx));
            const double loss = identification_loss(m.head, emb, labels).item();
            const double rel = std::abs(loss - std::log(static_cast<double>(n))) /
                               std::log(static_cast<double>(n));
            pass = pass && rel < 0.05;
            detail += "N=" + std::to_string(n) + ": " + fmt(loss, 4) + " vs ln N " +
                      fmt(std::log(static_cast<double>(n)), 4) + " (rel " + fmt(rel, 2) + ")  ";
        }
        report(8, "initial loss is ln N", pass, detail);
    }

    // ---- criterion 10: determinism and checkpoint round-trip -----------
    {
        SynthConfig sc;
        sc.num_ids = 8;
        sc.cams = 2;
        sc.shots_per_cam = 2;
        sc.seed = 5;
        ReidDataset ds = generate_synthetic(sc);
        preprocess(ds, 32, 16);
        auto one_run = [&]() {
            EmbeddingModel m = build(ModelConfig::desk_preset(8), 17);
            TrainPlan plan;
            plan.iterations = 30;
            plan.batch_size = 8;
            plan.lr_decay_step = 25;
            plan.seed = 9;
            plan.log_every = 10;
            train(m, ds, plan);
            return m;
        };
        EmbeddingModel a = one_run();
        EmbeddingModel b = one_run();
        const bool deterministic = model_checksum(a) == model_checksum(b);

        const auto tmp = fs::temp_directory_path() / "reid_acceptance_ckpt.bin";
        save_checkpoint(a, tmp.string());
        EmbeddingModel loaded = load_checkpoint(tmp.string());
        const bool roundtrip = model_checksum(loaded) == model_checksum(a);
        fs::remove(tmp);
        report(10, "determinism & persistence", deterministic && roundtrip,
               std::string("identical run checksums: ") + (deterministic ? "yes" : "NO") +
                   "; checkpoint round-trip bitwise: " + (roundtrip ? "yes" : "NO"));
    }

    // ---- criterion 6 + 9: end-to-end desk runs -------------------------
    {
        const int iterations = 1200;
        std::vector<DeskRun> runs;
        for (std::uint64_t seed : {1ull, 2ull, 3ull}) runs.push_back(desk_run(seed, iterations));

        double mean_rank1 = 0.0, worst_secs = 0.0;
        bool centers_clean = true;
        for (const auto& r : runs) {
            mean_rank1 += r.rank1 / runs.size();
            worst_secs = std::max(worst_secs, r.seconds);
            centers_clean = centers_clean && r.centers_clean;
        }
        // raw-pixel nearest neighbor: the generator is tuned so its
        // split-mean rank-1 stays at or below 60%, and the trained model
        // must beat it
        EvalProtocol proto;
        proto.train_frac = 0.8;
        proto.seed = 11;
        proto.num_splits = 5;
        proto.max_rank = 10;
        const ReidDataset raw = generate_synthetic(SynthConfig::standard50());
        const double raw_rank1 = evaluate_splits(raw_pixel_embedder(), raw, proto).rank(1);
        report(6, "desk run reaches rank-1 >= 0.9",
               mean_rank1 >= 0.90 && worst_secs <= 600.0 && iterations <= 2000 &&
                   raw_rank1 <= 0.60 && mean_rank1 > raw_rank1,
               "mean rank-1 " + fmt(mean_rank1) + " over 3 seeds (" +
                   fmt(runs[0].rank1, 3) + "/" + fmt(runs[1].rank1, 3) + "/" +
                   fmt(runs[2].rank1, 3) + "), " + std::to_string(iterations) +
                   " iters, slowest seed " + fmt(worst_secs, 3) +
                   "s; raw-pixel baseline " + fmt(raw_rank1, 3) + " (5-split mean)");
        if (!centers_clean) {
            report(4, "centers clean after training", false, "gradient appeared on centers");
        }

        // criterion 9: intra-class deviation trend across 5 checkpoints
        bool trend_ok = true;
        std::string traces;
        for (const auto& r : runs) {
            int violations = 0;
            for (std::size_t k = 1; k < r.center_dev.size(); ++k)
                if (r.center_dev[k] >= r.center_dev[k - 1]) ++violations;
            trend_ok = trend_ok && r.center_dev.size() >= 5 && violations <= 1;
        }
        const auto& tr = runs[0].center_dev;
        for (double v : tr) traces += fmt(v, 3) + " ";
        report(9, "intra-class variance trend", trend_ok,
               "5 checkpoints per seed, <= 1 non-monotone step; seed-1 trace: " + traces);
    }

    // ---- criterion 7: convergence-speed comparison ---------------------
    {
        const ReidDataset raw = generate_synthetic(SynthConfig::standard50());
        EvalProtocol proto;
        proto.train_frac = 0.8;
        proto.seed = 11;
        proto.num_splits = 1;
        proto.max_rank = 10;
        ModelConfig cfg = ModelConfig::desk_preset(2);
        cfg.frw_enabled = false;  // baseline arms carry no reweighting layer
        TrainPlan plan;
        plan.iterations = 300;
        plan.batch_size = 32;
        plan.lr_decay_step = 240;
        plan.weight_decay = 0.001;
        plan.loss = LossConfig{0.01, 0.001, 200.0};
        plan.alpha = 0.5;
        plan.log_every = 100;
        AugmentConfig aug;
        const CompareReport rep =
            compare_losses(raw, proto, cfg, plan, {LossMode::IC, LossMode::IV}, {1, 2, 3}, aug);
        const CompareArm* ic = nullptr;
        const CompareArm* iv = nullptr;
        for (const auto& arm : rep.arms) {
            if (arm.mode == LossMode::IC) ic = &arm;
            if (arm.mode == LossMode::IV) iv = &arm;
        }
        const double ic_rank1 = ic->mean(ic->rank1);
        const double iv_rank1 = iv->mean(iv->rank1);
        const bool rank_ok = ic_rank1 >= iv_rank1 - 0.02;
        const bool time_ok = ic->sec_per_iter <= iv->sec_per_iter;
        report(7, "center vs verification speed", rank_ok && time_ok,
               "rank-1 IC " + fmt(ic_rank1) + " vs IV " + fmt(iv_rank1) + " (300 iters, 3 seeds); "
                   "sec/iter IC " + fmt(ic->sec_per_iter, 3) + " vs IV " +
                   fmt(iv->sec_per_iter, 3));
    }

    std::printf("================\n%s (%d criteria failed)\n",
                failures == 0 ? "ALL CRITERIA PASS" : "FAILURES PRESENT", failures);
    return failures == 0 ? 0 : 1;
}
