#include "reid/training.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "reid/errors.hpp"
#include "reid/rng.hpp"
#include "reid/util.hpp"

namespace reid {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(std::vector<NamedTensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
        if (p.name == "centers") {
            throw ContractError("optimizer: centers are updated by their own rule, not Adam");
        }
        if (!p.trainable) {
            throw ContractError("optimizer: parameter '" + p.name + "' is not trainable");
        }
        m_.emplace_back(p.tensor->numel(), 0.0f);
        v_.emplace_back(p.tensor->numel(), 0.0f);
    }
}

void AdamOptimizer::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = params_[pi];
        if (!p.tensor->has_grad()) {
            throw ContractError("optimizer: missing gradient for parameter '" + p.name + "'");
        }
        const auto& g = p.tensor->grad();
        auto& w = p.tensor->values_mut();
        auto& m = m_[pi];
        auto& v = v_[pi];
        const auto b1 = static_cast<float>(cfg_.beta1);
        const auto b2 = static_cast<float>(cfg_.beta2);
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
        }
        if (p.decay && cfg_.weight_decay > 0.0) {
            const auto shrink = static_cast<float>(lr * cfg_.weight_decay);
            for (auto& wi : w) wi -= shrink * wi;
        }
    }
}

// ---------------------------------------------------------------------------
// Plans, logs
// ---------------------------------------------------------------------------

std::string loss_mode_name(LossMode m) {
    switch (m) {
        case LossMode::IC: return "IC";
        case LossMode::I: return "I";
        default: return "IV";
    }
}

LossMode loss_mode_from_name(const std::string& name) {
    if (name == "IC" || name == "ic") return LossMode::IC;
    if (name == "I" || name == "i") return LossMode::I;
    if (name == "IV" || name == "iv") return LossMode::IV;
    throw ConfigError("unknown loss mode '" + name + "' (expected IC, I, or IV)");
}

void TrainPlan::validate() const {
    std::vector<std::string> problems;
    if (iterations < 0) problems.push_back("iterations must be >= 0");
    if (!(lr0 > 0)) problems.push_back("learning rate must be positive");
    if (!(lr_decay_factor > 0 && lr_decay_factor <= 1)) problems.push_back("lr decay factor must be in (0, 1]");
    if (lr_decay_step < 0) problems.push_back("lr decay step must be >= 0");
    if (batch_size < 2) problems.push_back("batch size must be >= 2 (batchnorm)");
    if (weight_decay < 0) problems.push_back("weight decay must be >= 0");
    if (!(alpha > 0 && alpha <= 1)) problems.push_back("alpha must be in (0, 1]");
    if (log_every < 1) problems.push_back("log cadence must be >= 1");
    if (loss.lambda < 0 || loss.beta < 0 || !(loss.c_target > 0))
        problems.push_back("loss coefficients out of range (lambda, beta >= 0; C > 0)");
    if (!problems.empty()) {
        std::string msg = "invalid training plan:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
}

void RunLog::to_csv(const std::string& path, bool with_phase) const {
    std::ostringstream os;
    if (with_phase) os << "phase,";
    os << "iteration,L,L_I,L_C,L_F,lr,seconds\n";
    for (const auto& r : records) {
        if (with_phase) os << r.phase << ",";
        os << r.iteration << "," << r.total << "," << r.ident << "," << r.center << "," << r.frw
           << "," << r.lr << "," << r.seconds << "\n";
    }
    atomic_write_text(path, os.str());
}

double lr_at(const TrainPlan& plan, int iteration) {
    return iteration < plan.lr_decay_step ? plan.lr0 : plan.lr0 * plan.lr_decay_factor;
}

// ---------------------------------------------------------------------------
// Batch assembly and pair construction
// ---------------------------------------------------------------------------

Tensor<float> batch_images(const ReidDataset& ds, const std::vector<std::size_t>& indices) {
    const std::size_t px = ds.pixels_per_image();
    std::vector<float> buf(indices.size() * px);
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::copy_n(ds.records[indices[i]].pixels.data(), px, buf.data() + i * px);
    return Tensor<float>::from_vector({indices.size(), static_cast<std::size_t>(ds.channels),
                                       static_cast<std::size_t>(ds.height),
                                       static_cast<std::size_t>(ds.width)},
                                      std::move(buf), false);
}

namespace {

// Balanced pair sample from one identification batch: M/2 pairs, half
// positive. A positive pair falls back to a duplicated sample when the batch
// holds no second image of any identity.
struct PairBatch {
    std::vector<std::size_t> first, second;
    std::vector<int> same;
};

PairBatch sample_pairs(const std::vector<int>& labels, Rng& rng) {
    const std::size_t m = labels.size();
    const std::size_t p = m / 2;
    const std::size_t positives = p / 2;
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < m; ++i) by_label[labels[i]].push_back(i);
    std::vector<int> multi;
    for (const auto& [lbl, idx] : by_label)
        if (idx.size() >= 2) multi.push_back(lbl);

    PairBatch out;
    for (std::size_t k = 0; k < p; ++k) {
        if (k < positives) {
            if (!multi.empty()) {
                const int lbl = multi[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(multi.size()) - 1))];
                const auto& idx = by_label[lbl];
                const auto a = static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(idx.size()) - 1));
                std::size_t b = a;
                while (b == a)
                    b = static_cast<std::size_t>(
                        rng.uniform_int(0, static_cast<std::int64_t>(idx.size()) - 1));
                out.first.push_back(idx[a]);
                out.second.push_back(idx[b]);
            } else {
                const auto a = static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(m) - 1));
                out.first.push_back(a);
                out.second.push_back(a);
            }
            out.same.push_back(1);
        } else {
            std::size_t a = 0, b = 0;
            do {
                a = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(m) - 1));
                b = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(m) - 1));
            } while (labels[a] == labels[b]);
            out.first.push_back(a);
            out.second.push_back(b);
            out.same.push_back(0);
        }
    }
    return out;
}

double detached_frw_value(const EmbeddingModel& m, const LossConfig& cfg) {
    if (!m.frw) return 0.0;
    auto w = detach(m.frw->w);
    return frw_constraint(w, cfg).item();
}

}  // namespace

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

RunLog train(EmbeddingModel& model, const ReidDataset& data, const TrainPlan& plan,
             const TrainHooks& hooks) {
    plan.validate();
    validate_dataset(data);
    if (static_cast<std::size_t>(data.num_identities()) != model.cfg.num_classes) {
        throw ContractError("train: dataset has " + std::to_string(data.num_identities()) +
                            " identities, model expects " + std::to_string(model.cfg.num_classes));
    }
    model.centers.alpha = static_cast<float>(plan.alpha);
    model.set_mode(plan.freeze_backbone ? Mode::eval : Mode::train);

    Rng rng(plan.seed);
    VerifHead<float> verif_head;
    if (plan.mode == LossMode::IV) {
        Rng vrng(Rng::mix(plan.seed, 0x7e41f));
        verif_head = make_verif_head<float>(model.cfg.embedding_dim, vrng);
    }

    std::vector<NamedTensor> params;
    if (plan.freeze_backbone) {
        for (auto& t : trainable_tensors(model))
            if (t.name.rfind("head.", 0) == 0) params.push_back(t);
    } else {
        params = trainable_tensors(model);
    }
    if (plan.mode == LossMode::IV) {
        params.push_back({"verif.weight", &verif_head.weights, true, false});
        params.push_back({"verif.bias", &verif_head.bias, true, false});
    }
    AdamConfig adam_cfg;
    adam_cfg.weight_decay = plan.weight_decay;
    AdamOptimizer adam(params, adam_cfg);

    std::vector<std::size_t> order(data.records.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();  // reshuffle before the first batch
    const auto next_batch = [&](std::size_t m) {
        std::vector<std::size_t> idx(m);
        for (std::size_t i = 0; i < m; ++i) {
            if (cursor == order.size()) {
                rng.shuffle(order.begin(), order.end());
                cursor = 0;
            }
            idx[i] = order[cursor++];
        }
        return idx;
    };

    RunLog log;
    std::vector<double> loss_history;
    std::vector<double> prefix_min;
    const auto start = std::chrono::steady_clock::now();

    for (int iter = 0; iter < plan.iterations; ++iter) {
        const double lr = lr_at(plan, iter);
        const auto batch_idx = next_batch(static_cast<std::size_t>(plan.batch_size));
        std::vector<int> labels(batch_idx.size());
        for (std::size_t i = 0; i < batch_idx.size(); ++i)
            labels[i] = data.records[batch_idx[i]].identity;
        Tensor<float> images = batch_images(data, batch_idx);
        Tensor<float> emb = forward_embedding(model, images);

        Tensor<float> total;
        double li = 0.0, lc = 0.0, lf = 0.0;
        switch (plan.mode) {
            case LossMode::IC: {
                auto parts = total_loss(model.head, model.centers,
                                        model.frw ? &*model.frw : nullptr, emb, labels, plan.loss);
                total = parts.total;
                li = parts.identification.item();
                lc = parts.center.item();
                lf = parts.frw.defined() ? parts.frw.item() : 0.0;
                break;
            }
            case LossMode::I: {
                total = identification_loss(model.head, emb, labels);
                li = total.item();
                lc = center_loss(model.centers, detach(emb), labels).item();
                lf = detached_frw_value(model, plan.loss);
                break;
            }
            case LossMode::IV: {
                auto ident = identification_loss(model.head, emb, labels);
                auto pairs = sample_pairs(labels, rng);
                auto x1 = gather_rows(emb, pairs.first);
                auto x2 = gather_rows(emb, pairs.second);
                auto verif = binary_verification_loss(x1, x2, pairs.same, verif_head);
                total = add(ident, verif);
                li = ident.item();
                lc = center_loss(model.centers, detach(emb), labels).item();
                lf = detached_frw_value(model, plan.loss);
                break;
            }
        }
        const double total_value = total.item();
        if (std::isnan(total_value) || std::isnan(li) || std::isnan(lc) || std::isnan(lf)) {
            throw NumericError("training aborted at iteration " + std::to_string(iter) +
                                ": loss is NaN (L=" + std::to_string(total_value) +
                                ", L_I=" + std::to_string(li) + ", L_C=" + std::to_string(lc) +
                                ", L_F=" + std::to_string(lf) + ")");
        }
        backward(total);
        adam.step(lr);
        update_centers(model.centers, emb.values(), batch_idx.size(), labels);

        if (iter % plan.log_every == 0 || iter == plan.iterations - 1) {
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            log.records.push_back({plan.phase_tag, iter, total_value, li, lc, lf, lr, secs});
        }
        if (hooks.probe_every > 0 && hooks.probe && (iter + 1) % hooks.probe_every == 0) {
            hooks.probe(iter + 1, model);
            model.set_mode(plan.freeze_backbone ? Mode::eval : Mode::train);
        }

        if (plan.early_stop) {
            loss_history.push_back(total_value);
            prefix_min.push_back(prefix_min.empty()
                                     ? total_value
                                     : std::min(prefix_min.back(), total_value));
            const auto w = static_cast<std::size_t>(plan.early_stop_window);
            if (loss_history.size() > w) {
                const double best_before = prefix_min[loss_history.size() - w - 1];
                const double best_overall = prefix_min.back();
                if (best_before - best_overall < plan.early_stop_delta) break;
            }
        }
    }
    return log;
}

// ---------------------------------------------------------------------------
// Two-stepped fine-tuning
// ---------------------------------------------------------------------------

FinetuneResult two_step_finetune(EmbeddingModel& model, const ReidDataset& small_data,
                                 const TrainPlan& plan1, const TrainPlan& plan2) {
    FinetuneResult result;
    replace_head(model, static_cast<std::size_t>(small_data.num_identities()),
                 Rng::mix(plan1.seed, 0xF1EAD));
    result.backbone_before = backbone_checksum(model);

    if (plan1.iterations > 0) {
        TrainPlan p1 = plan1;
        p1.phase_tag = 1;
        p1.freeze_backbone = true;
        for (auto& t : trainable_tensors(model)) {
            if (t.name.rfind("head.", 0) != 0) t.tensor->set_requires_grad(false);
        }
        RunLog phase1 = train(model, small_data, p1);
        result.log.append(phase1);
        for (auto& t : named_tensors(model)) t.tensor->set_requires_grad(t.trainable);
    }
    result.backbone_after_phase1 = backbone_checksum(model);

    TrainPlan p2 = plan2;
    p2.phase_tag = 2;
    p2.freeze_backbone = false;
    RunLog phase2 = train(model, small_data, p2);
    result.log.append(phase2);
    return result;
}

// ---------------------------------------------------------------------------
// Convergence comparison
// ---------------------------------------------------------------------------

namespace {

double cpu_seconds() {
#if defined(CLOCK_PROCESS_CPUTIME_ID)
    timespec ts{};
    clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + static_cast<double>(ts.tv_nsec) * 1e-9;
#else
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
#endif
}

}  // namespace

double CompareArm::mean(const std::vector<double>& v) const {
    double acc = 0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

double CompareArm::stddev(const std::vector<double>& v) const {
    if (v.size() < 2) return 0.0;
    const double mu = mean(v);
    double acc = 0;
    for (double x : v) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

void CompareReport::to_csv(const std::string& path) const {
    std::ostringstream os;
    os << "mode,rank1,rank5,rank10,rank1_stddev,rank5_stddev,rank10_stddev,sec_per_iter\n";
    for (const auto& arm : arms) {
        os << loss_mode_name(arm.mode) << "," << arm.mean(arm.rank1) << "," << arm.mean(arm.rank5)
           << "," << arm.mean(arm.rank10) << "," << arm.stddev(arm.rank1) << ","
           << arm.stddev(arm.rank5) << "," << arm.stddev(arm.rank10) << "," << arm.sec_per_iter
           << "\n";
    }
    atomic_write_text(path, os.str());
}

EmbedFn model_embedder(EmbeddingModel& model, std::size_t batch) {
    return [&model, batch](const ReidDataset& ds, const std::vector<std::size_t>& indices,
                           std::size_t& dim) {
        model.set_mode(Mode::eval);
        dim = model.cfg.embedding_dim;
        std::vector<double> out(indices.size() * dim);
        for (std::size_t at = 0; at < indices.size(); at += batch) {
            const std::size_t take = std::min(batch, indices.size() - at);
            std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(at),
                                           indices.begin() + static_cast<std::ptrdiff_t>(at + take));
            Tensor<float> images = batch_images(ds, chunk);
            Tensor<float> emb = embed(model, images);
            const auto& ev = emb.values();
            for (std::size_t i = 0; i < take * dim; ++i) out[at * dim + i] = ev[i];
        }
        return out;
    };
}

CompareReport compare_losses(const ReidDataset& raw_dataset, const EvalProtocol& proto,
                             ModelConfig cfg, TrainPlan base_plan,
                             const std::vector<LossMode>& modes,
                             const std::vector<std::uint64_t>& seeds,
                             const AugmentConfig& augment_cfg) {
    if (modes.size() < 2) throw ContractError("compare: need at least two loss modes");
    if (seeds.empty()) throw ContractError("compare: need at least one seed");

    // Fixed evaluation partition: the same one evaluate_splits derives for
    // split 0, so trained identities never leak into the gallery.
    const std::uint64_t split_seed = Rng::mix(proto.seed, 0);
    auto [train_raw, test_raw] = split_identities(raw_dataset, proto.train_frac, split_seed);
    (void)test_raw;

    ReidDataset train_aug = augment(train_raw, augment_cfg, Rng::mix(proto.seed, 0xA06));
    const std::vector<float> mean =
        preprocess(train_aug, static_cast<std::size_t>(cfg.input_h),
                   static_cast<std::size_t>(cfg.input_w));
    ReidDataset eval_full = raw_dataset;
    preprocess_with_mean(eval_full, cfg.input_h, cfg.input_w, mean);

    EvalProtocol eval_proto = proto;
    eval_proto.num_splits = 1;
    eval_proto.max_rank = std::max<std::size_t>(proto.max_rank, 10);

    cfg.num_classes = static_cast<std::size_t>(train_aug.num_identities());

    CompareReport report;
    report.budget_iterations = static_cast<std::size_t>(base_plan.iterations);
    report.arms.resize(modes.size());
    for (std::size_t mi = 0; mi < modes.size(); ++mi) report.arms[mi].mode = modes[mi];

    for (std::uint64_t seed : seeds) {
        for (std::size_t mi = 0; mi < modes.size(); ++mi) {
            TrainPlan plan = base_plan;
            plan.mode = modes[mi];
            plan.seed = seed;
            EmbeddingModel model = build(cfg, seed);
            train(model, train_aug, plan);
            model.set_mode(Mode::eval);
            const CMCurve curve = evaluate_splits(model_embedder(model), eval_full, eval_proto);
            report.arms[mi].rank1.push_back(curve.rank(1));
            report.arms[mi].rank5.push_back(curve.rank(5));
            report.arms[mi].rank10.push_back(curve.rank(10));
        }
    }

    // Per-iteration cost, benchmarked separately with short alternating
    // segments whose order flips every repetition: frequency ramps and
    // allocator growth hit every arm equally, the median discards stray
    // spikes, and process CPU time excludes scheduler noise entirely.
    if (base_plan.iterations > 0) {
        const int reps = 13;
        const int bench_iters = std::min(25, base_plan.iterations);
        std::vector<std::vector<double>> samples(modes.size());
        for (int rep = 0; rep < reps; ++rep) {
            for (std::size_t step = 0; step < modes.size(); ++step) {
                const std::size_t mi = rep % 2 == 0 ? step : modes.size() - 1 - step;
                EmbeddingModel model = build(cfg, seeds[0]);
                TrainPlan plan = base_plan;
                plan.mode = modes[mi];
                plan.seed = seeds[0];
                plan.iterations = bench_iters;
                plan.log_every = bench_iters;
                const double t0 = cpu_seconds();
                train(model, train_aug, plan);
                const double dt = (cpu_seconds() - t0) / bench_iters;
                if (rep > 0) samples[mi].push_back(dt);  // first pass is warmup
            }
        }
        for (std::size_t mi = 0; mi < modes.size(); ++mi) {
            auto& v = samples[mi];
            std::sort(v.begin(), v.end());
            report.arms[mi].sec_per_iter = v[v.size() / 2];
        }
    }
    return report;
}

}  // namespace reid
