#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "reid/data.hpp"
#include "reid/evaluation.hpp"
#include "reid/losses.hpp"
#include "reid/model.hpp"

namespace reid {

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay
// ---------------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // applied to parameters flagged for decay
};

class AdamOptimizer {
public:
    // Centers are never optimizer-managed; passing them is a contract error.
    AdamOptimizer(std::vector<NamedTensor> params, AdamConfig cfg);

    void step(double lr);
    int steps() const { return t_; }
    const std::vector<NamedTensor>& params() const { return params_; }

private:
    std::vector<NamedTensor> params_;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
    AdamConfig cfg_;
    int t_ = 0;
};

// ---------------------------------------------------------------------------
// Training plans and logs
// ---------------------------------------------------------------------------

enum class LossMode { IC, I, IV };

std::string loss_mode_name(LossMode m);
LossMode loss_mode_from_name(const std::string& name);

struct TrainPlan {
    int iterations = 25000;
    double lr0 = 0.001;
    double lr_decay_factor = 0.1;
    int lr_decay_step = 22000;
    int batch_size = 100;
    double weight_decay = 0.001;
    LossConfig loss;     // lambda, beta, C
    double alpha = 0.5;  // center update rate
    LossMode mode = LossMode::IC;
    std::uint64_t seed = 0;
    int log_every = 10;
    int phase_tag = 0;
    // Phase-1 fine-tuning behavior: backbone parameters (and batchnorm
    // statistics) frozen, optional plateau-based early stop.
    bool freeze_backbone = false;
    bool early_stop = false;
    int early_stop_window = 200;
    double early_stop_delta = 1e-3;

    void validate() const;
};

struct LogRecord {
    int phase = 0;
    int iteration = 0;
    double total = 0.0;
    double ident = 0.0;
    double center = 0.0;
    double frw = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
};

struct RunLog {
    std::vector<LogRecord> records;

    void append(const RunLog& other) {
        records.insert(records.end(), other.records.begin(), other.records.end());
    }
    void to_csv(const std::string& path, bool with_phase = false) const;
};

struct TrainHooks {
    int probe_every = 0;  // 0 disables
    std::function<void(int iteration, EmbeddingModel& model)> probe;
};

// Step schedule: lr0 before decay_step, lr0 * decay_factor from it on.
double lr_at(const TrainPlan& plan, int iteration);

// One run: per iteration sample a batch, forward, compose the mode's losses,
// backward, Adam step, then apply the center update rule. Deterministic for
// a fixed (seed, plan, dataset).
RunLog train(EmbeddingModel& model, const ReidDataset& data, const TrainPlan& plan,
             const TrainHooks& hooks = {});

struct FinetuneResult {
    RunLog log;
    std::uint64_t backbone_before = 0;
    std::uint64_t backbone_after_phase1 = 0;
};

// Replace the classifier head for the new class count, train it with the
// backbone frozen (phase 1), then train everything (phase 2).
FinetuneResult two_step_finetune(EmbeddingModel& model, const ReidDataset& small_data,
                                 const TrainPlan& plan1, const TrainPlan& plan2);

// ---------------------------------------------------------------------------
// Convergence-speed comparison across loss modes
// ---------------------------------------------------------------------------

struct CompareArm {
    LossMode mode = LossMode::IC;
    std::vector<double> rank1, rank5, rank10;  // one entry per seed
    double sec_per_iter = 0.0;

    double mean(const std::vector<double>& v) const;
    double stddev(const std::vector<double>& v) const;
};

struct CompareReport {
    std::vector<CompareArm> arms;
    std::size_t budget_iterations = 0;

    void to_csv(const std::string& path) const;
};

// Trains each mode from an identical backbone init under an identical
// iteration budget, then evaluates rank-1/5/10 on the held-out identities
// of the fixed evaluation partition.
CompareReport compare_losses(const ReidDataset& raw_dataset, const EvalProtocol& proto,
                             ModelConfig cfg, TrainPlan base_plan,
                             const std::vector<LossMode>& modes,
                             const std::vector<std::uint64_t>& seeds,
                             const AugmentConfig& augment_cfg);

// Embeds record batches through the model in eval mode.
EmbedFn model_embedder(EmbeddingModel& model, std::size_t batch = 128);

// Stacks the given records into a [B x C x H x W] input tensor.
Tensor<float> batch_images(const ReidDataset& ds, const std::vector<std::size_t>& indices);

}  // namespace reid
