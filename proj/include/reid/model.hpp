#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reid/layers.hpp"
#include "reid/losses.hpp"

namespace reid {

enum class Preset { paper, desk, custom };

std::string preset_name(Preset p);
Preset preset_from_name(const std::string& name);

struct ModelConfig {
    std::size_t input_h = 128;
    std::size_t input_w = 48;
    std::vector<std::size_t> conv_channels;
    std::vector<std::size_t> pool_after;  // 1-based conv indices followed by a pool
    std::size_t embedding_dim = 512;
    std::size_t num_classes = 2;
    bool frw_enabled = true;
    double lrelu_slope = 0.1;
    double frw_norm_target = 200.0;  // C of the reweighting constraint, used for init
    Preset preset = Preset::custom;

    // Full network: nine 3x3 conv layers with four pools, 512-D embedding,
    // 128x48 input.
    static ModelConfig paper_preset(std::size_t num_classes);

    // Reduced stack for minute-scale CPU training: four conv layers, two
    // pools, 32-D embedding, 32x16 input.
    static ModelConfig desk_preset(std::size_t num_classes);

    void validate() const;
    std::pair<std::size_t, std::size_t> spatial_after_convs() const;
    std::size_t flat_dim() const;
    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

struct EmbeddingModel {
    struct Block {
        ConvLayer<float> conv;
        BatchNormLayer<float> bn;
        bool pool = false;
    };

    ModelConfig cfg;
    std::vector<Block> blocks;
    FcLayer<float> fc;
    BatchNormLayer<float> fc_bn;
    std::optional<FRWLayer<float>> frw;
    SoftmaxHead<float> head;
    CenterTable<float> centers;
    Tensor<float> input_mean;  // per-channel training mean, stored for test time
    Mode mode = Mode::train;

    EmbeddingModel() = default;
    EmbeddingModel(EmbeddingModel&&) = default;
    EmbeddingModel& operator=(EmbeddingModel&&) = default;
    // Tensors share storage under copy; use clone() for an independent model.
    EmbeddingModel(const EmbeddingModel&) = delete;
    EmbeddingModel& operator=(const EmbeddingModel&) = delete;

    void set_mode(Mode m);
};

struct NamedTensor {
    std::string name;
    Tensor<float>* tensor;
    bool trainable;
    bool decay;
};

EmbeddingModel build(const ModelConfig& cfg, std::uint64_t seed);
EmbeddingModel clone(const EmbeddingModel& m);

// Embedding graph (post-reweighting when enabled). Valid in either mode;
// training uses it directly.
Tensor<float> forward_embedding(EmbeddingModel& m, const Tensor<float>& images);

// Test-time embeddings; requires eval mode so batchnorm uses running stats.
Tensor<float> embed(EmbeddingModel& m, const Tensor<float>& images);

void replace_head(EmbeddingModel& m, std::size_t new_num_classes, std::uint64_t seed);

std::vector<NamedTensor> named_tensors(EmbeddingModel& m);
std::vector<NamedTensor> trainable_tensors(EmbeddingModel& m);

std::uint64_t checksum_tensors(const std::vector<NamedTensor>& tensors);
std::uint64_t model_checksum(EmbeddingModel& m);
std::uint64_t backbone_checksum(EmbeddingModel& m);  // everything but head + centers

}  // namespace reid
