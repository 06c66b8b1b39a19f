#include "reid/model.hpp"

#include <algorithm>
#include <sstream>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

std::string preset_name(Preset p) {
    switch (p) {
        case Preset::paper: return "paper";
        case Preset::desk: return "desk";
        default: return "custom";
    }
}

Preset preset_from_name(const std::string& name) {
    if (name == "paper") return Preset::paper;
    if (name == "desk") return Preset::desk;
    if (name == "custom") return Preset::custom;
    throw ConfigError("unknown preset '" + name + "' (expected paper, desk, or custom)");
}

ModelConfig ModelConfig::paper_preset(std::size_t num_classes) {
    ModelConfig cfg;
    cfg.input_h = 128;
    cfg.input_w = 48;
    cfg.conv_channels = {32, 32, 64, 64, 128, 128, 256, 256, 256};
    cfg.pool_after = {2, 4, 6, 8};
    cfg.embedding_dim = 512;
    cfg.num_classes = num_classes;
    cfg.frw_enabled = true;
    cfg.lrelu_slope = 0.1;
    cfg.frw_norm_target = 200.0;
    cfg.preset = Preset::paper;
    return cfg;
}

ModelConfig ModelConfig::desk_preset(std::size_t num_classes) {
    ModelConfig cfg;
    cfg.input_h = 32;
    cfg.input_w = 16;
    cfg.conv_channels = {8, 16, 32, 32};
    cfg.pool_after = {2, 4};
    cfg.embedding_dim = 32;
    cfg.num_classes = num_classes;
    cfg.frw_enabled = true;
    cfg.lrelu_slope = 0.1;
    cfg.frw_norm_target = 200.0;
    cfg.preset = Preset::desk;
    return cfg;
}

void ModelConfig::validate() const {
    std::vector<std::string> problems;
    if (conv_channels.empty()) problems.push_back("conv_channels is empty");
    for (auto c : conv_channels)
        if (c == 0) problems.push_back("conv channel width must be positive");
    for (std::size_t i = 0; i < pool_after.size(); ++i) {
        if (pool_after[i] < 1 || pool_after[i] > conv_channels.size())
            problems.push_back("pool position " + std::to_string(pool_after[i]) +
                               " outside conv range [1, " + std::to_string(conv_channels.size()) + "]");
        if (i > 0 && pool_after[i] <= pool_after[i - 1])
            problems.push_back("pool positions must be strictly increasing");
    }
    if (embedding_dim == 0) problems.push_back("embedding_dim must be positive");
    if (num_classes == 0) problems.push_back("num_classes must be positive");
    if (!(lrelu_slope > 0.0 && lrelu_slope < 1.0)) problems.push_back("lrelu_slope must be in (0, 1)");
    if (!(frw_norm_target > 0.0)) problems.push_back("frw_norm_target must be positive");
    if (preset == Preset::paper) {
        if (conv_channels.size() != 9) problems.push_back("paper preset requires 9 conv layers");
        if (pool_after.size() != 4) problems.push_back("paper preset requires 4 pool positions");
        if (embedding_dim != 512) problems.push_back("paper preset requires embedding_dim 512");
    }
    // every pool must see at least a 2x2 input
    std::size_t h = input_h, w = input_w;
    for (std::size_t p : pool_after) {
        (void)p;
        if (h < 2 || w < 2) {
            problems.push_back("input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                               " too small for " + std::to_string(pool_after.size()) + " pools");
            break;
        }
        h = (h + 1) / 2;
        w = (w + 1) / 2;
    }
    if (!problems.empty()) {
        std::string msg = "invalid model config:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
}

std::pair<std::size_t, std::size_t> ModelConfig::spatial_after_convs() const {
    std::size_t h = input_h, w = input_w;
    for (std::size_t i = 0; i < pool_after.size(); ++i) {
        h = (h + 1) / 2;
        w = (w + 1) / 2;
    }
    return {h, w};
}

std::size_t ModelConfig::flat_dim() const {
    auto [h, w] = spatial_after_convs();
    return conv_channels.back() * h * w;
}

std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << "preset=" << preset_name(preset) << "\n";
    os << "input_h=" << input_h << "\n";
    os << "input_w=" << input_w << "\n";
    os << "conv_channels=";
    for (std::size_t i = 0; i < conv_channels.size(); ++i) os << (i ? "," : "") << conv_channels[i];
    os << "\npool_after=";
    for (std::size_t i = 0; i < pool_after.size(); ++i) os << (i ? "," : "") << pool_after[i];
    os << "\nembedding_dim=" << embedding_dim << "\n";
    os << "num_classes=" << num_classes << "\n";
    os << "frw_enabled=" << (frw_enabled ? 1 : 0) << "\n";
    os << "lrelu_slope=" << lrelu_slope << "\n";
    os << "frw_norm_target=" << frw_norm_target << "\n";
    return os.str();
}

namespace {

std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(static_cast<std::size_t>(std::stoull(item)));
    }
    return out;
}

}  // namespace

ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig cfg;
    cfg.conv_channels.clear();
    cfg.pool_after.clear();
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("bad model config line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "preset") cfg.preset = preset_from_name(val);
            else if (key == "input_h") cfg.input_h = std::stoull(val);
            else if (key == "input_w") cfg.input_w = std::stoull(val);
            else if (key == "conv_channels") cfg.conv_channels = parse_size_list(val);
            else if (key == "pool_after") cfg.pool_after = parse_size_list(val);
            else if (key == "embedding_dim") cfg.embedding_dim = std::stoull(val);
            else if (key == "num_classes") cfg.num_classes = std::stoull(val);
            else if (key == "frw_enabled") cfg.frw_enabled = val == "1" || val == "true";
            else if (key == "lrelu_slope") cfg.lrelu_slope = std::stod(val);
            else if (key == "frw_norm_target") cfg.frw_norm_target = std::stod(val);
            else throw ConfigError("unknown model config key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("bad value for model config key '" + key + "': " + val);
        }
    }
    cfg.validate();
    return cfg;
}

void EmbeddingModel::set_mode(Mode m) {
    mode = m;
    for (auto& b : blocks) b.bn.mode = m;
    fc_bn.mode = m;
}

EmbeddingModel build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    EmbeddingModel m;
    m.cfg = cfg;
    std::size_t in_ch = 3;
    std::vector<bool> pooled(cfg.conv_channels.size(), false);
    for (std::size_t p : cfg.pool_after) pooled[p - 1] = true;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        EmbeddingModel::Block b;
        b.conv = make_conv<float>(cfg.conv_channels[i], in_ch, rng);
        b.bn = make_batchnorm<float>(cfg.conv_channels[i]);
        b.pool = pooled[i];
        m.blocks.push_back(std::move(b));
        in_ch = cfg.conv_channels[i];
    }
    m.fc = make_fc<float>(cfg.flat_dim(), cfg.embedding_dim, rng);
    m.fc_bn = make_batchnorm<float>(cfg.embedding_dim);
    if (cfg.frw_enabled) {
        m.frw = make_frw<float>(cfg.embedding_dim, static_cast<float>(cfg.frw_norm_target));
    }
    m.head = make_head<float>(cfg.embedding_dim, cfg.num_classes, rng);
    m.centers = make_centers<float>(cfg.num_classes, cfg.embedding_dim, 0.5f);
    m.input_mean = Tensor<float>::zeros({3}, false);
    m.set_mode(Mode::train);
    return m;
}

EmbeddingModel clone(const EmbeddingModel& src) {
    EmbeddingModel dst;
    dst.cfg = src.cfg;
    dst.mode = src.mode;
    auto copy = [](const Tensor<float>& t) {
        return Tensor<float>::from_vector(t.shape(), t.values(), t.requires_grad());
    };
    for (const auto& b : src.blocks) {
        EmbeddingModel::Block nb;
        nb.conv.weights = copy(b.conv.weights);
        nb.conv.bias = copy(b.conv.bias);
        nb.bn.gamma = copy(b.bn.gamma);
        nb.bn.beta = copy(b.bn.beta);
        nb.bn.running_mean = copy(b.bn.running_mean);
        nb.bn.running_var = copy(b.bn.running_var);
        nb.bn.epsilon = b.bn.epsilon;
        nb.bn.momentum = b.bn.momentum;
        nb.bn.mode = b.bn.mode;
        nb.pool = b.pool;
        dst.blocks.push_back(std::move(nb));
    }
    dst.fc.weights = copy(src.fc.weights);
    dst.fc.bias = copy(src.fc.bias);
    dst.fc_bn.gamma = copy(src.fc_bn.gamma);
    dst.fc_bn.beta = copy(src.fc_bn.beta);
    dst.fc_bn.running_mean = copy(src.fc_bn.running_mean);
    dst.fc_bn.running_var = copy(src.fc_bn.running_var);
    dst.fc_bn.epsilon = src.fc_bn.epsilon;
    dst.fc_bn.momentum = src.fc_bn.momentum;
    dst.fc_bn.mode = src.fc_bn.mode;
    if (src.frw) dst.frw = FRWLayer<float>{copy(src.frw->w)};
    dst.head.weights = copy(src.head.weights);
    dst.head.bias = copy(src.head.bias);
    dst.centers.centers = copy(src.centers.centers);
    dst.centers.alpha = src.centers.alpha;
    dst.input_mean = copy(src.input_mean);
    return dst;
}

Tensor<float> forward_embedding(EmbeddingModel& m, const Tensor<float>& images) {
    if (images.rank() != 4 || images.shape()[1] != 3 || images.shape()[2] != m.cfg.input_h ||
        images.shape()[3] != m.cfg.input_w) {
        throw DimensionError("model: expected input [B x 3 x " + std::to_string(m.cfg.input_h) +
                             " x " + std::to_string(m.cfg.input_w) + "], got " +
                             format_shape(images.shape()));
    }
    const auto slope = static_cast<float>(m.cfg.lrelu_slope);
    Tensor<float> x = images;
    for (auto& b : m.blocks) {
        x = conv_forward(b.conv, x);
        x = batchnorm_forward(b.bn, x);
        x = leaky_relu(x, slope);
        if (b.pool) x = maxpool_forward(x);
    }
    x = reshape(x, {x.shape()[0], m.cfg.flat_dim()});
    x = fc_forward(m.fc, x);
    x = batchnorm_forward(m.fc_bn, x);
    x = leaky_relu(x, slope);
    if (m.frw) x = frw_forward(*m.frw, x);
    return x;
}

Tensor<float> embed(EmbeddingModel& m, const Tensor<float>& images) {
    if (m.mode != Mode::eval) {
        throw ContractError("embed: model must be in eval mode");
    }
    return forward_embedding(m, images);
}

void replace_head(EmbeddingModel& m, std::size_t new_num_classes, std::uint64_t seed) {
    if (new_num_classes < 2) {
        throw ContractError("replace_head: need at least 2 classes, got " +
                            std::to_string(new_num_classes));
    }
    Rng rng(seed);
    m.head = make_head<float>(m.cfg.embedding_dim, new_num_classes, rng);
    m.centers = make_centers<float>(new_num_classes, m.cfg.embedding_dim, m.centers.alpha);
    m.cfg.num_classes = new_num_classes;
}

std::vector<NamedTensor> named_tensors(EmbeddingModel& m) {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        const std::string id = std::to_string(i + 1);
        auto& b = m.blocks[i];
        out.push_back({"conv" + id + ".weight", &b.conv.weights, true, true});
        out.push_back({"conv" + id + ".bias", &b.conv.bias, true, false});
        out.push_back({"bn" + id + ".gamma", &b.bn.gamma, true, false});
        out.push_back({"bn" + id + ".beta", &b.bn.beta, true, false});
        out.push_back({"bn" + id + ".running_mean", &b.bn.running_mean, false, false});
        out.push_back({"bn" + id + ".running_var", &b.bn.running_var, false, false});
    }
    out.push_back({"fc.weight", &m.fc.weights, true, true});
    out.push_back({"fc.bias", &m.fc.bias, true, false});
    out.push_back({"fc_bn.gamma", &m.fc_bn.gamma, true, false});
    out.push_back({"fc_bn.beta", &m.fc_bn.beta, true, false});
    out.push_back({"fc_bn.running_mean", &m.fc_bn.running_mean, false, false});
    out.push_back({"fc_bn.running_var", &m.fc_bn.running_var, false, false});
    if (m.frw) out.push_back({"frw.weight", &m.frw->w, true, false});
    out.push_back({"head.weight", &m.head.weights, true, true});
    out.push_back({"head.bias", &m.head.bias, true, false});
    out.push_back({"centers", &m.centers.centers, false, false});
    out.push_back({"input_mean", &m.input_mean, false, false});
    return out;
}

std::vector<NamedTensor> trainable_tensors(EmbeddingModel& m) {
    std::vector<NamedTensor> out;
    for (auto& t : named_tensors(m))
        if (t.trainable) out.push_back(t);
    return out;
}

std::uint64_t checksum_tensors(const std::vector<NamedTensor>& tensors) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& t : tensors) {
        h = fnv1a64(t.name.data(), t.name.size(), h);
        h = checksum_values(t.tensor->values(), h);
    }
    return h;
}

std::uint64_t model_checksum(EmbeddingModel& m) { return checksum_tensors(named_tensors(m)); }

std::uint64_t backbone_checksum(EmbeddingModel& m) {
    std::vector<NamedTensor> kept;
    for (auto& t : named_tensors(m)) {
        if (t.name.rfind("head.", 0) == 0 || t.name == "centers") continue;
        kept.push_back(t);
    }
    return checksum_tensors(kept);
}

}  // namespace reid
