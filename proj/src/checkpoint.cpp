#include "reid/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

namespace {

constexpr char kMagic[8] = {'R', 'E', 'I', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw IoError("truncated checkpoint file");
    return v;
}
std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw IoError("truncated checkpoint file");
    return v;
}
std::string read_string(std::istream& is, std::uint64_t len) {
    std::string s(len, '\0');
    is.read(s.data(), static_cast<std::streamsize>(len));
    if (!is) throw IoError("truncated checkpoint file");
    return s;
}

}  // namespace

void save_checkpoint(EmbeddingModel& model, const std::string& path) {
    const std::string cfg_text = model.cfg.to_text();
    auto tensors = named_tensors(model);
    atomic_write_file(path, [&](std::ostream& os) {
        os.write(kMagic, sizeof(kMagic));
        write_u32(os, kVersion);
        write_u64(os, cfg_text.size());
        os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
        write_u64(os, tensors.size());
        for (const auto& t : tensors) {
            write_u64(os, t.name.size());
            os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
            const auto& shape = t.tensor->shape();
            write_u32(os, static_cast<std::uint32_t>(shape.size()));
            for (auto d : shape) write_u64(os, d);
            const auto& vals = t.tensor->values();
            write_u64(os, vals.size());
            os.write(reinterpret_cast<const char*>(vals.data()),
                     static_cast<std::streamsize>(vals.size() * sizeof(float)));
        }
    });
}

EmbeddingModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw IoError("not a checkpoint file (bad magic): " + path);
    }
    const std::uint32_t version = read_u32(is);
    if (version != kVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kVersion) + "): " + path);
    }
    const auto cfg_len = read_u64(is);
    const std::string cfg_text = read_string(is, cfg_len);
    ModelConfig cfg = ModelConfig::from_text(cfg_text);
    EmbeddingModel model = build(cfg, 0);
    auto tensors = named_tensors(model);

    const auto count = read_u64(is);
    if (count != tensors.size()) {
        throw IoError("checkpoint lists " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(tensors.size()) + ": " + path);
    }
    std::vector<bool> filled(tensors.size(), false);
    for (std::uint64_t r = 0; r < count; ++r) {
        const auto name_len = read_u64(is);
        const std::string name = read_string(is, name_len);
        const auto rank = read_u32(is);
        Shape shape(rank);
        for (auto& d : shape) d = read_u64(is);
        const auto nvals = read_u64(is);
        std::vector<float> vals(nvals);
        is.read(reinterpret_cast<char*>(vals.data()),
                static_cast<std::streamsize>(nvals * sizeof(float)));
        if (!is) throw IoError("truncated checkpoint file");

        std::size_t slot = tensors.size();
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            if (tensors[i].name == name) {
                slot = i;
                break;
            }
        }
        if (slot == tensors.size()) {
            throw IoError("checkpoint tensor '" + name + "' not known to this model: " + path);
        }
        if (filled[slot]) throw IoError("checkpoint tensor '" + name + "' appears twice: " + path);
        if (shape != tensors[slot].tensor->shape() || nvals != tensors[slot].tensor->numel()) {
            throw DimensionError("checkpoint tensor '" + name + "': shape " + format_shape(shape) +
                                 " does not match model shape " +
                                 format_shape(tensors[slot].tensor->shape()));
        }
        tensors[slot].tensor->values_mut() = std::move(vals);
        filled[slot] = true;
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (!filled[i]) throw IoError("checkpoint missing tensor '" + tensors[i].name + "': " + path);
    }
    return model;
}

EmbeddingModel load_checkpoint(const std::string& path, const ModelConfig& expected) {
    EmbeddingModel model = load_checkpoint(path);
    if (!(model.cfg == expected)) {
        throw ConfigError("checkpoint config (" + preset_name(model.cfg.preset) +
                          " preset) does not match the requested config (" +
                          preset_name(expected.preset) + " preset): " + path);
    }
    return model;
}

}  // namespace reid
