#pragma once

#include <string>

#include "reid/model.hpp"

namespace reid {

// Versioned binary container: magic, format version, embedded model config,
// then one record per named tensor (name, shape, 32-bit float values).
// Round-trips are bitwise exact.
void save_checkpoint(EmbeddingModel& model, const std::string& path);

EmbeddingModel load_checkpoint(const std::string& path);

// As above, but additionally requires the embedded config to equal
// `expected` (e.g. a desk checkpoint only loads under a desk config).
EmbeddingModel load_checkpoint(const std::string& path, const ModelConfig& expected);

}  // namespace reid
