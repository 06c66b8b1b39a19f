#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "reid/data.hpp"
#include "reid/tensor.hpp"

namespace reid {

struct DistanceMatrix {
    std::size_t num_probe = 0;
    std::size_t num_gallery = 0;
    std::vector<double> values;  // [num_probe x num_gallery]
    std::vector<int> probe_ids;
    std::vector<int> gallery_ids;

    double at(std::size_t i, std::size_t j) const { return values[i * num_gallery + j]; }
};

struct CMCurve {
    std::vector<double> mean_rates;  // indexed by rank-1
    std::vector<double> stddev;
    std::size_t num_probes = 0;
    std::size_t num_splits = 1;

    double rank(std::size_t k) const { return mean_rates.at(k - 1); }
};

// Each row divided by its Euclidean norm; rejects (near-)zero rows.
template <typename T>
Tensor<T> normalize_embeddings(const Tensor<T>& x) {
    if (x.rank() != 2) {
        throw DimensionError("normalize: expected [B x D], got " + format_shape(x.shape()));
    }
    const std::size_t b = x.shape()[0], d = x.shape()[1];
    const auto& xv = x.values();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < b; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = xv[i * d + j];
            sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (norm < 1e-12) {
            throw NumericError("normalize: row " + std::to_string(i) + " has zero norm");
        }
        for (std::size_t j = 0; j < d; ++j)
            out[i * d + j] = static_cast<T>(xv[i * d + j] / norm);
    }
    return Tensor<T>::from_vector(x.shape(), std::move(out), false);
}

DistanceMatrix pairwise_distances(const Tensor<double>& probe, const Tensor<double>& gallery,
                                  std::vector<int> probe_ids, std::vector<int> gallery_ids);

// Single-shot protocol: every probe identity appears exactly once in the
// gallery; CMC(k) is the fraction of probes whose match ranks within the
// top k by ascending distance (ties broken by gallery index).
CMCurve cmc_single_shot(const DistanceMatrix& dist, std::size_t max_rank);

struct EvalProtocol {
    std::size_t num_splits = 10;
    double train_frac = 0.5;
    std::uint64_t seed = 0;
    std::size_t max_rank = 10;
    int probe_camera = 0;  // the other view supplies the gallery
    bool swap_views = false;

    // CUHK03-style protocol constants: 20 splits, 1160 train / 100 test ids.
    static EvalProtocol cuhk03();
};

// Embeds the given record indices; returns row-major [n x dim] doubles.
using EmbedFn = std::function<std::vector<double>(const ReidDataset& ds,
                                                  const std::vector<std::size_t>& indices,
                                                  std::size_t& dim)>;

// For each split: partition identities, embed the test images, normalize,
// pair the probe view against a single-shot gallery from the other view,
// and accumulate the CMC. Reports per-rank mean and stddev over splits.
CMCurve evaluate_splits(const EmbedFn& embed_fn, const ReidDataset& ds, const EvalProtocol& proto);

// Raw flattened pixels as the embedding (nearest-neighbor baseline).
EmbedFn raw_pixel_embedder();

void write_cmc_csv(const CMCurve& curve, const std::string& path);

}  // namespace reid
