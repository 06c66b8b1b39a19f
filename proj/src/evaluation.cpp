#include "reid/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "reid/errors.hpp"
#include "reid/rng.hpp"
#include "reid/util.hpp"

namespace reid {

DistanceMatrix pairwise_distances(const Tensor<double>& probe, const Tensor<double>& gallery,
                                  std::vector<int> probe_ids, std::vector<int> gallery_ids) {
    if (probe.rank() != 2 || gallery.rank() != 2 || probe.shape()[1] != gallery.shape()[1]) {
        throw DimensionError("pairwise_distances: incompatible shapes " +
                             format_shape(probe.shape()) + " and " + format_shape(gallery.shape()));
    }
    const std::size_t p = probe.shape()[0], g = gallery.shape()[0], d = probe.shape()[1];
    if (probe_ids.size() != p || gallery_ids.size() != g) {
        throw ContractError("pairwise_distances: id lists do not match matrix dimensions");
    }
    DistanceMatrix out;
    out.num_probe = p;
    out.num_gallery = g;
    out.probe_ids = std::move(probe_ids);
    out.gallery_ids = std::move(gallery_ids);
    out.values.resize(p * g);
    const auto& pv = probe.values();
    const auto& gv = gallery.values();
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < g; ++j) {
            double sq = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = pv[i * d + k] - gv[j * d + k];
                sq += diff * diff;
            }
            out.values[i * g + j] = std::sqrt(sq);
        }
    return out;
}

CMCurve cmc_single_shot(const DistanceMatrix& dist, std::size_t max_rank) {
    if (max_rank < 1) throw ContractError("cmc: max_rank must be at least 1");
    if (dist.num_probe == 0 || dist.num_gallery == 0) {
        throw ProtocolError("cmc: empty probe or gallery");
    }
    // single shot: each gallery identity occurs exactly once
    std::map<int, std::size_t> gallery_count;
    for (int id : dist.gallery_ids) ++gallery_count[id];
    for (const auto& [id, count] : gallery_count) {
        if (count > 1) {
            throw ProtocolError("cmc: identity " + std::to_string(id) + " appears " +
                                std::to_string(count) + " times in the gallery (single shot)");
        }
    }
    std::vector<std::size_t> hits(max_rank, 0);
    std::vector<std::size_t> order(dist.num_gallery);
    for (std::size_t i = 0; i < dist.num_probe; ++i) {
        if (!gallery_count.count(dist.probe_ids[i])) {
            throw ProtocolError("cmc: probe identity " + std::to_string(dist.probe_ids[i]) +
                                " absent from the gallery");
        }
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double da = dist.at(i, a), db = dist.at(i, b);
            if (da != db) return da < db;
            return a < b;  // tie: ascending gallery index
        });
        std::size_t rank = 0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            if (dist.gallery_ids[order[k]] == dist.probe_ids[i]) {
                rank = k + 1;
                break;
            }
        }
        for (std::size_t k = rank - 1; k < max_rank; ++k) ++hits[k];
    }
    CMCurve curve;
    curve.num_probes = dist.num_probe;
    curve.num_splits = 1;
    curve.mean_rates.resize(max_rank);
    curve.stddev.assign(max_rank, 0.0);
    for (std::size_t k = 0; k < max_rank; ++k)
        curve.mean_rates[k] = static_cast<double>(hits[k]) / static_cast<double>(dist.num_probe);
    return curve;
}

EvalProtocol EvalProtocol::cuhk03() {
    EvalProtocol p;
    p.num_splits = 20;
    p.train_frac = 1160.0 / 1260.0;  // 1160 train, 100 test identities
    p.max_rank = 10;
    return p;
}

CMCurve evaluate_splits(const EmbedFn& embed_fn, const ReidDataset& ds, const EvalProtocol& proto) {
    validate_dataset(ds);
    const auto cams = ds.camera_views();
    if (cams.size() < 2) {
        throw ProtocolError("evaluate: dataset has " + std::to_string(cams.size()) +
                            " camera views, need at least 2");
    }
    const int probe_cam = proto.swap_views ? cams[1] : cams[proto.probe_camera == 0 ? 0 : 1];
    const int gallery_cam = proto.swap_views ? cams[0] : cams[proto.probe_camera == 0 ? 1 : 0];

    std::vector<std::vector<double>> split_rates;
    std::size_t num_probes = 0;
    for (std::size_t split = 0; split < proto.num_splits; ++split) {
        const std::uint64_t split_seed = Rng::mix(proto.seed, split);
        auto [train_part, test_part] = split_identities(ds, proto.train_frac, split_seed);
        (void)train_part;
        const int test_ids = test_part.num_identities();
        if (test_ids < 2) {
            throw ProtocolError("evaluate: split leaves " + std::to_string(test_ids) +
                                " test identities, need at least 2");
        }
        // embed every test image once
        std::vector<std::size_t> all(test_part.records.size());
        std::iota(all.begin(), all.end(), 0);
        std::size_t dim = 0;
        const std::vector<double> emb = embed_fn(test_part, all, dim);
        Tensor<double> embedded =
            Tensor<double>::from_vector({all.size(), dim}, emb, false);
        Tensor<double> normalized = normalize_embeddings(embedded);

        // probes: all images from the probe view; gallery: one random image
        // per identity from the gallery view
        Rng rng(Rng::mix(split_seed, 0x9a77e27));
        std::vector<std::size_t> probe_rows;
        std::vector<int> probe_labels;
        std::vector<std::vector<std::size_t>> per_id(test_ids);
        for (std::size_t i = 0; i < test_part.records.size(); ++i) {
            const auto& r = test_part.records[i];
            if (r.camera == probe_cam) {
                probe_rows.push_back(i);
                probe_labels.push_back(r.identity);
            } else if (r.camera == gallery_cam) {
                per_id[r.identity].push_back(i);
            }
        }
        std::vector<std::size_t> gallery_rows;
        std::vector<int> gallery_labels;
        for (int id = 0; id < test_ids; ++id) {
            const auto& candidates = per_id[id];
            if (candidates.empty()) {
                throw ProtocolError("evaluate: identity " + std::to_string(id) +
                                    " has no image in the gallery view");
            }
            const auto pick = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1));
            gallery_rows.push_back(candidates[pick]);
            gallery_labels.push_back(id);
        }
        auto take = [&](const std::vector<std::size_t>& rows) {
            std::vector<double> buf(rows.size() * dim);
            for (std::size_t r = 0; r < rows.size(); ++r)
                std::copy_n(normalized.values().data() + rows[r] * dim, dim,
                            buf.data() + r * dim);
            return Tensor<double>::from_vector({rows.size(), dim}, std::move(buf), false);
        };
        const DistanceMatrix dist = pairwise_distances(take(probe_rows), take(gallery_rows),
                                                       probe_labels, gallery_labels);
        const CMCurve curve = cmc_single_shot(dist, proto.max_rank);
        split_rates.push_back(curve.mean_rates);
        num_probes = curve.num_probes;
    }

    CMCurve out;
    out.num_probes = num_probes;
    out.num_splits = proto.num_splits;
    out.mean_rates.assign(proto.max_rank, 0.0);
    out.stddev.assign(proto.max_rank, 0.0);
    for (const auto& rates : split_rates)
        for (std::size_t k = 0; k < proto.max_rank; ++k) out.mean_rates[k] += rates[k];
    for (auto& v : out.mean_rates) v /= static_cast<double>(split_rates.size());
    if (split_rates.size() > 1) {
        for (std::size_t k = 0; k < proto.max_rank; ++k) {
            double acc = 0.0;
            for (const auto& rates : split_rates) {
                const double d = rates[k] - out.mean_rates[k];
                acc += d * d;
            }
            out.stddev[k] = std::sqrt(acc / static_cast<double>(split_rates.size() - 1));
        }
    }
    return out;
}

EmbedFn raw_pixel_embedder() {
    return [](const ReidDataset& ds, const std::vector<std::size_t>& indices, std::size_t& dim) {
        dim = ds.pixels_per_image();
        std::vector<double> out(indices.size() * dim);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const auto& px = ds.records[indices[i]].pixels;
            for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] = px[j];
        }
        return out;
    };
}

void write_cmc_csv(const CMCurve& curve, const std::string& path) {
    std::ostringstream os;
    os << "rank,mean_rate,stddev\n";
    for (std::size_t k = 0; k < curve.mean_rates.size(); ++k)
        os << (k + 1) << "," << curve.mean_rates[k] << "," << curve.stddev[k] << "\n";
    atomic_write_text(path, os.str());
}

}  // namespace reid
