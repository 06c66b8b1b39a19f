#include "reid/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "reid/errors.hpp"
#include "reid/rng.hpp"
#include "reid/util.hpp"

namespace fs = std::filesystem;

namespace reid {

int ReidDataset::num_identities() const {
    int max_id = -1;
    for (const auto& r : records) max_id = std::max(max_id, r.identity);
    return max_id + 1;
}

std::vector<int> ReidDataset::camera_views() const {
    std::set<int> cams;
    for (const auto& r : records) cams.insert(r.camera);
    return {cams.begin(), cams.end()};
}

void validate_dataset(const ReidDataset& ds) {
    if (ds.records.empty()) throw DataError("dataset is empty");
    if (ds.height <= 0 || ds.width <= 0 || ds.channels != 3) {
        throw DataError("dataset has degenerate dimensions " + std::to_string(ds.channels) + "x" +
                        std::to_string(ds.height) + "x" + std::to_string(ds.width));
    }
    const std::size_t expected = ds.pixels_per_image();
    std::set<int> ids;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        if (r.pixels.size() != expected) {
            throw DataError("record " + std::to_string(i) + " has " +
                            std::to_string(r.pixels.size()) + " pixels, expected " +
                            std::to_string(expected));
        }
        if (r.identity < 0) throw DataError("record " + std::to_string(i) + " has negative identity");
        if (r.camera < 0) throw DataError("record " + std::to_string(i) + " has negative camera");
        ids.insert(r.identity);
    }
    const int n = *ids.rbegin() + 1;
    for (int id = 0; id < n; ++id) {
        if (!ids.count(id)) {
            throw DataError("identity labels are not contiguous: missing identity " +
                            std::to_string(id));
        }
    }
    const auto cams = ds.camera_views();
    for (int id = 0; id < n; ++id) {
        for (int cam : cams) {
            bool found = false;
            for (const auto& r : ds.records) {
                if (r.identity == id && r.camera == cam) {
                    found = true;
                    break;
                }
            }
            if (!found) {
                throw DataError("identity " + std::to_string(id) + " has no image in camera view " +
                                std::to_string(cam));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

void AugmentConfig::validate() const {
    if (translations_per_image < 0) throw ContractError("augment: translations_per_image < 0");
    if (max_shift_h < 0.0 || max_shift_h >= 0.5 || max_shift_w < 0.0 || max_shift_w >= 0.5) {
        throw ContractError("augment: max shift fractions must be in [0, 0.5)");
    }
}

namespace {

std::vector<float> shift_image(const std::vector<float>& src, int c, int h, int w, int dy, int dx) {
    std::vector<float> out(src.size(), 0.0f);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y) {
            const int sy = y - dy;
            if (sy < 0 || sy >= h) continue;
            for (int x = 0; x < w; ++x) {
                const int sx = x - dx;
                if (sx < 0 || sx >= w) continue;
                out[(ch * h + y) * w + x] = src[(ch * h + sy) * w + sx];
            }
        }
    return out;
}

std::vector<float> flip_horizontal(const std::vector<float>& src, int c, int h, int w) {
    std::vector<float> out(src.size());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out[(ch * h + y) * w + x] = src[(ch * h + y) * w + (w - 1 - x)];
    return out;
}

}  // namespace

ReidDataset augment(const ReidDataset& ds, const AugmentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    validate_dataset(ds);
    const int sy = static_cast<int>(cfg.max_shift_h * ds.height);
    const int sx = static_cast<int>(cfg.max_shift_w * ds.width);
    ReidDataset out;
    out.channels = ds.channels;
    out.height = ds.height;
    out.width = ds.width;
    out.channel_mean = ds.channel_mean;
    out.mean_subtracted = ds.mean_subtracted;
    out.records.reserve(ds.records.size() * (2 + cfg.translations_per_image));
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        out.records.push_back(r);
        Rng rng(Rng::mix(seed, i));
        for (int t = 0; t < cfg.translations_per_image; ++t) {
            const int dy = sy > 0 ? static_cast<int>(rng.uniform_int(-sy, sy)) : 0;
            const int dx = sx > 0 ? static_cast<int>(rng.uniform_int(-sx, sx)) : 0;
            out.records.push_back(
                {shift_image(r.pixels, ds.channels, ds.height, ds.width, dy, dx), r.identity,
                 r.camera});
        }
        if (cfg.horizontal_flip) {
            out.records.push_back(
                {flip_horizontal(r.pixels, ds.channels, ds.height, ds.width), r.identity, r.camera});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Resize and mean subtraction
// ---------------------------------------------------------------------------

std::vector<float> resize_bilinear(const std::vector<float>& pixels, int channels, int src_h,
                                   int src_w, int dst_h, int dst_w) {
    if (src_h == dst_h && src_w == dst_w) return pixels;
    std::vector<float> out(static_cast<std::size_t>(channels) * dst_h * dst_w);
    const double scale_y = static_cast<double>(src_h) / dst_h;
    const double scale_x = static_cast<double>(src_w) / dst_w;
    for (int c = 0; c < channels; ++c) {
        const float* plane = pixels.data() + static_cast<std::size_t>(c) * src_h * src_w;
        for (int y = 0; y < dst_h; ++y) {
            double fy = (y + 0.5) * scale_y - 0.5;
            fy = std::clamp(fy, 0.0, static_cast<double>(src_h - 1));
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, src_h - 1);
            const double wy = fy - y0;
            for (int x = 0; x < dst_w; ++x) {
                double fx = (x + 0.5) * scale_x - 0.5;
                fx = std::clamp(fx, 0.0, static_cast<double>(src_w - 1));
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, src_w - 1);
                const double wx = fx - x0;
                const double top = (1 - wx) * plane[y0 * src_w + x0] + wx * plane[y0 * src_w + x1];
                const double bot = (1 - wx) * plane[y1 * src_w + x0] + wx * plane[y1 * src_w + x1];
                out[(static_cast<std::size_t>(c) * dst_h + y) * dst_w + x] =
                    static_cast<float>((1 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

namespace {

void resize_all(ReidDataset& ds, std::size_t th, std::size_t tw) {
    if (static_cast<std::size_t>(ds.height) == th && static_cast<std::size_t>(ds.width) == tw)
        return;
    for (auto& r : ds.records) {
        r.pixels = resize_bilinear(r.pixels, ds.channels, ds.height, ds.width,
                                   static_cast<int>(th), static_cast<int>(tw));
    }
    ds.height = static_cast<int>(th);
    ds.width = static_cast<int>(tw);
}

void subtract_mean(ReidDataset& ds, const std::vector<float>& mean) {
    const std::size_t plane = static_cast<std::size_t>(ds.height) * ds.width;
    for (auto& r : ds.records)
        for (int c = 0; c < ds.channels; ++c)
            for (std::size_t p = 0; p < plane; ++p) r.pixels[c * plane + p] -= mean[c];
}

}  // namespace

std::vector<float> preprocess(ReidDataset& ds, std::size_t target_h, std::size_t target_w) {
    if (ds.records.empty()) throw DataError("preprocess: empty dataset");
    resize_all(ds, target_h, target_w);
    const std::size_t plane = static_cast<std::size_t>(ds.height) * ds.width;
    std::vector<double> acc(ds.channels, 0.0);
    for (const auto& r : ds.records)
        for (int c = 0; c < ds.channels; ++c)
            for (std::size_t p = 0; p < plane; ++p) acc[c] += r.pixels[c * plane + p];
    std::vector<float> mean(ds.channels);
    const double denom = static_cast<double>(ds.records.size()) * plane;
    for (int c = 0; c < ds.channels; ++c) mean[c] = static_cast<float>(acc[c] / denom);
    subtract_mean(ds, mean);
    ds.channel_mean = mean;
    ds.mean_subtracted = true;
    return mean;
}

void preprocess_with_mean(ReidDataset& ds, std::size_t target_h, std::size_t target_w,
                          const std::vector<float>& mean) {
    if (ds.records.empty()) throw DataError("preprocess: empty dataset");
    if (mean.size() != static_cast<std::size_t>(ds.channels)) {
        throw DimensionError("preprocess: mean has " + std::to_string(mean.size()) +
                             " channels, dataset has " + std::to_string(ds.channels));
    }
    resize_all(ds, target_h, target_w);
    subtract_mean(ds, mean);
    ds.channel_mean = mean;
    ds.mean_subtracted = true;
}

// ---------------------------------------------------------------------------
// Synthetic identity dataset
// ---------------------------------------------------------------------------

namespace {

struct Appearance {
    float torso[3], legs[3], skin[3], stripe[3], accent[3];
    int stripe_period = 3;
    int stripe_phase = 0;
    float stripe_strength = 0.5f;
};

struct CameraView {
    float scale[3] = {1.0f, 1.0f, 1.0f};
    float offset = 0.0f;
    int shift_y = 0;
    int shift_x = 0;
};

float palette_distance(const Appearance& a, const Appearance& b) {
    float d = 0;
    for (int c = 0; c < 3; ++c) {
        d += std::abs(a.torso[c] - b.torso[c]);
        d += std::abs(a.legs[c] - b.legs[c]);
    }
    return d;
}

Appearance draw_appearance(Rng& rng) {
    Appearance a;
    for (int c = 0; c < 3; ++c) a.torso[c] = static_cast<float>(rng.uniform(0.15, 0.95));
    for (int c = 0; c < 3; ++c) a.legs[c] = static_cast<float>(rng.uniform(0.15, 0.95));
    const float skin_r = static_cast<float>(rng.uniform(0.55, 0.9));
    a.skin[0] = skin_r;
    a.skin[1] = skin_r * 0.8f;
    a.skin[2] = skin_r * 0.65f;
    for (int c = 0; c < 3; ++c) a.stripe[c] = static_cast<float>(rng.uniform(0.1, 0.9));
    for (int c = 0; c < 3; ++c) a.accent[c] = static_cast<float>(rng.uniform(0.1, 0.9));
    a.stripe_period = static_cast<int>(rng.uniform_int(2, 5));
    a.stripe_phase = static_cast<int>(rng.uniform_int(0, a.stripe_period - 1));
    a.stripe_strength = static_cast<float>(rng.uniform(0.35, 0.85));
    return a;
}

}  // namespace

ReidDataset generate_synthetic(const SynthConfig& cfg) {
    if (cfg.num_ids < 2) throw ContractError("synthetic: need at least 2 identities");
    if (cfg.cams < 2) throw ContractError("synthetic: need at least 2 camera views");
    if (cfg.shots_per_cam < 1) throw ContractError("synthetic: need at least 1 shot per camera");
    if (cfg.height < 16 || cfg.width < 8) {
        throw ContractError("synthetic: image size must be at least 16x8, got " +
                            std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
    }
    const int H = static_cast<int>(cfg.height), W = static_cast<int>(cfg.width);

    // Identity appearances, resampled until distinct from all predecessors.
    std::vector<Appearance> looks;
    Rng palette_rng(Rng::mix(cfg.seed, 0xA11CE));
    for (std::size_t id = 0; id < cfg.num_ids; ++id) {
        Appearance a = draw_appearance(palette_rng);
        for (int attempt = 0; attempt < 64; ++attempt) {
            bool ok = true;
            for (const auto& prev : looks) {
                if (palette_distance(a, prev) < 0.5f) {
                    ok = false;
                    break;
                }
            }
            if (ok) break;
            a = draw_appearance(palette_rng);
        }
        looks.push_back(a);
    }

    std::vector<CameraView> cams(cfg.cams);
    cams[0] = CameraView{};
    cams[1].scale[0] = static_cast<float>(cfg.cam_brightness_scale);
    cams[1].scale[1] = static_cast<float>(cfg.cam_brightness_scale * 1.06);
    cams[1].scale[2] = static_cast<float>(cfg.cam_brightness_scale * 1.12);
    cams[1].offset = static_cast<float>(cfg.cam_brightness_offset);
    cams[1].shift_y = cfg.cam_shift_y;
    cams[1].shift_x = cfg.cam_shift_x;
    for (std::size_t k = 2; k < cfg.cams; ++k) {
        Rng crng(Rng::mix(cfg.seed, 0xCA0 + k));
        for (int c = 0; c < 3; ++c) cams[k].scale[c] = static_cast<float>(crng.uniform(0.6, 1.0));
        cams[k].offset = static_cast<float>(crng.uniform(0.0, 0.2));
        cams[k].shift_y = static_cast<int>(crng.uniform_int(-2, 2));
        cams[k].shift_x = static_cast<int>(crng.uniform_int(-2, 2));
    }

    ReidDataset ds;
    ds.height = H;
    ds.width = W;
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    for (std::size_t id = 0; id < cfg.num_ids; ++id) {
        const Appearance& a = looks[id];
        for (std::size_t cam = 0; cam < cfg.cams; ++cam) {
            const CameraView& view = cams[cam];
            for (std::size_t shot = 0; shot < cfg.shots_per_cam; ++shot) {
                Rng rng(Rng::mix(cfg.seed, (id * cfg.cams + cam) * 4099 + shot + 1));
                std::vector<float> img(3 * plane);
                const float bg = static_cast<float>(rng.uniform(0.25, 0.75));
                float bg_c[3];
                for (int c = 0; c < 3; ++c)
                    bg_c[c] = bg + static_cast<float>(rng.uniform(-0.05, 0.05));
                const int jy = static_cast<int>(rng.uniform_int(-2, 2));
                const int jx = static_cast<int>(rng.uniform_int(-2, 2));
                const float wiggle = static_cast<float>(rng.uniform(0.95, 1.05));
                const int dy = view.shift_y + jy;
                const int dx = view.shift_x + jx;

                for (int c = 0; c < 3; ++c)
                    for (std::size_t p = 0; p < plane; ++p) img[c * plane + p] = bg_c[c];

                const int head_t = H * 8 / 100, head_b = H * 25 / 100;
                const int torso_t = head_b, torso_b = H * 60 / 100;
                const int legs_t = torso_b, legs_b = H * 95 / 100;
                const int head_l = W * 30 / 100, head_r = W * 70 / 100;
                const int body_l = W * 20 / 100, body_r = W * 80 / 100;
                const int legs_l = W * 25 / 100, legs_r = W * 75 / 100;
                const int collar_b = torso_t + std::max(1, (torso_b - torso_t) / 5);

                auto paint = [&](int y, int x, const float* color) {
                    const int ty = y + dy, tx = x + dx;
                    if (ty < 0 || ty >= H || tx < 0 || tx >= W) return;
                    for (int c = 0; c < 3; ++c) img[c * plane + ty * W + tx] = color[c];
                };
                for (int y = head_t; y < head_b; ++y)
                    for (int x = head_l; x < head_r; ++x) paint(y, x, a.skin);
                for (int y = torso_t; y < torso_b; ++y)
                    for (int x = body_l; x < body_r; ++x) {
                        if (y < collar_b) {
                            paint(y, x, a.accent);
                            continue;
                        }
                        const bool on_stripe =
                            ((y - torso_t + a.stripe_phase) % a.stripe_period) * 2 <
                            a.stripe_period;
                        if (on_stripe) {
                            float mixed[3];
                            for (int c = 0; c < 3; ++c)
                                mixed[c] = (1 - a.stripe_strength) * a.torso[c] +
                                           a.stripe_strength * a.stripe[c];
                            paint(y, x, mixed);
                        } else {
                            paint(y, x, a.torso);
                        }
                    }
                for (int y = legs_t; y < legs_b; ++y)
                    for (int x = legs_l; x < legs_r; ++x) paint(y, x, a.legs);

                for (int c = 0; c < 3; ++c)
                    for (std::size_t p = 0; p < plane; ++p) {
                        float v = img[c * plane + p];
                        v = (view.scale[c] * v + view.offset) * wiggle;
                        v += static_cast<float>(rng.normal(0.0, cfg.noise_sigma));
                        img[c * plane + p] = std::clamp(v, 0.0f, 1.0f);
                    }
                ds.records.push_back({std::move(img), static_cast<int>(id), static_cast<int>(cam)});
            }
        }
    }
    validate_dataset(ds);
    return ds;
}

// ---------------------------------------------------------------------------
// Pixmap + manifest interchange
// ---------------------------------------------------------------------------

void write_ppm(const std::string& path, const std::vector<float>& pixels, int h, int w) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    if (pixels.size() != 3 * plane) {
        throw DimensionError("write_ppm: " + std::to_string(pixels.size()) + " values for " +
                             std::to_string(h) + "x" + std::to_string(w));
    }
    atomic_write_file(path, [&](std::ostream& os) {
        os << "P6\n" << w << " " << h << "\n255\n";
        std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) {
                    const float v = pixels[c * plane + y * w + x];
                    const int q = static_cast<int>(std::lround(v * 255.0f));
                    row[static_cast<std::size_t>(x) * 3 + c] =
                        static_cast<unsigned char>(std::clamp(q, 0, 255));
                }
            os.write(reinterpret_cast<const char*>(row.data()),
                     static_cast<std::streamsize>(row.size()));
        }
    });
}

std::vector<float> read_ppm(const std::string& path, int& h, int& w) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open image: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P6") throw IoError("not a P6 pixmap: " + path);
    auto next_int = [&]() {
        // skip whitespace and '#' comments
        int ch;
        while ((ch = is.peek()) != EOF) {
            if (ch == '#') {
                std::string line;
                std::getline(is, line);
            } else if (std::isspace(ch)) {
                is.get();
            } else {
                break;
            }
        }
        int v;
        is >> v;
        if (!is) throw IoError("malformed pixmap header: " + path);
        return v;
    };
    w = next_int();
    h = next_int();
    const int maxval = next_int();
    if (w <= 0 || h <= 0 || maxval != 255) throw IoError("unsupported pixmap header: " + path);
    is.get();  // single whitespace after maxval
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<unsigned char> raw(plane * 3);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) throw IoError("truncated pixmap: " + path);
    std::vector<float> out(3 * plane);
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) out[c * plane + p] = static_cast<float>(raw[p * 3 + c]) / 255.0f;
    return out;
}

void export_dataset(const ReidDataset& ds, const std::string& dir) {
    validate_dataset(ds);
    if (ds.mean_subtracted) {
        throw ContractError("export_dataset: refusing to export a mean-subtracted dataset");
    }
    fs::create_directories(dir);
    std::ostringstream manifest;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        std::ostringstream name;
        name << "img_" << std::setw(5) << std::setfill('0') << i << ".ppm";
        write_ppm((fs::path(dir) / name.str()).string(), ds.records[i].pixels, ds.height, ds.width);
        manifest << name.str() << " " << ds.records[i].identity << " " << ds.records[i].camera
                 << "\n";
    }
    atomic_write_text((fs::path(dir) / "manifest.txt").string(), manifest.str());
}

ReidDataset load_directory(const std::string& dir, const std::string& manifest_name) {
    const fs::path manifest_path = fs::path(dir) / manifest_name;
    std::ifstream is(manifest_path);
    if (!is) throw IoError("cannot open manifest: " + manifest_path.string());
    ReidDataset ds;
    std::set<std::string> seen_paths;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string rel;
        long long identity = -1, camera = -1;
        if (!(ls >> rel >> identity >> camera)) {
            throw DataError(manifest_path.string() + ":" + std::to_string(line_no) +
                            ": expected 'relative_path identity camera', got '" + line + "'");
        }
        std::string extra;
        if (ls >> extra) {
            throw DataError(manifest_path.string() + ":" + std::to_string(line_no) +
                            ": trailing content '" + extra + "'");
        }
        if (identity < 0 || camera < 0) {
            throw DataError(manifest_path.string() + ":" + std::to_string(line_no) +
                            ": identity and camera must be nonnegative");
        }
        if (!seen_paths.insert(rel).second) {
            throw DataError(manifest_path.string() + ":" + std::to_string(line_no) +
                            ": duplicate file entry '" + rel + "'");
        }
        const fs::path img_path = fs::path(dir) / rel;
        if (!fs::exists(img_path)) {
            throw DataError(manifest_path.string() + ":" + std::to_string(line_no) +
                            ": missing image file '" + rel + "'");
        }
        int h = 0, w = 0;
        auto pixels = read_ppm(img_path.string(), h, w);
        if (ds.records.empty()) {
            ds.height = h;
            ds.width = w;
        } else if (h != ds.height || w != ds.width) {
            throw DataError(manifest_path.string() + ":" + std::to_string(line_no) + ": image '" +
                            rel + "' is " + std::to_string(w) + "x" + std::to_string(h) +
                            ", dataset is " + std::to_string(ds.width) + "x" +
                            std::to_string(ds.height));
        }
        ds.records.push_back({std::move(pixels), static_cast<int>(identity),
                              static_cast<int>(camera)});
    }
    validate_dataset(ds);
    return ds;
}

// ---------------------------------------------------------------------------
// Identity splits
// ---------------------------------------------------------------------------

std::pair<ReidDataset, ReidDataset> split_identities(const ReidDataset& ds, double train_frac,
                                                     std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0)) {
        throw ContractError("split: train fraction must be in (0, 1), got " +
                            std::to_string(train_frac));
    }
    const int n = ds.num_identities();
    const auto train_count = static_cast<std::size_t>(std::llround(train_frac * n));
    if (train_count < 1 || train_count >= static_cast<std::size_t>(n)) {
        throw DataError("split: " + std::to_string(n) + " identities are too few for train fraction " +
                        std::to_string(train_frac));
    }
    std::vector<int> ids(n);
    for (int i = 0; i < n; ++i) ids[i] = i;
    Rng rng(seed);
    rng.shuffle(ids.begin(), ids.end());
    std::vector<int> remap(n, -1);
    std::vector<bool> in_train(n, false);
    std::vector<int> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(train_count));
    std::vector<int> test_ids(ids.begin() + static_cast<std::ptrdiff_t>(train_count), ids.end());
    std::sort(train_ids.begin(), train_ids.end());
    std::sort(test_ids.begin(), test_ids.end());
    for (std::size_t i = 0; i < train_ids.size(); ++i) {
        remap[train_ids[i]] = static_cast<int>(i);
        in_train[train_ids[i]] = true;
    }
    for (std::size_t i = 0; i < test_ids.size(); ++i) remap[test_ids[i]] = static_cast<int>(i);

    auto shell = [&]() {
        ReidDataset part;
        part.channels = ds.channels;
        part.height = ds.height;
        part.width = ds.width;
        part.channel_mean = ds.channel_mean;
        part.mean_subtracted = ds.mean_subtracted;
        return part;
    };
    ReidDataset train = shell(), test = shell();
    for (const auto& r : ds.records) {
        ImageRecord copy = r;
        copy.identity = remap[r.identity];
        (in_train[r.identity] ? train : test).records.push_back(std::move(copy));
    }
    return {std::move(train), std::move(test)};
}

}  // namespace reid
