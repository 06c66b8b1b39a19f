#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "reid/tensor.hpp"

namespace reid {

// One image with its identity label and camera-view tag. Pixels are stored
// channel-major ([C x H x W], RGB) as floats; raw images live in [0, 1],
// preprocessed images are mean-subtracted.
struct ImageRecord {
    std::vector<float> pixels;
    int identity = 0;
    int camera = 0;
};

struct ReidDataset {
    int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<ImageRecord> records;
    std::vector<float> channel_mean;  // populated by preprocess
    bool mean_subtracted = false;

    int num_identities() const;
    std::vector<int> camera_views() const;
    std::size_t pixels_per_image() const {
        return static_cast<std::size_t>(channels) * height * width;
    }
};

// Checks the dataset invariants: contiguous identities 0..N-1, consistent
// image sizes, and at least one image per camera view for every identity.
void validate_dataset(const ReidDataset& ds);

// ---------------------------------------------------------------------------
// Augmentation (random 2D translation + horizontal reflection)
// ---------------------------------------------------------------------------

struct AugmentConfig {
    int translations_per_image = 3;
    double max_shift_h = 0.05;  // fraction of height
    double max_shift_w = 0.05;  // fraction of width
    bool horizontal_flip = true;
    std::size_t target_h = 0;  // 0: keep source size
    std::size_t target_w = 0;

    void validate() const;
};

// Each source image yields the original, `translations_per_image` randomly
// shifted copies (zero fill at exposed borders), and one mirrored copy of
// the original; defaults give 5 samples per image. Labels are untouched.
ReidDataset augment(const ReidDataset& ds, const AugmentConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Preprocessing (bilinear resize + training-mean subtraction)
// ---------------------------------------------------------------------------

std::vector<float> resize_bilinear(const std::vector<float>& pixels, int channels, int src_h,
                                   int src_w, int dst_h, int dst_w);

// Resizes every image and subtracts the per-channel mean computed over this
// (training) dataset; the mean is stored on the dataset and returned for
// reuse on test data.
std::vector<float> preprocess(ReidDataset& ds, std::size_t target_h, std::size_t target_w);

// Same resize, but subtracting a previously computed training mean.
void preprocess_with_mean(ReidDataset& ds, std::size_t target_h, std::size_t target_w,
                          const std::vector<float>& mean);

// ---------------------------------------------------------------------------
// Synthetic identity dataset
// ---------------------------------------------------------------------------

struct SynthConfig {
    std::size_t num_ids = 50;
    std::size_t cams = 2;
    std::size_t shots_per_cam = 4;
    std::size_t height = 32;
    std::size_t width = 16;
    std::uint64_t seed = 7;
    // Per-shot nuisance and cross-camera view change; tuned so that raw-pixel
    // matching degrades while the task stays learnable.
    double noise_sigma = 0.04;
    double cam_brightness_scale = 0.55;
    double cam_brightness_offset = 0.18;
    int cam_shift_y = 3;
    int cam_shift_x = 2;

    static SynthConfig standard50() { return SynthConfig{}; }
};

// Procedural appearances (colors + stripe texture keyed to identity), a
// fixed view transform per camera, per-shot jitter and noise. Deterministic
// per seed.
ReidDataset generate_synthetic(const SynthConfig& cfg);

// ---------------------------------------------------------------------------
// On-disk interchange: binary pixmaps plus a plain-text manifest
// ---------------------------------------------------------------------------

void write_ppm(const std::string& path, const std::vector<float>& pixels, int h, int w);
std::vector<float> read_ppm(const std::string& path, int& h, int& w);

// Writes <dir>/img_XXXX.ppm files and <dir>/manifest.txt with one
// "relative_path identity camera" triple per line. Raw datasets only.
void export_dataset(const ReidDataset& ds, const std::string& dir);

// Loads images per the manifest and validates the dataset invariants.
// Errors carry the offending manifest line number.
ReidDataset load_directory(const std::string& dir, const std::string& manifest_name = "manifest.txt");

// ---------------------------------------------------------------------------
// Identity splits
// ---------------------------------------------------------------------------

// Random identity partition; both parts are relabeled to contiguous ids
// (ascending in the original labels). Deterministic per seed.
std::pair<ReidDataset, ReidDataset> split_identities(const ReidDataset& ds, double train_frac,
                                                     std::uint64_t seed);

}  // namespace reid
