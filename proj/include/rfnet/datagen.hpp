#pragma once

// Synthetic RGB-D scenes with binary saliency masks, the depth degradation
// simulator (noise / holes / quantization / rigid misalignment), and the
// PPM/PGM dataset directory format.

#include <optional>
#include <string>
#include <vector>

#include "rfnet/checkpoint.hpp"  // IoError
#include "rfnet/random.hpp"
#include "rfnet/tensor.hpp"

namespace rfnet {

struct SceneSpec {
    std::uint64_t seed = 0;
    int size = 64;
    int min_objects = 1;
    int max_objects = 3;
    // Salient objects sit strictly nearer than the background band.
    float fg_depth_min = 0.2f;
    float fg_depth_max = 0.5f;
    float bg_depth_min = 0.6f;
    float bg_depth_max = 1.0f;
    float texture_noise = 0.05f;
};

struct DegradationConfig {
    float noise_sigma = 0.0f;  // additive Gaussian on depth
    float hole_rate = 0.0f;    // fraction of pixels zeroed
    int quant_levels = 0;      // 0 or 1 = off
    int shift_dx = 0;          // rigid misalignment, edge-replicated
    int shift_dy = 0;
    std::uint64_t seed = 0;

    bool any() const { return noise_sigma > 0.0f || hole_rate > 0.0f || quant_levels > 1 || shift_dx != 0 || shift_dy != 0; }
};

struct SamplePair {
    int id = 0;
    Tensor<float> rgb;    // 3×H×W in [0,1]
    Tensor<float> depth;  // 1×H×W in [0,1]
    Tensor<float> gt;     // 1×H×W binary
    DegradationConfig degradation;  // all-off for clean samples
};

// Rasterizers used by the generator; exposed so layouts can be constructed
// directly in tests.
void draw_rectangle(std::vector<float>& mask, int size, int cx, int cy, int half_w, int half_h);
void draw_ellipse(std::vector<float>& mask, int size, int cx, int cy, int rx, int ry);

// Deterministic in spec.seed; ground truth covers 2-40% of the image.
SamplePair gen_scene(const SceneSpec& spec);

// Stages apply in order shift -> quantize -> noise -> holes -> clip; the
// all-off config is an exact identity.
Tensor<float> degrade(const Tensor<float>& depth, const DegradationConfig& cfg);

struct QualityMix {
    float degraded_fraction = 0.0f;
    DegradationConfig degradation;  // template applied to the degraded share
};

std::vector<SamplePair> make_dataset(int n, const SceneSpec& spec_template, const QualityMix& mix);

// Binary PPM (P6) / PGM (P5), 8-bit, linear in [0,1].
void write_ppm(const std::string& path, const Tensor<float>& rgb);
void write_pgm(const std::string& path, const Tensor<float>& gray);
Tensor<float> read_ppm(const std::string& path);
Tensor<float> read_pgm(const std::string& path);
inline void save_map(const Tensor<float>& map, const std::string& path) { write_pgm(path, map); }

SamplePair load_pair(const std::string& rgb_path, const std::string& depth_path, const std::string& gt_path);

// Layout: <root>/rgb/NNNN.ppm, <root>/depth/NNNN.pgm, <root>/gt/NNNN.pgm
// plus manifest.csv (id, noise_sigma, hole_rate, shift_dx, shift_dy, quant_levels).
void save_dataset(const std::string& root, const std::vector<SamplePair>& samples);
std::vector<SamplePair> load_dataset(const std::string& root);

}  // namespace rfnet
