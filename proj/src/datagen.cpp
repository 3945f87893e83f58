#include "rfnet/datagen.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace rfnet {

namespace fs = std::filesystem;

void draw_rectangle(std::vector<float>& mask, int size, int cx, int cy, int half_w, int half_h) {
    for (int y = std::max(0, cy - half_h); y < std::min(size, cy + half_h); ++y) {
        for (int x = std::max(0, cx - half_w); x < std::min(size, cx + half_w); ++x) {
            mask[static_cast<std::size_t>(y) * size + x] = 1.0f;
        }
    }
}

void draw_ellipse(std::vector<float>& mask, int size, int cx, int cy, int rx, int ry) {
    for (int y = std::max(0, cy - ry); y <= std::min(size - 1, cy + ry); ++y) {
        for (int x = std::max(0, cx - rx); x <= std::min(size - 1, cx + rx); ++x) {
            const float nx = static_cast<float>(x - cx) / static_cast<float>(rx);
            const float ny = static_cast<float>(y - cy) / static_cast<float>(ry);
            if (nx * nx + ny * ny <= 1.0f) mask[static_cast<std::size_t>(y) * size + x] = 1.0f;
        }
    }
}

namespace {

struct SceneDraw {
    std::vector<float> mask;        // union of object supports
    std::vector<float> depth;       // nearest object wins where they overlap
    std::vector<float> rgb;         // 3 planes
};

SceneDraw draw_once(const SceneSpec& spec, Rng& rng) {
    const int s = spec.size;
    const auto n = static_cast<std::size_t>(s) * static_cast<std::size_t>(s);
    SceneDraw out;
    out.mask.assign(n, 0.0f);
    out.depth.assign(n, 0.0f);
    out.rgb.assign(3 * n, 0.0f);

    float bg_color[3];
    for (float& ch : bg_color) ch = static_cast<float>(rng.uniform(0.1, 0.9));
    for (std::size_t i = 0; i < n; ++i) {
        out.depth[i] = static_cast<float>(rng.uniform(spec.bg_depth_min, spec.bg_depth_max));
    }

    const int objects = rng.uniform_int(spec.min_objects, spec.max_objects);
    std::vector<std::vector<float>> object_masks;
    std::vector<float> object_depths;
    std::vector<std::array<float, 3>> object_colors;
    for (int o = 0; o < objects; ++o) {
        std::vector<float> m(n, 0.0f);
        const int extent_lo = std::max(2, s / 10);
        const int extent_hi = std::max(3, s / 4);
        const int hw = rng.uniform_int(extent_lo, extent_hi);
        const int hh = rng.uniform_int(extent_lo, extent_hi);
        const int cx = rng.uniform_int(hw, s - 1 - hw);
        const int cy = rng.uniform_int(hh, s - 1 - hh);
        if (rng.bernoulli(0.5)) {
            draw_rectangle(m, s, cx, cy, hw, hh);
        } else {
            draw_ellipse(m, s, cx, cy, hw, hh);
        }
        object_masks.push_back(std::move(m));
        object_depths.push_back(static_cast<float>(rng.uniform(spec.fg_depth_min, spec.fg_depth_max)));
        // Keep the object color clearly separated from the background so the
        // RGB stream carries signal even when the depth is degraded.
        std::array<float, 3> color;
        for (int tries = 0; tries < 64; ++tries) {
            float dist = 0.0f;
            for (int ch = 0; ch < 3; ++ch) {
                color[static_cast<std::size_t>(ch)] = static_cast<float>(rng.uniform(0.0, 1.0));
                dist += std::abs(color[static_cast<std::size_t>(ch)] - bg_color[ch]);
            }
            if (dist >= 0.6f) break;
        }
        object_colors.push_back(color);
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (int ch = 0; ch < 3; ++ch) out.rgb[static_cast<std::size_t>(ch) * n + i] = bg_color[ch];
        for (std::size_t o = 0; o < object_masks.size(); ++o) {
            if (object_masks[o][i] > 0.0f) {
                if (out.mask[i] == 0.0f || object_depths[o] < out.depth[i]) {
                    out.depth[i] = object_depths[o];
                    for (int ch = 0; ch < 3; ++ch) {
                        out.rgb[static_cast<std::size_t>(ch) * n + i] = object_colors[o][static_cast<std::size_t>(ch)];
                    }
                }
                out.mask[i] = 1.0f;
            }
        }
    }

    for (auto& v : out.rgb) {
        v = std::clamp(v + spec.texture_noise * static_cast<float>(rng.uniform(-1.0, 1.0)), 0.0f, 1.0f);
    }
    return out;
}

}  // namespace

SamplePair gen_scene(const SceneSpec& spec) {
    const auto n = static_cast<std::size_t>(spec.size) * static_cast<std::size_t>(spec.size);
    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng = Rng(spec.seed).fork(static_cast<std::uint64_t>(attempt));
        SceneDraw draw = draw_once(spec, rng);
        float fg = 0.0f;
        for (float v : draw.mask) fg += v;
        const float frac = fg / static_cast<float>(n);
        if (frac < 0.02f || frac > 0.40f) continue;
        SamplePair sample;
        sample.rgb = Tensor<float>::from_data({3, spec.size, spec.size}, std::move(draw.rgb));
        sample.depth = Tensor<float>::from_data({1, spec.size, spec.size}, std::move(draw.depth));
        sample.gt = Tensor<float>::from_data({1, spec.size, spec.size}, std::move(draw.mask));
        return sample;
    }
    throw std::runtime_error("gen_scene: could not place objects within the 2-40% area budget");
}

Tensor<float> degrade(const Tensor<float>& depth, const DegradationConfig& cfg) {
    check_shape(depth.rank() == 3 && depth.dim(0) == 1, "degrade: 1×H×W depth required");
    const int h = depth.dim(1), w = depth.dim(2);
    std::vector<float> v = depth.data();

    if (cfg.shift_dx != 0 || cfg.shift_dy != 0) {
        std::vector<float> shifted(v.size());
        for (int y = 0; y < h; ++y) {
            const int sy = std::clamp(y - cfg.shift_dy, 0, h - 1);
            for (int x = 0; x < w; ++x) {
                const int sx = std::clamp(x - cfg.shift_dx, 0, w - 1);
                shifted[static_cast<std::size_t>(y) * w + x] = v[static_cast<std::size_t>(sy) * w + sx];
            }
        }
        v = std::move(shifted);
    }

    if (cfg.quant_levels > 1) {
        const float steps = static_cast<float>(cfg.quant_levels - 1);
        for (auto& d : v) d = std::round(d * steps) / steps;
    }

    if (cfg.noise_sigma > 0.0f) {
        Rng noise = Rng(cfg.seed).fork(1);
        for (auto& d : v) d += cfg.noise_sigma * static_cast<float>(noise.normal());
    }

    if (cfg.hole_rate > 0.0f) {
        Rng holes = Rng(cfg.seed).fork(2);
        for (auto& d : v) {
            if (holes.bernoulli(cfg.hole_rate)) d = 0.0f;
        }
    }

    for (auto& d : v) d = std::clamp(d, 0.0f, 1.0f);
    return Tensor<float>::from_data(depth.shape(), std::move(v));
}

std::vector<SamplePair> make_dataset(int n, const SceneSpec& spec_template, const QualityMix& mix) {
    std::vector<SamplePair> samples;
    samples.reserve(static_cast<std::size_t>(n));
    Rng pick = Rng(spec_template.seed).fork(0xDADA);
    for (int i = 0; i < n; ++i) {
        SceneSpec spec = spec_template;
        spec.seed = Rng(spec_template.seed).fork(static_cast<std::uint64_t>(i) + 1).next_u64();
        SamplePair sample = gen_scene(spec);
        sample.id = i;
        if (pick.bernoulli(mix.degraded_fraction)) {
            DegradationConfig cfg = mix.degradation;
            cfg.seed = spec.seed ^ 0x5EEDu;
            sample.depth = degrade(sample.depth, cfg);
            sample.degradation = cfg;
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

// ---------------------------------------------------------------------------
// PPM/PGM I/O

namespace {

unsigned char to_byte(float v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_pnm(const std::string& path, const Tensor<float>& img, bool color) {
    const int channels = color ? 3 : 1;
    check_shape(img.rank() == 3 && img.dim(0) == channels,
                std::string(color ? "write_ppm" : "write_pgm") + ": wrong channel count " + shape_str(img.shape()));
    const int h = img.dim(1), w = img.dim(2);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << (color ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
    const auto plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * channels);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                row[static_cast<std::size_t>(x) * channels + c] =
                    to_byte(img.data()[static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(y) * w + x]);
            }
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw IoError("write failed: " + path);
}

int next_pnm_token(std::istream& is) {
    // Skips whitespace and '#' comment lines.
    while (is) {
        const int c = is.peek();
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(c)) {
            is.get();
        } else {
            break;
        }
    }
    int value = -1;
    is >> value;
    return value;
}

Tensor<float> read_pnm(const std::string& path, bool color) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::string magic;
    is >> magic;
    const std::string expected = color ? "P6" : "P5";
    if (magic != expected) throw IoError(path + ": expected " + expected + " file, got '" + magic + "'");
    const int w = next_pnm_token(is);
    const int h = next_pnm_token(is);
    const int maxval = next_pnm_token(is);
    if (w <= 0 || h <= 0 || maxval != 255) throw IoError(path + ": unsupported PNM header");
    is.get();  // single whitespace after maxval
    const int channels = color ? 3 : 1;
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) throw IoError(path + ": truncated pixel data");
    const auto plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    std::vector<float> data(plane * channels);
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < channels; ++c) {
            data[static_cast<std::size_t>(c) * plane + i] = static_cast<float>(raw[i * channels + c]) / 255.0f;
        }
    }
    return Tensor<float>::from_data({channels, h, w}, std::move(data));
}

std::string sample_name(int id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", id);
    return buf;
}

}  // namespace

void write_ppm(const std::string& path, const Tensor<float>& rgb) { write_pnm(path, rgb, true); }
void write_pgm(const std::string& path, const Tensor<float>& gray) { write_pnm(path, gray, false); }
Tensor<float> read_ppm(const std::string& path) { return read_pnm(path, true); }
Tensor<float> read_pgm(const std::string& path) { return read_pnm(path, false); }

SamplePair load_pair(const std::string& rgb_path, const std::string& depth_path, const std::string& gt_path) {
    SamplePair sample;
    sample.rgb = read_ppm(rgb_path);
    sample.depth = read_pgm(depth_path);
    sample.gt = read_pgm(gt_path);
    check_shape(sample.rgb.dim(1) == sample.depth.dim(1) && sample.rgb.dim(2) == sample.depth.dim(2) &&
                    sample.rgb.dim(1) == sample.gt.dim(1) && sample.rgb.dim(2) == sample.gt.dim(2),
                "load_pair: rgb/depth/gt resolutions differ");
    // Snap the mask back to binary after 8-bit quantization.
    for (auto& v : sample.gt.data()) v = (v >= 0.5f) ? 1.0f : 0.0f;
    return sample;
}

void save_dataset(const std::string& root, const std::vector<SamplePair>& samples) {
    fs::create_directories(fs::path(root) / "rgb");
    fs::create_directories(fs::path(root) / "depth");
    fs::create_directories(fs::path(root) / "gt");
    std::ofstream manifest(fs::path(root) / "manifest.csv");
    if (!manifest) throw IoError("cannot write manifest under " + root);
    manifest << "id,noise_sigma,hole_rate,shift_dx,shift_dy,quant_levels\n";
    for (const auto& s : samples) {
        const std::string name = sample_name(s.id);
        write_ppm((fs::path(root) / "rgb" / (name + ".ppm")).string(), s.rgb);
        write_pgm((fs::path(root) / "depth" / (name + ".pgm")).string(), s.depth);
        write_pgm((fs::path(root) / "gt" / (name + ".pgm")).string(), s.gt);
        char line[160];
        std::snprintf(line, sizeof(line), "%d,%.6g,%.6g,%d,%d,%d\n", s.id, s.degradation.noise_sigma,
                      s.degradation.hole_rate, s.degradation.shift_dx, s.degradation.shift_dy,
                      s.degradation.quant_levels);
        manifest << line;
    }
}

std::vector<SamplePair> load_dataset(const std::string& root) {
    std::ifstream manifest(fs::path(root) / "manifest.csv");
    if (!manifest) throw IoError("no manifest.csv under " + root);
    std::string line;
    std::getline(manifest, line);  // header
    std::vector<SamplePair> samples;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        SamplePair sample;
        std::getline(row, field, ',');
        sample.id = std::stoi(field);
        std::getline(row, field, ',');
        sample.degradation.noise_sigma = std::stof(field);
        std::getline(row, field, ',');
        sample.degradation.hole_rate = std::stof(field);
        std::getline(row, field, ',');
        sample.degradation.shift_dx = std::stoi(field);
        std::getline(row, field, ',');
        sample.degradation.shift_dy = std::stoi(field);
        std::getline(row, field, ',');
        sample.degradation.quant_levels = std::stoi(field);
        const std::string name = sample_name(sample.id);
        SamplePair loaded = load_pair((fs::path(root) / "rgb" / (name + ".ppm")).string(),
                                      (fs::path(root) / "depth" / (name + ".pgm")).string(),
                                      (fs::path(root) / "gt" / (name + ".pgm")).string());
        loaded.id = sample.id;
        loaded.degradation = sample.degradation;
        samples.push_back(std::move(loaded));
    }
    return samples;
}

}  // namespace rfnet
