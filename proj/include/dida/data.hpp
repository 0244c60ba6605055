#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dida/png.hpp"
#include "dida/tensor.hpp"

namespace dida {

enum class Domain { Source, Target, SyntheticTarget };

inline const char* domain_name(Domain d) {
    switch (d) {
        case Domain::Source: return "source";
        case Domain::Target: return "target";
        case Domain::SyntheticTarget: return "synthetic-target";
    }
    return "?";
}

/// One image with optional class label and provenance tag.
struct Sample {
    Tensor image;  // [C,H,W], values in [0,1]
    std::optional<int> label;
    Domain domain = Domain::Source;
    std::string id;
};

/// Train/test halves of one domain plus task metadata.
struct DatasetSplit {
    std::vector<Sample> train;
    std::vector<Sample> test;
    int num_classes = 0;
    std::vector<int> image_shape;  // {C,H,W}
};

/// Pool of color patches used as backgrounds for blending.
struct TextureCorpus {
    std::vector<Tensor> patches;  // each [3,ph,pw]
};

// ---------------------------------------------------------------------------
// IDX container
// ---------------------------------------------------------------------------

namespace detail {

inline uint32_t idx_u32(const std::vector<uint8_t>& buf, size_t off) {
    return (static_cast<uint32_t>(buf[off]) << 24) | (static_cast<uint32_t>(buf[off + 1]) << 16) |
           (static_cast<uint32_t>(buf[off + 2]) << 8) | buf[off + 3];
}

inline void idx_put_u32(std::vector<uint8_t>& buf, uint32_t v) {
    buf.push_back(static_cast<uint8_t>(v >> 24));
    buf.push_back(static_cast<uint8_t>(v >> 16));
    buf.push_back(static_cast<uint8_t>(v >> 8));
    buf.push_back(static_cast<uint8_t>(v));
}

inline std::vector<uint8_t> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("idx: cannot open: " + path);
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

inline void write_all(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("idx: cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("idx: short write: " + path);
}

}  // namespace detail

constexpr uint32_t kIdxImageMagic = 0x00000803;
constexpr uint32_t kIdxColorMagic = 0x00000804;  // low byte is the dim count
constexpr uint32_t kIdxLabelMagic = 0x00000801;

/// Parses an IDX image payload into [1,H,W] tensors scaled to [0,1].
inline std::vector<Tensor> parse_idx_images(const std::vector<uint8_t>& buf) {
    if (buf.size() < 4) throw std::runtime_error("idx: bad magic for image file");
    const uint32_t magic = detail::idx_u32(buf, 0);
    if (magic != kIdxImageMagic && magic != kIdxColorMagic)
        throw std::runtime_error("idx: bad magic for image file");
    const bool color = magic == kIdxColorMagic;
    const size_t header = color ? 20 : 16;
    if (buf.size() < header) throw std::runtime_error("idx: truncated image header");
    const uint32_t n = detail::idx_u32(buf, 4);
    const uint32_t c = color ? detail::idx_u32(buf, 8) : 1;
    const uint32_t h = detail::idx_u32(buf, color ? 12 : 8);
    const uint32_t w = detail::idx_u32(buf, color ? 16 : 12);
    const size_t per = static_cast<size_t>(c) * h * w;
    const size_t need = header + static_cast<size_t>(n) * per;
    if (buf.size() < need) throw std::runtime_error("idx: truncated image payload");
    std::vector<Tensor> out;
    out.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        Tensor img = Tensor::zeros(
            {static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)});
        const uint8_t* src = buf.data() + header + static_cast<size_t>(i) * per;
        for (int64_t p = 0; p < static_cast<int64_t>(per); ++p)
            img[p] = static_cast<float>(src[p]) / 255.0f;
        out.push_back(std::move(img));
    }
    return out;
}

inline std::vector<int> parse_idx_labels(const std::vector<uint8_t>& buf, int num_classes = 10) {
    if (buf.size() < 4 || detail::idx_u32(buf, 0) != kIdxLabelMagic)
        throw std::runtime_error("idx: bad magic for label file");
    if (buf.size() < 8) throw std::runtime_error("idx: truncated label header");
    const uint32_t n = detail::idx_u32(buf, 4);
    if (buf.size() < 8 + static_cast<size_t>(n)) throw std::runtime_error("idx: truncated label payload");
    std::vector<int> out(n);
    for (uint32_t i = 0; i < n; ++i) {
        out[i] = buf[8 + i];
        if (out[i] < 0 || out[i] >= num_classes)
            throw std::runtime_error("idx: label out of range: " + std::to_string(out[i]));
    }
    return out;
}

/// Serializes [C,H,W] tensors as IDX, quantizing pixels back to bytes.
/// Single-channel images use the classic 3-dim layout; multi-channel images
/// use the 4-dim variant (the magic's low byte carries the dim count).
inline std::vector<uint8_t> serialize_idx_images(const std::vector<Tensor>& images) {
    if (images.empty()) throw std::invalid_argument("idx: nothing to serialize");
    if (images.front().rank() != 3) throw std::invalid_argument("idx: expected [C,H,W] images");
    const int c = images.front().dim(0);
    const int h = images.front().dim(1), w = images.front().dim(2);
    std::vector<uint8_t> buf;
    detail::idx_put_u32(buf, c == 1 ? kIdxImageMagic : kIdxColorMagic);
    detail::idx_put_u32(buf, static_cast<uint32_t>(images.size()));
    if (c != 1) detail::idx_put_u32(buf, static_cast<uint32_t>(c));
    detail::idx_put_u32(buf, static_cast<uint32_t>(h));
    detail::idx_put_u32(buf, static_cast<uint32_t>(w));
    for (const Tensor& img : images) {
        if (img.rank() != 3 || img.dim(0) != c || img.dim(1) != h || img.dim(2) != w)
            throw std::invalid_argument("idx: mixed image shapes in one file");
        for (int p = 0; p < c * h * w; ++p) {
            float v = std::clamp(img[p], 0.0f, 1.0f);
            buf.push_back(static_cast<uint8_t>(std::lround(v * 255.0f)));
        }
    }
    return buf;
}

inline std::vector<uint8_t> serialize_idx_labels(const std::vector<int>& labels) {
    std::vector<uint8_t> buf;
    detail::idx_put_u32(buf, kIdxLabelMagic);
    detail::idx_put_u32(buf, static_cast<uint32_t>(labels.size()));
    for (int y : labels) {
        if (y < 0 || y > 255) throw std::invalid_argument("idx: label not byte-sized");
        buf.push_back(static_cast<uint8_t>(y));
    }
    return buf;
}

struct IdxData {
    std::vector<Tensor> images;
    std::vector<int> labels;
};

/// Loads a matched image/label IDX pair from disk.
inline IdxData load_idx(const std::string& images_path, const std::string& labels_path,
                        int num_classes = 10) {
    IdxData out;
    out.images = parse_idx_images(detail::read_all(images_path));
    out.labels = parse_idx_labels(detail::read_all(labels_path), num_classes);
    if (out.images.size() != out.labels.size())
        throw std::runtime_error("idx: count mismatch: " + std::to_string(out.images.size()) +
                                 " images vs " + std::to_string(out.labels.size()) + " labels");
    return out;
}

inline void write_idx_images(const std::string& path, const std::vector<Tensor>& images) {
    detail::write_all(path, serialize_idx_images(images));
}

inline void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
    detail::write_all(path, serialize_idx_labels(labels));
}

/// Assembles a DatasetSplit from parsed IDX pairs; every sample is labeled.
inline DatasetSplit make_split(IdxData train, IdxData test, int num_classes, Domain domain,
                               const std::string& id_prefix) {
    DatasetSplit out;
    out.num_classes = num_classes;
    if (train.images.empty()) throw std::invalid_argument("split: empty train set");
    out.image_shape = train.images.front().shape();
    auto fill = [&](std::vector<Sample>& dst, IdxData& src, const char* part) {
        dst.reserve(src.images.size());
        for (size_t i = 0; i < src.images.size(); ++i) {
            Sample s;
            s.image = std::move(src.images[i]);
            s.label = src.labels[i];
            s.domain = domain;
            s.id = id_prefix + "-" + part + "-" + std::to_string(i);
            dst.push_back(std::move(s));
        }
    };
    fill(out.train, train, "train");
    fill(out.test, test, "test");
    return out;
}

// ---------------------------------------------------------------------------
// Blended target construction (digit-over-texture)
// ---------------------------------------------------------------------------

namespace detail {

/// out[c] = |patch[c] - digit|, digit broadcast across channels when single-channel.
inline Tensor blend_abs_diff(const Tensor& digit, const Tensor& patch, int oy, int ox) {
    const int h = digit.dim(1), w = digit.dim(2);
    const int ph = patch.dim(1), pw = patch.dim(2);
    Tensor out = Tensor::zeros({3, h, w});
    for (int c = 0; c < 3; ++c) {
        const int dc = digit.dim(0) == 1 ? 0 : c;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float p = patch[(static_cast<int64_t>(c) * ph + oy + y) * pw + ox + x];
                const float d = digit[(static_cast<int64_t>(dc) * h + y) * w + x];
                out[(static_cast<int64_t>(c) * h + y) * w + x] = std::fabs(p - d);
            }
    }
    return out;
}

}  // namespace detail

/// Composites every digit over a random texture crop via per-channel
/// absolute difference. Labels, domains and ids carry over unchanged.
inline DatasetSplit make_mnistm(const DatasetSplit& digits, const TextureCorpus& corpus,
                                uint64_t seed) {
    if (corpus.patches.empty()) throw std::invalid_argument("mnistm: texture corpus is empty");
    if (digits.image_shape.size() != 3) throw std::invalid_argument("mnistm: need [C,H,W] images");
    const int h = digits.image_shape[1], w = digits.image_shape[2];
    for (const Tensor& p : corpus.patches) {
        if (p.rank() != 3 || p.dim(0) != 3)
            throw std::invalid_argument("mnistm: texture patches must be [3,h,w]");
        if (p.dim(1) < h || p.dim(2) < w)
            throw std::invalid_argument("mnistm: texture patch smaller than digit image");
    }
    Rng rng(derive_seed(seed, "mnistm"));
    DatasetSplit out;
    out.num_classes = digits.num_classes;
    out.image_shape = {3, h, w};
    auto transform = [&](const std::vector<Sample>& src, std::vector<Sample>& dst) {
        dst.reserve(src.size());
        for (const Sample& s : src) {
            const Tensor& patch = corpus.patches[static_cast<size_t>(
                rng.index(static_cast<int64_t>(corpus.patches.size())))];
            const int oy = static_cast<int>(rng.index(patch.dim(1) - h + 1));
            const int ox = static_cast<int>(rng.index(patch.dim(2) - w + 1));
            Sample t;
            t.image = detail::blend_abs_diff(s.image, patch, oy, ox);
            t.label = s.label;
            t.domain = s.domain;
            t.id = s.id;
            dst.push_back(std::move(t));
        }
    };
    transform(digits.train, out.train);
    transform(digits.test, out.test);
    return out;
}

// ---------------------------------------------------------------------------
// Subsampling protocol
// ---------------------------------------------------------------------------

/// Draws the standard evaluation pools without replacement: 2000 source
/// training images and 1800 target training images. Test halves pass through.
inline std::pair<DatasetSplit, DatasetSplit> sample_protocol_usps(const DatasetSplit& mnist,
                                                                  const DatasetSplit& usps,
                                                                  uint64_t seed) {
    constexpr size_t kSource = 2000, kTarget = 1800;
    if (mnist.train.size() < kSource)
        throw std::invalid_argument("protocol: source pool smaller than 2000");
    if (usps.train.size() < kTarget)
        throw std::invalid_argument("protocol: target pool smaller than 1800");
    auto draw = [](const DatasetSplit& full, size_t count, uint64_t s) {
        std::vector<size_t> order(full.train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(s);
        rng.shuffle(order);
        DatasetSplit out;
        out.num_classes = full.num_classes;
        out.image_shape = full.image_shape;
        out.test = full.test;
        out.train.reserve(count);
        for (size_t i = 0; i < count; ++i) out.train.push_back(full.train[order[i]]);
        return out;
    };
    return {draw(mnist, kSource, derive_seed(seed, "protocol-src")),
            draw(usps, kTarget, derive_seed(seed, "protocol-tgt"))};
}

// ---------------------------------------------------------------------------
// Bilinear resize
// ---------------------------------------------------------------------------

/// Bilinear resample of one [C,H,W] image with edge clamping.
inline Tensor resize_image(const Tensor& img, int out_h, int out_w) {
    if (img.rank() != 3) throw std::invalid_argument("resize: need [C,H,W] image");
    if (out_h < 8 || out_w < 8) throw std::invalid_argument("resize: target size below 8x8");
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (h == out_h && w == out_w) return img;
    Tensor out = Tensor::zeros({c, out_h, out_w});
    const float sy = static_cast<float>(h) / out_h;
    const float sx = static_cast<float>(w) / out_w;
    for (int ch = 0; ch < c; ++ch) {
        const float* src = img.data() + static_cast<int64_t>(ch) * h * w;
        float* dst = out.data() + static_cast<int64_t>(ch) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(h - 1));
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, h - 1);
            const float wy = fy - y0;
            for (int x = 0; x < out_w; ++x) {
                const float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(w - 1));
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, w - 1);
                const float wx = fx - x0;
                const float v = (1 - wy) * ((1 - wx) * src[y0 * w + x0] + wx * src[y0 * w + x1]) +
                                wy * ((1 - wx) * src[y1 * w + x0] + wx * src[y1 * w + x1]);
                dst[y * out_w + x] = std::clamp(v, 0.0f, 1.0f);
            }
        }
    }
    return out;
}

/// Resizes every image in the split; metadata is untouched.
inline DatasetSplit resize_to(const DatasetSplit& split, int out_h, int out_w) {
    DatasetSplit out;
    out.num_classes = split.num_classes;
    out.image_shape = {split.image_shape.empty() ? 1 : split.image_shape[0], out_h, out_w};
    auto conv = [&](const std::vector<Sample>& src, std::vector<Sample>& dst) {
        dst.reserve(src.size());
        for (const Sample& s : src) {
            Sample t = s;
            t.image = resize_image(s.image, out_h, out_w);
            dst.push_back(std::move(t));
        }
    };
    conv(split.train, out.train);
    conv(split.test, out.test);
    return out;
}

// ---------------------------------------------------------------------------
// Procedural textures
// ---------------------------------------------------------------------------

namespace detail {

/// Value noise on a coarse lattice, bilinearly interpolated to size x size.
inline void add_noise_octave(float* dst, int size, int cell, float weight, Rng& rng) {
    const int n = size / cell + 2;
    std::vector<float> grid(static_cast<size_t>(n) * n);
    for (float& g : grid) g = rng.uniform(0.0f, 1.0f);
    for (int y = 0; y < size; ++y) {
        const float fy = static_cast<float>(y) / cell;
        const int y0 = static_cast<int>(fy);
        const float wy = fy - y0;
        for (int x = 0; x < size; ++x) {
            const float fx = static_cast<float>(x) / cell;
            const int x0 = static_cast<int>(fx);
            const float wx = fx - x0;
            const float v = (1 - wy) * ((1 - wx) * grid[y0 * n + x0] + wx * grid[y0 * n + x0 + 1]) +
                            wy * ((1 - wx) * grid[(y0 + 1) * n + x0] + wx * grid[(y0 + 1) * n + x0 + 1]);
            dst[y * size + x] += weight * v;
        }
    }
}

inline Tensor noise_texture(int size, Rng& rng) {
    Tensor out = Tensor::zeros({3, size, size});
    for (int c = 0; c < 3; ++c) {
        float* dst = out.data() + static_cast<int64_t>(c) * size * size;
        const float base = rng.uniform(0.0f, 1.0f);
        for (int p = 0; p < size * size; ++p) dst[p] = 0.15f * base;
        add_noise_octave(dst, size, std::max(2, size / 2), 0.55f, rng);
        add_noise_octave(dst, size, std::max(2, size / 5), 0.30f, rng);
    }
    return out;
}

}  // namespace detail

/// Multi-scale color noise patches; a drop-in default when no image directory
/// of real backgrounds is supplied.
inline TextureCorpus procedural_textures(int count, int size, uint64_t seed) {
    if (count <= 0 || size < 8) throw std::invalid_argument("textures: need count > 0 and size >= 8");
    Rng rng(derive_seed(seed, "textures"));
    TextureCorpus corpus;
    corpus.patches.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) corpus.patches.push_back(detail::noise_texture(size, rng));
    return corpus;
}

/// Reads every .png in a directory (sorted by name) as a [3,h,w] patch.
inline TextureCorpus load_texture_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    TextureCorpus corpus;
    for (const std::string& p : paths) {
        png::Image img = png::read_file(p);
        Tensor t = Tensor::zeros({3, img.height, img.width});
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < 3; ++c)
                    t[(static_cast<int64_t>(c) * img.height + y) * img.width + x] =
                        static_cast<float>(img.rgb[(static_cast<size_t>(y) * img.width + x) * 3 +
                                                   static_cast<size_t>(c)]) /
                        255.0f;
        corpus.patches.push_back(std::move(t));
    }
    if (corpus.patches.empty())
        throw std::invalid_argument("textures: no .png files in " + dir);
    return corpus;
}

// ---------------------------------------------------------------------------
// Desk benchmark: jittered glyphs, plain vs textured
// ---------------------------------------------------------------------------

namespace detail {

/// 5x7 digit bitmaps, one byte per row, low 5 bits used.
inline const std::array<std::array<uint8_t, 7>, 10>& digit_font() {
    static const std::array<std::array<uint8_t, 7>, 10> font = {{
        {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e},  // 0
        {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e},  // 1
        {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f},  // 2
        {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e},  // 3
        {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02},  // 4
        {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e},  // 5
        {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e},  // 6
        {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
        {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e},  // 8
        {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c},  // 9
    }};
    return font;
}

inline float glyph_bit(int digit, float u, float v) {
    // bilinear sample of the bitmap, zero outside its 5x7 box
    const auto& rows = digit_font()[static_cast<size_t>(digit)];
    auto at = [&](int gu, int gv) -> float {
        if (gu < 0 || gu >= 5 || gv < 0 || gv >= 7) return 0.0f;
        return (rows[static_cast<size_t>(gv)] >> (4 - gu)) & 1 ? 1.0f : 0.0f;
    };
    const float fu = u - 0.5f, fv = v - 0.5f;
    const int u0 = static_cast<int>(std::floor(fu)), v0 = static_cast<int>(std::floor(fv));
    const float wu = fu - u0, wv = fv - v0;
    return (1 - wv) * ((1 - wu) * at(u0, v0) + wu * at(u0 + 1, v0)) +
           wv * ((1 - wu) * at(u0, v0 + 1) + wu * at(u0 + 1, v0 + 1));
}

/// Renders one digit with random rotation, scale, shift and brightness.
inline Tensor render_glyph(int digit, int size, Rng& rng) {
    const float theta = rng.uniform(-0.25f, 0.25f);
    const float scale = rng.uniform(0.8f, 1.2f) * (static_cast<float>(size) / 16.0f);
    const float tx = rng.uniform(-1.5f, 1.5f);
    const float ty = rng.uniform(-1.5f, 1.5f);
    const float bright = rng.uniform(0.75f, 1.0f);
    const float ct = std::cos(theta), st = std::sin(theta);
    const float half = (size - 1) * 0.5f;
    Tensor out = Tensor::zeros({1, size, size});
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const float dx = x - half - tx;
            const float dy = y - half - ty;
            const float u = (ct * dx + st * dy) / (2.0f * scale) + 2.5f;
            const float v = (-st * dx + ct * dy) / (2.0f * scale) + 3.5f;
            out[static_cast<int64_t>(y) * size + x] = bright * glyph_bit(digit, u, v);
        }
    return out;
}

/// Balanced label sequence: each class appears floor or ceil of count/K times.
inline std::vector<int> balanced_labels(int count, int num_classes, Rng& rng) {
    std::vector<int> labels(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) labels[static_cast<size_t>(i)] = i % num_classes;
    rng.shuffle(labels);
    return labels;
}

}  // namespace detail

struct DeskConfig {
    int num_classes = 10;
    int train_per_domain = 2000;
    int test_per_domain = 500;
    int image_size = 16;
    float texture_amplitude = 0.4f;  // full-strength textures swamp the strokes
};

/// Builds the paired synthetic benchmark: source images are jittered glyphs on
/// black, target images are the same glyph generator composited onto color
/// noise via absolute difference. Target training labels are withheld; target
/// test labels are kept for evaluation. All four streams use disjoint seeds.
inline std::pair<DatasetSplit, DatasetSplit> make_desk_benchmark(const DeskConfig& cfg,
                                                                 uint64_t seed) {
    if (cfg.num_classes < 2 || cfg.num_classes > 10)
        throw std::invalid_argument("desk: num_classes must be in [2,10]");
    if (cfg.train_per_domain < cfg.num_classes || cfg.train_per_domain > 5000 ||
        cfg.test_per_domain < cfg.num_classes || cfg.test_per_domain > 5000)
        throw std::invalid_argument("desk: split sizes must be in [num_classes,5000]");
    if (cfg.image_size < 8 || cfg.image_size > 64)
        throw std::invalid_argument("desk: image_size must be in [8,64]");
    if (cfg.texture_amplitude < 0.0f || cfg.texture_amplitude > 1.0f)
        throw std::invalid_argument("desk: texture_amplitude must be in [0,1]");

    const int sz = cfg.image_size;
    auto render_part = [&](const char* tag, int count, bool textured, bool keep_labels,
                           Domain domain, std::vector<Sample>& dst) {
        Rng glyph_rng(derive_seed(seed, std::string("desk-") + tag));
        Rng tex_rng(derive_seed(seed, std::string("desk-tex-") + tag));
        std::vector<int> labels = detail::balanced_labels(count, cfg.num_classes, glyph_rng);
        dst.reserve(static_cast<size_t>(count));
        for (int i = 0; i < count; ++i) {
            Tensor glyph = detail::render_glyph(labels[static_cast<size_t>(i)], sz, glyph_rng);
            Sample s;
            if (textured) {
                Tensor tex = detail::noise_texture(sz, tex_rng);
                if (cfg.texture_amplitude != 1.0f)
                    for (float& v : tex.values()) v *= cfg.texture_amplitude;
                s.image = detail::blend_abs_diff(glyph, tex, 0, 0);
            } else {
                s.image = Tensor::zeros({3, sz, sz});
                for (int c = 0; c < 3; ++c)
                    std::copy(glyph.data(), glyph.data() + static_cast<int64_t>(sz) * sz,
                              s.image.data() + static_cast<int64_t>(c) * sz * sz);
            }
            if (keep_labels) s.label = labels[static_cast<size_t>(i)];
            s.domain = domain;
            s.id = std::string(tag) + "-" + std::to_string(i);
            dst.push_back(std::move(s));
        }
    };

    DatasetSplit source, target;
    source.num_classes = target.num_classes = cfg.num_classes;
    source.image_shape = target.image_shape = {3, sz, sz};
    render_part("src-train", cfg.train_per_domain, false, true, Domain::Source, source.train);
    render_part("src-test", cfg.test_per_domain, false, true, Domain::Source, source.test);
    render_part("tgt-train", cfg.train_per_domain, true, false, Domain::Target, target.train);
    render_part("tgt-test", cfg.test_per_domain, true, true, Domain::Target, target.test);
    return {std::move(source), std::move(target)};
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

/// Shuffled index batches covering [0,count) exactly once; the final batch
/// may be short.
inline std::vector<std::vector<int>> batch_iter(int count, int batch_size, uint64_t seed) {
    if (count <= 0) throw std::invalid_argument("batch: empty sample set");
    if (batch_size <= 0) throw std::invalid_argument("batch: batch_size must be positive");
    std::vector<int> order(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < count; start += batch_size) {
        const int end = std::min(start + batch_size, count);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

/// Stacks selected samples into one [B,C,H,W] tensor.
inline Tensor stack_batch(const std::vector<Sample>& samples, const std::vector<int>& idx) {
    if (idx.empty()) throw std::invalid_argument("batch: empty index list");
    const std::vector<int>& shape = samples.at(static_cast<size_t>(idx[0])).image.shape();
    Tensor out = Tensor::zeros({static_cast<int>(idx.size()), shape[0], shape[1], shape[2]});
    const int64_t per = static_cast<int64_t>(shape[0]) * shape[1] * shape[2];
    for (size_t b = 0; b < idx.size(); ++b) {
        const Tensor& img = samples.at(static_cast<size_t>(idx[b])).image;
        if (img.shape() != shape) throw std::invalid_argument("batch: mixed image shapes");
        std::copy(img.data(), img.data() + per, out.data() + static_cast<int64_t>(b) * per);
    }
    return out;
}

/// Labels for selected samples; unlabeled entries come back as -1.
inline std::vector<int> labels_of(const std::vector<Sample>& samples, const std::vector<int>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(samples.at(static_cast<size_t>(i)).label.value_or(-1));
    return out;
}

}  // namespace dida
