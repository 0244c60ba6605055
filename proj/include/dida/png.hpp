#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dida::png {

/// Interleaved 8-bit RGB image.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;  // width * height * 3
};

namespace detail {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

inline uint32_t read_u32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

inline void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32(out, crc);
}

inline std::vector<uint8_t> zlib_deflate(const std::vector<uint8_t>& in) {
    uLongf bound = compressBound(static_cast<uLong>(in.size()));
    std::vector<uint8_t> out(bound);
    if (compress2(out.data(), &bound, in.data(), static_cast<uLong>(in.size()), 6) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    out.resize(bound);
    return out;
}

inline std::vector<uint8_t> zlib_inflate(const std::vector<uint8_t>& in, size_t expect) {
    std::vector<uint8_t> out(expect);
    uLongf n = static_cast<uLongf>(expect);
    int rc = uncompress(out.data(), &n, in.data(), static_cast<uLong>(in.size()));
    if (rc != Z_OK || n != expect)
        throw std::runtime_error("png: inflate failed or size mismatch");
    return out;
}

inline uint8_t paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
    if (pb <= pc) return static_cast<uint8_t>(b);
    return static_cast<uint8_t>(c);
}

}  // namespace detail

/// Serializes an RGB image as an 8-bit truecolor PNG (filter 0 rows).
inline std::vector<uint8_t> encode(const Image& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.rgb.size() != static_cast<size_t>(img.width) * img.height * 3)
        throw std::invalid_argument("png: image buffer does not match dimensions");
    std::vector<uint8_t> out{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<uint8_t> ihdr;
    detail::put_u32(ihdr, static_cast<uint32_t>(img.width));
    detail::put_u32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // adaptive filters
    ihdr.push_back(0);  // no interlace
    detail::put_chunk(out, "IHDR", ihdr);

    const size_t stride = static_cast<size_t>(img.width) * 3;
    std::vector<uint8_t> raw;
    raw.reserve((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), img.rgb.begin() + static_cast<int64_t>(y) * stride,
                   img.rgb.begin() + static_cast<int64_t>(y + 1) * stride);
    }
    detail::put_chunk(out, "IDAT", detail::zlib_deflate(raw));
    detail::put_chunk(out, "IEND", {});
    return out;
}

inline void write_file(const std::string& path, const Image& img) {
    std::vector<uint8_t> bytes = encode(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png: cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("png: short write: " + path);
}

/// Decodes 8-bit gray/RGB/RGBA non-interlaced PNGs to RGB.
inline Image decode(const std::vector<uint8_t>& bytes) {
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw std::runtime_error("png: bad signature");
    size_t pos = 8;
    int width = 0, height = 0, color = -1;
    std::vector<uint8_t> idat;
    while (pos + 8 <= bytes.size()) {
        uint32_t len = detail::read_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw std::runtime_error("png: truncated chunk");
        std::string type(reinterpret_cast<const char*>(bytes.data() + pos + 4), 4);
        const uint8_t* data = bytes.data() + pos + 8;
        if (type == "IHDR") {
            width = static_cast<int>(detail::read_u32(data));
            height = static_cast<int>(detail::read_u32(data + 4));
            int depth = data[8];
            color = data[9];
            if (depth != 8) throw std::runtime_error("png: unsupported bit depth");
            if (color != 0 && color != 2 && color != 6)
                throw std::runtime_error("png: unsupported color type");
            if (data[12] != 0) throw std::runtime_error("png: interlaced input unsupported");
        } else if (type == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (width <= 0 || height <= 0 || idat.empty()) throw std::runtime_error("png: missing image data");

    const int ch = color == 0 ? 1 : color == 2 ? 3 : 4;
    const size_t stride = static_cast<size_t>(width) * ch;
    std::vector<uint8_t> raw =
        detail::zlib_inflate(idat, (stride + 1) * static_cast<size_t>(height));

    // undo per-row filters in place
    std::vector<uint8_t> pix(stride * height);
    for (int y = 0; y < height; ++y) {
        const uint8_t filter = raw[(stride + 1) * y];
        const uint8_t* src = raw.data() + (stride + 1) * y + 1;
        uint8_t* dst = pix.data() + stride * y;
        const uint8_t* up = y > 0 ? pix.data() + stride * (y - 1) : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            const int a = x >= static_cast<size_t>(ch) ? dst[x - ch] : 0;
            const int b = up ? up[x] : 0;
            const int c = (up && x >= static_cast<size_t>(ch)) ? up[x - ch] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += detail::paeth(a, b, c); break;
                default: throw std::runtime_error("png: bad filter byte");
            }
            dst[x] = static_cast<uint8_t>(v);
        }
    }

    Image img;
    img.width = width;
    img.height = height;
    img.rgb.resize(static_cast<size_t>(width) * height * 3);
    for (int64_t i = 0; i < static_cast<int64_t>(width) * height; ++i) {
        if (ch == 1) {
            img.rgb[i * 3] = img.rgb[i * 3 + 1] = img.rgb[i * 3 + 2] = pix[i];
        } else {
            img.rgb[i * 3] = pix[i * ch];
            img.rgb[i * 3 + 1] = pix[i * ch + 1];
            img.rgb[i * 3 + 2] = pix[i * ch + 2];
        }
    }
    return img;
}

inline Image read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png: cannot open: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

}  // namespace dida::png
