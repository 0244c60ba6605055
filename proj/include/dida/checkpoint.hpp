#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dida/models.hpp"

namespace dida {

/// On-disk training state: a config echo, the driver RNG state and every
/// parameter blob, all little-endian. Loading rejects any config drift so a
/// resumed run can never silently continue under different settings.
namespace ckpt {

constexpr char kMagic[8] = {'D', 'I', 'D', 'A', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

namespace detail {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 24));
}

inline void put_str(std::vector<uint8_t>& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

inline void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("checkpoint: short write: " + path);
}

struct Reader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = static_cast<uint32_t>(buf[pos]) | (static_cast<uint32_t>(buf[pos + 1]) << 8) |
                     (static_cast<uint32_t>(buf[pos + 2]) << 16) |
                     (static_cast<uint32_t>(buf[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace detail

/// Serializes the bundle plus run bookkeeping into one buffer.
inline std::vector<uint8_t> serialize(ModelBundle& bundle,
                                      const std::map<std::string, std::string>& config,
                                      const std::string& rng_state) {
    std::vector<uint8_t> out(kMagic, kMagic + 8);
    detail::put_u32(out, kVersion);

    detail::put_u32(out, static_cast<uint32_t>(config.size()));
    for (const auto& [k, v] : config) {
        detail::put_str(out, k);
        detail::put_str(out, v);
    }
    detail::put_str(out, rng_state);

    std::vector<Parameter*> params = bundle.all_params();
    detail::put_u32(out, static_cast<uint32_t>(params.size()));
    for (Parameter* p : params) {
        detail::put_str(out, p->name);
        detail::put_u32(out, static_cast<uint32_t>(p->value().shape().size()));
        for (int d : p->value().shape()) detail::put_u32(out, static_cast<uint32_t>(d));
        const size_t bytes = static_cast<size_t>(p->value().size()) * sizeof(float);
        const uint8_t* raw = reinterpret_cast<const uint8_t*>(p->value().data());
        out.insert(out.end(), raw, raw + bytes);
    }
    return out;
}

inline void save(const std::string& path, ModelBundle& bundle,
                 const std::map<std::string, std::string>& config, const std::string& rng_state) {
    detail::write_bytes(path, serialize(bundle, config, rng_state));
}

/// Restores parameters into an already-constructed bundle. The stored config
/// echo must equal `expected_config` and every parameter name/shape must match
/// the bundle exactly; the stored RNG state string is returned.
inline std::string load(const std::string& path, ModelBundle& bundle,
                        const std::map<std::string, std::string>& expected_config) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    detail::Reader r{buf};
    r.need(8);
    if (std::memcmp(buf.data(), kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    r.pos = 8;
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

    std::map<std::string, std::string> config;
    const uint32_t nconf = r.u32();
    for (uint32_t i = 0; i < nconf; ++i) {
        std::string k = r.str();
        config[k] = r.str();
    }
    if (config != expected_config) {
        for (const auto& [k, v] : expected_config) {
            auto it = config.find(k);
            if (it == config.end())
                throw std::runtime_error("checkpoint: config mismatch, stored file lacks key '" + k + "'");
            if (it->second != v)
                throw std::runtime_error("checkpoint: config mismatch on '" + k + "': stored '" +
                                         it->second + "' vs expected '" + v + "'");
        }
        throw std::runtime_error("checkpoint: config mismatch, stored file has extra keys");
    }

    std::string rng_state = r.str();

    std::vector<Parameter*> params = bundle.all_params();
    const uint32_t nparams = r.u32();
    if (nparams != params.size())
        throw std::runtime_error("checkpoint: parameter count mismatch");
    for (Parameter* p : params) {
        std::string name = r.str();
        if (name != p->name)
            throw std::runtime_error("checkpoint: parameter order mismatch: stored '" + name +
                                     "' vs bundle '" + p->name + "'");
        const uint32_t rank = r.u32();
        std::vector<int> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(r.u32());
        if (shape != p->value().shape())
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': stored " +
                                     Tensor::shape_str(shape) + " vs bundle " + p->value().shape_str());
        const size_t bytes = static_cast<size_t>(p->value().size()) * sizeof(float);
        r.need(bytes);
        std::memcpy(p->value().data(), buf.data() + r.pos, bytes);
        r.pos += bytes;
    }
    if (r.pos != buf.size()) throw std::runtime_error("checkpoint: trailing bytes");
    return rng_state;
}

}  // namespace ckpt
}  // namespace dida
