#pragma once

#include <cinttypes>
#include <cstdio>

#include "dida/stages.hpp"

namespace dida {

enum class Pairing { Random, Cyclic };

inline const char* to_string(Pairing p) { return p == Pairing::Random ? "random" : "cyclic"; }

inline Pairing parse_pairing(const std::string& s) {
    if (s == "random") return Pairing::Random;
    if (s == "cyclic") return Pairing::Cyclic;
    throw std::invalid_argument("pairing: unknown '" + s + "' (expected random or cyclic)");
}

/// Labeled pseudo-target pool produced by cross-decoding, plus the identity
/// of each sample's two parents.
struct SyntheticSet {
    std::vector<Sample> samples;
    std::vector<std::pair<std::string, std::string>> provenance;  // (source id, target id)
    int iteration = 0;
};

/// Decode source content codes against target style codes. Source samples are
/// cycled so every generated image carries a known label; target partners are
/// drawn uniformly with replacement (random) or cycled in order (cyclic).
inline SyntheticSet synthesize(const ModelBundle& bundle, const std::vector<Sample>& source,
                               const std::vector<Sample>& target, Pairing pairing, int count,
                               uint64_t seed, int iteration = 0) {
    if (source.empty() || target.empty())
        throw std::invalid_argument("synthesize: empty source or target pool");
    if (count < 1) throw std::invalid_argument("synthesize: count must be >= 1");
    detail::require_labeled(source, "synthesize");

    Rng rng(derive_seed(seed, "synthesize", iteration));
    const int64_t ns = static_cast<int64_t>(source.size());
    const int64_t nt = static_cast<int64_t>(target.size());
    std::vector<int> src_idx(static_cast<size_t>(count)), tgt_idx(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        src_idx[static_cast<size_t>(i)] = static_cast<int>(i % ns);
        tgt_idx[static_cast<size_t>(i)] =
            pairing == Pairing::Random ? static_cast<int>(rng.index(nt)) : static_cast<int>(i % nt);
    }

    SyntheticSet out;
    out.iteration = iteration;
    out.samples.reserve(static_cast<size_t>(count));
    out.provenance.reserve(static_cast<size_t>(count));
    const int chunk = 128;
    for (int start = 0; start < count; start += chunk) {
        const int end = std::min(count, start + chunk);
        std::vector<int> sb(src_idx.begin() + start, src_idx.begin() + end);
        std::vector<int> tb(tgt_idx.begin() + start, tgt_idx.begin() + end);
        Var fc = detach(bundle.common_encoder(Var::constant(stack_batch(source, sb))));
        Var fs = detach(bundle.specific_encoder(Var::constant(stack_batch(target, tb))));
        Tensor imgs = decode(bundle, fc, fs).value();
        const auto& shape = bundle.cfg.image_shape;
        const int64_t per = shape[0] * shape[1] * shape[2];
        for (int j = start; j < end; ++j) {
            const Sample& src = source[static_cast<size_t>(sb[static_cast<size_t>(j - start)])];
            const Sample& tgt = target[static_cast<size_t>(tb[static_cast<size_t>(j - start)])];
            Tensor img(shape);
            const int64_t off = static_cast<int64_t>(j - start) * per;
            for (int64_t k = 0; k < per; ++k) img[k] = imgs[off + k];
            Sample s;
            s.image = std::move(img);
            s.label = src.label;
            s.domain = Domain::SyntheticTarget;
            s.id = "synth-i" + std::to_string(iteration) + "-" + std::to_string(j);
            out.samples.push_back(std::move(s));
            out.provenance.emplace_back(src.id, tgt.id);
        }
    }
    return out;
}

enum class PoolPolicy { Replace, Append };

inline const char* to_string(PoolPolicy p) { return p == PoolPolicy::Replace ? "replace" : "append"; }

inline PoolPolicy parse_pool_policy(const std::string& s) {
    if (s == "replace") return PoolPolicy::Replace;
    if (s == "append") return PoolPolicy::Append;
    throw std::invalid_argument("pool policy: unknown '" + s + "' (expected replace or append)");
}

/// New synthetic pool for the next adaptation round.
inline SyntheticSet refresh_pool(const SyntheticSet& old_pool, const SyntheticSet& new_pool,
                                 PoolPolicy policy) {
    if (policy == PoolPolicy::Replace) return new_pool;
    SyntheticSet out = old_pool;
    out.iteration = new_pool.iteration;
    out.samples.insert(out.samples.end(), new_pool.samples.begin(), new_pool.samples.end());
    out.provenance.insert(out.provenance.end(), new_pool.provenance.begin(),
                          new_pool.provenance.end());
    return out;
}

inline std::string provenance_csv(const SyntheticSet& set) {
    std::string out = "synth_id,source_id,target_id,label,iteration\n";
    for (size_t i = 0; i < set.samples.size(); ++i) {
        const Sample& s = set.samples[i];
        char buf[64];
        std::snprintf(buf, sizeof(buf), ",%d,%d\n", s.label.value_or(-1), set.iteration);
        out += s.id + "," + set.provenance[i].first + "," + set.provenance[i].second + buf;
    }
    return out;
}

inline void emit_provenance(const SyntheticSet& set, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("provenance: cannot open " + path);
    f << provenance_csv(set);
}

}  // namespace dida
