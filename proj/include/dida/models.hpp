#pragma once

#include <map>
#include <string>
#include <vector>

#include "dida/layers.hpp"

namespace dida {

struct ModelConfig {
    std::vector<int> image_shape{3, 16, 16};  // {C,H,W}
    int num_classes = 10;
    int d_common = 32;
    int d_specific = 16;
    int conv1 = 32;  // channels after the first encoder block
    int conv2 = 64;  // channels after the second; also the decoder seed depth
    int hidden = 64; // width of every classifier/discriminator hidden layer

    bool operator==(const ModelConfig&) const = default;
};

namespace detail {

/// conv(s2) relu, conv(s2) relu, dense to a flat code.
struct ConvEncoder {
    Conv2dLayer c1, c2;
    DenseLayer head;

    static ConvEncoder make(const std::string& name, const ModelConfig& cfg, int out_dim, Rng& rng) {
        ConvEncoder e;
        e.c1 = Conv2dLayer::make(name + ".conv1", cfg.image_shape[0], cfg.conv1, 3, 2, rng);
        e.c2 = Conv2dLayer::make(name + ".conv2", cfg.conv1, cfg.conv2, 3, 2, rng);
        const int flat = cfg.conv2 * (cfg.image_shape[1] / 4) * (cfg.image_shape[2] / 4);
        e.head = DenseLayer::make(name + ".head", flat, out_dim, rng);
        return e;
    }

    Var operator()(const Var& x) const { return head(flatten(relu(c2(relu(c1(x)))))); }

    std::vector<Parameter*> params() {
        return {&c1.w, &c1.b, &c2.w, &c2.b, &head.w, &head.b};
    }
};

/// dense relu dense; the caller squashes the logits.
struct MlpHead {
    DenseLayer l1, l2;

    static MlpHead make(const std::string& name, int in, int hidden, int out, Rng& rng) {
        MlpHead h;
        h.l1 = DenseLayer::make(name + ".l1", in, hidden, rng);
        h.l2 = DenseLayer::make(name + ".l2", hidden, out, rng);
        return h;
    }

    Var logits(const Var& f) const { return l2(relu(l1(f))); }

    std::vector<Parameter*> params() { return {&l1.w, &l1.b, &l2.w, &l2.b}; }
};

/// dense seed, two upsample-conv blocks, sigmoid squash back to image range.
struct ConvDecoder {
    DenseLayer seed;
    Conv2dLayer u1, u2;
    int seed_ch = 0, seed_h = 0, seed_w = 0;

    static ConvDecoder make(const std::string& name, const ModelConfig& cfg, Rng& rng) {
        ConvDecoder d;
        d.seed_ch = cfg.conv2;
        d.seed_h = cfg.image_shape[1] / 4;
        d.seed_w = cfg.image_shape[2] / 4;
        d.seed = DenseLayer::make(name + ".seed", cfg.d_common + cfg.d_specific,
                                  d.seed_ch * d.seed_h * d.seed_w, rng);
        d.u1 = Conv2dLayer::make(name + ".up1", cfg.conv2, cfg.conv1, 3, 1, rng);
        d.u2 = Conv2dLayer::make(name + ".up2", cfg.conv1, cfg.image_shape[0], 3, 1, rng);
        return d;
    }

    Var operator()(const Var& z) const {
        const int batch = z.value().rows();
        Var h = reshape(relu(seed(z)), {batch, seed_ch, seed_h, seed_w});
        h = relu(u1(upsample2x(h)));
        return sigmoid(u2(upsample2x(h)));
    }

    std::vector<Parameter*> params() { return {&seed.w, &seed.b, &u1.w, &u1.b, &u2.w, &u2.b}; }
};

}  // namespace detail

/// Batched feature codes from both encoders.
struct FeaturePair {
    Var common;    // [B, d_common]
    Var specific;  // [B, d_specific]
};

/// The six cooperating networks. Copying is disabled: parameters are shared
/// handles and a silent alias would defeat freeze bookkeeping.
struct ModelBundle {
    ModelConfig cfg;
    detail::ConvEncoder common_encoder;
    detail::MlpHead classifier;
    detail::MlpHead domain_discriminator;
    detail::ConvEncoder specific_encoder;
    detail::ConvDecoder decoder;
    detail::MlpHead adversarial_classifier;

    ModelBundle() = default;
    ModelBundle(const ModelBundle&) = delete;
    ModelBundle& operator=(const ModelBundle&) = delete;
    ModelBundle(ModelBundle&&) = default;
    ModelBundle& operator=(ModelBundle&&) = default;

    static constexpr const char* kComponents[6] = {
        "common_encoder", "classifier", "domain_discriminator",
        "specific_encoder", "decoder", "adversarial_classifier"};

    static ModelBundle make(const ModelConfig& cfg, uint64_t seed) {
        if (cfg.image_shape.size() != 3)
            throw std::invalid_argument("models: image_shape must be {C,H,W}");
        if (cfg.image_shape[1] % 4 != 0 || cfg.image_shape[2] % 4 != 0 ||
            cfg.image_shape[1] < 8 || cfg.image_shape[2] < 8)
            throw std::invalid_argument("models: H and W must be multiples of 4, at least 8");
        if (cfg.num_classes < 2 || cfg.d_common < 1 || cfg.d_specific < 1)
            throw std::invalid_argument("models: need num_classes >= 2 and positive code dims");
        ModelBundle b;
        b.cfg = cfg;
        for (const char* name : kComponents) b.reinit(name, seed);
        return b;
    }

    /// Rebuilds one component's parameters from its own named seed stream.
    void reinit(const std::string& component, uint64_t seed) {
        Rng rng(derive_seed(seed, "models." + component));
        if (component == "common_encoder" || component == "E_c")
            common_encoder = detail::ConvEncoder::make("common_encoder", cfg, cfg.d_common, rng);
        else if (component == "classifier" || component == "C")
            classifier = detail::MlpHead::make("classifier", cfg.d_common, cfg.hidden,
                                               cfg.num_classes, rng);
        else if (component == "domain_discriminator" || component == "D")
            domain_discriminator = detail::MlpHead::make("domain_discriminator", cfg.d_common,
                                                         cfg.hidden, 1, rng);
        else if (component == "specific_encoder" || component == "E_s")
            specific_encoder = detail::ConvEncoder::make("specific_encoder", cfg, cfg.d_specific, rng);
        else if (component == "decoder" || component == "G")
            decoder = detail::ConvDecoder::make("decoder", cfg, rng);
        else if (component == "adversarial_classifier" || component == "A")
            adversarial_classifier = detail::MlpHead::make("adversarial_classifier", cfg.d_specific,
                                                           cfg.hidden, cfg.num_classes, rng);
        else
            throw std::invalid_argument("models: unknown component '" + component + "'");
    }

    std::vector<Parameter*> params_of(const std::string& component) {
        if (component == "common_encoder" || component == "E_c") return common_encoder.params();
        if (component == "classifier" || component == "C") return classifier.params();
        if (component == "domain_discriminator" || component == "D")
            return domain_discriminator.params();
        if (component == "specific_encoder" || component == "E_s") return specific_encoder.params();
        if (component == "decoder" || component == "G") return decoder.params();
        if (component == "adversarial_classifier" || component == "A")
            return adversarial_classifier.params();
        throw std::invalid_argument("models: unknown component '" + component + "'");
    }

    std::vector<Parameter*> all_params() {
        std::vector<Parameter*> out;
        for (const char* name : kComponents)
            for (Parameter* p : params_of(name)) out.push_back(p);
        return out;
    }

    /// Frozen components take no optimizer updates and receive no gradients.
    void set_frozen(const std::vector<std::string>& components, bool frozen) {
        for (const std::string& c : components)
            for (Parameter* p : params_of(c)) p->set_trainable(!frozen);
    }

    bool is_frozen(const std::string& component) {
        for (Parameter* p : params_of(component))
            if (p->trainable()) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// Forward paths
// ---------------------------------------------------------------------------

namespace detail {

inline void check_images(const ModelBundle& b, const Var& x) {
    const Tensor& t = x.value();
    if (t.rank() != 4 || t.dim(1) != b.cfg.image_shape[0] || t.dim(2) != b.cfg.image_shape[1] ||
        t.dim(3) != b.cfg.image_shape[2])
        throw std::invalid_argument("models: input " + t.shape_str() + " does not match image shape " +
                                    Tensor::shape_str(b.cfg.image_shape));
}

inline void check_code(const Var& f, int dim, const char* what) {
    if (f.value().rank() != 2 || f.value().cols() != dim)
        throw std::invalid_argument(std::string("models: ") + what + " code " +
                                    f.value().shape_str() + " vs expected width " +
                                    std::to_string(dim));
}

}  // namespace detail

/// Runs both encoders on a batch of images.
inline FeaturePair encode(const ModelBundle& b, const Var& x) {
    detail::check_images(b, x);
    return {b.common_encoder(x), b.specific_encoder(x)};
}

inline FeaturePair encode(const ModelBundle& b, const Tensor& x) {
    return encode(b, Var::constant(x));
}

/// Class distribution from the common code. Rows sum to one.
inline Var classify(const ModelBundle& b, const Var& f_c) {
    detail::check_code(f_c, b.cfg.d_common, "common");
    return softmax_rows(b.classifier.logits(f_c));
}

/// Class distribution the adversary reads out of the specific code.
inline Var adversary_classify(const ModelBundle& b, const Var& f_s) {
    detail::check_code(f_s, b.cfg.d_specific, "specific");
    return softmax_rows(b.adversarial_classifier.logits(f_s));
}

/// P(sample is source-side) from the common code. The gradient reversal sits
/// between the code and the discriminator; lambda scales the flipped gradient.
inline Var domain_prob(const ModelBundle& b, const Var& f_c, float lambda) {
    detail::check_code(f_c, b.cfg.d_common, "common");
    return sigmoid(b.domain_discriminator.logits(gradient_reversal(f_c, lambda)));
}

/// Image from a (common, specific) code pair; output range (0,1).
inline Var decode(const ModelBundle& b, const Var& f_c, const Var& f_s) {
    detail::check_code(f_c, b.cfg.d_common, "common");
    detail::check_code(f_s, b.cfg.d_specific, "specific");
    return b.decoder(concat_cols(f_c, f_s));
}

/// Row-wise argmax; ties resolve to the lowest class index.
inline std::vector<int> argmax_rows(const Tensor& probs) {
    if (probs.rank() != 2) throw std::invalid_argument("argmax: need [B,K], got " + probs.shape_str());
    const int n = probs.rows(), k = probs.cols();
    std::vector<int> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (probs[static_cast<int64_t>(i) * k + j] > probs[static_cast<int64_t>(i) * k + best])
                best = j;
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

/// Order-sensitive digest of names, shapes and raw bytes; two calls agree
/// exactly when every parameter is bitwise identical.
inline uint64_t param_hash(const std::vector<Parameter*>& params) {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* data, size_t len) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ull;
        }
    };
    for (Parameter* p : params) {
        mix(p->name.data(), p->name.size());
        for (int d : p->value().shape()) mix(&d, sizeof(d));
        mix(p->value().data(), static_cast<size_t>(p->value().size()) * sizeof(float));
    }
    return h;
}

inline uint64_t param_hash(ModelBundle& b, const std::string& component) {
    return param_hash(b.params_of(component));
}

}  // namespace dida
