#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dida/data.hpp"
#include "dida/losses.hpp"
#include "dida/models.hpp"

namespace dida {

// ---------------------------------------------------------------------------
// Batched inference helpers
// ---------------------------------------------------------------------------

/// argmax class predictions for a sample list, chunked to bound peak memory.
inline std::vector<int> predict_labels(const ModelBundle& b, const std::vector<Sample>& samples,
                                       int chunk = 256) {
    if (samples.empty()) throw std::invalid_argument("eval: empty sample set");
    std::vector<int> out;
    out.reserve(samples.size());
    for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(chunk)) {
        const size_t end = std::min(samples.size(), start + static_cast<size_t>(chunk));
        std::vector<int> idx(end - start);
        for (size_t i = start; i < end; ++i) idx[i - start] = static_cast<int>(i);
        Tensor x = stack_batch(samples, idx);
        Var probs = classify(b, b.common_encoder(Var::constant(x)));
        std::vector<int> pred = argmax_rows(probs.value());
        out.insert(out.end(), pred.begin(), pred.end());
    }
    return out;
}

/// Percent of test samples whose prediction matches the stored label.
inline double target_accuracy(const ModelBundle& b, const std::vector<Sample>& test) {
    if (test.empty()) throw std::invalid_argument("eval: empty test set");
    for (const Sample& s : test)
        if (!s.label) throw std::invalid_argument("eval: unlabeled sample '" + s.id + "' in test set");
    std::vector<int> pred = predict_labels(b, test);
    int64_t hits = 0;
    for (size_t i = 0; i < test.size(); ++i)
        if (pred[i] == *test[i].label) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(test.size());
}

/// Both feature codes for a sample list as plain [N,d] tensors.
inline std::pair<Tensor, Tensor> extract_features(const ModelBundle& b,
                                                  const std::vector<Sample>& samples,
                                                  int chunk = 256) {
    if (samples.empty()) throw std::invalid_argument("eval: empty sample set");
    Tensor fc = Tensor::zeros({static_cast<int>(samples.size()), b.cfg.d_common});
    Tensor fs = Tensor::zeros({static_cast<int>(samples.size()), b.cfg.d_specific});
    for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(chunk)) {
        const size_t end = std::min(samples.size(), start + static_cast<size_t>(chunk));
        std::vector<int> idx(end - start);
        for (size_t i = start; i < end; ++i) idx[i - start] = static_cast<int>(i);
        FeaturePair fp = encode(b, stack_batch(samples, idx));
        std::copy(fp.common.value().data(), fp.common.value().data() + fp.common.value().size(),
                  fc.data() + static_cast<int64_t>(start) * b.cfg.d_common);
        std::copy(fp.specific.value().data(), fp.specific.value().data() + fp.specific.value().size(),
                  fs.data() + static_cast<int64_t>(start) * b.cfg.d_specific);
    }
    return {std::move(fc), std::move(fs)};
}

// ---------------------------------------------------------------------------
// Linear-probe protocol
// ---------------------------------------------------------------------------

struct ProbeConfig {
    int hidden = 64;
    int epochs = 30;
    int batch_size = 64;
    float lr = 0.01f;
    float train_fraction = 0.8f;
    uint64_t seed = 0;
};

struct ProbeResult {
    std::string kind;        // "common" or "specific"
    double accuracy = 0.0;   // held-out, percent
    double chance = 0.0;     // 100 / K
    int epochs = 0;
};

/// Trains a fresh one-hidden-layer readout on an 80/20 split of the given
/// features and reports held-out accuracy. The bundle is never touched; the
/// probe measures how much label information the features expose.
inline ProbeResult probe_disentanglement(const Tensor& features, const std::vector<int>& labels,
                                         int num_classes, const std::string& kind,
                                         const ProbeConfig& cfg = {}) {
    if (features.rank() != 2) throw std::invalid_argument("probe: features must be [N,D]");
    const int n = features.rows(), d = features.cols();
    if (static_cast<size_t>(n) != labels.size())
        throw std::invalid_argument("probe: feature/label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw std::invalid_argument("probe: label out of range");

    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(derive_seed(cfg.seed, "probe-split"));
    rng.shuffle(order);
    const int n_train = static_cast<int>(std::lround(cfg.train_fraction * n));
    const int n_test = n - n_train;
    if (n_train < num_classes || n_test < 1)
        throw std::invalid_argument("probe: degenerate train/test split (" + std::to_string(n_train) +
                                    "/" + std::to_string(n_test) + ")");

    auto take = [&](int from, int count, Tensor& x, std::vector<int>& y) {
        x = Tensor::zeros({count, d});
        y.resize(static_cast<size_t>(count));
        for (int i = 0; i < count; ++i) {
            const int src = order[static_cast<size_t>(from + i)];
            std::copy(features.data() + static_cast<int64_t>(src) * d,
                      features.data() + static_cast<int64_t>(src + 1) * d,
                      x.data() + static_cast<int64_t>(i) * d);
            y[static_cast<size_t>(i)] = labels[static_cast<size_t>(src)];
        }
    };
    Tensor xtr, xte;
    std::vector<int> ytr, yte;
    take(0, n_train, xtr, ytr);
    take(n_train, n_test, xte, yte);

    // standardize with train-split statistics so the readout sees the same
    // scale whatever the feature magnitudes are; keeps probes like-for-like
    std::vector<double> mu(static_cast<size_t>(d), 0.0), sd(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n_train; ++i)
        for (int j = 0; j < d; ++j) mu[static_cast<size_t>(j)] += xtr[static_cast<int64_t>(i) * d + j];
    for (int j = 0; j < d; ++j) mu[static_cast<size_t>(j)] /= n_train;
    for (int i = 0; i < n_train; ++i)
        for (int j = 0; j < d; ++j) {
            const double v = xtr[static_cast<int64_t>(i) * d + j] - mu[static_cast<size_t>(j)];
            sd[static_cast<size_t>(j)] += v * v;
        }
    for (int j = 0; j < d; ++j)
        sd[static_cast<size_t>(j)] = std::max(std::sqrt(sd[static_cast<size_t>(j)] / n_train), 1e-6);
    auto standardize = [&](Tensor& x, int rows) {
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < d; ++j) {
                auto& v = x[static_cast<int64_t>(i) * d + j];
                v = static_cast<float>((v - mu[static_cast<size_t>(j)]) / sd[static_cast<size_t>(j)]);
            }
    };
    standardize(xtr, n_train);
    standardize(xte, n_test);

    Rng init_rng(derive_seed(cfg.seed, "probe-init"));
    DenseLayer l1 = DenseLayer::make("probe.l1", d, cfg.hidden, init_rng);
    DenseLayer l2 = DenseLayer::make("probe.l2", cfg.hidden, num_classes, init_rng);
    std::vector<Parameter*> params{&l1.w, &l1.b, &l2.w, &l2.b};
    Optimizer opt(OptConfig{OptKind::Adam, cfg.lr});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto batches = batch_iter(n_train, cfg.batch_size, derive_seed(cfg.seed, "probe-epoch", epoch));
        for (const auto& batch : batches) {
            Tensor bx = Tensor::zeros({static_cast<int>(batch.size()), d});
            std::vector<int> by(batch.size());
            for (size_t i = 0; i < batch.size(); ++i) {
                std::copy(xtr.data() + static_cast<int64_t>(batch[i]) * d,
                          xtr.data() + static_cast<int64_t>(batch[i] + 1) * d,
                          bx.data() + static_cast<int64_t>(i) * d);
                by[i] = ytr[static_cast<size_t>(batch[i])];
            }
            Var probs = softmax_rows(l2(relu(l1(Var::constant(bx)))));
            Var loss = class_nll(probs, by);
            backward(loss);
            opt.step(params);
        }
    }

    Var probs = softmax_rows(l2(relu(l1(Var::constant(xte)))));
    std::vector<int> pred = argmax_rows(probs.value());
    int64_t hits = 0;
    for (int i = 0; i < n_test; ++i)
        if (pred[static_cast<size_t>(i)] == yte[static_cast<size_t>(i)]) ++hits;

    ProbeResult res;
    res.kind = kind;
    res.accuracy = 100.0 * static_cast<double>(hits) / static_cast<double>(n_test);
    res.chance = 100.0 / num_classes;
    res.epochs = cfg.epochs;
    return res;
}

// ---------------------------------------------------------------------------
// Feature export
// ---------------------------------------------------------------------------

/// Writes one row per sample: id, domain, label (-1 when absent), then the
/// common and specific feature coordinates. Plain CSV for external embedding.
inline void export_features(const ModelBundle& b,
                            const std::vector<const std::vector<Sample>*>& sets,
                            const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("eval: cannot open for write: " + path);
    f << "id,domain,label";
    for (int j = 0; j < b.cfg.d_common; ++j) f << ",fc" << j;
    for (int j = 0; j < b.cfg.d_specific; ++j) f << ",fs" << j;
    f << "\n";
    char num[64];
    for (const std::vector<Sample>* set : sets) {
        if (!set || set->empty()) continue;
        auto [fc, fs] = extract_features(b, *set);
        for (size_t i = 0; i < set->size(); ++i) {
            const Sample& s = (*set)[i];
            f << s.id << ',' << domain_name(s.domain) << ',' << s.label.value_or(-1);
            for (int j = 0; j < b.cfg.d_common; ++j) {
                std::snprintf(num, sizeof num, "%.6g", fc[static_cast<int64_t>(i) * b.cfg.d_common + j]);
                f << ',' << num;
            }
            for (int j = 0; j < b.cfg.d_specific; ++j) {
                std::snprintf(num, sizeof num, "%.6g", fs[static_cast<int64_t>(i) * b.cfg.d_specific + j]);
                f << ',' << num;
            }
            f << "\n";
        }
    }
    if (!f) throw std::runtime_error("eval: short write: " + path);
}

// ---------------------------------------------------------------------------
// Image grids
// ---------------------------------------------------------------------------

struct SynthTriple {
    Tensor source;  // [C,H,W]
    Tensor synth;
    Tensor target;
};

/// Three-row tile grid: sources on top, synthesized images in the middle,
/// their specific-feature donors on the bottom.
inline png::Image make_synth_grid(const std::vector<SynthTriple>& triples) {
    if (triples.empty()) throw std::invalid_argument("grid: no triples");
    const std::vector<int> shape = triples.front().source.shape();
    if (shape.size() != 3) throw std::invalid_argument("grid: tiles must be [C,H,W]");
    const int c = shape[0], h = shape[1], w = shape[2];
    if (c != 1 && c != 3) throw std::invalid_argument("grid: tiles must have 1 or 3 channels");
    const int cols = static_cast<int>(triples.size());

    png::Image img;
    img.width = cols * w;
    img.height = 3 * h;
    img.rgb.assign(static_cast<size_t>(img.width) * img.height * 3, 0);

    auto blit = [&](const Tensor& tile, int row, int col) {
        if (tile.shape() != shape)
            throw std::invalid_argument("grid: mixed tile shapes " + tile.shape_str() + " vs " +
                                        Tensor::shape_str(shape));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    const int src_ch = c == 1 ? 0 : ch;
                    const float v = std::clamp(tile[(static_cast<int64_t>(src_ch) * h + y) * w + x],
                                               0.0f, 1.0f);
                    const size_t off =
                        ((static_cast<size_t>(row) * h + y) * img.width + static_cast<size_t>(col) * w + x) * 3 +
                        static_cast<size_t>(ch);
                    img.rgb[off] = static_cast<uint8_t>(std::lround(v * 255.0f));
                }
    };
    for (int i = 0; i < cols; ++i) {
        blit(triples[static_cast<size_t>(i)].source, 0, i);
        blit(triples[static_cast<size_t>(i)].synth, 1, i);
        blit(triples[static_cast<size_t>(i)].target, 2, i);
    }
    return img;
}

inline void render_synth_grid(const std::vector<SynthTriple>& triples, const std::string& path) {
    png::write_file(path, make_synth_grid(triples));
}

// ---------------------------------------------------------------------------
// Run metrics serialization
// ---------------------------------------------------------------------------

/// One row of the per-iteration metrics table.
struct IterationRecord {
    int iteration = 0;
    double target_acc = 0.0;
    double source_acc = 0.0;
    double probe_common = 0.0;
    double probe_specific = 0.0;
    int64_t pool_size = 0;
};

/// Fixed-format CSV; equal records always produce identical bytes.
inline std::string metrics_csv(const std::vector<IterationRecord>& records) {
    std::ostringstream os;
    os << "i,target_acc,source_acc,probe_common,probe_specific,pool_size\n";
    char line[256];
    for (const IterationRecord& r : records) {
        std::snprintf(line, sizeof line, "%d,%.4f,%.4f,%.4f,%.4f,%lld\n", r.iteration, r.target_acc,
                      r.source_acc, r.probe_common, r.probe_specific,
                      static_cast<long long>(r.pool_size));
        os << line;
    }
    return os.str();
}

inline void emit_metrics(const std::vector<IterationRecord>& records, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("eval: cannot open for write: " + path);
    const std::string csv = metrics_csv(records);
    f.write(csv.data(), static_cast<std::streamsize>(csv.size()));
    if (!f) throw std::runtime_error("eval: short write: " + path);
}

}  // namespace dida
