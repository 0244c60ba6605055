#pragma once

#include <filesystem>
#include <unordered_map>

#include "dida/checkpoint.hpp"
#include "dida/config.hpp"

namespace dida {

struct DatasetBundle {
    DatasetSplit source;
    DatasetSplit target;
};

namespace detail {

/// Widen a grayscale [1,H,W] image to [3,H,W] by channel replication.
inline Tensor to_rgb(const Tensor& img) {
    if (img.rank() != 3) throw std::invalid_argument("data: expected a [C,H,W] image");
    if (img.dim(0) == 3) return img;
    if (img.dim(0) != 1)
        throw std::invalid_argument("data: cannot widen a " + std::to_string(img.dim(0)) +
                                    "-channel image to rgb");
    Tensor out({3, img.dim(1), img.dim(2)});
    const int64_t plane = img.size();
    for (int c = 0; c < 3; ++c) std::copy(img.data(), img.data() + plane, out.data() + c * plane);
    return out;
}

inline void widen_split(DatasetSplit& split) {
    if (split.image_shape.size() == 3 && split.image_shape[0] == 3) return;
    for (Sample& s : split.train) s.image = to_rgb(s.image);
    for (Sample& s : split.test) s.image = to_rgb(s.image);
    if (split.image_shape.size() == 3) split.image_shape[0] = 3;
}

inline void truncate_split(DatasetSplit& split, int limit_train, int limit_test) {
    if (limit_train > 0 && split.train.size() > static_cast<size_t>(limit_train))
        split.train.resize(static_cast<size_t>(limit_train));
    if (limit_test > 0 && split.test.size() > static_cast<size_t>(limit_test))
        split.test.resize(static_cast<size_t>(limit_test));
}

}  // namespace detail

/// Materialize the configured dataset. Desk data is regenerated procedurally
/// from the data seed; idx data is read from the configured files; mnistm
/// blends texture patches over the source digits to synthesize the target
/// domain. Target training labels are dropped at ingestion in every case.
inline DatasetBundle load_dataset(const RunConfig& cfg) {
    DatasetBundle out;
    if (cfg.data_kind == "desk") {
        auto [source, target] = make_desk_benchmark(cfg.desk, cfg.seed_data);
        out.source = std::move(source);
        out.target = std::move(target);
    } else {
        const int k = cfg.desk.num_classes;
        if (cfg.source_images.empty() || cfg.source_labels.empty())
            throw std::invalid_argument("config: " + cfg.data_kind +
                                        " data needs data.source_images and data.source_labels");
        IdxData src_train = load_idx(cfg.source_images, cfg.source_labels, k);
        IdxData src_test;
        if (!cfg.source_test_images.empty()) {
            if (cfg.source_test_labels.empty())
                throw std::invalid_argument(
                    "config: data.source_test_images needs data.source_test_labels");
            src_test = load_idx(cfg.source_test_images, cfg.source_test_labels, k);
        }

        if (cfg.data_kind == "mnistm") {
            if (cfg.texture_dir.empty())
                throw std::invalid_argument("config: mnistm data needs data.texture_dir");
            if (src_test.images.empty())
                throw std::invalid_argument(
                    "config: mnistm data needs a source test split to derive the target test set");
            DatasetSplit digits = make_split(src_train, src_test, k, Domain::Source, "src");
            TextureCorpus corpus = load_texture_dir(cfg.texture_dir);
            DatasetSplit blended = make_mnistm(digits, corpus, cfg.seed_data);
            out.target.num_classes = k;
            out.target.image_shape = blended.image_shape;
            out.target.train.reserve(blended.train.size());
            for (size_t i = 0; i < blended.train.size(); ++i) {
                Sample t = std::move(blended.train[i]);
                t.label.reset();
                t.domain = Domain::Target;
                t.id = "tgt-train-" + std::to_string(i);
                out.target.train.push_back(std::move(t));
            }
            out.target.test.reserve(blended.test.size());
            for (size_t i = 0; i < blended.test.size(); ++i) {
                Sample t = std::move(blended.test[i]);
                t.domain = Domain::Target;
                t.id = "tgt-test-" + std::to_string(i);
                out.target.test.push_back(std::move(t));
            }
            out.source = std::move(digits);
            detail::widen_split(out.source);
        } else {
            if (cfg.target_images.empty() || cfg.target_test_images.empty() ||
                cfg.target_test_labels.empty())
                throw std::invalid_argument(
                    "config: idx data needs data.target_images, data.target_test_images and "
                    "data.target_test_labels");
            out.source = make_split(src_train, src_test, k, Domain::Source, "src");
            std::vector<Tensor> timgs = parse_idx_images(detail::read_all(cfg.target_images));
            if (timgs.empty()) throw std::invalid_argument("data: target image file is empty");
            IdxData tgt_test = load_idx(cfg.target_test_images, cfg.target_test_labels, k);
            out.target.num_classes = k;
            out.target.image_shape = timgs.front().shape();
            out.target.train.reserve(timgs.size());
            for (size_t i = 0; i < timgs.size(); ++i) {
                Sample t;
                t.image = std::move(timgs[i]);
                t.domain = Domain::Target;
                t.id = "tgt-train-" + std::to_string(i);
                out.target.train.push_back(std::move(t));
            }
            out.target.test.reserve(tgt_test.images.size());
            for (size_t i = 0; i < tgt_test.images.size(); ++i) {
                Sample t;
                t.image = std::move(tgt_test.images[i]);
                t.label = tgt_test.labels[i];
                t.domain = Domain::Target;
                t.id = "tgt-test-" + std::to_string(i);
                out.target.test.push_back(std::move(t));
            }
            detail::widen_split(out.source);
            detail::widen_split(out.target);
        }
    }
    if (cfg.resize > 0) {
        out.source = resize_to(out.source, cfg.resize, cfg.resize);
        out.target = resize_to(out.target, cfg.resize, cfg.resize);
    }
    if (cfg.protocol == "usps") {
        auto pair = sample_protocol_usps(out.source, out.target, cfg.seed_data);
        out.source = std::move(pair.first);
        out.target = std::move(pair.second);
    }
    detail::truncate_split(out.source, cfg.limit_train, cfg.limit_test);
    detail::truncate_split(out.target, cfg.limit_train, cfg.limit_test);
    if (out.source.image_shape != out.target.image_shape)
        throw std::invalid_argument("data: source and target image shapes differ");
    return out;
}

struct IterationReport {
    IterationRecord record;
    StageMetrics da;
    std::optional<StageMetrics> di;
    std::string checkpoint_path;
};

struct RunReport {
    std::vector<IterationReport> iterations;
    std::string config_echo;
    int total_da_epochs = 0;
    double wall_seconds = 0.0;

    std::vector<IterationRecord> records() const {
        std::vector<IterationRecord> out;
        out.reserve(iterations.size());
        for (const auto& it : iterations) out.push_back(it.record);
        return out;
    }
};

enum class RunMode { Dida, ControlStale, ControlNoPool };

inline const char* to_string(RunMode m) {
    switch (m) {
        case RunMode::Dida: return "dida";
        case RunMode::ControlStale: return "control-stale";
        case RunMode::ControlNoPool: return "control-no-pool";
    }
    return "?";
}

namespace detail {

inline std::map<std::string, std::string> arch_map(const ModelConfig& m) {
    return {
        {"classes", std::to_string(m.num_classes)},
        {"image", std::to_string(m.image_shape[0]) + "x" + std::to_string(m.image_shape[1]) + "x" +
                      std::to_string(m.image_shape[2])},
        {"d_common", std::to_string(m.d_common)},
        {"d_specific", std::to_string(m.d_specific)},
        {"conv1", std::to_string(m.conv1)},
        {"conv2", std::to_string(m.conv2)},
        {"hidden", std::to_string(m.hidden)},
    };
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("run: cannot write " + path.string());
    f << text;
}

inline std::string series_line(const std::string& name, const std::vector<double>& v) {
    std::string out = name;
    char buf[32];
    for (double x : v) {
        std::snprintf(buf, sizeof buf, " %.4f", x);
        out += buf;
    }
    return out + "\n";
}

inline std::string report_text(const RunReport& r, RunMode mode) {
    std::string out = "mode: " + std::string(to_string(mode)) + "\n";
    out += "total_da_epochs: " + std::to_string(r.total_da_epochs) + "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "wall_seconds: %.1f\n", r.wall_seconds);
    out += buf;
    for (const auto& it : r.iterations) {
        out += "iteration " + std::to_string(it.record.iteration) + "\n";
        std::snprintf(buf, sizeof buf, "  target_acc: %.4f\n", it.record.target_acc);
        out += buf;
        for (const auto& [name, series] : it.da.series) out += "  da." + series_line(name, series);
        if (it.di)
            for (const auto& [name, series] : it.di->series)
                out += "  di." + series_line(name, series);
        if (it.di && it.di->held_out_recon) {
            std::snprintf(buf, sizeof buf, "  di.held_out_recon: %.6f\n", *it.di->held_out_recon);
            out += buf;
        }
        out += "  checkpoint: " + it.checkpoint_path + "\n";
    }
    return out;
}

}  // namespace detail

/// One full experiment: i=0 adaptation baseline, then iterations of
/// disentangle → synthesize → augment → re-adapt. The mode only changes how
/// the synthetic pool evolves; the epoch budget is identical across modes.
inline RunReport run_loop(const RunConfig& cfg, RunMode mode) {
    const auto t0 = std::chrono::steady_clock::now();
    DatasetBundle data = load_dataset(cfg);
    if (data.target.test.empty())
        throw std::invalid_argument("run: target test split is empty; nothing to evaluate");

    namespace fs = std::filesystem;
    const fs::path out(cfg.out_dir);
    fs::create_directories(out / "checkpoints");
    fs::create_directories(out / "synth");
    fs::create_directories(out / "features");
    detail::write_text(out / "config.txt", cfg.echo);

    // the configured image size is advisory; the data decides
    ModelConfig mcfg = cfg.model;
    mcfg.num_classes = data.source.num_classes;
    mcfg.image_shape = data.source.image_shape;
    ModelBundle bundle = ModelBundle::make(mcfg, cfg.seed_init);
    const std::vector<Sample>& src_eval =
        data.source.test.empty() ? data.source.train : data.source.test;
    std::vector<Sample> heldout = src_eval;
    heldout.insert(heldout.end(), data.target.test.begin(), data.target.test.end());

    std::unordered_map<std::string, int> target_by_id;
    for (size_t i = 0; i < data.target.train.size(); ++i)
        target_by_id[data.target.train[i].id] = static_cast<int>(i);

    RunReport report;
    report.config_echo = cfg.echo;
    SyntheticSet pool;

    auto flush = [&] {
        emit_metrics(report.records(), (out / "metrics.csv").string());
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        detail::write_text(out / "report.txt", detail::report_text(report, mode));
    };

    auto run_iteration = [&](int i) {
        IterationReport it;
        it.record.iteration = i;

        if (i > 0) {
            // disentangle with the adaptation networks pinned; the adversary
            // reads pseudo-labels from the classifier just trained
            std::vector<Sample> di_pool = data.source.train;
            for (auto& s : pseudo_label(bundle, data.target.train)) di_pool.push_back(std::move(s));
            bundle.set_frozen({"common_encoder"}, true);
            StageConfig di_cfg = cfg.di;
            di_cfg.seed = derive_seed(cfg.seed_data, "di-stage", i);
            it.di = train_di_stage(bundle, di_pool, di_cfg, &heldout);
            bundle.set_frozen({"common_encoder"}, false);

            const bool make_pool =
                mode == RunMode::Dida || (mode == RunMode::ControlStale && i == 1);
            if (make_pool) {
                const int count = cfg.synth_count > 0
                                      ? cfg.synth_count
                                      : static_cast<int>(data.source.train.size());
                SyntheticSet fresh = synthesize(bundle, data.source.train, data.target.train,
                                                cfg.pairing, count, cfg.seed_pairing, i);
                pool = refresh_pool(pool, fresh, cfg.policy);

                const std::string tag = cfg.id + "-i" + std::to_string(i);
                emit_provenance(fresh, (out / "synth" / (tag + "-provenance.csv")).string());
                std::vector<SynthTriple> triples;
                const int n_grid = std::min<int>(8, static_cast<int>(fresh.samples.size()));
                for (int j = 0; j < n_grid; ++j) {
                    const auto& [src_id, tgt_id] = fresh.provenance[static_cast<size_t>(j)];
                    triples.push_back(
                        {data.source.train[static_cast<size_t>(j) % data.source.train.size()].image,
                         fresh.samples[static_cast<size_t>(j)].image,
                         data.target.train[static_cast<size_t>(target_by_id.at(tgt_id))].image});
                    (void)src_id;
                }
                render_synth_grid(triples, (out / "synth" / (tag + "-grid.png")).string());
            }

            // fresh heads for the next adaptation round; the common extractor
            // warm-starts unless configured otherwise
            bundle.reinit("classifier", derive_seed(cfg.seed_init, "classifier", i));
            bundle.reinit("domain_discriminator",
                          derive_seed(cfg.seed_init, "domain_discriminator", i));
            if (cfg.cold_start)
                bundle.reinit("common_encoder", derive_seed(cfg.seed_init, "common_encoder", i));
        }

        std::vector<Sample> labeled = data.source.train;
        labeled.insert(labeled.end(), pool.samples.begin(), pool.samples.end());
        StageConfig da_cfg = cfg.da;
        da_cfg.seed = derive_seed(cfg.seed_data, "da-stage", i);
        it.da = train_da_stage(bundle, labeled, data.target.train, da_cfg, &data.target.test);
        report.total_da_epochs += da_cfg.epochs;

        it.record.target_acc = it.da.final_target_acc.value();
        it.record.source_acc = target_accuracy(bundle, src_eval);
        it.record.pool_size = static_cast<int64_t>(pool.samples.size());

        // probe both feature halves on ground-truth-labeled eval samples
        auto [fc, fs] = extract_features(bundle, heldout);
        std::vector<int> labels;
        labels.reserve(heldout.size());
        for (const Sample& s : heldout) labels.push_back(*s.label);
        ProbeConfig pc;
        pc.seed = derive_seed(cfg.seed_init, "probe", i);
        it.record.probe_common =
            probe_disentanglement(fc, labels, mcfg.num_classes, "common", pc).accuracy;
        it.record.probe_specific =
            probe_disentanglement(fs, labels, mcfg.num_classes, "specific", pc).accuracy;

        const std::string tag = cfg.id + "-i" + std::to_string(i);
        std::vector<const std::vector<Sample>*> feature_sets = {&src_eval, &data.target.test};
        std::vector<Sample> pool_head;
        if (!pool.samples.empty()) {
            const size_t n = std::min<size_t>(pool.samples.size(), data.target.test.size());
            pool_head.assign(pool.samples.begin(),
                             pool.samples.begin() + static_cast<ptrdiff_t>(n));
            feature_sets.push_back(&pool_head);
        }
        export_features(bundle, feature_sets, (out / "features" / (tag + "-features.csv")).string());

        it.checkpoint_path = (out / "checkpoints" / (tag + ".ckpt")).string();
        std::string rng = "init=" + std::to_string(cfg.seed_init) +
                          ";data=" + std::to_string(cfg.seed_data) +
                          ";pairing=" + std::to_string(cfg.seed_pairing) +
                          ";iteration=" + std::to_string(i);
        ckpt::save(it.checkpoint_path, bundle, detail::arch_map(mcfg), rng);

        report.iterations.push_back(std::move(it));
        flush();
    };

    try {
        for (int i = 0; i <= cfg.iterations; ++i) run_iteration(i);
    } catch (...) {
        flush();  // partial report stays on disk
        throw;
    }
    flush();
    return report;
}

inline RunReport run_dida(const RunConfig& cfg) { return run_loop(cfg, RunMode::Dida); }

inline RunReport run_control(const RunConfig& cfg) {
    return run_loop(cfg, cfg.no_pool ? RunMode::ControlNoPool : RunMode::ControlStale);
}

}  // namespace dida
