#pragma once

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "dida/loop.hpp"

namespace dida {

namespace detail {

/// Config assembly order: file, then --set overrides, then the dedicated
/// flags. Later writers win, so flags beat the file.
inline Config assemble_config(const std::string& config_path,
                              const std::vector<std::string>& sets, const std::string& out_dir,
                              int64_t seed) {
    Config c;
    if (!config_path.empty()) c.load_file(config_path);
    for (const std::string& kv : sets) c.set_pair(kv);
    if (!out_dir.empty()) c.set("run.out_dir", out_dir);
    if (seed >= 0) {
        const std::string s = std::to_string(seed);
        c.set("seed.init", s);
        c.set("seed.data", s);
        c.set("seed.pairing", s);
    }
    return c;
}

inline std::filesystem::path cache_root() {
    const char* env = std::getenv("DIDA_CACHE");
    return env && *env ? std::filesystem::path(env) : std::filesystem::path("cache");
}

/// The slice of the config echo that determines dataset bytes.
inline std::string data_manifest_head(const Config& c) {
    std::string out;
    std::istringstream in(c.echo());
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("data.", 0) == 0 || line.rfind("seed.data", 0) == 0) out += line + "\n";
    return out;
}

inline std::string histogram_line(const std::vector<Sample>& samples, int k) {
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (const Sample& s : samples)
        if (s.label) ++counts[static_cast<size_t>(*s.label)];
    std::string out;
    for (int y = 0; y < k; ++y)
        out += (y ? " " : "") + std::to_string(y) + ":" + std::to_string(counts[static_cast<size_t>(y)]);
    return out;
}

inline std::string shape_str3(const std::vector<int>& s) {
    return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]);
}

inline std::vector<Tensor> images_of(const std::vector<Sample>& samples) {
    std::vector<Tensor> out;
    out.reserve(samples.size());
    for (const Sample& s : samples) out.push_back(s.image);
    return out;
}

inline int require_labeled_value(const Sample& s) {
    if (!s.label) throw std::runtime_error("gen-data: sample " + s.id + " has no label to cache");
    return *s.label;
}

inline std::vector<int> labels_of(const std::vector<Sample>& samples) {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const Sample& s : samples) out.push_back(require_labeled_value(s));
    return out;
}

/// Loads the checkpoint for one iteration into a bundle shaped by the
/// effective config, returning bundle + dataset for downstream measurement.
struct RestoredRun {
    RunConfig rc;
    DatasetBundle data;
    ModelConfig mcfg;
    ModelBundle bundle;
    int iteration;
    std::string checkpoint;
};

inline RestoredRun restore_run(const Config& c, int iteration) {
    RunConfig rc = make_run_config(c);
    DatasetBundle data = load_dataset(rc);
    ModelConfig mcfg = rc.model;
    mcfg.num_classes = data.source.num_classes;
    mcfg.image_shape = data.source.image_shape;
    ModelBundle bundle = ModelBundle::make(mcfg, rc.seed_init);
    const int it = iteration >= 0 ? iteration : rc.iterations;
    const std::string path = (std::filesystem::path(rc.out_dir) / "checkpoints" /
                              (rc.id + "-i" + std::to_string(it) + ".ckpt"))
                                 .string();
    ckpt::load(path, bundle, arch_map(mcfg));
    return {std::move(rc), std::move(data), std::move(mcfg), std::move(bundle), it, path};
}

inline void append_line(const std::filesystem::path& path, const std::string& line) {
    std::ofstream f(path, std::ios::app);
    if (!f) throw std::runtime_error("cli: cannot append to " + path.string());
    f << line << "\n";
}

}  // namespace detail

inline int cmd_gen_data(const Config& c, bool force) {
    RunConfig rc = make_run_config(c);
    namespace fs = std::filesystem;
    const fs::path dir = detail::cache_root() / rc.id;
    const fs::path manifest_path = dir / "manifest.txt";
    const std::string head = detail::data_manifest_head(c);

    if (!force && fs::exists(manifest_path)) {
        std::ifstream f(manifest_path);
        std::string stored((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        if (stored.rfind(head, 0) == 0) {
            std::cout << "cache up to date: " << dir.string() << "\n" << stored;
            return 0;
        }
    }

    DatasetBundle data = load_dataset(rc);
    fs::create_directories(dir);
    write_idx_images((dir / "source-train-images.idx").string(),
                     detail::images_of(data.source.train));
    write_idx_labels((dir / "source-train-labels.idx").string(),
                     detail::labels_of(data.source.train));
    if (!data.source.test.empty()) {
        write_idx_images((dir / "source-test-images.idx").string(),
                         detail::images_of(data.source.test));
        write_idx_labels((dir / "source-test-labels.idx").string(),
                         detail::labels_of(data.source.test));
    }
    write_idx_images((dir / "target-train-images.idx").string(),
                     detail::images_of(data.target.train));
    write_idx_images((dir / "target-test-images.idx").string(),
                     detail::images_of(data.target.test));
    write_idx_labels((dir / "target-test-labels.idx").string(),
                     detail::labels_of(data.target.test));

    const int k = data.source.num_classes;
    std::string stats;
    stats += "source train: " + std::to_string(data.source.train.size()) + " images " +
             detail::shape_str3(data.source.image_shape) + "\n";
    stats += "source test: " + std::to_string(data.source.test.size()) + " images\n";
    stats += "target train: " + std::to_string(data.target.train.size()) + " images " +
             detail::shape_str3(data.target.image_shape) + "\n";
    stats += "target test: " + std::to_string(data.target.test.size()) + " images\n";
    stats += "class histogram (source train): " + detail::histogram_line(data.source.train, k) + "\n";
    stats += "class histogram (target test): " + detail::histogram_line(data.target.test, k) + "\n";
    detail::write_text(manifest_path, head + stats);
    std::cout << "cache written: " << dir.string() << "\n" << head << stats;
    return 0;
}

inline int cmd_run(const Config& c, bool control) {
    RunConfig rc = make_run_config(c);
    RunReport report = control ? run_control(rc) : run_dida(rc);
    const IterationRecord last = report.records().back();
    std::printf("%s finished: %d iterations, total_da_epochs=%d, wall=%.1fs\n",
                control ? "control" : "run", rc.iterations, report.total_da_epochs,
                report.wall_seconds);
    std::printf("final: target_acc=%.4f source_acc=%.4f probe_common=%.4f probe_specific=%.4f\n",
                last.target_acc, last.source_acc, last.probe_common, last.probe_specific);
    std::printf("artifacts: %s\n", rc.out_dir.c_str());
    return 0;
}

inline int cmd_eval(const Config& c, int iteration) {
    detail::RestoredRun r = detail::restore_run(c, iteration);
    const double target = target_accuracy(r.bundle, r.data.target.test);
    const std::vector<Sample>& src_eval =
        r.data.source.test.empty() ? r.data.source.train : r.data.source.test;
    const double source = target_accuracy(r.bundle, src_eval);
    char line[128];
    std::snprintf(line, sizeof line, "i=%d target_acc=%.4f source_acc=%.4f", r.iteration, target,
                  source);
    std::cout << line << "\n";
    detail::append_line(std::filesystem::path(r.rc.out_dir) / "eval.txt", line);
    return 0;
}

inline int cmd_probe(const Config& c, int iteration) {
    detail::RestoredRun r = detail::restore_run(c, iteration);
    const std::vector<Sample>& src_eval =
        r.data.source.test.empty() ? r.data.source.train : r.data.source.test;
    std::vector<Sample> heldout = src_eval;
    heldout.insert(heldout.end(), r.data.target.test.begin(), r.data.target.test.end());
    auto [fc, fs] = extract_features(r.bundle, heldout);
    std::vector<int> labels;
    labels.reserve(heldout.size());
    for (const Sample& s : heldout) labels.push_back(*s.label);
    ProbeConfig pc;
    pc.seed = derive_seed(r.rc.seed_init, "probe", r.iteration);
    const double common =
        probe_disentanglement(fc, labels, r.mcfg.num_classes, "common", pc).accuracy;
    const double specific =
        probe_disentanglement(fs, labels, r.mcfg.num_classes, "specific", pc).accuracy;
    char l1[96], l2[96];
    std::snprintf(l1, sizeof l1, "i=%d probe common %.4f", r.iteration, common);
    std::snprintf(l2, sizeof l2, "i=%d probe specific %.4f", r.iteration, specific);
    std::cout << l1 << "\n" << l2 << "\n";
    const auto path = std::filesystem::path(r.rc.out_dir) / "probe.txt";
    detail::append_line(path, l1);
    detail::append_line(path, l2);
    return 0;
}

inline int cmd_grid(const Config& c, int iteration, int n) {
    if (n < 1) throw std::invalid_argument("grid: --n must be >= 1");
    detail::RestoredRun r = detail::restore_run(c, iteration);
    if (r.data.target.train.empty()) throw std::runtime_error("grid: target training pool is empty");
    SyntheticSet set = synthesize(r.bundle, r.data.source.train, r.data.target.train, r.rc.pairing,
                                  n, r.rc.seed_pairing, r.iteration);
    std::unordered_map<std::string, size_t> target_by_id;
    for (size_t i = 0; i < r.data.target.train.size(); ++i)
        target_by_id[r.data.target.train[i].id] = i;
    std::vector<SynthTriple> triples;
    triples.reserve(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        const auto& [src_id, tgt_id] = set.provenance[static_cast<size_t>(j)];
        (void)src_id;
        triples.push_back({r.data.source.train[static_cast<size_t>(j) % r.data.source.train.size()].image,
                           set.samples[static_cast<size_t>(j)].image,
                           r.data.target.train[target_by_id.at(tgt_id)].image});
    }
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(r.rc.out_dir) / "synth");
    const std::string path = (fs::path(r.rc.out_dir) / "synth" /
                              (r.rc.id + "-i" + std::to_string(r.iteration) + "-grid.png"))
                                 .string();
    render_synth_grid(triples, path);
    std::cout << "grid written: " << path << " (" << n << " triples)\n";
    return 0;
}

/// Entry point shared by the binary and the in-process tests.
inline int cli_main(int argc, const char* const* argv) {
    CLI::App app{"iterated adversarial adaptation with disentangled synthesis"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::vector<std::string> sets;
    int64_t seed = -1;
    int iteration = -1;
    int grid_n = 8;
    bool force = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file, key = value per line");
        sub->add_option("--set", sets, "override one key, e.g. --set da.alpha=0.2");
        sub->add_option("--out", out_dir, "output directory (overrides run.out_dir)");
        sub->add_option("--seed", seed, "set init/data/pairing seeds to one value");
        return sub;
    };
    CLI::App* gen = add_common(app.add_subcommand("gen-data", "materialize the dataset cache"));
    gen->add_flag("--force", force, "regenerate even if the cache manifest matches");
    CLI::App* run = add_common(app.add_subcommand("run", "iterated adaptation run"));
    CLI::App* control =
        add_common(app.add_subcommand("control", "equal-budget control (stale or no pool)"));
    CLI::App* eval =
        add_common(app.add_subcommand("eval", "accuracy of a stored iteration checkpoint"));
    eval->add_option("--iteration", iteration, "checkpoint iteration (default: last)");
    CLI::App* probe =
        add_common(app.add_subcommand("probe", "label probes over both feature halves"));
    probe->add_option("--iteration", iteration, "checkpoint iteration (default: last)");
    CLI::App* grid = add_common(app.add_subcommand("grid", "synthesis grid from a checkpoint"));
    grid->add_option("--iteration", iteration, "checkpoint iteration (default: last)");
    grid->add_option("--n", grid_n, "number of synthesis triples (default 8)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        Config c = detail::assemble_config(config_path, sets, out_dir, seed);
        std::printf("seeds: init=%llu data=%llu pairing=%llu\n",
                    static_cast<unsigned long long>(c.getu64("seed.init")),
                    static_cast<unsigned long long>(c.getu64("seed.data")),
                    static_cast<unsigned long long>(c.getu64("seed.pairing")));
        if (gen->parsed()) return cmd_gen_data(c, force);
        if (run->parsed()) return cmd_run(c, false);
        if (control->parsed()) return cmd_run(c, true);
        if (eval->parsed()) return cmd_eval(c, iteration);
        if (probe->parsed()) return cmd_probe(c, iteration);
        if (grid->parsed()) return cmd_grid(c, iteration, grid_n);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace dida
