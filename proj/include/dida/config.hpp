#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dida/stages.hpp"
#include "dida/synthesis.hpp"

namespace dida {

/// Flat key=value configuration with a closed schema. Files and overrides
/// share one namespace; unknown keys are rejected so typos cannot silently
/// fall back to defaults.
class Config {
public:
    Config() : values_(defaults()) {}

    static const std::map<std::string, std::string>& defaults() {
        static const std::map<std::string, std::string> d = {
            {"run.id", "desk"},
            {"run.out_dir", "runs/desk"},
            {"run.iterations", "4"},
            {"run.deterministic", "true"},
            {"seed.init", "1"},
            {"seed.data", "2"},
            {"seed.pairing", "3"},
            {"data.kind", "desk"},
            {"data.classes", "10"},
            {"data.train_per_domain", "2000"},
            {"data.test_per_domain", "500"},
            {"data.image_size", "16"},
            {"data.texture_amplitude", "0.4"},
            {"data.resize", "0"},
            {"data.source_images", ""},
            {"data.source_labels", ""},
            {"data.source_test_images", ""},
            {"data.source_test_labels", ""},
            {"data.target_images", ""},
            {"data.target_test_images", ""},
            {"data.target_test_labels", ""},
            {"data.texture_dir", ""},
            {"data.protocol", "none"},
            {"data.limit_train", "0"},
            {"data.limit_test", "0"},
            {"model.d_common", "32"},
            {"model.d_specific", "16"},
            {"model.conv1", "32"},
            {"model.conv2", "64"},
            {"model.hidden", "64"},
            {"da.backbone", "dann"},
            {"da.alpha", "0.1"},
            {"da.lambda", "1.0"},
            {"da.epochs", "6"},
            {"da.batch", "64"},
            {"da.opt", "adam"},
            {"da.lr", "0.002"},
            {"da.disc_opt", "sgd"},
            {"da.disc_lr", "0.05"},
            {"da.cold_start", "false"},
            {"di.beta", "0.05"},
            {"di.epochs", "5"},
            {"di.batch", "64"},
            {"di.opt", "adam"},
            {"di.lr", "0.002"},
            {"di.adv_opt", "sgd"},
            {"di.adv_lr", "0.05"},
            {"di.ratio", "1"},
            {"synth.pairing", "random"},
            {"synth.count", "0"},
            {"synth.policy", "replace"},
            {"control.no_pool", "false"},
        };
        return d;
    }

    void set(const std::string& key, const std::string& value) {
        if (!defaults().count(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
        values_[key] = value;
    }

    /// "key=value" or "key = value"; used for --set overrides.
    void set_pair(const std::string& pair) {
        auto eq = pair.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: override '" + pair + "' is not key=value");
        set(trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
    }

    void load_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::invalid_argument("config: cannot open " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::string t = trim(line);
            if (t.empty()) continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config: " + path + ":" + std::to_string(lineno) +
                                            ": expected key=value, got '" + t + "'");
            set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
    }

    const std::string& str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
        return it->second;
    }

    int geti(const std::string& key) const {
        return static_cast<int>(parse_ll(key, str(key)));
    }

    int64_t geti64(const std::string& key) const { return parse_ll(key, str(key)); }

    uint64_t getu64(const std::string& key) const {
        return static_cast<uint64_t>(parse_ll(key, str(key)));
    }

    float getf(const std::string& key) const {
        const std::string& v = str(key);
        try {
            size_t used = 0;
            float r = std::stof(v, &used);
            if (used != v.size()) throw std::invalid_argument("");
            return r;
        } catch (const std::exception&) {
            throw std::invalid_argument("config: key '" + key + "' wants a number, got '" + v + "'");
        }
    }

    bool getb(const std::string& key) const {
        const std::string& v = str(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw std::invalid_argument("config: key '" + key + "' wants a boolean, got '" + v + "'");
    }

    /// Effective configuration, one sorted "key = value" line each.
    std::string echo() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static long long parse_ll(const std::string& key, const std::string& v) {
        try {
            size_t used = 0;
            long long r = std::stoll(v, &used);
            if (used != v.size()) throw std::invalid_argument("");
            return r;
        } catch (const std::exception&) {
            throw std::invalid_argument("config: key '" + key + "' wants an integer, got '" + v +
                                        "'");
        }
    }

    std::map<std::string, std::string> values_;
};

/// Typed view of a Config, validated on construction.
struct RunConfig {
    std::string id;
    std::string out_dir;
    int iterations = 4;
    bool deterministic = true;
    uint64_t seed_init = 1, seed_data = 2, seed_pairing = 3;

    std::string data_kind;  // desk | idx | mnistm
    DeskConfig desk;
    std::string source_images, source_labels, source_test_images, source_test_labels;
    std::string target_images, target_test_images, target_test_labels;
    std::string texture_dir;     // mnistm: directory of [3,h,w] PNG patches
    std::string protocol;        // none | usps (2000/1800 training subsample)
    int limit_train = 0, limit_test = 0;  // 0: keep everything
    int resize = 0;

    ModelConfig model;
    StageConfig da;   // opt_adversary drives the domain discriminator
    StageConfig di;   // opt_adversary drives the adversarial classifier
    bool cold_start = false;

    Pairing pairing = Pairing::Random;
    int synth_count = 0;  // 0: one synthetic sample per source training sample
    PoolPolicy policy = PoolPolicy::Replace;
    bool no_pool = false;

    std::string echo;  // effective flat config, for the run directory
};

inline OptConfig parse_opt(const std::string& kind, float lr) {
    if (kind != "sgd" && kind != "adam")
        throw std::invalid_argument("config: optimizer must be sgd or adam, got '" + kind + "'");
    return {kind == "adam" ? OptKind::Adam : OptKind::SgdMomentum, lr};
}

inline RunConfig make_run_config(const Config& c) {
    RunConfig r;
    r.id = c.str("run.id");
    if (r.id.empty()) throw std::invalid_argument("config: run.id must not be empty");
    r.out_dir = c.str("run.out_dir");
    r.iterations = c.geti("run.iterations");
    if (r.iterations < 0) throw std::invalid_argument("config: run.iterations must be >= 0");
    r.deterministic = c.getb("run.deterministic");
    r.seed_init = c.getu64("seed.init");
    r.seed_data = c.getu64("seed.data");
    r.seed_pairing = c.getu64("seed.pairing");

    r.data_kind = c.str("data.kind");
    if (r.data_kind != "desk" && r.data_kind != "idx" && r.data_kind != "mnistm")
        throw std::invalid_argument("config: data.kind must be desk, idx or mnistm");
    r.desk.num_classes = c.geti("data.classes");
    r.desk.train_per_domain = c.geti("data.train_per_domain");
    r.desk.test_per_domain = c.geti("data.test_per_domain");
    r.desk.image_size = c.geti("data.image_size");
    r.desk.texture_amplitude = c.getf("data.texture_amplitude");
    r.resize = c.geti("data.resize");
    r.source_images = c.str("data.source_images");
    r.source_labels = c.str("data.source_labels");
    r.source_test_images = c.str("data.source_test_images");
    r.source_test_labels = c.str("data.source_test_labels");
    r.target_images = c.str("data.target_images");
    r.target_test_images = c.str("data.target_test_images");
    r.target_test_labels = c.str("data.target_test_labels");
    r.texture_dir = c.str("data.texture_dir");
    r.protocol = c.str("data.protocol");
    if (r.protocol != "none" && r.protocol != "usps")
        throw std::invalid_argument("config: data.protocol must be none or usps");
    r.limit_train = c.geti("data.limit_train");
    r.limit_test = c.geti("data.limit_test");
    if (r.limit_train < 0 || r.limit_test < 0)
        throw std::invalid_argument("config: data limits must be >= 0");

    const int size = r.data_kind == "desk" ? r.desk.image_size : (r.resize > 0 ? r.resize : 0);
    r.model.num_classes = r.desk.num_classes;
    if (size > 0) r.model.image_shape = {3, size, size};
    r.model.d_common = c.geti("model.d_common");
    r.model.d_specific = c.geti("model.d_specific");
    r.model.conv1 = c.geti("model.conv1");
    r.model.conv2 = c.geti("model.conv2");
    r.model.hidden = c.geti("model.hidden");

    r.da.backbone = parse_backbone(c.str("da.backbone"));
    r.da.alpha = c.getf("da.alpha");
    r.da.grl_lambda = c.getf("da.lambda");
    r.da.epochs = c.geti("da.epochs");
    r.da.batch_size = c.geti("da.batch");
    r.da.opt_main = parse_opt(c.str("da.opt"), c.getf("da.lr"));
    r.da.opt_adversary = parse_opt(c.str("da.disc_opt"), c.getf("da.disc_lr"));
    r.cold_start = c.getb("da.cold_start");

    r.di.beta = c.getf("di.beta");
    r.di.epochs = c.geti("di.epochs");
    r.di.batch_size = c.geti("di.batch");
    r.di.opt_main = parse_opt(c.str("di.opt"), c.getf("di.lr"));
    r.di.opt_adversary = parse_opt(c.str("di.adv_opt"), c.getf("di.adv_lr"));
    r.di.update_ratio = c.geti("di.ratio");

    validate_stage(r.da);
    validate_stage(r.di);

    r.pairing = parse_pairing(c.str("synth.pairing"));
    r.synth_count = c.geti("synth.count");
    if (r.synth_count < 0) throw std::invalid_argument("config: synth.count must be >= 0");
    r.policy = parse_pool_policy(c.str("synth.policy"));
    r.no_pool = c.getb("control.no_pool");

    r.echo = c.echo();
    return r;
}

}  // namespace dida
