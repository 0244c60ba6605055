#pragma once

#include <chrono>
#include <cmath>
#include <optional>

#include "dida/eval.hpp"

namespace dida {

enum class Backbone { Dann, Coral, Mmd };

inline const char* to_string(Backbone b) {
    switch (b) {
        case Backbone::Dann: return "dann";
        case Backbone::Coral: return "coral";
        case Backbone::Mmd: return "mmd";
    }
    return "?";
}

inline Backbone parse_backbone(const std::string& s) {
    if (s == "dann") return Backbone::Dann;
    if (s == "coral") return Backbone::Coral;
    if (s == "mmd") return Backbone::Mmd;
    throw std::invalid_argument("backbone: unknown '" + s + "' (expected dann, coral or mmd)");
}

/// Hyperparameters for one training stage. opt_main drives the feature path
/// (common extractor + classifier during adaptation, specific extractor +
/// decoder during disentanglement); opt_adversary drives the opposing head
/// (domain discriminator, adversarial classifier).
struct StageConfig {
    int epochs = 15;
    int batch_size = 64;
    OptConfig opt_main{OptKind::SgdMomentum, 0.05f};
    OptConfig opt_adversary{OptKind::SgdMomentum, 0.05f};
    Backbone backbone = Backbone::Dann;
    float alpha = 0.1f;       // weight of the domain alignment term (mmd runs want ~1.0)
    float beta = 0.05f;       // weight of the adversarial term
    float grl_lambda = 1.0f;  // gradient scale through the reversal
    int update_ratio = 1;     // adversary steps per extractor step
    uint64_t seed = 0;
};

inline void validate_stage(const StageConfig& cfg) {
    if (cfg.epochs < 1) throw std::invalid_argument("stage: epochs must be >= 1");
    if (cfg.batch_size < 2) throw std::invalid_argument("stage: batch_size must be >= 2");
    if (!(cfg.opt_main.lr > 0.0f) || !(cfg.opt_adversary.lr > 0.0f))
        throw std::invalid_argument("stage: learning rates must be positive");
    if (cfg.update_ratio < 1) throw std::invalid_argument("stage: update_ratio must be >= 1");
    if (!(cfg.alpha >= 0.0f) || !(cfg.beta >= 0.0f) || !(cfg.grl_lambda >= 0.0f))
        throw std::invalid_argument("stage: alpha, beta and grl_lambda must be non-negative");
}

struct StageMetrics {
    std::map<std::string, std::vector<double>> series;  // one entry per epoch
    std::optional<double> final_source_acc;
    std::optional<double> final_target_acc;
    std::optional<double> held_out_recon;
    double wall_seconds = 0.0;
};

namespace detail {

inline void require_labeled(const std::vector<Sample>& pool, const char* what) {
    for (const Sample& s : pool)
        if (!s.label)
            throw std::invalid_argument(std::string(what) + ": unlabeled sample '" + s.id + "'");
}

inline std::vector<int> domain_sides(const std::vector<Sample>& samples, const std::vector<int>& idx) {
    // the discriminator's binary target: source = 1, anything target-like = 0
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx)
        out.push_back(samples[static_cast<size_t>(i)].domain == Domain::Source ? 1 : 0);
    return out;
}

/// Random same-size companion batch from the unlabeled pool.
inline std::vector<int> draw_companions(size_t pool_size, size_t count, Rng& rng) {
    std::vector<int> idx(count);
    for (size_t i = 0; i < count; ++i)
        idx[i] = static_cast<int>(rng.index(static_cast<int64_t>(pool_size)));
    return idx;
}

inline void check_finite(double v, const char* stage, int epoch, int batch, const LossValue& lv) {
    if (std::isfinite(v)) return;
    std::string msg = std::string(stage) + ": non-finite loss at epoch " + std::to_string(epoch) +
                      ", batch " + std::to_string(batch);
    for (const auto& [k, t] : lv.terms) msg += ", " + k + "=" + std::to_string(t);
    throw std::runtime_error(msg);
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace detail

/// Domain adaptation pass: the common extractor and classifier minimize the
/// class term while the chosen backbone aligns labeled-pool and target-pool
/// common features. Only E_c, C and (for dann) D are updated.
inline StageMetrics train_da_stage(ModelBundle& bundle, const std::vector<Sample>& labeled_pool,
                                   const std::vector<Sample>& target_pool, const StageConfig& cfg,
                                   const std::vector<Sample>* target_eval = nullptr) {
    validate_stage(cfg);
    if (labeled_pool.empty()) throw std::invalid_argument("da: empty labeled pool");
    if (target_pool.empty()) throw std::invalid_argument("da: empty target pool");
    detail::require_labeled(labeled_pool, "da");
    const auto t0 = std::chrono::steady_clock::now();

    bundle.set_frozen({"common_encoder", "classifier", "domain_discriminator"}, false);
    std::vector<Parameter*> params = bundle.params_of("common_encoder");
    for (Parameter* p : bundle.params_of("classifier")) params.push_back(p);
    std::vector<Parameter*> disc_params;
    if (cfg.backbone == Backbone::Dann) disc_params = bundle.params_of("domain_discriminator");
    Optimizer opt(cfg.opt_main);
    Optimizer opt_disc(cfg.opt_adversary);

    Rng companion_rng(derive_seed(cfg.seed, "da-companions"));
    StageMetrics m;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<double> class_hist, domain_hist, total_hist;
        auto batches = batch_iter(static_cast<int>(labeled_pool.size()), cfg.batch_size,
                                  derive_seed(cfg.seed, "da-epoch", epoch));
        int batch_no = 0;
        for (const auto& lab_idx : batches) {
            Tensor xs = stack_batch(labeled_pool, lab_idx);
            std::vector<int> ys = labels_of(labeled_pool, lab_idx);

            std::vector<int> tgt_idx =
                detail::draw_companions(target_pool.size(), lab_idx.size(), companion_rng);
            Tensor xt = stack_batch(target_pool, tgt_idx);

            Var fc_lab = bundle.common_encoder(Var::constant(xs));
            Var fc_tgt = bundle.common_encoder(Var::constant(xt));
            Var l_class = class_nll(classify(bundle, fc_lab), ys);

            std::vector<int> sides = detail::domain_sides(labeled_pool, lab_idx);
            std::vector<int> tgt_sides(tgt_idx.size(), 0);
            sides.insert(sides.end(), tgt_sides.begin(), tgt_sides.end());

            Var l_domain;
            if (cfg.backbone == Backbone::Dann) {
                // discriminator step on pinned features, then the encoder's
                // confusion gradient through the reversal with D pinned
                Var dp_fixed = domain_prob(bundle, detach(concat_rows(fc_lab, fc_tgt)), 0.0f);
                Var l_disc = dann_domain_loss(dp_fixed, sides);
                detail::check_finite(l_disc.scalar64(), "da-disc", epoch, batch_no, {});
                backward(l_disc);
                opt_disc.step(disc_params);

                for (Parameter* p : disc_params) p->set_trainable(false);
                Var dp = domain_prob(bundle, concat_rows(fc_lab, fc_tgt), cfg.grl_lambda);
                l_domain = dann_domain_loss(dp, sides);
                CompositeLoss total = da_total(l_class, l_domain, cfg.alpha);
                detail::check_finite(total.value.value, "da", epoch, batch_no, total.value);
                backward(total.total);
                opt.step(params);
                for (Parameter* p : disc_params) p->set_trainable(true);
                domain_hist.push_back(l_disc.scalar64());
                class_hist.push_back(total.value.terms.at("class"));
                total_hist.push_back(total.value.value);
            } else {
                if (cfg.backbone == Backbone::Coral) {
                    l_domain = coral_loss(fc_lab, fc_tgt);
                } else {
                    std::vector<float> bw =
                        median_heuristic_bandwidths(fc_lab.value(), fc_tgt.value());
                    l_domain = mmd_loss(fc_lab, fc_tgt, bw);
                }
                CompositeLoss total = da_total(l_class, l_domain, cfg.alpha);
                detail::check_finite(total.value.value, "da", epoch, batch_no, total.value);
                backward(total.total);
                opt.step(params);
                domain_hist.push_back(total.value.terms.at("domain"));
                class_hist.push_back(total.value.terms.at("class"));
                total_hist.push_back(total.value.value);
            }

            ++batch_no;
        }
        m.series["class"].push_back(detail::mean_of(class_hist));
        m.series["domain"].push_back(detail::mean_of(domain_hist));
        m.series["total"].push_back(detail::mean_of(total_hist));
    }

    {
        std::vector<int> pred = predict_labels(bundle, labeled_pool);
        int64_t hits = 0;
        for (size_t i = 0; i < labeled_pool.size(); ++i)
            if (pred[i] == *labeled_pool[i].label) ++hits;
        m.final_source_acc = 100.0 * static_cast<double>(hits) / static_cast<double>(labeled_pool.size());
    }
    if (target_eval && !target_eval->empty()) m.final_target_acc = target_accuracy(bundle, *target_eval);
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return m;
}

/// Labels every target sample with the classifier's argmax prediction. No
/// confidence filtering: the output size always equals the input size.
inline std::vector<Sample> pseudo_label(const ModelBundle& bundle,
                                        const std::vector<Sample>& target_pool) {
    if (target_pool.empty()) throw std::invalid_argument("pseudo_label: empty pool");
    std::vector<int> pred = predict_labels(bundle, target_pool);
    std::vector<Sample> out = target_pool;
    for (size_t i = 0; i < out.size(); ++i) out[i].label = pred[i];
    return out;
}

/// Mean reconstruction error of decode(E_c(x), E_s(x)) over a sample list,
/// forward only.
inline double reconstruction_mse(const ModelBundle& bundle, const std::vector<Sample>& samples,
                                 int chunk = 128) {
    if (samples.empty()) throw std::invalid_argument("recon: empty sample set");
    double acc = 0.0;
    for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(chunk)) {
        const size_t end = std::min(samples.size(), start + static_cast<size_t>(chunk));
        std::vector<int> idx(end - start);
        for (size_t i = start; i < end; ++i) idx[i - start] = static_cast<int>(i);
        Tensor x = stack_batch(samples, idx);
        Var xv = Var::constant(x);
        FeaturePair fp = encode(bundle, xv);
        Var xhat = decode(bundle, fp.common, fp.specific);
        acc += recon_mse(xv, xhat).scalar64() * static_cast<double>(idx.size());
    }
    return acc / static_cast<double>(samples.size());
}

/// Disentanglement pass over pseudo-labeled data. The adversary minimizes its
/// class loss on the specific code; the specific extractor and decoder then
/// minimize reconstruction while maximizing that same adversarial term. The
/// common extractor must arrive frozen and leaves bitwise unchanged, along
/// with the classifier and discriminator.
inline StageMetrics train_di_stage(ModelBundle& bundle, const std::vector<Sample>& all_samples,
                                   const StageConfig& cfg,
                                   const std::vector<Sample>* heldout = nullptr) {
    validate_stage(cfg);
    if (all_samples.empty()) throw std::invalid_argument("di: empty sample pool");
    detail::require_labeled(all_samples, "di");
    if (!bundle.is_frozen("common_encoder"))
        throw std::logic_error("di: common encoder must be frozen before disentanglement");
    const auto t0 = std::chrono::steady_clock::now();

    const uint64_t ec_hash = param_hash(bundle, "common_encoder");
    const uint64_t c_hash = param_hash(bundle, "classifier");
    const uint64_t d_hash = param_hash(bundle, "domain_discriminator");

    bundle.set_frozen({"specific_encoder", "decoder", "adversarial_classifier"}, false);
    std::vector<Parameter*> eg_params = bundle.params_of("specific_encoder");
    for (Parameter* p : bundle.params_of("decoder")) eg_params.push_back(p);
    std::vector<Parameter*> a_params = bundle.params_of("adversarial_classifier");
    Optimizer opt_eg(cfg.opt_main);
    Optimizer opt_a(cfg.opt_adversary);

    StageMetrics m;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<double> adv_hist, rec_hist, tot_hist;
        auto batches = batch_iter(static_cast<int>(all_samples.size()), cfg.batch_size,
                                  derive_seed(cfg.seed, "di-epoch", epoch));
        int batch_no = 0;
        for (const auto& idx : batches) {
            Tensor x = stack_batch(all_samples, idx);
            std::vector<int> ys = labels_of(all_samples, idx);
            Var xv = Var::constant(x);
            Var fc = detach(bundle.common_encoder(xv));

            // (a) adversary reads the specific code as a fixed input
            for (int r = 0; r < cfg.update_ratio; ++r) {
                Var fs_fixed = detach(bundle.specific_encoder(xv));
                Var l_adv = class_nll(adversary_classify(bundle, fs_fixed), ys);
                detail::check_finite(l_adv.scalar64(), "di-adversary", epoch, batch_no, {});
                backward(l_adv);
                opt_a.step(a_params);
                if (r + 1 == cfg.update_ratio) adv_hist.push_back(l_adv.scalar64());
            }

            // (b) extractor and decoder step; adversary weights pinned
            for (Parameter* p : a_params) p->set_trainable(false);
            Var fs = bundle.specific_encoder(xv);
            Var xhat = decode(bundle, fc, fs);
            Var l_rec = recon_mse(xv, xhat);
            Var l_aclass = class_nll(adversary_classify(bundle, fs), ys);
            CompositeLoss total = di_total(l_rec, l_aclass, cfg.beta);
            detail::check_finite(total.value.value, "di", epoch, batch_no, total.value);
            backward(total.total);
            opt_eg.step(eg_params);
            for (Parameter* p : a_params) p->set_trainable(true);

            rec_hist.push_back(total.value.terms.at("recon"));
            tot_hist.push_back(total.value.value);
            ++batch_no;
        }
        m.series["adv_class"].push_back(detail::mean_of(adv_hist));
        m.series["recon"].push_back(detail::mean_of(rec_hist));
        m.series["di_total"].push_back(detail::mean_of(tot_hist));
    }

    if (param_hash(bundle, "common_encoder") != ec_hash ||
        param_hash(bundle, "classifier") != c_hash ||
        param_hash(bundle, "domain_discriminator") != d_hash)
        throw std::logic_error("di: adaptation-stage parameters changed during disentanglement");

    if (heldout && !heldout->empty()) m.held_out_recon = reconstruction_mse(bundle, *heldout);
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return m;
}

}  // namespace dida
