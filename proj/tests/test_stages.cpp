#include <catch2/catch_amalgamated.hpp>

#include "dida/synthesis.hpp"

using namespace dida;
using Catch::Matchers::ContainsSubstring;

namespace {

ModelConfig toy_cfg(int classes) {
    ModelConfig cfg;
    cfg.image_shape = {3, 8, 8};
    cfg.num_classes = classes;
    cfg.d_common = 8;
    cfg.d_specific = 4;
    cfg.conv1 = 4;
    cfg.conv2 = 8;
    cfg.hidden = 16;
    return cfg;
}

DeskConfig toy_desk(int classes, int train_n, int test_n) {
    DeskConfig dc;
    dc.num_classes = classes;
    dc.train_per_domain = train_n;
    dc.test_per_domain = test_n;
    dc.image_size = 8;
    return dc;
}

std::array<uint64_t, 6> all_hashes(ModelBundle& b) {
    std::array<uint64_t, 6> h{};
    for (size_t i = 0; i < 6; ++i) h[i] = param_hash(b, ModelBundle::kComponents[i]);
    return h;
}

}  // namespace

TEST_CASE("stage config validation") {
    StageConfig cfg;
    CHECK_NOTHROW(validate_stage(cfg));
    SECTION("epochs") {
        cfg.epochs = 0;
        CHECK_THROWS_AS(validate_stage(cfg), std::invalid_argument);
    }
    SECTION("batch") {
        cfg.batch_size = 1;
        CHECK_THROWS_AS(validate_stage(cfg), std::invalid_argument);
    }
    SECTION("lr") {
        cfg.opt_main.lr = 0.0f;
        CHECK_THROWS_AS(validate_stage(cfg), std::invalid_argument);
    }
    SECTION("ratio") {
        cfg.update_ratio = 0;
        CHECK_THROWS_AS(validate_stage(cfg), std::invalid_argument);
    }
    SECTION("weights") {
        cfg.alpha = -0.1f;
        CHECK_THROWS_AS(validate_stage(cfg), std::invalid_argument);
    }
    SECTION("backbone names") {
        CHECK(parse_backbone("dann") == Backbone::Dann);
        CHECK(parse_backbone("coral") == Backbone::Coral);
        CHECK(parse_backbone("mmd") == Backbone::Mmd);
        CHECK(std::string(to_string(Backbone::Mmd)) == "mmd");
        CHECK_THROWS_AS(parse_backbone("gan"), std::invalid_argument);
    }
}

TEST_CASE("adaptation stage fits a separable labeled pool") {
    auto [source, target] = make_desk_benchmark(toy_desk(2, 40, 10), 17);
    auto bundle = ModelBundle::make(toy_cfg(2), 5);
    auto before = all_hashes(bundle);

    StageConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 8;
    cfg.opt_main = {OptKind::Adam, 0.01f};  // sgd cannot escape the 0.02 init at this width
    cfg.alpha = 0.0f;
    cfg.seed = 3;
    StageMetrics m = train_da_stage(bundle, source.train, target.train, cfg, &source.test);

    CHECK(m.final_source_acc.value() == 100.0);
    CHECK(m.final_target_acc.has_value());
    REQUIRE(m.series.at("class").size() == 30);
    REQUIRE(m.series.at("domain").size() == 30);
    REQUIRE(m.series.at("total").size() == 30);
    CHECK(m.series.at("class").back() < m.series.at("class").front());
    CHECK(m.wall_seconds > 0.0);

    auto after = all_hashes(bundle);
    CHECK(after[0] != before[0]);  // common encoder trained
    CHECK(after[1] != before[1]);  // classifier trained
    CHECK(after[3] == before[3]);  // specific encoder untouched
    CHECK(after[4] == before[4]);  // decoder untouched
    CHECK(after[5] == before[5]);  // adversarial classifier untouched
}

TEST_CASE("adaptation backbones update only their own networks") {
    auto [source, target] = make_desk_benchmark(toy_desk(2, 24, 8), 23);
    StageConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 12;
    cfg.alpha = 0.4f;
    cfg.seed = 9;

    SECTION("dann trains the discriminator") {
        cfg.backbone = Backbone::Dann;
        auto bundle = ModelBundle::make(toy_cfg(2), 7);
        auto before = all_hashes(bundle);
        auto m = train_da_stage(bundle, source.train, target.train, cfg);
        auto after = all_hashes(bundle);
        CHECK(after[2] != before[2]);
        CHECK(std::isfinite(m.series.at("domain").front()));
    }
    SECTION("coral leaves the discriminator alone") {
        cfg.backbone = Backbone::Coral;
        auto bundle = ModelBundle::make(toy_cfg(2), 7);
        auto before = all_hashes(bundle);
        auto m = train_da_stage(bundle, source.train, target.train, cfg);
        auto after = all_hashes(bundle);
        CHECK(after[2] == before[2]);
        CHECK(m.series.at("domain").front() >= 0.0);
    }
    SECTION("mmd leaves the discriminator alone") {
        cfg.backbone = Backbone::Mmd;
        auto bundle = ModelBundle::make(toy_cfg(2), 7);
        auto before = all_hashes(bundle);
        auto m = train_da_stage(bundle, source.train, target.train, cfg);
        auto after = all_hashes(bundle);
        CHECK(after[2] == before[2]);
        CHECK(std::isfinite(m.series.at("domain").front()));
    }
    SECTION("a frozen common encoder is re-enabled for adaptation") {
        auto bundle = ModelBundle::make(toy_cfg(2), 7);
        bundle.set_frozen({"common_encoder"}, true);
        auto before = all_hashes(bundle);
        train_da_stage(bundle, source.train, target.train, cfg);
        CHECK(all_hashes(bundle)[0] != before[0]);
    }
    SECTION("bad pools are rejected") {
        auto bundle = ModelBundle::make(toy_cfg(2), 7);
        CHECK_THROWS_AS(train_da_stage(bundle, {}, target.train, cfg), std::invalid_argument);
        CHECK_THROWS_AS(train_da_stage(bundle, source.train, {}, cfg), std::invalid_argument);
        auto broken = source.train;
        broken[5].label.reset();
        CHECK_THROWS_WITH(train_da_stage(bundle, broken, target.train, cfg),
                          ContainsSubstring(broken[5].id));
    }
}

TEST_CASE("pseudo labeling covers every sample with the argmax prediction") {
    auto [source, target] = make_desk_benchmark(toy_desk(3, 18, 6), 29);
    auto bundle = ModelBundle::make(toy_cfg(3), 13);

    auto labeled = pseudo_label(bundle, target.train);
    REQUIRE(labeled.size() == target.train.size());
    auto expect = predict_labels(bundle, target.train);
    for (size_t i = 0; i < labeled.size(); ++i) {
        REQUIRE(labeled[i].label.has_value());
        CHECK(*labeled[i].label == expect[i]);
        CHECK(labeled[i].domain == Domain::Target);
        CHECK(labeled[i].id == target.train[i].id);
        CHECK(same_values(labeled[i].image, target.train[i].image));
    }
    CHECK_THROWS_AS(pseudo_label(bundle, {}), std::invalid_argument);
}

TEST_CASE("disentanglement stage trains the reconstruction path only") {
    auto [source, target] = make_desk_benchmark(toy_desk(2, 30, 8), 31);
    auto bundle = ModelBundle::make(toy_cfg(2), 19);
    auto pool = source.train;
    for (auto& s : pseudo_label(bundle, target.train)) pool.push_back(std::move(s));

    StageConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 16;
    cfg.opt_main = {OptKind::Adam, 0.002f};
    cfg.opt_adversary = {OptKind::SgdMomentum, 0.05f};
    cfg.beta = 0.1f;
    cfg.seed = 4;

    SECTION("an unfrozen common encoder is refused") {
        CHECK_THROWS_AS(train_di_stage(bundle, pool, cfg), std::logic_error);
    }
    SECTION("training reduces reconstruction error and spares the adaptation networks") {
        bundle.set_frozen({"common_encoder"}, true);
        auto before = all_hashes(bundle);
        StageMetrics m = train_di_stage(bundle, pool, cfg, &source.test);
        auto after = all_hashes(bundle);

        CHECK(after[0] == before[0]);  // common encoder untouched
        CHECK(after[1] == before[1]);  // classifier untouched
        CHECK(after[2] == before[2]);  // discriminator untouched
        CHECK(after[3] != before[3]);
        CHECK(after[4] != before[4]);
        CHECK(after[5] != before[5]);

        REQUIRE(m.series.at("recon").size() == 6);
        REQUIRE(m.series.at("adv_class").size() == 6);
        REQUIRE(m.series.at("di_total").size() == 6);
        CHECK(m.series.at("recon").back() < m.series.at("recon").front());
        REQUIRE(m.held_out_recon.has_value());
        CHECK(*m.held_out_recon > 0.0);
        CHECK(*m.held_out_recon ==
              Catch::Approx(reconstruction_mse(bundle, source.test)).margin(1e-12));
    }
    SECTION("unlabeled samples are rejected") {
        bundle.set_frozen({"common_encoder"}, true);
        auto broken = pool;
        broken[3].label.reset();
        CHECK_THROWS_WITH(train_di_stage(bundle, broken, cfg), ContainsSubstring(broken[3].id));
    }
}

TEST_CASE("cross-decoding produces a labeled synthetic pool") {
    auto cfg = toy_cfg(3);
    auto [source, target] = make_desk_benchmark(toy_desk(3, 12, 4), 37);
    auto bundle = ModelBundle::make(cfg, 23);

    SECTION("cyclic pairing walks both pools in order") {
        auto set = synthesize(bundle, source.train, target.train, Pairing::Cyclic, 15, 1, 2);
        REQUIRE(set.samples.size() == 15);
        REQUIRE(set.provenance.size() == 15);
        CHECK(set.iteration == 2);
        const size_t ns = source.train.size(), nt = target.train.size();
        for (int j = 0; j < 15; ++j) {
            const Sample& s = set.samples[static_cast<size_t>(j)];
            const Sample& src = source.train[static_cast<size_t>(j) % ns];
            const Sample& tgt = target.train[static_cast<size_t>(j) % nt];
            CHECK(s.domain == Domain::SyntheticTarget);
            CHECK(s.id == "synth-i2-" + std::to_string(j));
            REQUIRE(s.label.has_value());
            CHECK(*s.label == *src.label);
            CHECK(set.provenance[static_cast<size_t>(j)].first == src.id);
            CHECK(set.provenance[static_cast<size_t>(j)].second == tgt.id);
            CHECK(s.image.shape() == std::vector<int>{3, 8, 8});
            for (int64_t p = 0; p < s.image.size(); ++p) {
                REQUIRE(s.image[p] >= 0.0f);
                REQUIRE(s.image[p] <= 1.0f);
            }
        }
    }
    SECTION("decoded pixels match a direct cross decode") {
        auto set = synthesize(bundle, source.train, target.train, Pairing::Cyclic, 3, 1);
        Var fc = bundle.common_encoder(Var::constant(stack_batch(source.train, {1})));
        Var fs = bundle.specific_encoder(Var::constant(stack_batch(target.train, {1})));
        Tensor direct = decode(bundle, fc, fs).value();  // [1,C,H,W]
        REQUIRE(set.samples[1].image.size() == direct.size());
        for (int64_t p = 0; p < direct.size(); ++p)  // batched gemm is not bitwise equal
            CHECK(set.samples[1].image[p] == Catch::Approx(direct[p]).margin(1e-5));
    }
    SECTION("random pairing is reproducible and seed sensitive") {
        auto a = synthesize(bundle, source.train, target.train, Pairing::Random, 30, 5);
        auto b = synthesize(bundle, source.train, target.train, Pairing::Random, 30, 5);
        auto c = synthesize(bundle, source.train, target.train, Pairing::Random, 30, 6);
        REQUIRE(a.provenance == b.provenance);
        CHECK(a.provenance != c.provenance);
        for (size_t i = 0; i < a.samples.size(); ++i)
            CHECK(same_values(a.samples[i].image, b.samples[i].image));
    }
    SECTION("bad inputs are rejected") {
        CHECK_THROWS_AS(synthesize(bundle, {}, target.train, Pairing::Random, 4, 1),
                        std::invalid_argument);
        CHECK_THROWS_AS(synthesize(bundle, source.train, {}, Pairing::Random, 4, 1),
                        std::invalid_argument);
        CHECK_THROWS_AS(synthesize(bundle, source.train, target.train, Pairing::Random, 0, 1),
                        std::invalid_argument);
        CHECK_THROWS_AS(synthesize(bundle, target.train, source.train, Pairing::Random, 4, 1),
                        std::invalid_argument);  // unlabeled source pool
    }
    SECTION("pairing names parse") {
        CHECK(parse_pairing("random") == Pairing::Random);
        CHECK(parse_pairing("cyclic") == Pairing::Cyclic);
        CHECK_THROWS_AS(parse_pairing("grid"), std::invalid_argument);
    }
}

TEST_CASE("pool refresh policies") {
    SyntheticSet a;
    a.iteration = 1;
    Sample s1;
    s1.image = Tensor::zeros({1, 4, 4});
    s1.label = 0;
    s1.domain = Domain::SyntheticTarget;
    s1.id = "synth-i1-0";
    a.samples.push_back(s1);
    a.provenance.emplace_back("src-0", "tgt-3");

    SyntheticSet b = a;
    b.iteration = 2;
    b.samples[0].id = "synth-i2-0";
    b.provenance[0] = {"src-1", "tgt-2"};

    SyntheticSet r = refresh_pool(a, b, PoolPolicy::Replace);
    CHECK(r.samples.size() == 1);
    CHECK(r.samples[0].id == "synth-i2-0");
    CHECK(r.iteration == 2);

    SyntheticSet ap = refresh_pool(a, b, PoolPolicy::Append);
    REQUIRE(ap.samples.size() == 2);
    CHECK(ap.samples[0].id == "synth-i1-0");
    CHECK(ap.samples[1].id == "synth-i2-0");
    REQUIRE(ap.provenance.size() == 2);
    CHECK(ap.iteration == 2);

    CHECK(parse_pool_policy("replace") == PoolPolicy::Replace);
    CHECK(parse_pool_policy("append") == PoolPolicy::Append);
    CHECK_THROWS_AS(parse_pool_policy("merge"), std::invalid_argument);

    std::string csv = provenance_csv(b);
    CHECK(csv ==
          "synth_id,source_id,target_id,label,iteration\n"
          "synth-i2-0,src-1,tgt-2,0,2\n");
}
