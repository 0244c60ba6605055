#include <catch2/catch_amalgamated.hpp>

#include "dida/gradcheck.hpp"
#include "dida/layers.hpp"

using namespace dida;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

/// Direct convolution, no im2col — independent oracle for conv2d.
Tensor conv2d_direct(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int OC = w.dim(0), K = w.dim(2), P = (K - 1) / 2;
    const int OH = (H + 2 * P - K) / stride + 1, OW = (W + 2 * P - K) / stride + 1;
    Tensor out({B, OC, OH, OW});
    for (int bi = 0; bi < B; ++bi)
        for (int oc = 0; oc < OC; ++oc)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = b[oc];
                    for (int c = 0; c < C; ++c)
                        for (int ki = 0; ki < K; ++ki)
                            for (int kj = 0; kj < K; ++kj) {
                                const int ih = oh * stride - P + ki, iw = ow * stride - P + kj;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += static_cast<double>(
                                           x[((static_cast<int64_t>(bi) * C + c) * H + ih) * W + iw]) *
                                       w[((static_cast<int64_t>(oc) * C + c) * K + ki) * K + kj];
                            }
                    out[((static_cast<int64_t>(bi) * OC + oc) * OH + oh) * OW + ow] =
                        static_cast<float>(acc);
                }
    return out;
}

}  // namespace

TEST_CASE("gradient reversal forward is the identity") {
    Var x = Var::leaf(Tensor({2}, {1.5f, -2.0f}), true);
    Var y = gradient_reversal(x, 0.3f);
    CHECK(y.value()[0] == 1.5f);
    CHECK(y.value()[1] == -2.0f);
}

TEST_CASE("gradient reversal scales upstream gradient by -lambda") {
    Var x = Var::leaf(Tensor({1}, {3.0f}), true);
    Var y = scale(gradient_reversal(x, 0.5f), 2.0f);  // upstream gradient of GRL output is 2
    backward(y);
    CHECK(x.grad()[0] == Catch::Approx(-1.0).margin(1e-7));
}

TEST_CASE("gradient reversal with lambda 0 zeroes the passed-down gradient") {
    Var x = Var::leaf(Tensor({3}, {1.0f, -2.0f, 0.5f}), true);
    backward(sum_all(gradient_reversal(x, 0.0f)));
    for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == 0.0f);
}

TEST_CASE("gradient reversal rejects negative lambda") {
    Var x = Var::leaf(Tensor({1}, {1.0f}), true);
    CHECK_THROWS_AS(gradient_reversal(x, -0.1f), std::invalid_argument);
}

TEST_CASE("double reversal with lambda 1 matches no reversal bitwise") {
    Rng rng(11);
    Tensor data = random_tensor({4, 3}, rng);
    auto run = [&](bool reversed) {
        Var x = Var::leaf(data, true);
        Var h = reversed ? gradient_reversal(gradient_reversal(x, 1.0f), 1.0f) : x;
        backward(mean_all(mul(h, h)));
        return std::vector<float>(x.grad().values().begin(), x.grad().values().end());
    };
    auto plain = run(false), twice = run(true);
    for (size_t i = 0; i < plain.size(); ++i)
        CHECK(std::abs(plain[i] - twice[i]) <= 1e-7f);
}

TEST_CASE("loss through GRL has exactly negated gradients") {
    Rng rng(5);
    Tensor data = random_tensor({5}, rng);
    auto grads = [&](bool grl) {
        Var x = Var::leaf(data, true);
        Var h = grl ? gradient_reversal(x, 1.0f) : x;
        backward(sum_all(mul(h, h)));
        return std::vector<float>(x.grad().values().begin(), x.grad().values().end());
    };
    auto base = grads(false), rev = grads(true);
    for (size_t i = 0; i < base.size(); ++i) CHECK(rev[i] == -base[i]);
}

TEST_CASE("relu") {
    Var x = Var::leaf(Tensor({3}, {-1.0f, 0.0f, 2.0f}), false);
    Var y = relu(x);
    CHECK(y.value()[0] == 0.0f);
    CHECK(y.value()[1] == 0.0f);
    CHECK(y.value()[2] == 2.0f);
}

TEST_CASE("softmax of equal logits is uniform") {
    Var x = Var::leaf(Tensor({1, 2}, {0.0f, 0.0f}), false);
    Var y = softmax_rows(x);
    CHECK(y.value()[0] == Catch::Approx(0.5));
    CHECK(y.value()[1] == Catch::Approx(0.5));
}

TEST_CASE("softmax rows are distributions") {
    Rng rng(3);
    Tensor logits = random_tensor({8, 10}, rng, -5.0f, 5.0f);
    Var y = softmax_rows(Var::leaf(logits, false));
    for (int i = 0; i < 8; ++i) {
        double s = 0.0;
        for (int j = 0; j < 10; ++j) {
            float p = y.value()[static_cast<int64_t>(i) * 10 + j];
            CHECK(p > 0.0f);
            CHECK(p < 1.0f);
            s += p;
        }
        CHECK(s == Catch::Approx(1.0).margin(1e-5));
    }
}

TEST_CASE("dense with identity weights and zero bias is the identity") {
    Rng rng(1);
    DenseLayer l = DenseLayer::make("id", 3, 3, rng);
    std::fill(l.w.value().values().begin(), l.w.value().values().end(), 0.0f);
    for (int i = 0; i < 3; ++i) l.w.value()[static_cast<int64_t>(i) * 3 + i] = 1.0f;
    Tensor in = random_tensor({2, 3}, rng);
    Var y = l(Var::leaf(in, false));
    for (int64_t i = 0; i < in.size(); ++i) CHECK(y.value()[i] == Catch::Approx(in[i]));
}

TEST_CASE("shape mismatches are reported with both shapes") {
    Rng rng(1);
    DenseLayer l = DenseLayer::make("d", 4, 2, rng);
    try {
        l(Var::leaf(Tensor({2, 3}), false));
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find('4') != std::string::npos);
    }
    CHECK_THROWS_AS(add(Var::leaf(Tensor({2, 3})), Var::leaf(Tensor({3, 2}))), std::invalid_argument);
}

TEST_CASE("conv2d matches the direct-convolution oracle") {
    Rng rng(21);
    for (int stride : {1, 2}) {
        for (int k : {3, 5}) {
            Tensor x = random_tensor({2, 3, 8, 8}, rng);
            Tensor w = random_tensor({4, 3, k, k}, rng);
            Tensor b = random_tensor({4}, rng);
            Var out = conv2d(Var::leaf(x), Var::leaf(w), Var::leaf(b), stride);
            Tensor want = conv2d_direct(x, w, b, stride);
            REQUIRE(out.value().shape() == want.shape());
            for (int64_t i = 0; i < want.size(); ++i)
                CHECK(out.value()[i] == Catch::Approx(want[i]).margin(1e-4));
        }
    }
}

TEST_CASE("conv2d rejects unsupported geometry") {
    Var x = Var::leaf(Tensor({1, 3, 8, 8}));
    CHECK_THROWS_AS(conv2d(x, Var::leaf(Tensor({4, 3, 4, 4})), Var::leaf(Tensor({4})), 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, Var::leaf(Tensor({4, 2, 3, 3})), Var::leaf(Tensor({4})), 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, Var::leaf(Tensor({4, 3, 3, 3})), Var::leaf(Tensor({4})), 3),
                    std::invalid_argument);
}

TEST_CASE("upsample2x repeats pixels and sum-pools gradients") {
    Tensor x({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    Var v = Var::leaf(x, true);
    Var up = upsample2x(v);
    REQUIRE(up.value().shape() == std::vector<int>{1, 1, 4, 4});
    // rows: [1 1 2 2], [1 1 2 2], [3 3 4 4], [3 3 4 4]
    CHECK(up.value()[0] == 1.0f);
    CHECK(up.value()[2] == 2.0f);
    CHECK(up.value()[5] == 1.0f);
    CHECK(up.value()[10] == 4.0f);
    backward(sum_all(up));
    for (int i = 0; i < 4; ++i) CHECK(v.grad()[i] == 4.0f);
}

TEST_CASE("SGD without momentum applies w -= lr * g") {
    Parameter w("w", Tensor({1}, {1.0f}));
    Var loss = scale(w.var, 2.0f);  // dL/dw = 2
    backward(loss);
    Optimizer opt({.kind = OptKind::SgdMomentum, .lr = 0.1f, .momentum = 0.0f});
    std::vector<Parameter*> ps{&w};
    opt.step(ps);
    CHECK(w.value()[0] == Catch::Approx(0.8));
    CHECK((!w.has_grad() || w.grad()[0] == 0.0f));  // gradients zeroed after step
    CHECK(opt.step_count() == 1);
}

TEST_CASE("frozen parameters receive zero updates") {
    Parameter w("w", Tensor({2}, {1.0f, -1.0f}));
    w.set_trainable(false);
    Parameter v("v", Tensor({2}, {0.5f, 0.5f}));
    Var loss = sum_all(add(mul(w.var, w.var), mul(v.var, v.var)));
    backward(loss);
    Optimizer opt({.kind = OptKind::SgdMomentum, .lr = 0.1f, .momentum = 0.0f});
    std::vector<Parameter*> ps{&w, &v};
    opt.step(ps);
    CHECK(w.value()[0] == 1.0f);
    CHECK(w.value()[1] == -1.0f);
    CHECK(v.value()[0] != 0.5f);
}

TEST_CASE("zero gradient leaves SGD weights unchanged") {
    Parameter w("w", Tensor({1}, {2.5f}));
    w.var.node()->ensure_grad();
    Optimizer opt({.kind = OptKind::SgdMomentum, .lr = 0.1f, .momentum = 0.0f});
    std::vector<Parameter*> ps{&w};
    opt.step(ps);
    CHECK(w.value()[0] == 2.5f);
}

TEST_CASE("uninitialized gradient is reported by name") {
    Parameter w("enc.w", Tensor({2}));
    Optimizer opt({.kind = OptKind::Adam, .lr = 0.001f});
    std::vector<Parameter*> ps{&w};
    try {
        opt.step(ps);
        FAIL("expected throw");
    } catch (const std::logic_error& e) {
        CHECK(std::string(e.what()).find("enc.w") != std::string::npos);
    }
}

TEST_CASE("Adam moves against the gradient") {
    Parameter w("w", Tensor({1}, {1.0f}));
    Optimizer opt({.kind = OptKind::Adam, .lr = 0.01f});
    std::vector<Parameter*> ps{&w};
    for (int i = 0; i < 5; ++i) {
        backward(mul(w.var, w.var));
        opt.step(ps);
    }
    CHECK(w.value()[0] < 1.0f);
    CHECK(opt.step_count() == 5);
}

TEST_CASE("finite differences confirm the sum-of-squares gradient") {
    Rng rng(33);
    Parameter w("w", random_tensor({6}, rng));
    std::vector<Parameter*> ps{&w};
    auto loss = [&] { return sum_all(mul(w.var, w.var)); };
    CHECK(finite_diff_check(loss, ps, 1e-3f) < 1e-3);
    // analytic gradient is exactly 2w
    backward(loss());
    for (int i = 0; i < 6; ++i) CHECK(w.grad()[i] == Catch::Approx(2.0f * w.value()[i]).margin(1e-6));
}

TEST_CASE("constant loss has zero gradient error") {
    Parameter w("w", Tensor({3}, {1.0f, 2.0f, 3.0f}));
    std::vector<Parameter*> ps{&w};
    auto loss = [&] { return sub(sum_all(w.var), sum_all(w.var)); };
    CHECK(finite_diff_check(loss, ps, 1e-3f) < 1e-6);
}

TEST_CASE("finite differences across composed graph ops") {
    Rng rng(44);
    Parameter a("a", random_tensor({3, 4}, rng));
    Parameter b("b", random_tensor({4, 2}, rng));
    Parameter c("c", random_tensor({3, 2}, rng));
    std::vector<Parameter*> ps{&a, &b, &c};
    auto loss = [&] {
        Var h = matmul(a.var, b.var);
        Var s = sigmoid(concat_cols(h, mul(c.var, c.var)));
        Var t = transpose(slice_rows(s, 1, 2));
        return mean_all(mul(t, t));
    };
    CHECK(finite_diff_check(loss, ps, 1e-2f) < 1e-3);
}

TEST_CASE("finite differences through conv, upsample and dense") {
    Rng rng(55);
    Conv2dLayer conv = Conv2dLayer::make("c", 2, 3, 3, 2, rng);
    DenseLayer head = DenseLayer::make("h", 3 * 4 * 4, 4, rng);
    Tensor img = random_tensor({2, 2, 4, 4}, rng, 0.0f, 1.0f);
    std::vector<Parameter*> ps{&conv.w, &conv.b, &head.w, &head.b};
    auto loss = [&] {
        Var h = conv(upsample2x(Var::leaf(img, false)));  // [2,3,4,4]
        Var out = head(flatten(h));
        return mean_all(mul(out, out));
    };
    CHECK(finite_diff_check(loss, ps, 1e-3f) < 1e-3);
}

TEST_CASE("finite differences through softmax") {
    Rng rng(56);
    Parameter logits("logits", random_tensor({3, 5}, rng, -2.0f, 2.0f));
    std::vector<Parameter*> ps{&logits};
    Tensor pick({3, 5});
    pick[2] = 1.0f;
    pick[6] = 1.0f;
    pick[14] = 1.0f;
    auto loss = [&] { return sum_all(mul(softmax_rows(logits.var), Var::constant(pick))); };
    // float32 probs bound the attainable agreement; a wrong backward would sit near 1
    CHECK(finite_diff_check(loss, ps, 1e-3f) < 1e-2);
}

TEST_CASE("same seed gives bitwise-identical init and update sequence") {
    auto build = [](uint64_t seed) {
        Rng rng(seed);
        DenseLayer l = DenseLayer::make("d", 5, 3, rng);
        Rng data_rng(99);
        Tensor x = random_tensor({4, 5}, data_rng);
        Optimizer opt({.kind = OptKind::SgdMomentum, .lr = 0.05f});
        std::vector<Parameter*> ps = l.params();
        for (int step = 0; step < 3; ++step) {
            Var out = l(Var::leaf(x, false));
            backward(mean_all(mul(out, out)));
            opt.step(ps);
        }
        return std::vector<float>(l.w.value().values().begin(), l.w.value().values().end());
    };
    auto w1 = build(7), w2 = build(7);
    REQUIRE(w1.size() == w2.size());
    for (size_t i = 0; i < w1.size(); ++i) CHECK(w1[i] == w2[i]);
    auto w3 = build(8);
    bool any_diff = false;
    for (size_t i = 0; i < w1.size(); ++i) any_diff = any_diff || w1[i] != w3[i];
    CHECK(any_diff);
}

TEST_CASE("backward requires a scalar root") {
    Var x = Var::leaf(Tensor({2}, {1.0f, 2.0f}), true);
    CHECK_THROWS_AS(backward(x), std::logic_error);
}

TEST_CASE("detach blocks gradient flow") {
    Parameter w("w", Tensor({2}, {1.0f, 2.0f}));
    Var d = detach(mul(w.var, w.var));
    Var loss = sum_all(mul(d, w.var));
    backward(loss);
    // only the direct factor contributes: dL/dw = d (not 3w^2)
    CHECK(w.grad()[0] == Catch::Approx(1.0f));
    CHECK(w.grad()[1] == Catch::Approx(4.0f));
}
