// Hand-computed values and finite-difference oracles. These pin the math
// down before anything heavier (training runs, acceptance scenarios) is
// allowed to mean anything: every gradient path and every regularizer value
// is checked against an independent reference here.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "attack/attacks.h"
#include "core/rng.h"
#include "core/tensor.h"
#include "diag/diagnostics.h"
#include "fat/finetune.h"
#include "fat/regularizers.h"
#include "nn/model.h"
#include "nn/optim.h"

using namespace fatlab;

namespace {

// Small deterministic model + batch used by every gradient check.
struct Fixture {
    nn::Model m;
    Tensor x;
    std::vector<int> y;

    explicit Fixture(uint64_t seed = 7, int n = 4, int classes = 3)
        : m(3, 8, 8, classes, {4, 8}) {
        Rng rng(seed);
        m.init_params(rng);
        x.reshape_alloc({n, 3, 8, 8});
        for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(0.0f, 1.0f);
        y.resize(static_cast<size_t>(n));
        for (auto& v : y) v = static_cast<int>(rng.next_index(classes));
    }

    double loss() {
        nn::FwdCache c;
        m.forward(x, nn::Mode::Train, false, c);
        return nn::cross_entropy(c.logits, y, nullptr);
    }
};

// independent scalar reference for the outlier penalty of one weight list
double ref_outlier(const std::vector<double>& w, double eta, double alpha, bool signed_dev) {
    double wbar = 0;
    for (double v : w) wbar += std::abs(v);
    wbar /= static_cast<double>(w.size());
    double loss = 0;
    for (double v : w) {
        double d = std::abs(v) - wbar;
        if (!signed_dev) d = std::abs(d);
        loss += std::exp(d / (wbar + alpha) - eta) * d;
    }
    return loss;
}

std::vector<std::vector<double>> conv_weight_lists(const nn::Model& m) {
    std::vector<std::vector<double>> out;
    for (const auto* p : m.params()) {
        if (!p->is_conv_weight) continue;
        std::vector<double> w(static_cast<size_t>(p->w.numel()));
        for (int64_t i = 0; i < p->w.numel(); ++i) w[static_cast<size_t>(i)] = p->w[i];
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace

TEST_CASE("cross entropy hand values") {
    Tensor logits({1, 2});
    std::vector<int> y = {0};
    CHECK(nn::cross_entropy(logits, y, nullptr) == doctest::Approx(0.6931471805599453).epsilon(1e-9));

    Tensor l3({1, 3});
    l3[0] = 1.0f;
    l3[1] = 2.0f;
    l3[2] = 3.0f;
    std::vector<int> y3 = {2};
    // -3 + log(e + e^2 + e^3)
    double expect = -3.0 + std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    CHECK(nn::cross_entropy(l3, y3, nullptr) == doctest::Approx(expect).epsilon(1e-7));

    // dlogits = (softmax - onehot)/N
    Tensor dl;
    nn::cross_entropy(logits, y, &dl);
    CHECK(dl[0] == doctest::Approx(-0.5).epsilon(1e-6));
    CHECK(dl[1] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("cyclic lr triangular shape") {
    CHECK(nn::cyclic_lr(0.0, 10, 0.2) == doctest::Approx(0.0));
    CHECK(nn::cyclic_lr(4.0, 10, 0.2) == doctest::Approx(0.2));     // peak at 40%
    CHECK(nn::cyclic_lr(2.0, 10, 0.2) == doctest::Approx(0.1));     // halfway up
    CHECK(nn::cyclic_lr(7.0, 10, 0.2) == doctest::Approx(0.1));     // halfway down
    CHECK(nn::cyclic_lr(10.0, 10, 0.2) == doctest::Approx(0.0));
    CHECK(nn::cyclic_lr(3.0, 10, 0.5, 0.3) == doctest::Approx(0.5));  // custom peak
}

TEST_CASE("sgd momentum hand steps") {
    nn::Param p;
    p.w.reshape_alloc({1});
    p.init_slots();
    p.w[0] = 1.0f;
    p.grad[0] = 2.0f;
    std::vector<nn::Param*> ps = {&p};
    nn::SgdMomentum opt{0.9};
    opt.step(ps, 0.1);
    CHECK(p.w[0] == doctest::Approx(0.8).epsilon(1e-6));   // v=2, w=1-0.2
    p.grad[0] = 1.0f;
    opt.step(ps, 0.1);
    CHECK(p.w[0] == doctest::Approx(0.52).epsilon(1e-6));  // v=2.8, w=0.8-0.28

    p.trainable = false;
    p.grad[0] = 5.0f;
    opt.step(ps, 0.1);
    CHECK(p.w[0] == doctest::Approx(0.52).epsilon(1e-6));  // frozen layer untouched
}

TEST_CASE("fgsm_rs_delta matches a scalar reference loop exactly") {
    Rng rng(3);
    const int64_t n = 257;
    Tensor d0({n}), grad({n}), d_sign, d;
    for (int64_t i = 0; i < n; ++i) {
        d0[i] = rng.uniform(-0.1f, 0.1f);
        // include exact zeros to pin sign(0) = 0
        grad[i] = (i % 5 == 0) ? 0.0f : rng.normal();
    }
    const float eps = 0.0784313753f, xi = 0.0627451017f;
    attack::fgsm_rs_delta(d0, grad, eps, xi, &d_sign, &d);
    REQUIRE(d.numel() == n);
    for (int64_t i = 0; i < n; ++i) {
        float s = grad[i] > 0 ? 1.0f : (grad[i] < 0 ? -1.0f : 0.0f);
        float ref = d0[i] + eps * s;
        if (ref > xi) ref = xi;
        if (ref < -xi) ref = -xi;
        CHECK(d_sign[i] == s);
        CHECK(d[i] == ref);  // exact float32 equality
    }
}

TEST_CASE("mep buffer update matches scalar loop exactly") {
    Rng rng(4);
    const int64_t n = 64;
    Tensor rows({n}), signs({n});
    for (int64_t i = 0; i < n; ++i) {
        rows[i] = rng.uniform(-0.06f, 0.06f);
        signs[i] = (i % 7 == 0) ? 0.0f : (rng.next_double() < 0.5 ? -1.0f : 1.0f);
    }
    Tensor ref = rows;
    const float mu = 0.9f, eps = 0.0784313753f, xi = 0.0627451017f;
    attack::mep_buffer_update(rows, signs, mu, eps, xi);
    for (int64_t i = 0; i < n; ++i) {
        float v = mu * ref[i] + eps * signs[i];
        if (v > xi) v = xi;
        if (v < -xi) v = -xi;
        CHECK(rows[i] == v);
    }
}

TEST_CASE("init noise stays inside the budget") {
    Rng rng(5);
    const float xi = 16.0f / 255.0f;
    Tensor d({4, 3, 8, 8});
    attack::draw_init_noise(rng, attack::InitNoise::Uniform, xi, &d);
    for (int64_t i = 0; i < d.numel(); ++i) CHECK(std::abs(d[i]) <= xi);
    attack::draw_init_noise(rng, attack::InitNoise::GaussianClip, xi, &d);
    for (int64_t i = 0; i < d.numel(); ++i) CHECK(std::abs(d[i]) <= xi);
}

TEST_CASE("model parameter gradients match central finite differences") {
    Fixture f;
    // analytic gradients
    f.m.zero_grads();
    nn::FwdCache c;
    f.m.forward(f.x, nn::Mode::Train, false, c);
    Tensor dl;
    nn::cross_entropy(c.logits, f.y, &dl);
    f.m.backward(c, dl, true, nullptr);

    Rng pick(11);
    int checked = 0;
    for (auto* p : f.m.params()) {
        const int64_t n = p->w.numel();
        const int64_t samples = std::min<int64_t>(n, 12);
        for (int64_t s = 0; s < samples; ++s) {
            int64_t i = pick.next_index(n);
            double an = p->grad[i];
            if (std::abs(an) < 0.02) continue;  // below float32 FD noise floor
            const float h = 1e-3f;
            float keep = p->w[i];
            p->w[i] = keep + h;
            double lp = f.loss();
            p->w[i] = keep - h;
            double lm = f.loss();
            p->w[i] = keep;
            double fd = (lp - lm) / (2.0 * h);
            CHECK(std::abs(fd - an) <= std::max(2e-2 * std::max(std::abs(fd), std::abs(an)), 5e-4));
            ++checked;
        }
    }
    CHECK(checked >= 25);
}

TEST_CASE("input gradients match central finite differences") {
    Fixture f;
    Tensor gx;
    attack::input_gradient(f.m, f.x, f.y, nn::Mode::Train, false, &gx);
    REQUIRE(gx.same_shape(f.x));
    Rng pick(12);
    int checked = 0;
    for (int s = 0; s < 120; ++s) {
        int64_t i = pick.next_index(f.x.numel());
        double an = gx[i];
        if (std::abs(an) < 0.02) continue;
        const float h = 1e-3f;
        float keep = f.x[i];
        f.x[i] = keep + h;
        double lp = f.loss();
        f.x[i] = keep - h;
        double lm = f.loss();
        f.x[i] = keep;
        double fd = (lp - lm) / (2.0 * h);
        CHECK(std::abs(fd - an) <= std::max(2e-2 * std::max(std::abs(fd), std::abs(an)), 5e-4));
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("weight outlier loss: frozen hand value via the scalar reference") {
    // W = {0.1, 0.1, 0.1, 1.0}, eta=10, alpha=1e-5: wbar=0.325,
    // deviations {0.225 x3, 0.675}, each term exp(d/(wbar+alpha)-eta)*d
    double v = ref_outlier({0.1, 0.1, 0.1, 1.0}, 10.0, 1e-5, false);
    CHECK(v == doctest::Approx(0.00030576451524565586).epsilon(1e-12));
}

TEST_CASE("weight outlier loss matches the scalar reference on a real model") {
    Fixture f;
    for (bool sgn : {false, true}) {
        double ref = 0;
        for (const auto& w : conv_weight_lists(f.m)) ref += ref_outlier(w, 10.0, 1e-5, sgn);
        double got = fat::weight_outlier_loss(f.m, 10.0, 1e-5, sgn);
        CHECK(got == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("weight outlier gradient (incl. wbar chain) matches finite differences") {
    Fixture f;
    // push a few weights far from the mean so the exp terms have real mass
    auto params = f.m.params();
    for (auto* p : params) {
        if (!p->is_conv_weight) continue;
        Rng r(99);
        for (int j = 0; j < 4; ++j) {
            int64_t i = r.next_index(p->w.numel());
            p->w[i] = (j % 2 == 0) ? 1.7f : -1.4f;
        }
    }
    for (bool sgn : {false, true}) {
        const double eta = 3.0, alpha = 1e-5;  // small eta keeps terms well above noise
        f.m.zero_grads();
        double lv = fat::weight_outlier_loss_grad(f.m, eta, alpha, sgn);
        CHECK(lv == doctest::Approx(fat::weight_outlier_loss(f.m, eta, alpha, sgn)).epsilon(1e-9));
        Rng pick(13);
        int checked = 0;
        for (auto* p : params) {
            if (!p->is_conv_weight) continue;
            for (int s = 0; s < 30; ++s) {
                int64_t i = pick.next_index(p->w.numel());
                const float h = 2e-4f;
                if (std::abs(p->w[i]) < 3 * h) continue;  // |w| kink
                double an = p->grad[i];
                float keep = p->w[i];
                p->w[i] = keep + h;
                double lp = fat::weight_outlier_loss(f.m, eta, alpha, sgn);
                p->w[i] = keep - h;
                double lm = fat::weight_outlier_loss(f.m, eta, alpha, sgn);
                p->w[i] = keep;
                double fd = (lp - lm) / (2.0 * h);
                if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;
                CHECK(std::abs(fd - an) <=
                      std::max(3e-2 * std::max(std::abs(fd), std::abs(an)), 1e-7));
                ++checked;
            }
        }
        CHECK(checked >= 20);
    }
}

TEST_CASE("l2 conv loss value and gradient") {
    Fixture f;
    const double lam = 5e-4;
    double ref = 0;
    for (const auto& w : conv_weight_lists(f.m))
        for (double v : w) ref += lam * v * v;
    f.m.zero_grads();
    double got = fat::l2_conv_loss(f.m, lam, true);
    CHECK(got == doctest::Approx(ref).epsilon(1e-9));
    for (auto* p : f.m.params()) {
        if (!p->is_conv_weight) {
            for (int64_t i = 0; i < p->grad.numel(); ++i) CHECK(p->grad[i] == 0.0f);
            continue;
        }
        for (int64_t i = 0; i < p->grad.numel(); ++i)
            CHECK(p->grad[i] ==
                  doctest::Approx(2.0 * lam * p->w[i]).epsilon(1e-5));
    }
}

TEST_CASE("conv weight clipping clamps against the pre-clip layer mean") {
    Fixture f;
    auto params = f.m.params();
    std::vector<double> lim_pre;
    std::vector<std::vector<float>> before;
    for (auto* p : params) {
        if (!p->is_conv_weight) continue;
        p->w[0] = 9.0f;  // plant one outlier per layer
        double wbar = dsum_abs(p->w.data(), p->w.numel()) / static_cast<double>(p->w.numel());
        lim_pre.push_back(2.0 * wbar);
        before.emplace_back(p->w.data(), p->w.data() + p->w.numel());
    }
    fat::clip_conv_weights(f.m, 2.0);
    size_t li = 0;
    for (auto* p : params) {
        if (!p->is_conv_weight) continue;
        const double lim = lim_pre[li];
        const auto& old = before[li];
        ++li;
        for (int64_t i = 0; i < p->w.numel(); ++i) {
            CHECK(std::abs(p->w[i]) <= lim * (1.0 + 1e-6));
            if (std::abs(old[static_cast<size_t>(i)]) <= lim)
                CHECK(p->w[i] == old[static_cast<size_t>(i)]);  // inliers untouched
            else
                CHECK(std::abs(p->w[i]) == doctest::Approx(lim).epsilon(1e-6));
        }
        CHECK(std::abs(p->w[0]) == doctest::Approx(lim).epsilon(1e-6));  // the outlier
    }
    // head weights are never clipped
    fat::clip_conv_weights(f.m, 1e-9);
    bool head_nonzero = false;
    for (auto* p : params)
        if (!p->is_conv_weight)
            for (int64_t i = 0; i < p->w.numel(); ++i) head_nonzero |= (p->w[i] != 0.0f);
    CHECK(head_nonzero);
}

TEST_CASE("max_dev_ratio and dev_ratio_histogram match reference loops") {
    Fixture f;
    double ref_max = 0;
    std::vector<int64_t> ref_counts(7, 0);
    const double edges[7] = {0, 0.5, 1, 2, 4, 8, 16};
    for (const auto& w : conv_weight_lists(f.m)) {
        double wbar = 0;
        for (double v : w) wbar += std::abs(v);
        wbar /= static_cast<double>(w.size());
        for (double v : w) {
            double r = std::abs(std::abs(v) - wbar) / wbar;
            ref_max = std::max(ref_max, r);
            int b = 0;
            for (int e = 6; e >= 0; --e)
                if (r >= edges[e]) { b = e; break; }
            ref_counts[static_cast<size_t>(b)]++;
        }
    }
    CHECK(fat::max_dev_ratio(f.m) == doctest::Approx(ref_max).epsilon(1e-9));
    std::vector<double> got_edges;
    auto counts = fat::dev_ratio_histogram(f.m, &got_edges);
    REQUIRE(counts.size() == 7);
    REQUIRE(got_edges.size() == 7);
    for (int i = 0; i < 7; ++i) {
        CHECK(got_edges[static_cast<size_t>(i)] == doctest::Approx(edges[i]));
        CHECK(counts[static_cast<size_t>(i)] == ref_counts[static_cast<size_t>(i)]);
    }
}

TEST_CASE("ratio bucketing of the frozen example {0.1,0.1,0.1,1.0}") {
    // wbar = 0.325 -> ratios {0.6923 x3, 2.0769}: bins [0.5,1) x3 and [2,4) x1
    std::vector<double> w = {0.1, 0.1, 0.1, 1.0};
    double wbar = 0.325;
    std::vector<int> counts(7, 0);
    const double edges[7] = {0, 0.5, 1, 2, 4, 8, 16};
    for (double v : w) {
        double r = std::abs(std::abs(v) - wbar) / wbar;
        int b = 0;
        for (int e = 6; e >= 0; --e)
            if (r >= edges[e]) { b = e; break; }
        counts[static_cast<size_t>(b)]++;
    }
    CHECK(counts == std::vector<int>{0, 3, 0, 1, 0, 0, 0});
}

TEST_CASE("trigger bank two-update hand unroll") {
    Tensor bank({2, 1, 1, 2});
    Tensor signs({2, 1, 1, 2});
    // batch 1: class 0 rows (1,-1) and (1,1) -> mean (1,0)
    signs[0] = 1;  signs[1] = -1;
    signs[2] = 1;  signs[3] = 1;
    fat::trigger_bank_update(bank, signs, {0, 0});
    CHECK(bank[0] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(bank[1] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(bank[2] == 0.0f);  // class 1 absent, untouched
    CHECK(bank[3] == 0.0f);
    // batch 2: one class-0 row (-1,-1): 0.9*(0.1,0) + 0.1*(-1,-1)
    Tensor s2({1, 1, 1, 2});
    s2[0] = -1;
    s2[1] = -1;
    fat::trigger_bank_update(bank, s2, {0});
    CHECK(bank[0] == doctest::Approx(-0.01).epsilon(1e-5));
    CHECK(bank[1] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("trigger bank update is linear in the class means") {
    // one update from zero equals 0.1 * per-class mean for every class
    Rng rng(21);
    Tensor bank({3, 1, 2, 2});
    Tensor signs({9, 1, 2, 2});
    std::vector<int> y(9);
    for (int64_t i = 0; i < signs.numel(); ++i) signs[i] = rng.next_double() < 0.5 ? -1.0f : 1.0f;
    for (size_t i = 0; i < 9; ++i) y[i] = static_cast<int>(i % 3);
    fat::trigger_bank_update(bank, signs, y);
    for (int t = 0; t < 3; ++t) {
        for (int64_t j = 0; j < 4; ++j) {
            double mean = 0;
            int cnt = 0;
            for (size_t i = 0; i < 9; ++i) {
                if (y[i] != t) continue;
                mean += signs[static_cast<int64_t>(i) * 4 + j];
                ++cnt;
            }
            mean /= cnt;
            CHECK(bank[t * 4 + j] == doctest::Approx(0.1 * mean).epsilon(1e-6));
        }
    }
}

TEST_CASE("aux loss frozen hand value and sign") {
    // zero bank, one class-0 example with signs (1,-1): -alpha * sqrt(2)
    Tensor bank({1, 1, 1, 2});
    Tensor signs({1, 1, 1, 2});
    signs[0] = 1;
    signs[1] = -1;
    double v = fat::aux_loss_value(bank, signs, {0}, 1e-2, false);
    CHECK(v == doctest::Approx(-0.014142135623730952).epsilon(1e-9));
    double vpe = fat::aux_loss_value(bank, signs, {0}, 1e-2, true);
    CHECK(vpe == doctest::Approx(-0.014142135623730952).epsilon(1e-9));
}

TEST_CASE("aux loss is never positive") {
    Rng rng(31);
    Tensor bank({4, 1, 2, 2});
    Tensor signs({16, 1, 2, 2});
    std::vector<int> y(16);
    for (int64_t i = 0; i < bank.numel(); ++i) bank[i] = rng.uniform(-1, 1);
    for (int64_t i = 0; i < signs.numel(); ++i) signs[i] = rng.uniform(-1, 1);
    for (size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(rng.next_index(4));
    CHECK(fat::aux_loss_value(bank, signs, y, 1e-2, false) <= 0.0);
    CHECK(fat::aux_loss_value(bank, signs, y, 1e-2, true) <= 0.0);
    CHECK(fat::aux_loss_value(bank, signs, y, 0.0, false) == 0.0);
}

TEST_CASE("aux straight-through gradient matches finite differences") {
    Rng rng(41);
    Tensor bank({3, 1, 2, 2});
    Tensor signs({6, 1, 2, 2});
    std::vector<int> y = {0, 1, 2, 0, 1, 2};
    for (int64_t i = 0; i < bank.numel(); ++i) bank[i] = rng.uniform(-0.8f, 0.8f);
    for (int64_t i = 0; i < signs.numel(); ++i) signs[i] = rng.uniform(-0.9f, 0.9f);
    for (bool pe : {false, true}) {
        Tensor u;
        fat::aux_loss_u(bank, signs, y, 1e-2, pe, &u);
        REQUIRE(u.same_shape(signs));
        for (int64_t i = 0; i < signs.numel(); ++i) {
            const float h = 1e-3f;
            float keep = signs[i];
            signs[i] = keep + h;
            double lp = fat::aux_loss_value(bank, signs, y, 1e-2, pe);
            signs[i] = keep - h;
            double lm = fat::aux_loss_value(bank, signs, y, 1e-2, pe);
            signs[i] = keep;
            double fd = (lp - lm) / (2.0 * h);
            CHECK(std::abs(fd - u[i]) <=
                  std::max(2e-2 * std::max(std::abs(fd), std::abs(static_cast<double>(u[i]))), 1e-6));
        }
    }
}

TEST_CASE("wasserstein_1d hand values") {
    CHECK(diag::wasserstein_1d({0}, {1}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(diag::wasserstein_1d({0, 1}, {1, 2}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(diag::wasserstein_1d({0, 0}, {0, 1}) == doctest::Approx(0.5).epsilon(1e-12));
    // unequal sizes: quantile functions 0 vs (1 on [0,.5), 3 on [.5,1))
    CHECK(diag::wasserstein_1d({0}, {1, 3}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(diag::wasserstein_1d({5, 2, 8}, {8, 5, 2}) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("wasserstein_1d symmetry and permutation invariance") {
    Rng rng(51);
    std::vector<double> a(37), b(21);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal(0.5f, 2.0f);
    double ab = diag::wasserstein_1d(a, b);
    double ba = diag::wasserstein_1d(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    std::vector<double> ap = a;
    std::reverse(ap.begin(), ap.end());
    CHECK(diag::wasserstein_1d(ap, b) == doctest::Approx(ab).epsilon(1e-12));
    CHECK(ab >= 0.0);
}

TEST_CASE("sliced wasserstein in one dimension reduces to the exact distance") {
    Rng rng(61);
    const int64_t na = 33, nb = 17;
    std::vector<float> a(static_cast<size_t>(na)), b(static_cast<size_t>(nb));
    std::vector<double> ad, bd;
    for (auto& v : a) { v = rng.normal(); ad.push_back(v); }
    for (auto& v : b) { v = rng.normal(1.0f, 0.5f); bd.push_back(v); }
    double sw = diag::sliced_wasserstein(a.data(), na, b.data(), nb, 1, 1, 9);
    CHECK(sw == doctest::Approx(diag::wasserstein_1d(ad, bd)).epsilon(1e-9));
}

TEST_CASE("sliced wasserstein basics") {
    Rng rng(71);
    const int64_t n = 24, d = 6;
    std::vector<float> a(static_cast<size_t>(n * d));
    for (auto& v : a) v = rng.normal();
    // identical sets are at distance zero
    CHECK(diag::sliced_wasserstein(a.data(), n, a.data(), n, d, 16, 1) ==
          doctest::Approx(0.0).epsilon(1e-12));
    std::vector<float> b = a;
    for (auto& v : b) v += 0.75f;
    double d1 = diag::sliced_wasserstein(a.data(), n, b.data(), n, d, 16, 1);
    double d2 = diag::sliced_wasserstein(b.data(), n, a.data(), n, d, 16, 1);
    CHECK(d1 > 0.0);
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-12));  // symmetric
    // deterministic in the seed
    CHECK(diag::sliced_wasserstein(a.data(), n, b.data(), n, d, 16, 1) ==
          doctest::Approx(d1).epsilon(1e-15));
}

TEST_CASE("cosine shift penalty endpoints") {
    std::vector<float> a = {1, 0, 2, -1};
    std::vector<float> na = {-1, 0, -2, 1};
    std::vector<float> orth = {0, 1, 0, 0};
    CHECK(fat::cosine_shift_penalty(a, a) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(fat::cosine_shift_penalty(na, a) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(fat::cosine_shift_penalty(orth, a) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("rng determinism and bounds") {
    Rng a(123), b(123), c(124);
    bool all_same = true, any_diff = false;
    for (int i = 0; i < 64; ++i) {
        double va = a.next_double(), vb = b.next_double(), vc = c.next_double();
        CHECK(va >= 0.0);
        CHECK(va < 1.0);
        all_same = all_same && (va == vb);
        any_diff = any_diff || (va != vc);
    }
    CHECK(all_same);
    CHECK(any_diff);

    Rng s(9);
    std::vector<int> v(50);
    for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int>(i);
    s.shuffle(v);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < v.size(); ++i) CHECK(sorted[i] == static_cast<int>(i));
}
