#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "emofuse/fusion.hpp"
#include "oracles.hpp"

using namespace emofuse;

namespace {

std::vector<double> random_input(int dim, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> x(dim);
    for (double& v : x) v = unit(rng);
    return x;
}

}  // namespace

TEST_CASE("init is deterministic, biases zero, weights bounded") {
    const FusionConfig cfg{12, 32, 0.5, 42};
    const FusionParams a = init_fusion(cfg);
    const FusionParams b = init_fusion(cfg);
    CHECK(a.digest() == b.digest());

    const FusionParams c = init_fusion({12, 32, 0.5, 43});
    CHECK(a.digest() != c.digest());

    for (double v : a.b1.v) CHECK(v == 0.0);
    for (double v : a.b_disc.v) CHECK(v == 0.0);
    for (double v : a.b_cont.v) CHECK(v == 0.0);

    const double bound = 1.0 / std::sqrt(12.0);
    for (double v : a.w1.v) CHECK(std::abs(v) <= bound);
    CHECK(a.w1.rows == 32);
    CHECK(a.w1.cols == 12);
    CHECK(a.w_disc.rows == 26);
    CHECK(a.w_cont.rows == 3);
}

TEST_CASE("forward worked cases") {
    SUBCASE("all-zero params map anything to zero") {
        FusionParams p = init_fusion({4, 8, 0.0, 1});
        for (Tensor* t : {&p.w1, &p.w_disc, &p.w_cont}) std::fill(t->v.begin(), t->v.end(), 0.0);
        const std::vector<double> x = {1.0, -2.0, 3.0, 0.5};
        const Prediction out = fusion_forward(p, x, FusionMode::infer, 0);
        for (double v : out.disc_scores) CHECK(v == 0.0);
        for (double v : out.cont_values) CHECK(v == 0.0);
    }

    SUBCASE("zero input passes the output biases through") {
        FusionParams p = init_fusion({4, 8, 0.0, 2});
        for (int i = 0; i < 26; ++i) p.b_disc.v[i] = 0.1 * i;
        for (int i = 0; i < 3; ++i) p.b_cont.v[i] = 1.0 + i;
        const std::vector<double> x(4, 0.0);
        const Prediction out = fusion_forward(p, x, FusionMode::infer, 0);
        for (int i = 0; i < 26; ++i) CHECK(out.disc_scores[i] == doctest::Approx(0.1 * i));
        for (int i = 0; i < 3; ++i) CHECK(out.cont_values[i] == doctest::Approx(1.0 + i));
    }

    SUBCASE("inference is deterministic") {
        const FusionParams p = init_fusion({6, 16, 0.5, 3});
        std::mt19937_64 rng(4);
        const auto x = random_input(6, rng);
        const Prediction a = fusion_forward(p, x, FusionMode::infer, 111);
        const Prediction b = fusion_forward(p, x, FusionMode::infer, 222);
        CHECK(a.disc_scores == b.disc_scores);
        CHECK(a.cont_values == b.cont_values);
    }

    SUBCASE("shape safety rejects off-by-one inputs") {
        const FusionParams p = init_fusion({6, 16, 0.5, 3});
        CHECK_THROWS_AS(fusion_forward(p, std::vector<double>(5), FusionMode::infer, 0), Error);
        CHECK_THROWS_AS(fusion_forward(p, std::vector<double>(7), FusionMode::infer, 0), Error);
    }
}

TEST_CASE("train mode applies a seeded scaled mask") {
    const FusionParams p = init_fusion({6, 64, 0.5, 5});
    std::mt19937_64 rng(6);
    const auto x = random_input(6, rng);

    ForwardCache c1, c2, c3;
    fusion_forward(p, x, FusionMode::train, 1234, &c1);
    fusion_forward(p, x, FusionMode::train, 1234, &c2);
    fusion_forward(p, x, FusionMode::train, 9999, &c3);
    CHECK(c1.hidden == c2.hidden);  // same seed, same mask
    CHECK(c1.hidden != c3.hidden);  // different seed, different mask

    // mask entries are 0 or 1/(1-rate)
    for (double m : c1.mask) CHECK((m == 0.0 || m == doctest::Approx(2.0)));
}

TEST_CASE("backward worked cases") {
    const FusionConfig cfg{5, 8, 0.0, 7};
    const FusionParams p = init_fusion(cfg);
    std::mt19937_64 rng(8);
    const auto x = random_input(5, rng);

    ForwardCache cache;
    fusion_forward(p, x, FusionMode::train, 0, &cache);

    SUBCASE("zero upstream gradients give zero parameter gradients") {
        const std::vector<double> gd(26, 0.0), gc(3, 0.0);
        const FusionGrads g = fusion_backward(p, cache, gd, gc);
        for (const Tensor* t : {&g.w1, &g.b1, &g.w_disc, &g.b_disc, &g.w_cont, &g.b_cont})
            for (double v : t->v) CHECK(v == 0.0);
    }

    SUBCASE("bias gradient equals the upstream gradient exactly") {
        std::vector<double> gd(26, 0.0), gc(3, 0.0);
        gd[4] = 1.5;
        gd[20] = -0.25;
        gc[1] = 2.0;
        const FusionGrads g = fusion_backward(p, cache, gd, gc);
        for (int i = 0; i < 26; ++i) CHECK(g.b_disc.v[i] == gd[i]);
        for (int i = 0; i < 3; ++i) CHECK(g.b_cont.v[i] == gc[i]);
    }

    SUBCASE("mismatched cache is rejected") {
        const FusionParams other = init_fusion({9, 8, 0.0, 7});
        const std::vector<double> gd(26, 0.0), gc(3, 0.0);
        CHECK_THROWS_AS(fusion_backward(other, cache, gd, gc), Error);
    }
}

namespace {

// Scalar objective: weighted sum of all outputs, so dL/d(param) flows
// through both heads at once.
double objective(const FusionParams& p, const std::vector<double>& x, uint64_t mask_seed,
                 const std::vector<double>& wd, const std::vector<double>& wc) {
    const Prediction out =
        fusion_forward(p, x, p.config.dropout_rate > 0 ? FusionMode::train : FusionMode::infer,
                       mask_seed);
    double L = 0.0;
    for (int i = 0; i < 26; ++i) L += wd[i] * out.disc_scores[i];
    for (int i = 0; i < 3; ++i) L += wc[i] * out.cont_values[i];
    return L;
}

void check_gradients(FusionConfig cfg, uint64_t trial_seed) {
    std::mt19937_64 rng(trial_seed);
    FusionParams p = init_fusion(cfg);
    const auto x = random_input(cfg.input_dim, rng);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> wd(26), wc(3);
    for (double& v : wd) v = unit(rng);
    for (double& v : wc) v = unit(rng);
    const uint64_t mask_seed = rng();

    ForwardCache cache;
    fusion_forward(p, x, cfg.dropout_rate > 0 ? FusionMode::train : FusionMode::infer,
                   mask_seed, &cache);
    const FusionGrads g = fusion_backward(p, cache, wd, wc);

    const double h = 1e-5;
    auto check_tensor = [&](Tensor FusionParams::* field, const Tensor& grad) {
        // probe a handful of coordinates per tensor
        const Tensor& t = p.*field;
        for (size_t idx = 0; idx < t.v.size(); idx += std::max<size_t>(1, t.v.size() / 7)) {
            auto f = [&](double v) {
                FusionParams q = p;
                (q.*field).v[idx] = v;
                return objective(q, x, mask_seed, wd, wc);
            };
            const double fd = oracles::central_diff(f, t.v[idx], h);
            // skip coordinates whose pre-activation sits on the relu kink
            bool near_kink = false;
            for (double pre : cache.pre_hidden)
                if (std::abs(pre) < 1e-6) near_kink = true;
            if (near_kink) continue;
            CHECK(oracles::relative_error(grad.v[idx], fd, 1e-7) < 1e-4);
        }
    };
    check_tensor(&FusionParams::w1, g.w1);
    check_tensor(&FusionParams::b1, g.b1);
    check_tensor(&FusionParams::w_disc, g.w_disc);
    check_tensor(&FusionParams::b_disc, g.b_disc);
    check_tensor(&FusionParams::w_cont, g.w_cont);
    check_tensor(&FusionParams::b_cont, g.b_cont);
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences") {
    // 5-dim toy config without dropout
    check_gradients({5, 6, 0.0, 11}, 1001);
    // random small configs, with and without dropout masks
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        FusionConfig cfg;
        cfg.input_dim = 1 + int(rng() % 8);
        cfg.hidden_dim = 1 + int(rng() % 12);
        cfg.dropout_rate = (trial % 2) ? 0.5 : 0.0;
        cfg.seed = rng();
        check_gradients(cfg, rng());
    }
}

TEST_CASE("averaged dropout activations match inference within 2%") {
    const FusionConfig cfg{6, 32, 0.5, 77};
    FusionParams p = init_fusion(cfg);
    // keep hidden units comfortably positive so the relative check is stable
    for (double& v : p.b1.v) v = 1.0;
    const std::vector<double> x = {0.3, -0.2, 0.1, 0.4, -0.1, 0.25};

    ForwardCache infer_cache;
    fusion_forward(p, x, FusionMode::infer, 0, &infer_cache);

    std::vector<double> mean(cfg.hidden_dim, 0.0);
    const int n_masks = 10000;
    for (int k = 0; k < n_masks; ++k) {
        ForwardCache cache;
        fusion_forward(p, x, FusionMode::train, 100000 + k, &cache);
        for (int i = 0; i < cfg.hidden_dim; ++i) mean[i] += cache.hidden[i];
    }
    // relative L2 distance between the averaged vector and the infer vector
    double err2 = 0.0, ref2 = 0.0;
    for (int i = 0; i < cfg.hidden_dim; ++i) {
        mean[i] /= n_masks;
        const double d = mean[i] - infer_cache.hidden[i];
        err2 += d * d;
        ref2 += infer_cache.hidden[i] * infer_cache.hidden[i];
    }
    CHECK(std::sqrt(err2 / ref2) < 0.02);
}

TEST_CASE("any non-empty branch subset dimension works end to end") {
    // dims mimic one-, two- and three-branch concatenations
    for (int input_dim : {16, 32, 48, 512, 768, 2048 + 768}) {
        const FusionConfig cfg{input_dim, 16, 0.5, 9};
        const FusionParams p = init_fusion(cfg);
        std::mt19937_64 rng(10);
        const auto x = random_input(input_dim, rng);
        ForwardCache cache;
        const Prediction out = fusion_forward(p, x, FusionMode::train, 5, &cache);
        CHECK(out.disc_scores.size() == 26);
        const std::vector<double> gd(26, 0.5), gc(3, -0.5);
        const FusionGrads g = fusion_backward(p, cache, gd, gc);
        CHECK(g.w1.cols == input_dim);
    }
}
