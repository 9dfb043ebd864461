#include <cmath>
#include <random>

#include "doctest.h"
#include "emix/gating.hpp"
#include "oracle.hpp"

using namespace emix;

namespace {

GatingNetwork make_net(std::vector<double> w, std::vector<double> b, double eta = 0.01) {
    GatingNetwork net;
    net.w = std::move(w);
    net.b = std::move(b);
    net.eta = eta;
    return net;
}

struct RandomInstance {
    double y;
    std::vector<double> yhat;
    GatingNetwork net;
};

RandomInstance random_instance(std::mt19937_64& rng, std::size_t min_experts = 1, std::size_t max_experts = 8) {
    std::uniform_int_distribution<std::size_t> size(min_experts, max_experts);
    std::size_t n = size(rng);
    RandomInstance inst;
    std::uniform_real_distribution<double> val(-2, 2);
    inst.y = val(rng);
    inst.yhat = oracle::random_vector(rng, n, -2, 2);
    inst.net = make_net(oracle::random_vector(rng, n, -1.5, 1.5), oracle::random_vector(rng, n, -1, 1));
    return inst;
}

}  // namespace

TEST_CASE("softmax matches closed forms and a long-double oracle") {
    std::vector<double> uniform{0, 0, 0};
    for (double p : softmax(uniform)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    std::vector<double> two{std::log(2.0), 0.0};
    auto p2 = softmax(two);
    CHECK(p2[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(p2[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    std::vector<double> three{1, 2, 3};
    auto p3 = softmax(three);
    CHECK(p3[0] == doctest::Approx(0.09003057317038046).epsilon(1e-9));
    CHECK(p3[1] == doctest::Approx(0.24472847105479767).epsilon(1e-9));
    CHECK(p3[2] == doctest::Approx(0.6652409557748219).epsilon(1e-9));

    // distribution invariants on random inputs, including extreme weights
    std::mt19937_64 rng(1);
    for (int t = 0; t < 200; ++t) {
        auto w = oracle::random_vector(rng, 1 + t % 8, -700, 700);
        auto p = softmax(w);
        double sum = 0;
        for (double v : p) {
            CHECK(v >= 0.0);
            CHECK(std::isfinite(v));
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("gating_error evaluates its quadratic form") {
    CHECK(gating_error(1.0, std::vector<double>{1.0}, make_net({0}, {0})) == 0.0);

    // I=2, w=0, y=1, yhat=[0,2], b=0: E = 1/2*1/2*1 + 1/2*1/2*1
    CHECK(gating_error(1.0, std::vector<double>{0.0, 2.0}, make_net({0, 0}, {0, 0})) == doctest::Approx(0.5).epsilon(1e-15));

    // residuals cancel when b[i] = yhat[i] - y
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
        auto inst = random_instance(rng);
        for (std::size_t i = 0; i < inst.yhat.size(); ++i) inst.net.b[i] = inst.yhat[i] - inst.y;
        CHECK(gating_error(inst.y, inst.yhat, inst.net) == doctest::Approx(0.0).epsilon(1e-15));
    }
}

TEST_CASE("error is invariant under a constant shift of all gate weights") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        auto inst = random_instance(rng);
        double e0 = gating_error(inst.y, inst.yhat, inst.net);
        GatingNetwork shifted = inst.net;
        std::uniform_real_distribution<double> c(-5, 5);
        double shift = c(rng);
        for (double& w : shifted.w) w += shift;
        CHECK(std::abs(gating_error(inst.y, inst.yhat, shifted) - e0) < 1e-12);
    }
}

TEST_CASE("gating_gradients matches the diagonal update forms bitwise") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 500; ++t) {
        auto inst = random_instance(rng);
        GateGradients g = gating_gradients(inst.y, inst.yhat, inst.net);
        std::vector<double> dw_ref, db_ref;
        oracle::diagonal_gate_gradients(inst.y, inst.yhat, inst.net.w, inst.net.b, dw_ref, db_ref);
        for (std::size_t i = 0; i < inst.yhat.size(); ++i) {
            CHECK(g.dw[i] == dw_ref[i]);  // bitwise: same closed form
            CHECK(g.db[i] == db_ref[i]);
            CHECK(g.dw[i] >= 0.0);
        }
    }
}

TEST_CASE("db is the true partial derivative of E (central differences)") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 300; ++t) {
        auto inst = random_instance(rng);
        GateGradients g = gating_gradients(inst.y, inst.yhat, inst.net);
        for (std::size_t i = 0; i < inst.yhat.size(); ++i) {
            double fd = oracle::fd_error_wrt_b(inst.y, inst.yhat, inst.net, i, 1e-6);
            double denom = std::max(1e-8, std::abs(fd));
            CHECK(std::abs(g.db[i] - fd) / denom < 1e-6);
        }
    }
}

TEST_CASE("the exact-gradient flag matches finite differences for w as well") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 300; ++t) {
        auto inst = random_instance(rng, 2, 8);
        GateGradients g = gating_gradients(inst.y, inst.yhat, inst.net, /*exact_w=*/true);
        for (std::size_t i = 0; i < inst.yhat.size(); ++i) {
            double fd = oracle::fd_error_wrt_w(inst.y, inst.yhat, inst.net, i, 1e-5);
            CHECK(std::abs(g.dw[i] - fd) < 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("worked sgd_step example") {
    GatingNetwork net = make_net({0, 0}, {0, 0}, 0.1);
    std::vector<double> yhat{0.0, 2.0};

    GateGradients g = gating_gradients(1.0, yhat, net);
    CHECK(g.dw[0] == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(g.dw[1] == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(g.db[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(g.db[1] == doctest::Approx(-0.5).epsilon(1e-15));

    GatingNetwork next = sgd_step(net, 1.0, yhat);
    CHECK(next.w[0] == doctest::Approx(-0.0125).epsilon(1e-15));
    CHECK(next.w[1] == doctest::Approx(-0.0125).epsilon(1e-15));
    CHECK(next.b[0] == doctest::Approx(-0.05).epsilon(1e-15));
    CHECK(next.b[1] == doctest::Approx(0.05).epsilon(1e-15));

    SUBCASE("zero residuals leave the network unchanged") {
        GatingNetwork same = sgd_step(net, 0.0, std::vector<double>{0.0, 0.0});
        CHECK(same.w == net.w);
        CHECK(same.b == net.b);
    }
    SUBCASE("uniform dw keeps the softmax unchanged") {
        auto before = softmax(net.w);
        auto after = softmax(next.w);
        for (std::size_t i = 0; i < 2; ++i) CHECK(after[i] == doctest::Approx(before[i]).epsilon(1e-12));
    }
}

TEST_CASE("one step from uniform weights favors the smallest squared residual") {
    std::mt19937_64 rng(7);
    int checked = 0;
    while (checked < 500) {
        auto inst = random_instance(rng, 2, 8);
        std::fill(inst.net.w.begin(), inst.net.w.end(), 0.0);

        std::size_t best = 0;
        double best_r2 = 1e300;
        bool tie = false;
        for (std::size_t i = 0; i < inst.yhat.size(); ++i) {
            double r = inst.y - inst.yhat[i] + inst.net.b[i];
            if (r * r < best_r2) {
                best_r2 = r * r;
                best = i;
                tie = false;
            } else if (r * r == best_r2) {
                tie = true;
            }
        }
        if (tie) continue;

        GatingNetwork next = sgd_step(inst.net, inst.y, inst.yhat);
        auto prob = softmax(next.w);
        for (std::size_t i = 0; i < prob.size(); ++i)
            if (i != best) CHECK(prob[best] > prob[i]);
        ++checked;
    }
}

TEST_CASE("train_gating favors the expert that matches the target when biases are frozen") {
    // 20-sample synthetic set; expert 1 reproduces y exactly, the others are off
    std::mt19937_64 rng(8);
    std::vector<std::vector<double>> preds;
    std::vector<double> targets;
    std::uniform_real_distribution<double> t(0, 1), off(0.2, 0.6);
    for (int i = 0; i < 20; ++i) {
        double y = t(rng);
        targets.push_back(y);
        preds.push_back({y + off(rng), y, y - off(rng)});
    }
    GatingTrainOptions opts;
    opts.eta = 0.05;
    opts.epochs = 200;
    opts.seed = 99;
    opts.freeze_bias = true;
    GatingTrainResult res = train_gating(preds, targets, opts);
    auto prob = softmax(res.net.w);
    CHECK(prob[1] > prob[0]);
    CHECK(prob[1] > prob[2]);
    for (double b : res.net.b) CHECK(b == 0.0);
}

TEST_CASE("single-expert gate stays at probability one and its bias converges") {
    std::mt19937_64 rng(9);
    std::vector<std::vector<double>> preds;
    std::vector<double> targets;
    std::uniform_real_distribution<double> t(0, 1);
    for (int i = 0; i < 40; ++i) {
        double y = t(rng);
        targets.push_back(y);
        preds.push_back({y + 0.3});  // constant offset: fixed point is b = 0.3
    }
    GatingTrainOptions opts;
    opts.eta = 0.1;
    opts.epochs = 500;
    opts.seed = 5;
    opts.tol = 0.0;  // run all epochs
    GatingTrainResult res = train_gating(preds, targets, opts);
    CHECK(softmax(res.net.w) == std::vector<double>{1.0});
    CHECK(res.net.b[0] == doctest::Approx(0.3).epsilon(1e-3));
    // |db| has shrunk toward the fixed point
    GateGradients g = gating_gradients(targets[0], preds[0], res.net);
    CHECK(std::abs(g.db[0]) < 1e-3);
}

TEST_CASE("a perfect expert with one sample reaches zero error immediately") {
    GatingTrainOptions opts;
    opts.epochs = 3;
    GatingTrainResult res = train_gating({{0.7}}, {0.7}, opts);
    REQUIRE(!res.epoch_mean_error.empty());
    CHECK(res.epoch_mean_error[0] == 0.0);
}

TEST_CASE("train_gating validates inputs") {
    GatingTrainOptions opts;
    CHECK_THROWS(train_gating({}, {}, opts));
    CHECK_THROWS(train_gating({{1.0}}, {1.0, 2.0}, opts));
    CHECK_THROWS(train_gating({{std::nan("")}}, {1.0}, opts));
    GatingTrainOptions bad;
    bad.epochs = 0;
    CHECK_THROWS(train_gating({{1.0}}, {1.0}, bad));
}

TEST_CASE("train_gating is reproducible bit-for-bit under a fixed seed") {
    std::mt19937_64 rng(10);
    std::vector<std::vector<double>> preds;
    std::vector<double> targets;
    for (int i = 0; i < 30; ++i) {
        preds.push_back(oracle::random_vector(rng, 4, -1, 1));
        targets.push_back(oracle::random_vector(rng, 1, -1, 1)[0]);
    }
    GatingTrainOptions opts;
    opts.epochs = 50;
    opts.seed = 77;
    GatingTrainResult a = train_gating(preds, targets, opts);
    GatingTrainResult b = train_gating(preds, targets, opts);
    CHECK(a.net.w == b.net.w);
    CHECK(a.net.b == b.net.b);
    CHECK(a.epoch_mean_error == b.epoch_mean_error);

    opts.seed = 78;
    GatingTrainResult c = train_gating(preds, targets, opts);
    CHECK(a.net.w != c.net.w);
}

TEST_CASE("gate_predict combines bias-corrected expert estimates") {
    SUBCASE("agreement is preserved for any weights") {
        std::mt19937_64 rng(11);
        for (int t = 0; t < 50; ++t) {
            std::size_t n = 1 + t % 6;
            GatingNetwork net = make_net(oracle::random_vector(rng, n, -2, 2), std::vector<double>(n, 0.0));
            std::vector<double> agree(n, 0.42);
            CHECK(gate_combine(net, agree) == doctest::Approx(0.42).epsilon(1e-12));
        }
    }
    SUBCASE("worked example") {
        GatingNetwork net = make_net({0, 0}, {0, 0.2});
        CHECK(gate_combine(net, std::vector<double>{0.2, 0.6}) == doctest::Approx(0.3).epsilon(1e-15));
    }
    SUBCASE("scalar predictions clip to [0,1]") {
        GatingNetwork net = make_net({0}, {0});
        CHECK(gate_predict_scalar(net, std::vector<double>{1.3}) == 1.0);
        CHECK(gate_predict_scalar(net, std::vector<double>{-0.2}) == 0.0);
    }
    SUBCASE("ordinal predictions round and clamp") {
        GatingNetwork net = make_net({0}, {0});
        CHECK(gate_predict_ordinal(net, std::vector<double>{2.4}, 4) == 2);
        CHECK(gate_predict_ordinal(net, std::vector<double>{2.6}, 4) == 3);
        CHECK(gate_predict_ordinal(net, std::vector<double>{9.0}, 4) == 3);
        CHECK(gate_predict_ordinal(net, std::vector<double>{-3.0}, 4) == 0);
    }
    SUBCASE("label threshold at 0.5") {
        GatingNetwork net = make_net({0}, {0});
        CHECK(gate_predict_label(net, std::vector<double>{0.5}));
        CHECK_FALSE(gate_predict_label(net, std::vector<double>{0.49}));
    }
}
