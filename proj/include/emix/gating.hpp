#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "emix/corpus.hpp"
#include "emix/util.hpp"

namespace emix {

// Softmax gate over pre-trained experts. The gate weights do not depend on the
// input sample: one weight and one bias per expert.
struct GatingNetwork {
    std::vector<double> w;
    std::vector<double> b;
    double eta = 0.01;

    std::size_t expert_count() const { return w.size(); }

    static GatingNetwork zeros(std::size_t experts, double eta) {
        if (experts < 1) throw std::runtime_error("gating network needs at least one expert");
        if (!(eta > 0.0)) throw std::runtime_error("learning rate must be positive");
        GatingNetwork net;
        net.w.assign(experts, 0.0);
        net.b.assign(experts, 0.0);
        net.eta = eta;
        return net;
    }
};

// Max-shifted softmax; prob[i] = exp(w[i]) / sum_j exp(w[j]).
inline std::vector<double> softmax(std::span<const double> w) {
    if (w.empty()) throw std::runtime_error("softmax of empty vector");
    double mx = *std::max_element(w.begin(), w.end());
    std::vector<double> p(w.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        p[i] = std::exp(w[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

namespace detail {

inline void check_gate_shapes(std::span<const double> yhat, const GatingNetwork& net) {
    if (yhat.size() != net.w.size() || net.w.size() != net.b.size())
        throw std::runtime_error("gating: predictions/weights/biases length mismatch");
}

}  // namespace detail

// E = sum_i 1/2 * prob[i] * (y - yhat[i] + b[i])^2
inline double gating_error(double y, std::span<const double> yhat, const GatingNetwork& net) {
    detail::check_gate_shapes(yhat, net);
    std::vector<double> prob = softmax(net.w);
    double e = 0.0;
    for (std::size_t i = 0; i < yhat.size(); ++i) {
        double r = y - yhat[i] + net.b[i];
        e += 0.5 * prob[i] * r * r;
    }
    return e;
}

struct GateGradients {
    std::vector<double> dw;
    std::vector<double> db;
};

// Default update forms (diagonal in the softmax Jacobian):
//   dE/dw[i] = 1/2 * prob[i] * (1 - prob[i]) * (y - yhat[i] + b[i])^2
//   dE/db[i] = prob[i] * (y - yhat[i] + b[i])
// `exact_w` instead uses the full softmax chain rule for w,
//   dE/dw[i] = prob[i] * (1/2 * r[i]^2 - E),
// which keeps the cross-expert terms the diagonal form drops.
inline GateGradients gating_gradients(double y, std::span<const double> yhat, const GatingNetwork& net,
                                      bool exact_w = false) {
    detail::check_gate_shapes(yhat, net);
    std::vector<double> prob = softmax(net.w);
    GateGradients g;
    g.dw.resize(yhat.size());
    g.db.resize(yhat.size());
    double error = 0.0;
    if (exact_w) {
        for (std::size_t i = 0; i < yhat.size(); ++i) {
            double r = y - yhat[i] + net.b[i];
            error += 0.5 * prob[i] * r * r;
        }
    }
    for (std::size_t i = 0; i < yhat.size(); ++i) {
        double r = y - yhat[i] + net.b[i];
        g.dw[i] = exact_w ? prob[i] * (0.5 * r * r - error) : 0.5 * prob[i] * (1.0 - prob[i]) * r * r;
        g.db[i] = prob[i] * r;
    }
    return g;
}

struct GateStepOptions {
    bool exact_gradient = false;
    bool freeze_bias = false;
};

// One per-sample update; gradients are evaluated at the pre-step state.
inline GatingNetwork sgd_step(const GatingNetwork& net, double y, std::span<const double> yhat,
                              const GateStepOptions& opts = {}) {
    GateGradients g = gating_gradients(y, yhat, net, opts.exact_gradient);
    GatingNetwork next = net;
    for (std::size_t i = 0; i < net.w.size(); ++i) {
        next.w[i] -= net.eta * g.dw[i];
        if (!opts.freeze_bias) next.b[i] -= net.eta * g.db[i];
    }
    return next;
}

struct GatingTrainOptions {
    double eta = 0.01;
    int epochs = 100;
    std::uint64_t seed = 0;
    bool exact_gradient = false;
    bool freeze_bias = false;
    double tol = 1e-9;  // stop when per-epoch mean E improves by less than this
};

struct GatingTrainResult {
    GatingNetwork net;
    std::vector<double> epoch_mean_error;  // E averaged over samples, per epoch
};

// Per-sample SGD over a fixed prediction matrix (rows: samples, cols: experts).
// Weights and biases start at zero; sample order is reshuffled every epoch.
inline GatingTrainResult train_gating(const std::vector<std::vector<double>>& preds,
                                      const std::vector<double>& targets, const GatingTrainOptions& opts) {
    if (preds.empty() || preds.size() != targets.size())
        throw std::runtime_error("train_gating: need N >= 1 prediction rows matching targets");
    if (opts.epochs < 1) throw std::runtime_error("train_gating: epochs must be >= 1");
    std::size_t experts = preds[0].size();
    for (const auto& row : preds) {
        if (row.size() != experts) throw std::runtime_error("train_gating: ragged prediction matrix");
        check_finite(row, "expert predictions");
    }
    check_finite(targets, "targets");

    GatingTrainResult result;
    result.net = GatingNetwork::zeros(experts, opts.eta);
    GateStepOptions step{opts.exact_gradient, opts.freeze_bias};

    std::mt19937_64 rng(opts.seed);
    std::vector<std::size_t> order(preds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum_e = 0.0;
        for (std::size_t i : order) {
            sum_e += gating_error(targets[i], preds[i], result.net);
            result.net = sgd_step(result.net, targets[i], preds[i], step);
        }
        double mean_e = sum_e / static_cast<double>(preds.size());
        result.epoch_mean_error.push_back(mean_e);
        std::size_t n = result.epoch_mean_error.size();
        if (n >= 2 && result.epoch_mean_error[n - 2] - mean_e < opts.tol) break;
    }
    return result;
}

// Combined score: softmax-weighted mean of the bias-corrected expert estimates.
inline double gate_combine(const GatingNetwork& net, std::span<const double> yhat) {
    detail::check_gate_shapes(yhat, net);
    std::vector<double> prob = softmax(net.w);
    double v = 0.0;
    for (std::size_t i = 0; i < yhat.size(); ++i) v += prob[i] * (yhat[i] - net.b[i]);
    return v;
}

inline double gate_predict_scalar(const GatingNetwork& net, std::span<const double> yhat) {
    return std::clamp(gate_combine(net, yhat), 0.0, 1.0);
}

inline int gate_predict_ordinal(const GatingNetwork& net, std::span<const double> yhat, int class_count) {
    long cls = std::lround(gate_combine(net, yhat));
    return static_cast<int>(std::clamp(cls, 0L, static_cast<long>(class_count - 1)));
}

inline bool gate_predict_label(const GatingNetwork& net, std::span<const double> yhat) {
    return gate_combine(net, yhat) >= 0.5;
}

}  // namespace emix
