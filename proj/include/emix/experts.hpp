#pragma once

#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "emix/util.hpp"

namespace emix {

enum class ExpertFamily { ridge, lasso, mlp, random_forest, gradient_boosting };

inline const char* family_name(ExpertFamily f) {
    switch (f) {
        case ExpertFamily::ridge: return "ridge";
        case ExpertFamily::lasso: return "lasso";
        case ExpertFamily::mlp: return "mlp";
        case ExpertFamily::random_forest: return "random_forest";
        case ExpertFamily::gradient_boosting: return "gradient_boosting";
    }
    return "";
}

inline ExpertFamily parse_family(std::string_view s) {
    if (s == "ridge") return ExpertFamily::ridge;
    if (s == "lasso") return ExpertFamily::lasso;
    if (s == "mlp") return ExpertFamily::mlp;
    if (s == "random_forest") return ExpertFamily::random_forest;
    if (s == "gradient_boosting") return ExpertFamily::gradient_boosting;
    throw std::runtime_error("unknown expert family: " + std::string(s));
}

struct ExpertConfig {
    std::string name;
    ExpertFamily family = ExpertFamily::ridge;
    std::map<std::string, double> params;
    std::uint64_t seed = 0;

    double get(const std::string& key, double fallback) const {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    }
    int get_int(const std::string& key, int fallback) const {
        double v = get(key, static_cast<double>(fallback));
        if (v != std::floor(v)) throw std::runtime_error("hyperparameter " + key + " must be an integer");
        return static_cast<int>(v);
    }

    void validate() const {
        auto require = [&](bool ok, const std::string& msg) {
            if (!ok) throw std::runtime_error("expert '" + name + "': " + msg);
        };
        for (auto& [k, v] : params) require(std::isfinite(v), "hyperparameter " + k + " is not finite");
        switch (family) {
            case ExpertFamily::ridge:
            case ExpertFamily::lasso:
                require(get("alpha", 0.0) >= 0.0, "alpha must be >= 0");
                require(get("tol", 1e-8) > 0.0, "tol must be > 0");
                require(get_int("max_iter", 1000) >= 1, "max_iter must be >= 1");
                break;
            case ExpertFamily::mlp:
                require(get_int("hidden_units", 128) >= 1, "hidden_units must be >= 1");
                require(get_int("epochs", 200) >= 1, "epochs must be >= 1");
                require(get_int("batch_size", 32) >= 1, "batch_size must be >= 1");
                require(get("learning_rate", 1e-3) > 0.0, "learning_rate must be > 0");
                require(get("l2", 0.0) >= 0.0, "l2 must be >= 0");
                break;
            case ExpertFamily::random_forest:
                require(get_int("n_estimators", 250) >= 1, "n_estimators must be >= 1");
                require(get_int("max_depth", 4) >= 0, "max_depth must be >= 0");
                require(get("feature_fraction", 1.0 / 3.0) > 0.0 && get("feature_fraction", 1.0 / 3.0) <= 1.0,
                        "feature_fraction must be in (0,1]");
                require(get_int("min_samples_leaf", 1) >= 1, "min_samples_leaf must be >= 1");
                break;
            case ExpertFamily::gradient_boosting:
                require(get_int("n_estimators", 100) >= 1, "n_estimators must be >= 1");
                require(get("learning_rate", 0.1) > 0.0, "learning_rate must be > 0");
                require(get_int("max_depth", 3) >= 0, "max_depth must be >= 0");
                require(get_int("num_leaves", 0) == 0 || get_int("num_leaves", 0) >= 2,
                        "num_leaves must be 0 (unlimited) or >= 2");
                require(get_int("min_samples_leaf", 1) >= 1, "min_samples_leaf must be >= 1");
                break;
        }
    }
};

// ---------------------------------------------------------------------------
// Regression trees (variance-reduction CART), shared by forest and boosting
// ---------------------------------------------------------------------------

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;
    bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const {
        int at = 0;
        while (!nodes[static_cast<std::size_t>(at)].is_leaf()) {
            const TreeNode& n = nodes[static_cast<std::size_t>(at)];
            at = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(at)].value;
    }
};

struct TreeGrowParams {
    int max_depth = 0;    // 0 = unlimited
    int max_leaves = 0;   // 0 = unlimited
    int min_samples_leaf = 1;
    double feature_fraction = 1.0;
};

namespace detail {

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

struct OpenLeaf {
    int node = -1;
    int depth = 0;
    std::vector<std::size_t> idx;
    double mean = 0.0;
    double sse = 0.0;
    SplitChoice split;
};

inline double subset_mean(const std::vector<double>& y, const std::vector<std::size_t>& idx) {
    bool constant = true;
    for (std::size_t i : idx)
        if (y[i] != y[idx.front()]) { constant = false; break; }
    if (constant) return y[idx.front()];
    double s = 0.0;
    for (std::size_t i : idx) s += y[i];
    return s / static_cast<double>(idx.size());
}

// Candidate features in ascending order; subset drawn without replacement when fraction < 1.
inline std::vector<int> candidate_features(std::size_t dim, double fraction, std::mt19937_64* rng) {
    std::vector<int> all(dim);
    for (std::size_t j = 0; j < dim; ++j) all[j] = static_cast<int>(j);
    if (fraction >= 1.0 || rng == nullptr) return all;
    std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(dim))));
    if (m >= dim) return all;
    for (std::size_t j = 0; j < m; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, dim - 1);
        std::swap(all[j], all[pick(*rng)]);
    }
    all.resize(m);
    std::sort(all.begin(), all.end());
    return all;
}

// Best variance-reduction split; ties keep the lowest feature index, then lowest threshold.
inline SplitChoice best_split(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                              const OpenLeaf& leaf, const TreeGrowParams& params, std::mt19937_64* rng) {
    SplitChoice best;
    std::size_t n = leaf.idx.size();
    if (n < 2 * static_cast<std::size_t>(params.min_samples_leaf)) return best;
    std::vector<int> features = candidate_features(X[0].size(), params.feature_fraction, rng);
    std::vector<std::pair<double, double>> pairs(n);  // (feature value, target shifted by node mean)
    for (int f : features) {
        for (std::size_t i = 0; i < n; ++i)
            pairs[i] = {X[leaf.idx[i]][static_cast<std::size_t>(f)], y[leaf.idx[i]] - leaf.mean};
        std::sort(pairs.begin(), pairs.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        double total_sum = 0.0, total_sq = 0.0;
        for (auto& [xv, yv] : pairs) {
            total_sum += yv;
            total_sq += yv * yv;
        }
        double left_sum = 0.0, left_sq = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            left_sum += pairs[i].second;
            left_sq += pairs[i].second * pairs[i].second;
            if (pairs[i].first == pairs[i + 1].first) continue;
            std::size_t nl = i + 1, nr = n - nl;
            if (nl < static_cast<std::size_t>(params.min_samples_leaf) ||
                nr < static_cast<std::size_t>(params.min_samples_leaf))
                continue;
            double sse_l = left_sq - left_sum * left_sum / static_cast<double>(nl);
            double right_sum = total_sum - left_sum, right_sq = total_sq - left_sq;
            double sse_r = right_sq - right_sum * right_sum / static_cast<double>(nr);
            double gain = leaf.sse - (sse_l + sse_r);
            if (gain > best.gain) {
                best.feature = f;
                best.threshold = (pairs[i].first + pairs[i + 1].first) / 2.0;
                best.gain = gain;
            }
        }
    }
    return best;
}

inline RegressionTree grow_tree(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                                std::vector<std::size_t> idx, const TreeGrowParams& params,
                                std::mt19937_64* rng) {
    RegressionTree tree;
    auto make_leaf = [&](const std::vector<std::size_t>& members, int depth) {
        OpenLeaf leaf;
        leaf.node = static_cast<int>(tree.nodes.size());
        leaf.depth = depth;
        leaf.mean = subset_mean(y, members);
        leaf.sse = 0.0;
        for (std::size_t i : members) leaf.sse += (y[i] - leaf.mean) * (y[i] - leaf.mean);
        leaf.idx = members;
        TreeNode node;
        node.value = leaf.mean;
        tree.nodes.push_back(node);
        return leaf;
    };

    std::vector<OpenLeaf> open;
    open.push_back(make_leaf(idx, 0));
    int leaves = 1;
    for (auto& l : open)
        if (params.max_depth == 0 || l.depth < params.max_depth)
            l.split = best_split(X, y, l, params, rng);

    // Best-first expansion: highest gain first, earliest-created leaf on ties.
    while (params.max_leaves == 0 || leaves < params.max_leaves) {
        int pick = -1;
        for (std::size_t i = 0; i < open.size(); ++i) {
            if (open[i].split.feature < 0) continue;
            if (pick < 0 || open[i].split.gain > open[static_cast<std::size_t>(pick)].split.gain)
                pick = static_cast<int>(i);
        }
        if (pick < 0) break;
        OpenLeaf leaf = std::move(open[static_cast<std::size_t>(pick)]);
        open.erase(open.begin() + pick);

        std::vector<std::size_t> left_idx, right_idx;
        for (std::size_t i : leaf.idx) {
            if (X[i][static_cast<std::size_t>(leaf.split.feature)] <= leaf.split.threshold)
                left_idx.push_back(i);
            else
                right_idx.push_back(i);
        }
        OpenLeaf left = make_leaf(left_idx, leaf.depth + 1);
        OpenLeaf right = make_leaf(right_idx, leaf.depth + 1);
        TreeNode& parent = tree.nodes[static_cast<std::size_t>(leaf.node)];
        parent.feature = leaf.split.feature;
        parent.threshold = leaf.split.threshold;
        parent.left = left.node;
        parent.right = right.node;
        ++leaves;
        if (params.max_depth == 0 || left.depth < params.max_depth) left.split = best_split(X, y, left, params, rng);
        if (params.max_depth == 0 || right.depth < params.max_depth)
            right.split = best_split(X, y, right, params, rng);
        open.push_back(std::move(left));
        open.push_back(std::move(right));
    }
    return tree;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Family states
// ---------------------------------------------------------------------------

struct LinearModel {
    std::vector<double> coef;
    double intercept = 0.0;
};

struct MlpModel {
    std::size_t in_dim = 0;
    std::size_t hidden = 0;
    std::vector<double> w1;  // hidden x in_dim, row-major
    std::vector<double> b1;
    std::vector<double> w2;
    double out_bias = 0.0;
};

struct ForestModel {
    std::vector<RegressionTree> trees;
};

struct BoostModel {
    double base = 0.0;
    double learning_rate = 0.1;
    std::vector<RegressionTree> trees;
};

class TrainedExpert {
public:
    TrainedExpert() = default;

    static TrainedExpert fit(const ExpertConfig& config, const std::vector<std::vector<double>>& X,
                             const std::vector<double>& Y);

    double predict(std::span<const double> x) const {
        if (x.size() != input_dim_)
            throw std::runtime_error("expert '" + config_.name + "': input dim " + std::to_string(x.size()) +
                                     " != " + std::to_string(input_dim_));
        if (const auto* m = std::get_if<LinearModel>(&state_)) {
            double v = m->intercept;
            for (std::size_t j = 0; j < x.size(); ++j) v += m->coef[j] * x[j];
            return v;
        }
        if (const auto* m = std::get_if<MlpModel>(&state_)) {
            double v = m->out_bias;
            for (std::size_t h = 0; h < m->hidden; ++h) {
                double pre = m->b1[h];
                const double* row = m->w1.data() + h * m->in_dim;
                for (std::size_t j = 0; j < m->in_dim; ++j) pre += row[j] * x[j];
                if (pre > 0.0) v += m->w2[h] * pre;
            }
            return v;
        }
        if (const auto* m = std::get_if<ForestModel>(&state_)) {
            double first = m->trees.front().predict(x);
            double sum = first;
            bool agree = true;
            for (std::size_t t = 1; t < m->trees.size(); ++t) {
                double v = m->trees[t].predict(x);
                agree = agree && v == first;
                sum += v;
            }
            return agree ? first : sum / static_cast<double>(m->trees.size());
        }
        const auto& m = std::get<BoostModel>(state_);
        double v = m.base;
        for (const auto& t : m.trees) v += m.learning_rate * t.predict(x);
        return v;
    }

    const ExpertConfig& config() const { return config_; }
    std::size_t input_dim() const { return input_dim_; }
    const std::variant<LinearModel, MlpModel, ForestModel, BoostModel>& state() const { return state_; }

    // Per-stage training MSE, recorded by gradient-boosting fits (not serialized).
    const std::vector<double>& training_trace() const { return train_trace_; }

    std::string save() const;
    static TrainedExpert load(std::string_view bytes);

private:
    ExpertConfig config_;
    std::size_t input_dim_ = 0;
    std::variant<LinearModel, MlpModel, ForestModel, BoostModel> state_;
    std::vector<double> train_trace_;

    friend TrainedExpert fit_linear(const ExpertConfig&, const std::vector<std::vector<double>>&,
                                    const std::vector<double>&, bool);
    friend TrainedExpert fit_mlp(const ExpertConfig&, const std::vector<std::vector<double>>&,
                                 const std::vector<double>&);
    friend TrainedExpert fit_forest(const ExpertConfig&, const std::vector<std::vector<double>>&,
                                    const std::vector<double>&);
    friend TrainedExpert fit_boosting(const ExpertConfig&, const std::vector<std::vector<double>>&,
                                      const std::vector<double>&);
};

// ---------------------------------------------------------------------------
// Fitters
// ---------------------------------------------------------------------------

// Coordinate descent for ridge (l1=false) and lasso (l1=true); intercept unpenalized.
// Objective: (1/2N) * ||y - b0 - Xb||^2 + alpha * penalty(b).
inline TrainedExpert fit_linear(const ExpertConfig& cfg, const std::vector<std::vector<double>>& X,
                                const std::vector<double>& Y, bool l1) {
    std::size_t n = X.size(), d = X[0].size();
    double alpha = cfg.get("alpha", l1 ? 0.001 : 1.0);
    double tol = cfg.get("tol", 1e-8);
    int max_iter = cfg.get_int("max_iter", 1000);

    LinearModel m;
    m.coef.assign(d, 0.0);
    m.intercept = mean_of(Y);

    std::vector<double> residual(n);
    for (std::size_t i = 0; i < n; ++i) residual[i] = Y[i] - m.intercept;
    std::vector<double> col_sq(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n; ++i) col_sq[j] += X[i][j] * X[i][j];
        col_sq[j] /= static_cast<double>(n);
    }

    for (int iter = 0; iter < max_iter; ++iter) {
        double max_delta = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            if (col_sq[j] == 0.0) continue;
            double rho = 0.0;
            for (std::size_t i = 0; i < n; ++i) rho += X[i][j] * residual[i];
            rho = rho / static_cast<double>(n) + col_sq[j] * m.coef[j];
            double updated;
            if (l1) {
                double soft = std::abs(rho) <= alpha ? 0.0 : (rho > 0 ? rho - alpha : rho + alpha);
                updated = soft / col_sq[j];
            } else {
                updated = rho / (col_sq[j] + alpha);
            }
            double delta = updated - m.coef[j];
            if (delta != 0.0) {
                for (std::size_t i = 0; i < n; ++i) residual[i] -= X[i][j] * delta;
                m.coef[j] = updated;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        double r_mean = 0.0;
        for (double r : residual) r_mean += r;
        r_mean /= static_cast<double>(n);
        if (r_mean != 0.0) {
            m.intercept += r_mean;
            for (double& r : residual) r -= r_mean;
            max_delta = std::max(max_delta, std::abs(r_mean));
        }
        if (max_delta < tol) break;
    }

    TrainedExpert e;
    e.config_ = cfg;
    e.input_dim_ = d;
    e.state_ = std::move(m);
    return e;
}

// One hidden ReLU layer trained with Adam on squared error. The output layer
// starts at zero with bias = mean(y), so a constant target is an exact fixed point.
inline TrainedExpert fit_mlp(const ExpertConfig& cfg, const std::vector<std::vector<double>>& X,
                             const std::vector<double>& Y) {
    std::size_t n = X.size(), d = X[0].size();
    std::size_t hidden = static_cast<std::size_t>(cfg.get_int("hidden_units", 128));
    int epochs = cfg.get_int("epochs", 200);
    std::size_t batch_size = static_cast<std::size_t>(cfg.get_int("batch_size", 32));
    double lr = cfg.get("learning_rate", 1e-3);
    double l2 = cfg.get("l2", 0.0);
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    MlpModel m;
    m.in_dim = d;
    m.hidden = hidden;
    m.w1.resize(hidden * d);
    m.b1.assign(hidden, 0.0);
    m.w2.assign(hidden, 0.0);
    m.out_bias = mean_of(Y);

    std::mt19937_64 rng(derive_seed(cfg.seed, 0xA1));
    double bound = std::sqrt(6.0 / static_cast<double>(d + hidden));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (double& w : m.w1) w = uni(rng);

    std::size_t nparam = m.w1.size() + m.b1.size() + m.w2.size() + 1;
    std::vector<double> grad(nparam, 0.0), mom(nparam, 0.0), vel(nparam, 0.0);
    auto w1_at = [&](std::size_t k) -> std::size_t { return k; };
    auto b1_at = [&](std::size_t h) -> std::size_t { return m.w1.size() + h; };
    auto w2_at = [&](std::size_t h) -> std::size_t { return m.w1.size() + m.b1.size() + h; };
    std::size_t ob_at = nparam - 1;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<double> pre(hidden), act(hidden);
    long step = 0;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += batch_size) {
            std::size_t end = std::min(n, start + batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t bi = start; bi < end; ++bi) {
                const auto& x = X[order[bi]];
                double y = Y[order[bi]];
                double out = m.out_bias;
                for (std::size_t h = 0; h < hidden; ++h) {
                    double p = m.b1[h];
                    const double* row = m.w1.data() + h * d;
                    for (std::size_t j = 0; j < d; ++j) p += row[j] * x[j];
                    pre[h] = p;
                    act[h] = p > 0.0 ? p : 0.0;
                    out += m.w2[h] * act[h];
                }
                double err = out - y;
                grad[ob_at] += err;
                for (std::size_t h = 0; h < hidden; ++h) {
                    grad[w2_at(h)] += err * act[h];
                    if (pre[h] > 0.0) {
                        double dh = err * m.w2[h];
                        grad[b1_at(h)] += dh;
                        double* grow = grad.data() + h * d;
                        for (std::size_t j = 0; j < d; ++j) grow[j] += dh * x[j];
                    }
                }
            }
            double scale = 1.0 / static_cast<double>(end - start);
            ++step;
            double corr1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            double corr2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            auto adam = [&](std::size_t k, double& param, bool regularized) {
                double g = grad[k] * scale + (regularized ? l2 * param : 0.0);
                mom[k] = beta1 * mom[k] + (1.0 - beta1) * g;
                vel[k] = beta2 * vel[k] + (1.0 - beta2) * g * g;
                param -= lr * (mom[k] / corr1) / (std::sqrt(vel[k] / corr2) + eps);
            };
            for (std::size_t k = 0; k < m.w1.size(); ++k) adam(w1_at(k), m.w1[k], true);
            for (std::size_t h = 0; h < hidden; ++h) adam(b1_at(h), m.b1[h], false);
            for (std::size_t h = 0; h < hidden; ++h) adam(w2_at(h), m.w2[h], true);
            adam(ob_at, m.out_bias, false);
        }
    }

    TrainedExpert e;
    e.config_ = cfg;
    e.input_dim_ = d;
    e.state_ = std::move(m);
    return e;
}

inline TrainedExpert fit_forest(const ExpertConfig& cfg, const std::vector<std::vector<double>>& X,
                                const std::vector<double>& Y) {
    std::size_t n = X.size(), d = X[0].size();
    int n_trees = cfg.get_int("n_estimators", 250);
    bool bootstrap = cfg.get_int("bootstrap", 1) != 0;
    TreeGrowParams params;
    params.max_depth = cfg.get_int("max_depth", 4);
    params.min_samples_leaf = cfg.get_int("min_samples_leaf", 1);
    params.feature_fraction = cfg.get("feature_fraction", 1.0 / 3.0);

    ForestModel m;
    m.trees.reserve(static_cast<std::size_t>(n_trees));
    for (int t = 0; t < n_trees; ++t) {
        std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> idx(n);
        if (bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (std::size_t i = 0; i < n; ++i) idx[i] = pick(rng);
        } else {
            for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        }
        std::mt19937_64* feat_rng = params.feature_fraction < 1.0 && d > 1 ? &rng : nullptr;
        m.trees.push_back(detail::grow_tree(X, Y, std::move(idx), params, feat_rng));
    }

    TrainedExpert e;
    e.config_ = cfg;
    e.input_dim_ = d;
    e.state_ = std::move(m);
    return e;
}

// Stage-wise least-squares boosting with shrinkage; depth- or leaf-limited trees.
inline TrainedExpert fit_boosting(const ExpertConfig& cfg, const std::vector<std::vector<double>>& X,
                                  const std::vector<double>& Y) {
    std::size_t n = X.size(), d = X[0].size();
    int n_trees = cfg.get_int("n_estimators", 100);
    TreeGrowParams params;
    params.max_depth = cfg.get_int("max_depth", 3);
    params.max_leaves = cfg.get_int("num_leaves", 0);
    params.min_samples_leaf = cfg.get_int("min_samples_leaf", 1);
    if (params.max_leaves > 0) params.max_depth = cfg.get_int("max_depth", 0);

    BoostModel m;
    m.base = mean_of(Y);
    m.learning_rate = cfg.get("learning_rate", 0.1);
    m.trees.reserve(static_cast<std::size_t>(n_trees));

    std::vector<double> pred(n, m.base), residual(n), trace;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    trace.reserve(static_cast<std::size_t>(n_trees));
    for (int t = 0; t < n_trees; ++t) {
        for (std::size_t i = 0; i < n; ++i) residual[i] = Y[i] - pred[i];
        RegressionTree tree = detail::grow_tree(X, residual, idx, params, nullptr);
        for (std::size_t i = 0; i < n; ++i) pred[i] += m.learning_rate * tree.predict(X[i]);
        m.trees.push_back(std::move(tree));
        double mse = 0.0;
        for (std::size_t i = 0; i < n; ++i) mse += (Y[i] - pred[i]) * (Y[i] - pred[i]);
        trace.push_back(mse / static_cast<double>(n));
    }

    TrainedExpert e;
    e.config_ = cfg;
    e.input_dim_ = d;
    e.state_ = std::move(m);
    e.train_trace_ = std::move(trace);
    return e;
}

inline TrainedExpert TrainedExpert::fit(const ExpertConfig& config, const std::vector<std::vector<double>>& X,
                                        const std::vector<double>& Y) {
    config.validate();
    if (X.size() != Y.size()) throw std::runtime_error("fit: |X| != |Y|");
    if (X.size() < 2) throw std::runtime_error("fit: need at least 2 samples");
    std::size_t d = X[0].size();
    if (d == 0) throw std::runtime_error("fit: zero-dimensional input");
    for (const auto& row : X) {
        if (row.size() != d) throw std::runtime_error("fit: inconsistent input dimensions");
        check_finite(row, "X");
    }
    check_finite(Y, "Y");

    switch (config.family) {
        case ExpertFamily::ridge: return fit_linear(config, X, Y, false);
        case ExpertFamily::lasso: return fit_linear(config, X, Y, true);
        case ExpertFamily::mlp: return fit_mlp(config, X, Y);
        case ExpertFamily::random_forest: return fit_forest(config, X, Y);
        case ExpertFamily::gradient_boosting: return fit_boosting(config, X, Y);
    }
    throw std::runtime_error("unreachable");
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kExpertMagic[8] = {'E', 'M', 'I', 'X', 'M', 'D', 'L', '1'};

struct ByteWriter {
    std::string out;
    void u8(std::uint8_t v) { out.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out.append(s);
    }
};

struct ByteReader {
    std::string_view in;
    std::size_t at = 0;
    void need(std::size_t n) const {
        if (at + n > in.size()) throw std::runtime_error("expert bytes truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(in[at++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at++])) << (8 * i);
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        std::uint32_t n = u32();
        need(n);
        std::string s(in.substr(at, n));
        at += n;
        return s;
    }
};

inline void write_tree(ByteWriter& w, const RegressionTree& t) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const TreeNode& n : t.nodes) {
        w.u32(static_cast<std::uint32_t>(n.feature));
        w.f64(n.threshold);
        w.f64(n.value);
        w.u32(static_cast<std::uint32_t>(n.left));
        w.u32(static_cast<std::uint32_t>(n.right));
    }
}

inline RegressionTree read_tree(ByteReader& r) {
    RegressionTree t;
    std::uint32_t n = r.u32();
    t.nodes.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        TreeNode node;
        node.feature = static_cast<int>(r.u32());
        node.threshold = r.f64();
        node.value = r.f64();
        node.left = static_cast<int>(r.u32());
        node.right = static_cast<int>(r.u32());
        t.nodes.push_back(node);
    }
    return t;
}

}  // namespace detail

inline std::string TrainedExpert::save() const {
    detail::ByteWriter w;
    w.out.append(detail::kExpertMagic, sizeof(detail::kExpertMagic));
    w.str(config_.name);
    w.u8(static_cast<std::uint8_t>(config_.family));
    w.u64(config_.seed);
    w.u32(static_cast<std::uint32_t>(config_.params.size()));
    for (const auto& [k, v] : config_.params) {
        w.str(k);
        w.f64(v);
    }
    w.u64(input_dim_);
    if (const auto* m = std::get_if<LinearModel>(&state_)) {
        w.u8(0);
        w.f64(m->intercept);
        w.u32(static_cast<std::uint32_t>(m->coef.size()));
        for (double c : m->coef) w.f64(c);
    } else if (const auto* m = std::get_if<MlpModel>(&state_)) {
        w.u8(1);
        w.u64(m->in_dim);
        w.u64(m->hidden);
        for (double v : m->w1) w.f64(v);
        for (double v : m->b1) w.f64(v);
        for (double v : m->w2) w.f64(v);
        w.f64(m->out_bias);
    } else if (const auto* m = std::get_if<ForestModel>(&state_)) {
        w.u8(2);
        w.u32(static_cast<std::uint32_t>(m->trees.size()));
        for (const auto& t : m->trees) detail::write_tree(w, t);
    } else {
        const auto& boost = std::get<BoostModel>(state_);
        w.u8(3);
        w.f64(boost.base);
        w.f64(boost.learning_rate);
        w.u32(static_cast<std::uint32_t>(boost.trees.size()));
        for (const auto& t : boost.trees) detail::write_tree(w, t);
    }
    return std::move(w.out);
}

inline TrainedExpert TrainedExpert::load(std::string_view bytes) {
    if (bytes.size() < sizeof(detail::kExpertMagic) ||
        std::memcmp(bytes.data(), detail::kExpertMagic, sizeof(detail::kExpertMagic)) != 0)
        throw std::runtime_error("expert bytes: bad magic or unsupported version");
    detail::ByteReader r{bytes, sizeof(detail::kExpertMagic)};
    TrainedExpert e;
    e.config_.name = r.str();
    std::uint8_t fam = r.u8();
    if (fam > 4) throw std::runtime_error("expert bytes: bad family tag");
    e.config_.family = static_cast<ExpertFamily>(fam);
    e.config_.seed = r.u64();
    std::uint32_t nparams = r.u32();
    for (std::uint32_t i = 0; i < nparams; ++i) {
        std::string k = r.str();
        e.config_.params[k] = r.f64();
    }
    e.input_dim_ = r.u64();
    std::uint8_t tag = r.u8();
    if (tag == 0) {
        LinearModel m;
        m.intercept = r.f64();
        std::uint32_t nc = r.u32();
        m.coef.reserve(nc);
        for (std::uint32_t i = 0; i < nc; ++i) m.coef.push_back(r.f64());
        e.state_ = std::move(m);
    } else if (tag == 1) {
        MlpModel m;
        m.in_dim = r.u64();
        m.hidden = r.u64();
        if (m.in_dim > bytes.size() || m.hidden > bytes.size())
            throw std::runtime_error("expert bytes: implausible mlp dims");
        m.w1.reserve(m.hidden * m.in_dim);
        for (std::size_t i = 0; i < m.hidden * m.in_dim; ++i) m.w1.push_back(r.f64());
        for (std::size_t i = 0; i < m.hidden; ++i) m.b1.push_back(r.f64());
        for (std::size_t i = 0; i < m.hidden; ++i) m.w2.push_back(r.f64());
        m.out_bias = r.f64();
        e.state_ = std::move(m);
    } else if (tag == 2) {
        ForestModel m;
        std::uint32_t nt = r.u32();
        m.trees.reserve(nt);
        for (std::uint32_t i = 0; i < nt; ++i) m.trees.push_back(detail::read_tree(r));
        e.state_ = std::move(m);
    } else if (tag == 3) {
        BoostModel m;
        m.base = r.f64();
        m.learning_rate = r.f64();
        std::uint32_t nt = r.u32();
        m.trees.reserve(nt);
        for (std::uint32_t i = 0; i < nt; ++i) m.trees.push_back(detail::read_tree(r));
        e.state_ = std::move(m);
    } else {
        throw std::runtime_error("expert bytes: bad state tag");
    }
    if (r.at != bytes.size()) throw std::runtime_error("expert bytes: trailing garbage");
    return e;
}

}  // namespace emix
