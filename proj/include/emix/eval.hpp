#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "emix/corpus.hpp"
#include "emix/experts.hpp"
#include "emix/gating.hpp"
#include "emix/util.hpp"

namespace emix {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::runtime_error("pearson: length mismatch");
    if (a.size() < 2) throw std::runtime_error("pearson: need at least 2 pairs");
    double ma = mean_of(a), mb = mean_of(b);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) throw std::runtime_error("pearson: undefined for a constant vector");
    return cov / std::sqrt(va * vb);
}

// Pearson restricted to pairs whose gold value is >= lo.
inline double pearson_gold_subset(const std::vector<double>& gold, const std::vector<double>& pred, double lo) {
    if (gold.size() != pred.size()) throw std::runtime_error("pearson_gold_subset: length mismatch");
    std::vector<double> g, p;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] >= lo) {
            g.push_back(gold[i]);
            p.push_back(pred[i]);
        }
    }
    if (g.size() < 2) throw std::runtime_error("pearson_gold_subset: fewer than 2 pairs survive the filter");
    return pearson(g, p);
}

// Pearson over ordinal pairs excluding the "no emotion" class 0 in gold.
inline double pearson_some_emotion(const std::vector<int>& gold, const std::vector<int>& pred) {
    if (gold.size() != pred.size()) throw std::runtime_error("pearson_some_emotion: length mismatch");
    std::vector<double> g, p;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] >= 1) {
            g.push_back(static_cast<double>(gold[i]));
            p.push_back(static_cast<double>(pred[i]));
        }
    }
    if (g.size() < 2) throw std::runtime_error("pearson_some_emotion: fewer than 2 pairs survive the filter");
    return pearson(g, p);
}

// Mean over samples of |G ∩ P| / |G ∪ P|; both-empty counts as 1.
inline double jaccard_accuracy(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred) {
    if (gold.size() != pred.size()) throw std::runtime_error("jaccard_accuracy: length mismatch");
    if (gold.empty()) throw std::runtime_error("jaccard_accuracy: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        int inter = 0, uni = 0;
        for (std::size_t l = 0; l < gold[i].bits.size(); ++l) {
            inter += (gold[i].bits[l] && pred[i].bits[l]) ? 1 : 0;
            uni += (gold[i].bits[l] || pred[i].bits[l]) ? 1 : 0;
        }
        sum += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return sum / static_cast<double>(gold.size());
}

namespace detail {

struct LabelCounts {
    long tp = 0, fp = 0, fn = 0;
};

inline std::array<LabelCounts, 11> confusion_counts(const std::vector<LabelSet>& gold,
                                                    const std::vector<LabelSet>& pred) {
    if (gold.size() != pred.size()) throw std::runtime_error("f1: length mismatch");
    std::array<LabelCounts, 11> counts{};
    for (std::size_t i = 0; i < gold.size(); ++i) {
        for (std::size_t l = 0; l < 11; ++l) {
            if (gold[i].bits[l] && pred[i].bits[l]) ++counts[l].tp;
            else if (!gold[i].bits[l] && pred[i].bits[l]) ++counts[l].fp;
            else if (gold[i].bits[l] && !pred[i].bits[l]) ++counts[l].fn;
        }
    }
    return counts;
}

inline double f1_from(long tp, long fp, long fn) {
    long denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace detail

inline double micro_f1(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred) {
    auto counts = detail::confusion_counts(gold, pred);
    long tp = 0, fp = 0, fn = 0;
    for (const auto& c : counts) {
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
    }
    return detail::f1_from(tp, fp, fn);
}

inline double macro_f1(const std::vector<LabelSet>& gold, const std::vector<LabelSet>& pred) {
    auto counts = detail::confusion_counts(gold, pred);
    double sum = 0.0;
    for (const auto& c : counts) sum += detail::f1_from(c.tp, c.fp, c.fn);
    return sum / static_cast<double>(counts.size());
}

// Mean of the four EI emotion scores; all four must be present.
inline double macro_avg(const std::map<Emotion, double>& scores) {
    for (Emotion e : {Emotion::anger, Emotion::fear, Emotion::joy, Emotion::sadness})
        if (!scores.count(e))
            throw std::runtime_error(std::string("macro_avg: missing emotion ") + emotion_name(e));
    if (scores.size() != 4) throw std::runtime_error("macro_avg: expected exactly four emotions");
    double sum = 0.0;
    for (auto& [e, v] : scores) sum += v;
    return sum / 4.0;
}

// ---------------------------------------------------------------------------
// Stratified k-fold
// ---------------------------------------------------------------------------

struct FoldAssignment {
    int k = 0;
    std::vector<int> by_index;                       // fold of each sample, dataset order
    std::unordered_map<std::string, int> fold_of;    // by sample id, when built from a Dataset
};

namespace detail {

// Scalars bucket into deciles of [0,1]; ordinals stratify by class; label sets by label count.
inline int stratum_key(const Target& t) {
    if (const auto* s = std::get_if<Scalar>(&t))
        return std::min(9, static_cast<int>(std::floor(s->value * 10.0)));
    if (const auto* o = std::get_if<Ordinal>(&t)) return o->cls;
    return std::get<LabelSet>(t).count();
}

}  // namespace detail

inline FoldAssignment stratified_kfold(const std::vector<Target>& targets, int k, std::uint64_t seed) {
    if (k < 2) throw std::runtime_error("stratified_kfold: k must be >= 2");
    if (static_cast<std::size_t>(k) > targets.size())
        throw std::runtime_error("stratified_kfold: k exceeds sample count");
    std::map<int, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < targets.size(); ++i) strata[detail::stratum_key(targets[i])].push_back(i);

    FoldAssignment fa;
    fa.k = k;
    fa.by_index.assign(targets.size(), 0);
    std::mt19937_64 rng(seed);
    for (auto& [key, members] : strata) {
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t i = 0; i < members.size(); ++i)
            fa.by_index[members[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    }
    return fa;
}

inline FoldAssignment stratified_kfold(const Dataset& ds, int k, std::uint64_t seed) {
    std::vector<Target> targets;
    targets.reserve(ds.samples.size());
    for (const Sample& s : ds.samples) {
        if (!s.target) throw std::runtime_error("stratified_kfold: sample '" + s.id + "' is unlabeled");
        targets.push_back(*s.target);
    }
    FoldAssignment fa = stratified_kfold(targets, k, seed);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) fa.fold_of[ds.samples[i].id] = fa.by_index[i];
    return fa;
}

// ---------------------------------------------------------------------------
// Grid search over a single expert's hyperparameters
// ---------------------------------------------------------------------------

struct GridAxis {
    std::string param;
    std::vector<double> values;
};

struct GridSearchRow {
    std::map<std::string, double> params;
    double mean_score = 0.0;  // NaN when the metric was undefined on some fold
};

struct GridSearchResult {
    std::vector<GridSearchRow> table;  // grid iteration order: first axis slowest
    std::size_t best_index = 0;
    const GridSearchRow& best() const { return table[best_index]; }
};

namespace detail {

// Per-task CV targets: regression/ordinal use one column, E-c one per label.
struct CvTargets {
    std::vector<std::vector<double>> columns;
    std::vector<Target> strata;
};

inline CvTargets cv_targets(const std::vector<Target>& targets, const TaskKind& task) {
    CvTargets out;
    out.strata = targets;
    if (task.is_multilabel()) {
        out.columns.assign(11, std::vector<double>(targets.size(), 0.0));
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const auto& ls = std::get<LabelSet>(targets[i]);
            for (std::size_t l = 0; l < 11; ++l) out.columns[l][i] = ls.bits[l] ? 1.0 : 0.0;
        }
    } else {
        out.columns.assign(1, std::vector<double>(targets.size(), 0.0));
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (task.is_regression())
                out.columns[0][i] = std::get<Scalar>(targets[i]).value;
            else
                out.columns[0][i] = static_cast<double>(std::get<Ordinal>(targets[i]).cls);
        }
    }
    return out;
}

// Validation score of one expert config on one fold; NaN when the metric is undefined.
inline double fold_score(const ExpertConfig& cfg, const std::vector<std::vector<double>>& X,
                         const CvTargets& targets, const TaskKind& task, const FoldAssignment& folds,
                         int fold) {
    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i = 0; i < X.size(); ++i)
        (folds.by_index[i] == fold ? val_idx : train_idx).push_back(i);
    if (train_idx.size() < 2 || val_idx.empty()) return std::nan("");

    auto subset = [&](const std::vector<double>& col, const std::vector<std::size_t>& idx) {
        std::vector<double> out;
        out.reserve(idx.size());
        for (std::size_t i : idx) out.push_back(col[i]);
        return out;
    };
    std::vector<std::vector<double>> Xtr;
    Xtr.reserve(train_idx.size());
    for (std::size_t i : train_idx) Xtr.push_back(X[i]);

    try {
        if (task.is_multilabel()) {
            std::vector<LabelSet> gold(val_idx.size()), pred(val_idx.size());
            for (std::size_t l = 0; l < 11; ++l) {
                TrainedExpert ex = TrainedExpert::fit(cfg, Xtr, subset(targets.columns[l], train_idx));
                for (std::size_t v = 0; v < val_idx.size(); ++v) {
                    gold[v].bits[l] = targets.columns[l][val_idx[v]] >= 0.5;
                    pred[v].bits[l] = ex.predict(X[val_idx[v]]) >= 0.5;
                }
            }
            return jaccard_accuracy(gold, pred);
        }
        TrainedExpert ex = TrainedExpert::fit(cfg, Xtr, subset(targets.columns[0], train_idx));
        std::vector<double> gold = subset(targets.columns[0], val_idx), pred;
        pred.reserve(val_idx.size());
        for (std::size_t i : val_idx) {
            double raw = ex.predict(X[i]);
            if (task.is_ordinal())
                raw = static_cast<double>(
                    std::clamp<long>(std::lround(raw), 0L, static_cast<long>(task.ordinal_class_count() - 1)));
            pred.push_back(raw);
        }
        try {
            return pearson(gold, pred);
        } catch (const std::exception&) {
            return std::nan("");  // constant predictions: correlation undefined
        }
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("grid point failed: ") + e.what());
    }
}

}  // namespace detail

inline GridSearchResult grid_search(const ExpertConfig& base, const std::vector<GridAxis>& grid,
                                    const std::vector<std::vector<double>>& X, const std::vector<Target>& targets,
                                    const TaskKind& task, int k, std::uint64_t seed) {
    if (grid.empty()) throw std::runtime_error("grid_search: empty grid");
    for (const auto& axis : grid)
        if (axis.values.empty()) throw std::runtime_error("grid_search: axis '" + axis.param + "' has no values");
    if (X.size() != targets.size()) throw std::runtime_error("grid_search: |X| != |targets|");

    detail::CvTargets cv = detail::cv_targets(targets, task);
    FoldAssignment folds = stratified_kfold(targets, k, seed);

    GridSearchResult result;
    std::vector<std::size_t> at(grid.size(), 0);
    bool done = false;
    while (!done) {
        GridSearchRow row;
        ExpertConfig cfg = base;
        for (std::size_t a = 0; a < grid.size(); ++a) {
            row.params[grid[a].param] = grid[a].values[at[a]];
            cfg.params[grid[a].param] = grid[a].values[at[a]];
        }
        double sum = 0.0;
        bool undefined = false;
        for (int f = 0; f < k; ++f) {
            double s;
            try {
                s = detail::fold_score(cfg, X, cv, task, folds, f);
            } catch (const std::exception& e) {
                std::string point;
                for (auto& [p, v] : row.params) point += (point.empty() ? "" : ",") + p + "=" + fmt_double(v);
                throw std::runtime_error("grid_search at {" + point + "}: " + e.what());
            }
            if (std::isnan(s)) undefined = true;
            else sum += s;
        }
        row.mean_score = undefined ? std::nan("") : sum / static_cast<double>(k);
        result.table.push_back(std::move(row));

        // odometer: last axis fastest
        for (std::size_t a = grid.size(); a-- > 0;) {
            if (++at[a] < grid[a].values.size()) break;
            at[a] = 0;
            if (a == 0) done = true;
        }
    }

    bool any = false;
    for (std::size_t i = 0; i < result.table.size(); ++i) {
        double s = result.table[i].mean_score;
        if (std::isnan(s)) continue;
        if (!any || s > result.table[result.best_index].mean_score) {
            result.best_index = i;
            any = true;
        }
    }
    if (!any) throw std::runtime_error("grid_search: every grid point had an undefined score");
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

struct EvaluationReport {
    TaskKind task;
    std::map<std::string, double> metrics;                           // overall / macro metrics
    std::map<std::string, std::map<std::string, double>> per_emotion;  // EI tasks only
};

inline std::string render_report_text(const EvaluationReport& report) {
    if (report.metrics.empty() && report.per_emotion.empty())
        throw std::runtime_error("emit_report: empty metrics");
    std::string out = "task\t" + report.task.name() + "\n";
    for (const auto& [emotion, metrics] : report.per_emotion)
        for (const auto& [metric, value] : metrics)
            out += metric + "\t" + emotion + "\t" + fmt_double(value) + "\n";
    for (const auto& [metric, value] : report.metrics) out += metric + "\tall\t" + fmt_double(value) + "\n";
    return out;
}

inline std::string render_report_csv(const EvaluationReport& report) {
    if (report.metrics.empty() && report.per_emotion.empty())
        throw std::runtime_error("emit_report: empty metrics");
    std::string out = "metric,scope,value\n";
    for (const auto& [emotion, metrics] : report.per_emotion)
        for (const auto& [metric, value] : metrics) out += metric + "," + emotion + "," + fmt_double(value) + "\n";
    for (const auto& [metric, value] : report.metrics) out += metric + ",all," + fmt_double(value) + "\n";
    return out;
}

inline void emit_report(const EvaluationReport& report, const std::string& dir) {
    write_file(dir + "/report.txt", render_report_text(report));
    write_file(dir + "/report.csv", render_report_csv(report));
}

}  // namespace emix
