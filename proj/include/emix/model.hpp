#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "emix/config.hpp"
#include "emix/corpus.hpp"
#include "emix/eval.hpp"
#include "emix/experts.hpp"
#include "emix/features.hpp"
#include "emix/gating.hpp"

namespace emix {

struct TrainOptions {
    double eta = 0.01;
    int epochs = 100;
    double tol = 1e-9;
    bool exact_gradient = false;
    bool freeze_bias = false;
    bool in_sample_gating = false;  // default trains the gate on out-of-fold expert predictions
    int k = 5;
    std::uint64_t seed = 42;

    static TrainOptions from_config(const RunConfig& rc) {
        TrainOptions o;
        o.eta = rc.eta;
        o.epochs = rc.epochs;
        o.tol = rc.tol;
        o.exact_gradient = rc.exact_gradient;
        o.in_sample_gating = rc.in_sample_gating;
        o.k = rc.k;
        o.seed = rc.seed;
        return o;
    }
};

// A fitted end-to-end model for one task: feature pipeline, per-head expert
// roster and gate (one head for regression/ordinal, eleven for E-c).
class TaskModel {
public:
    struct Head {
        std::vector<TrainedExpert> experts;
        GatingNetwork gate;
        std::vector<double> error_trace;
    };

    TaskKind task{TaskFamily::v_reg, std::nullopt};
    FeaturePipeline pipeline;
    std::vector<std::string> expert_names;
    std::vector<Head> heads;
    TrainOptions options;

    static TaskModel fit(const Dataset& train, PipelineSpec spec, FeatureResources res,
                         const std::vector<ExpertConfig>& roster, const TrainOptions& options) {
        if (train.samples.empty()) throw std::runtime_error("train: dataset is empty");
        if (roster.empty()) throw std::runtime_error("train: empty expert roster");
        for (const Sample& s : train.samples)
            if (!s.target) throw std::runtime_error("train: sample '" + s.id + "' is unlabeled");

        TaskModel model;
        model.task = train.task;
        model.options = options;
        for (const auto& cfg : roster) model.expert_names.push_back(cfg.name);
        model.pipeline = FeaturePipeline::fit(std::move(spec), std::move(res), train);

        std::vector<std::vector<double>> X = model.pipeline.assemble_matrix(train);
        std::vector<Target> targets;
        targets.reserve(train.samples.size());
        for (const Sample& s : train.samples) targets.push_back(*s.target);
        detail::CvTargets cv = detail::cv_targets(targets, train.task);

        std::optional<FoldAssignment> folds;
        if (!options.in_sample_gating) folds = stratified_kfold(targets, options.k, options.seed);

        std::size_t n = X.size(), n_experts = roster.size();
        for (std::size_t h = 0; h < cv.columns.size(); ++h) {
            const std::vector<double>& y = cv.columns[h];
            Head head;

            std::vector<std::vector<double>> preds(n, std::vector<double>(n_experts, 0.0));
            if (options.in_sample_gating) {
                for (std::size_t e = 0; e < n_experts; ++e) {
                    head.experts.push_back(TrainedExpert::fit(roster[e], X, y));
                    for (std::size_t i = 0; i < n; ++i) preds[i][e] = head.experts[e].predict(X[i]);
                }
            } else {
                for (int f = 0; f < options.k; ++f) {
                    std::vector<std::size_t> tr, va;
                    for (std::size_t i = 0; i < n; ++i) (folds->by_index[i] == f ? va : tr).push_back(i);
                    if (tr.size() < 2)
                        throw std::runtime_error("train: fold " + std::to_string(f) +
                                                 " leaves fewer than 2 training samples");
                    std::vector<std::vector<double>> Xtr;
                    std::vector<double> ytr;
                    Xtr.reserve(tr.size());
                    ytr.reserve(tr.size());
                    for (std::size_t i : tr) {
                        Xtr.push_back(X[i]);
                        ytr.push_back(y[i]);
                    }
                    for (std::size_t e = 0; e < n_experts; ++e) {
                        TrainedExpert ex = TrainedExpert::fit(roster[e], Xtr, ytr);
                        for (std::size_t i : va) preds[i][e] = ex.predict(X[i]);
                    }
                }
                for (std::size_t e = 0; e < n_experts; ++e)
                    head.experts.push_back(TrainedExpert::fit(roster[e], X, y));
            }

            GatingTrainOptions gopts;
            gopts.eta = options.eta;
            gopts.epochs = options.epochs;
            gopts.tol = options.tol;
            gopts.exact_gradient = options.exact_gradient;
            gopts.freeze_bias = options.freeze_bias;
            gopts.seed = derive_seed(options.seed, 0x6A7E + h);
            GatingTrainResult res_g = train_gating(preds, y, gopts);
            head.gate = std::move(res_g.net);
            head.error_trace = std::move(res_g.epoch_mean_error);
            model.heads.push_back(std::move(head));
        }
        return model;
    }

    std::vector<double> expert_predictions(std::size_t head, const std::vector<double>& x) const {
        std::vector<double> yhat;
        yhat.reserve(heads[head].experts.size());
        for (const auto& e : heads[head].experts) yhat.push_back(e.predict(x));
        return yhat;
    }

    Target predict(const Sample& s) const {
        std::vector<double> x = pipeline.assemble(s).concatenated;
        if (task.is_multilabel()) {
            LabelSet ls;
            for (std::size_t h = 0; h < heads.size(); ++h)
                ls.bits[h] = gate_predict_label(heads[h].gate, expert_predictions(h, x));
            return ls;
        }
        std::vector<double> yhat = expert_predictions(0, x);
        if (task.is_regression()) return Scalar{gate_predict_scalar(heads[0].gate, yhat)};
        return Ordinal{gate_predict_ordinal(heads[0].gate, yhat, task.ordinal_class_count())};
    }

    // Mirror of the input with the target column replaced by predictions.
    Dataset predict_dataset(const Dataset& in) const {
        if (!(in.task == task)) throw std::runtime_error("predict: dataset task differs from model task");
        Dataset out = in;
        for (Sample& s : out.samples) s.target = predict(s);
        return out;
    }

    void save(const std::string& dir) const {
        namespace fs = std::filesystem;
        fs::create_directories(dir + "/experts");
        write_file(dir + "/pipeline.txt", pipeline.serialize_state());

        std::string manifest = "gating_manifest 1\n";
        manifest += "task " + task.name() + "\n";
        manifest += "experts ";
        for (std::size_t i = 0; i < expert_names.size(); ++i) manifest += (i ? "," : "") + expert_names[i];
        manifest += "\n";
        manifest += "eta " + fmt_double(options.eta) + "\n";
        manifest += "epochs " + std::to_string(options.epochs) + "\n";
        manifest += "tol " + fmt_double(options.tol) + "\n";
        manifest += std::string("exact_gradient ") + (options.exact_gradient ? "1" : "0") + "\n";
        manifest += std::string("freeze_bias ") + (options.freeze_bias ? "1" : "0") + "\n";
        manifest += std::string("in_sample ") + (options.in_sample_gating ? "1" : "0") + "\n";
        manifest += "k " + std::to_string(options.k) + "\n";
        manifest += "seed " + std::to_string(options.seed) + "\n";
        manifest += "heads " + std::to_string(heads.size()) + "\n";
        for (std::size_t h = 0; h < heads.size(); ++h) {
            manifest += "head " + std::to_string(h) + "\n";
            manifest += "w";
            for (double v : heads[h].gate.w) manifest += " " + fmt_double(v);
            manifest += "\nb";
            for (double v : heads[h].gate.b) manifest += " " + fmt_double(v);
            manifest += "\n";
        }
        write_file(dir + "/gating.txt", manifest);

        std::string trace = "head,epoch,mean_error\n";
        for (std::size_t h = 0; h < heads.size(); ++h)
            for (std::size_t e = 0; e < heads[h].error_trace.size(); ++e)
                trace += std::to_string(h) + "," + std::to_string(e) + "," + fmt_double(heads[h].error_trace[e]) + "\n";
        write_file(dir + "/training_trace.csv", trace);

        for (std::size_t h = 0; h < heads.size(); ++h)
            for (std::size_t e = 0; e < heads[h].experts.size(); ++e)
                write_file(dir + "/experts/h" + std::to_string(h) + "_" + expert_names[e] + ".bin",
                           heads[h].experts[e].save());
    }

    static TaskModel load(const std::string& dir, PipelineSpec spec, FeatureResources res) {
        TaskModel model;
        auto lines = read_lines(dir + "/gating.txt");
        std::size_t at = 0;
        auto next = [&]() -> std::string {
            if (at >= lines.size()) throw std::runtime_error(dir + "/gating.txt: truncated manifest");
            return lines[at++];
        };
        if (next() != "gating_manifest 1") throw std::runtime_error(dir + "/gating.txt: unsupported manifest version");
        auto field = [&](const std::string& key) {
            std::string line = next();
            if (line.rfind(key + " ", 0) != 0)
                throw std::runtime_error(dir + "/gating.txt: expected field '" + key + "', got '" + line + "'");
            return line.substr(key.size() + 1);
        };
        model.task = TaskKind::parse(field("task"));
        for (auto& name : split(field("experts"), ',')) model.expert_names.push_back(name);
        model.options.eta = parse_double(field("eta"), "manifest eta");
        model.options.epochs = static_cast<int>(parse_int(field("epochs"), "manifest epochs"));
        model.options.tol = parse_double(field("tol"), "manifest tol");
        model.options.exact_gradient = field("exact_gradient") == "1";
        model.options.freeze_bias = field("freeze_bias") == "1";
        model.options.in_sample_gating = field("in_sample") == "1";
        model.options.k = static_cast<int>(parse_int(field("k"), "manifest k"));
        model.options.seed = parse_uint64(field("seed"), "manifest seed");
        std::size_t n_heads = static_cast<std::size_t>(parse_int(field("heads"), "manifest heads"));

        model.pipeline = FeaturePipeline::from_state(std::move(spec), std::move(res), read_file(dir + "/pipeline.txt"));

        for (std::size_t h = 0; h < n_heads; ++h) {
            if (field("head") != std::to_string(h)) throw std::runtime_error(dir + "/gating.txt: head order broken");
            Head head;
            auto parse_vec = [&](const char* key) {
                auto parts = split_whitespace(field(key));
                std::vector<double> v;
                for (const auto& p : parts) v.push_back(parse_double(p, "manifest gate vector"));
                return v;
            };
            head.gate.w = parse_vec("w");
            head.gate.b = parse_vec("b");
            head.gate.eta = model.options.eta;
            if (head.gate.w.size() != model.expert_names.size() || head.gate.b.size() != head.gate.w.size())
                throw std::runtime_error(dir + "/gating.txt: gate vector length mismatch");
            for (const auto& name : model.expert_names)
                head.experts.push_back(
                    TrainedExpert::load(read_file(dir + "/experts/h" + std::to_string(h) + "_" + name + ".bin")));
            model.heads.push_back(std::move(head));
        }
        return model;
    }
};

// ---------------------------------------------------------------------------
// Feature ablation (single-group runs vs the full concatenation)
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string group;               // a single feature group, or "all"
    std::optional<double> pearson;   // empty when the correlation is undefined
};

// Out-of-fold predictions are pooled across folds, then scored once per group.
inline std::vector<AblationRow> feature_ablation(const PipelineSpec& spec, const FeatureResources& res,
                                                 const Dataset& data, const std::vector<ExpertConfig>& roster,
                                                 const TrainOptions& options) {
    if (data.task.is_multilabel())
        throw std::runtime_error("feature_ablation: requires a Pearson-scored task (EI-reg/EI-oc/V-reg/V-oc)");
    if (spec.groups.size() < 2) throw std::runtime_error("feature_ablation: need at least 2 feature groups");
    for (const Sample& s : data.samples)
        if (!s.target) throw std::runtime_error("feature_ablation: sample '" + s.id + "' is unlabeled");

    std::vector<Target> targets;
    for (const Sample& s : data.samples) targets.push_back(*s.target);
    FoldAssignment folds = stratified_kfold(targets, options.k, derive_seed(options.seed, 0xAB1A));

    auto gold_value = [&](const Target& t) {
        if (data.task.is_regression()) return std::get<Scalar>(t).value;
        return static_cast<double>(std::get<Ordinal>(t).cls);
    };

    std::vector<std::string> variants = spec.groups;
    variants.push_back("all");

    std::vector<AblationRow> rows;
    for (const std::string& variant : variants) {
        PipelineSpec sub = spec;
        if (variant != "all") sub.groups = {variant};

        // mean of per-fold Pearson, matching the grid-search CV metric;
        // any fold with constant predictions makes the score undefined
        double sum = 0.0;
        bool defined = true;
        for (int f = 0; f < options.k && defined; ++f) {
            Dataset train_part{data.task, Split::train, {}}, val_part{data.task, Split::dev, {}};
            for (std::size_t i = 0; i < data.samples.size(); ++i)
                (folds.by_index[i] == f ? val_part : train_part).samples.push_back(data.samples[i]);
            TaskModel model = TaskModel::fit(train_part, sub, res, roster, options);
            std::vector<double> gold, pred;
            for (const Sample& s : val_part.samples) {
                gold.push_back(gold_value(*s.target));
                pred.push_back(gold_value(model.predict(s)));
            }
            try {
                sum += pearson(gold, pred);
            } catch (const std::exception&) {
                defined = false;
            }
        }
        AblationRow row{variant, std::nullopt};
        if (defined) row.pearson = sum / static_cast<double>(options.k);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace emix
