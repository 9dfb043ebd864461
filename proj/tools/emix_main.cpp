// emix: experts-mixture pipeline for tweet emotion intensity tasks.
//
// Subcommands: featurize, train, predict, evaluate, gridsearch, ablate.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "emix/config.hpp"
#include "emix/corpus.hpp"
#include "emix/eval.hpp"
#include "emix/model.hpp"

namespace fs = std::filesystem;
using namespace emix;

namespace {

struct Args {
    std::string config_path;
    std::string task;
    std::string train_path, dev_path, test_path;
    std::vector<std::string> gold_paths, pred_paths;
    std::string model_dir, report_dir, out_path, apply_path;
    std::string cache_name = "features";
    std::string grid_spec, grid_expert;

    double eta = -1.0;
    int epochs = -1;
    int k = -1;
    long long seed = -1;
    bool in_sample_gating = false;
    bool exact_gate_gradient = false;
    std::string contractions, acronyms, symbols, spelling, mood, pos;
    std::vector<std::string> lexicons, embeddings, caches;
};

void add_common_options(CLI::App* cmd, Args& a, bool needs_config) {
    auto* cfg = cmd->add_option("--config", a.config_path, "pipeline config file (INI)");
    if (needs_config) cfg->required();
    cmd->add_option("--task", a.task, "task: EI-reg:<emotion>, EI-oc:<emotion>, V-reg, V-oc, E-c")->required();
    cmd->add_option("--seed", a.seed, "run seed (overrides config)");
    cmd->add_option("--k", a.k, "cross-validation folds (overrides config)");
    cmd->add_option("--eta", a.eta, "gating learning rate (overrides config)");
    cmd->add_option("--epochs", a.epochs, "gating epochs (overrides config)");
    cmd->add_flag("--in-sample-gating", a.in_sample_gating, "train the gate on in-sample expert predictions");
    cmd->add_flag("--exact-gate-gradient", a.exact_gate_gradient, "use the full softmax chain-rule gradient for w");
    cmd->add_option("--contractions", a.contractions, "contractions rule file (overrides config)");
    cmd->add_option("--acronyms", a.acronyms, "acronyms rule file (overrides config)");
    cmd->add_option("--symbols", a.symbols, "symbols rule file (overrides config)");
    cmd->add_option("--spelling", a.spelling, "spelling rule file (overrides config)");
    cmd->add_option("--mood", a.mood, "hashtag mood dictionary (overrides config)");
    cmd->add_option("--pos", a.pos, "POS tag lexicon (overrides config)");
    cmd->add_option("--lexicon", a.lexicons, "sentiment lexicon name:style:path (repeatable; overrides config)");
    cmd->add_option("--embedding", a.embeddings, "embedding group:path (repeatable; overrides config)");
    cmd->add_option("--cache", a.caches, "dense cache group:path (repeatable; overrides config)");
}

RunConfig resolve_config(const Args& a) {
    RunConfig rc = a.config_path.empty() ? RunConfig{} : RunConfig::from_ini(IniFile::load(a.config_path));
    if (a.seed >= 0) rc.seed = static_cast<std::uint64_t>(a.seed);
    if (a.k > 0) rc.k = a.k;
    if (a.eta > 0) rc.eta = a.eta;
    if (a.epochs > 0) rc.epochs = a.epochs;
    if (a.in_sample_gating) rc.in_sample_gating = true;
    if (a.exact_gate_gradient) rc.exact_gradient = true;
    if (!a.contractions.empty()) rc.contractions_path = a.contractions;
    if (!a.acronyms.empty()) rc.acronyms_path = a.acronyms;
    if (!a.symbols.empty()) rc.symbols_path = a.symbols;
    if (!a.spelling.empty()) rc.spelling_path = a.spelling;
    if (!a.mood.empty()) rc.mood_path = a.mood;
    if (!a.pos.empty()) rc.pos_path = a.pos;
    if (!a.lexicons.empty()) {
        rc.lexicon_entries.clear();
        for (const auto& entry : a.lexicons) {
            auto c1 = entry.find(':');
            auto c2 = c1 == std::string::npos ? std::string::npos : entry.find(':', c1 + 1);
            if (c2 == std::string::npos) throw std::runtime_error("--lexicon must be name:style:path");
            rc.lexicon_entries.emplace_back(entry.substr(0, c1), entry.substr(c1 + 1, c2 - c1 - 1),
                                            entry.substr(c2 + 1));
        }
    }
    for (const auto& entry : a.embeddings) {
        auto colon = entry.find(':');
        if (colon == std::string::npos) throw std::runtime_error("--embedding must be group:path");
        rc.embedding_paths[entry.substr(0, colon)] = entry.substr(colon + 1);
    }
    for (const auto& entry : a.caches) {
        auto colon = entry.find(':');
        if (colon == std::string::npos) throw std::runtime_error("--cache must be group:path");
        rc.cache_paths[entry.substr(0, colon)] = entry.substr(colon + 1);
    }
    return rc;
}

// Every run persists the config it actually used, next to its artifacts.
void persist_config(const RunConfig& rc, const Args& a, const std::string& path) {
    std::string out = rc.serialize();
    out += "\n[files]\n";
    out += "task = " + a.task + "\n";
    auto line = [&](const char* key, const std::string& v) {
        if (!v.empty()) out += std::string(key) + " = " + v + "\n";
    };
    line("train", a.train_path);
    line("dev", a.dev_path);
    line("test", a.test_path);
    for (const auto& p : a.gold_paths) line("gold", p);
    for (const auto& p : a.pred_paths) line("pred", p);
    write_file(path, out);
}

Dataset load_training_data(const Args& a, const TaskKind& task) {
    Dataset train = load_tsv(a.train_path, task, Split::train);
    if (a.dev_path.empty()) return train;
    Dataset dev = load_tsv(a.dev_path, task, Split::dev);
    return merge(train, dev);
}

// For EI evaluate runs the emotion can come from the file body instead of --task.
Emotion sniff_emotion(const std::string& path) {
    auto lines = read_lines(path);
    if (lines.size() < 2) throw std::runtime_error(path + ": no data rows to infer the emotion from");
    auto cols = split(lines[1], '\t');
    if (cols.size() < 3) throw std::runtime_error(path + ": malformed data row");
    return parse_emotion(cols[2]);
}

int cmd_featurize(const Args& a) {
    TaskKind task = TaskKind::parse(a.task);
    RunConfig rc = resolve_config(a);
    Dataset fit_set = load_tsv(a.train_path, task, Split::train);
    FeaturePipeline pipeline = FeaturePipeline::fit(rc.pipeline, rc.load_resources(), fit_set);

    Dataset apply_set = a.apply_path.empty() ? fit_set : load_tsv(a.apply_path, task, Split::test);
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    rows.reserve(apply_set.samples.size());
    for (const Sample& s : apply_set.samples) rows.emplace_back(s.id, pipeline.assemble(s).concatenated);
    write_file(a.out_path, serialize_dense_cache(a.cache_name, pipeline.total_dim(), rows));
    persist_config(rc, a, a.out_path + ".run_config.ini");
    std::cout << "featurized " << rows.size() << " samples, dim " << pipeline.total_dim() << " -> " << a.out_path
              << "\n";
    return 0;
}

int cmd_train(const Args& a) {
    TaskKind task = TaskKind::parse(a.task);
    RunConfig rc = resolve_config(a);
    Dataset data = load_training_data(a, task);
    std::vector<ExpertConfig> roster = rc.roster_for(task);
    rc.experts = roster;  // persist the fully-resolved roster, seeds included

    TaskModel model = TaskModel::fit(data, rc.pipeline, rc.load_resources(), roster, TrainOptions::from_config(rc));
    fs::create_directories(a.model_dir);
    model.save(a.model_dir);
    persist_config(rc, a, a.model_dir + "/run_config.ini");
    std::cout << "trained " << model.heads.size() << " head(s) on " << data.size() << " samples -> " << a.model_dir
              << "\n";
    return 0;
}

int cmd_predict(const Args& a) {
    TaskKind task = TaskKind::parse(a.task);
    RunConfig rc = RunConfig::from_ini(IniFile::load(a.model_dir + "/run_config.ini"));
    TaskModel model = TaskModel::load(a.model_dir, rc.pipeline, rc.load_resources());
    if (!(model.task == task)) throw std::runtime_error("model dir was trained for " + model.task.name());

    Dataset in = load_tsv(a.test_path, task, Split::test);
    Dataset out = model.predict_dataset(in);
    save_tsv(out, a.out_path);
    persist_config(rc, a, a.out_path + ".run_config.ini");
    std::cout << "predicted " << out.size() << " samples -> " << a.out_path << "\n";
    return 0;
}

int cmd_evaluate(const Args& a) {
    if (a.gold_paths.empty() || a.gold_paths.size() != a.pred_paths.size())
        throw std::runtime_error("evaluate needs matching --gold and --pred files");

    // Family-level EI task names are allowed; each file names its own emotion.
    bool family_ei = a.task == "EI-reg" || a.task == "EI-oc";
    TaskKind probe = family_ei ? TaskKind::make(a.task == "EI-reg" ? TaskFamily::ei_reg : TaskFamily::ei_oc,
                                                sniff_emotion(a.gold_paths[0]))
                               : TaskKind::parse(a.task);

    EvaluationReport report;
    report.task = probe;
    std::map<Emotion, double> primary_by_emotion;

    for (std::size_t p = 0; p < a.gold_paths.size(); ++p) {
        TaskKind task = probe;
        if (family_ei) {
            task = TaskKind::make(probe.family, sniff_emotion(a.gold_paths[p]));
        } else if (a.gold_paths.size() > 1) {
            throw std::runtime_error("multiple gold/pred pairs are only for EI tasks (one file per emotion)");
        }
        Dataset gold = load_tsv(a.gold_paths[p], task, Split::test);
        Dataset pred = load_tsv(a.pred_paths[p], task, Split::test);

        std::map<std::string, const Target*> by_id;
        for (const Sample& s : pred.samples) {
            if (!s.target) throw std::runtime_error("prediction file has unlabeled row: " + s.id);
            by_id[s.id] = &*s.target;
        }
        std::vector<Target> g, q;
        for (const Sample& s : gold.samples) {
            if (!s.target) throw std::runtime_error("gold file has unlabeled row: " + s.id);
            auto it = by_id.find(s.id);
            if (it == by_id.end()) throw std::runtime_error("prediction missing for sample '" + s.id + "'");
            g.push_back(*s.target);
            q.push_back(*it->second);
        }

        std::map<std::string, double> scores;
        if (task.is_regression()) {
            std::vector<double> gv, pv;
            for (std::size_t i = 0; i < g.size(); ++i) {
                gv.push_back(std::get<Scalar>(g[i]).value);
                pv.push_back(std::get<Scalar>(q[i]).value);
            }
            scores["pearson"] = pearson(gv, pv);
            try {
                scores["pearson_gold_ge_0.5"] = pearson_gold_subset(gv, pv, 0.5);
            } catch (const std::exception&) {
                // subset too small or constant: omit the line
            }
        } else if (task.is_ordinal()) {
            std::vector<int> gv, pv;
            std::vector<double> gd, pd;
            for (std::size_t i = 0; i < g.size(); ++i) {
                gv.push_back(std::get<Ordinal>(g[i]).cls);
                pv.push_back(std::get<Ordinal>(q[i]).cls);
                gd.push_back(gv.back());
                pd.push_back(pv.back());
            }
            scores["pearson"] = pearson(gd, pd);
            try {
                scores["pearson_some_emotion"] = pearson_some_emotion(gv, pv);
            } catch (const std::exception&) {
            }
        } else {
            std::vector<LabelSet> gv, pv;
            for (std::size_t i = 0; i < g.size(); ++i) {
                gv.push_back(std::get<LabelSet>(g[i]));
                pv.push_back(std::get<LabelSet>(q[i]));
            }
            scores["jaccard"] = jaccard_accuracy(gv, pv);
            scores["micro_f1"] = micro_f1(gv, pv);
            scores["macro_f1"] = macro_f1(gv, pv);
        }

        if (task.emotion) {
            report.per_emotion[emotion_name(*task.emotion)] = scores;
            primary_by_emotion[*task.emotion] = scores.at("pearson");
        } else {
            report.metrics = scores;
        }
    }

    if (probe.emotion && primary_by_emotion.size() == 4)
        report.metrics["pearson_macro_avg"] = macro_avg(primary_by_emotion);

    fs::create_directories(a.report_dir);
    emit_report(report, a.report_dir);
    RunConfig rc = resolve_config(a);
    persist_config(rc, a, a.report_dir + "/run_config.ini");
    std::cout << render_report_text(report);
    return 0;
}

int cmd_gridsearch(const Args& a) {
    TaskKind task = TaskKind::parse(a.task);
    RunConfig rc = resolve_config(a);
    Dataset data = load_training_data(a, task);

    std::vector<ExpertConfig> roster = rc.roster_for(task);
    rc.experts = roster;
    std::size_t target_expert = 0;
    if (!a.grid_expert.empty()) {
        bool found = false;
        for (std::size_t i = 0; i < roster.size(); ++i)
            if (roster[i].name == a.grid_expert) {
                target_expert = i;
                found = true;
            }
        if (!found) throw std::runtime_error("--grid-expert '" + a.grid_expert + "' is not in the roster");
    }

    // --grid "n_estimators=50|100;max_depth=2|3"
    std::vector<GridAxis> grid;
    for (const auto& axis_text : split(a.grid_spec, ';')) {
        if (trim(axis_text).empty()) continue;
        auto eq = axis_text.find('=');
        if (eq == std::string::npos) throw std::runtime_error("--grid axis must be param=v1|v2|...");
        GridAxis axis;
        axis.param = std::string(trim(axis_text.substr(0, eq)));
        for (const auto& v : split(axis_text.substr(eq + 1), '|'))
            axis.values.push_back(parse_double(v, "grid value for " + axis.param));
        grid.push_back(std::move(axis));
    }
    if (grid.empty()) throw std::runtime_error("--grid is required, e.g. \"n_estimators=50|100;max_depth=2|3\"");

    FeaturePipeline pipeline = FeaturePipeline::fit(rc.pipeline, rc.load_resources(), data);
    std::vector<std::vector<double>> X = pipeline.assemble_matrix(data);
    std::vector<Target> targets;
    for (const Sample& s : data.samples) {
        if (!s.target) throw std::runtime_error("gridsearch: sample '" + s.id + "' is unlabeled");
        targets.push_back(*s.target);
    }

    GridSearchResult result = grid_search(roster[target_expert], grid, X, targets, task, rc.k, rc.seed);

    std::string csv;
    for (const auto& axis : grid) csv += axis.param + ",";
    csv += "mean_score\n";
    for (const auto& row : result.table) {
        for (const auto& axis : grid) csv += fmt_double(row.params.at(axis.param)) + ",";
        csv += (std::isnan(row.mean_score) ? std::string("undefined") : fmt_double(row.mean_score)) + "\n";
    }
    fs::create_directories(a.report_dir);
    write_file(a.report_dir + "/grid.csv", csv);

    ExpertConfig best_cfg = roster[target_expert];
    for (const auto& [param, value] : result.best().params) best_cfg.params[param] = value;
    write_file(a.report_dir + "/best_config.ini",
               "[experts]\nexpert = " + serialize_expert_entry(best_cfg) + "\n# mean_score = " +
                   fmt_double(result.best().mean_score) + "\n");
    persist_config(rc, a, a.report_dir + "/run_config.ini");
    std::cout << "evaluated " << result.table.size() << " grid points; best mean_score "
              << fmt_double(result.best().mean_score) << " -> " << a.report_dir << "\n";
    return 0;
}

int cmd_ablate(const Args& a) {
    TaskKind task = TaskKind::parse(a.task);
    RunConfig rc = resolve_config(a);
    Dataset data = load_training_data(a, task);
    std::vector<ExpertConfig> roster = rc.roster_for(task);
    rc.experts = roster;

    FeatureResources res = rc.load_resources();
    std::vector<AblationRow> rows = feature_ablation(rc.pipeline, res, data, roster, TrainOptions::from_config(rc));

    std::string emotion = task.emotion ? emotion_name(*task.emotion) : "valence";
    std::string csv = "group,emotion,pearson\n";
    for (const auto& row : rows)
        csv += row.group + "," + emotion + "," + (row.pearson ? fmt_double(*row.pearson) : "undefined") + "\n";
    fs::create_directories(a.report_dir);
    write_file(a.report_dir + "/ablation.csv", csv);
    persist_config(rc, a, a.report_dir + "/run_config.ini");
    std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"experts-mixture pipeline for SemEval-AIT-style emotion intensity tasks"};
    app.require_subcommand(1);
    Args a;

    auto* featurize = app.add_subcommand("featurize", "fit the feature pipeline and export vectors as a cache file");
    add_common_options(featurize, a, true);
    featurize->add_option("--train", a.train_path, "file the pipeline is fitted on")->required();
    featurize->add_option("--apply", a.apply_path, "file to featurize (default: the --train file)");
    featurize->add_option("--out", a.out_path, "output cache file")->required();
    featurize->add_option("--cache-name", a.cache_name, "group name written to the cache header");

    auto* train = app.add_subcommand("train", "fit experts and the gating network");
    add_common_options(train, a, true);
    train->add_option("--train", a.train_path, "training TSV")->required();
    train->add_option("--dev", a.dev_path, "dev TSV merged into training");
    train->add_option("--model-dir", a.model_dir, "output model directory")->required();

    auto* predict = app.add_subcommand("predict", "predict a test file with a trained model");
    add_common_options(predict, a, false);
    predict->add_option("--model-dir", a.model_dir, "trained model directory")->required();
    predict->add_option("--test", a.test_path, "input TSV")->required();
    predict->add_option("--out", a.out_path, "output predictions TSV")->required();

    auto* evaluate = app.add_subcommand("evaluate", "score predictions against gold labels");
    add_common_options(evaluate, a, false);
    evaluate->add_option("--gold", a.gold_paths, "gold TSV (repeat per EI emotion)")->required();
    evaluate->add_option("--pred", a.pred_paths, "prediction TSV, parallel to --gold")->required();
    evaluate->add_option("--report-dir", a.report_dir, "output report directory")->required();

    auto* gridsearch = app.add_subcommand("gridsearch", "cross-validated hyperparameter grid for one expert");
    add_common_options(gridsearch, a, true);
    gridsearch->add_option("--train", a.train_path, "training TSV")->required();
    gridsearch->add_option("--dev", a.dev_path, "dev TSV merged into training");
    gridsearch->add_option("--grid", a.grid_spec, "axes, e.g. \"n_estimators=50|100;max_depth=2|3\"")->required();
    gridsearch->add_option("--grid-expert", a.grid_expert, "roster expert to tune (default: first)");
    gridsearch->add_option("--report-dir", a.report_dir, "output directory")->required();

    auto* ablate = app.add_subcommand("ablate", "per-feature-group Pearson comparison");
    add_common_options(ablate, a, true);
    ablate->add_option("--train", a.train_path, "training TSV")->required();
    ablate->add_option("--dev", a.dev_path, "dev TSV merged into training");
    ablate->add_option("--report-dir", a.report_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (featurize->parsed()) return cmd_featurize(a);
        if (train->parsed()) return cmd_train(a);
        if (predict->parsed()) return cmd_predict(a);
        if (evaluate->parsed()) return cmd_evaluate(a);
        if (gridsearch->parsed()) return cmd_gridsearch(a);
        if (ablate->parsed()) return cmd_ablate(a);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
