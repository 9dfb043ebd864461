#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "emix/experts.hpp"
#include "emix/features.hpp"
#include "emix/gating.hpp"
#include "emix/util.hpp"

namespace emix {

// Minimal INI-style config: [section] headers, key = value lines, '#' comments.
// Repeated keys are kept in order.
struct IniFile {
    std::vector<std::tuple<std::string, std::string, std::string>> entries;  // section, key, value

    static IniFile parse(const std::string& text, const std::string& origin = "<config>") {
        IniFile ini;
        std::string section;
        auto lines = split(text, '\n');
        for (std::size_t i = 0; i < lines.size(); ++i) {
            std::string_view line = trim(lines[i]);
            if (line.empty() || line.front() == '#') continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw std::runtime_error(origin + ":" + std::to_string(i + 1) + ": unterminated section");
                section = std::string(trim(line.substr(1, line.size() - 2)));
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw std::runtime_error(origin + ":" + std::to_string(i + 1) + ": expected key = value");
            std::string key(trim(line.substr(0, eq)));
            std::string value(trim(line.substr(eq + 1)));
            if (key.empty()) throw std::runtime_error(origin + ":" + std::to_string(i + 1) + ": empty key");
            ini.entries.emplace_back(section, std::move(key), std::move(value));
        }
        return ini;
    }

    static IniFile load(const std::string& path) { return parse(read_file(path), path); }

    std::string get(const std::string& section, const std::string& key, const std::string& fallback = "") const {
        std::string out = fallback;
        for (const auto& [s, k, v] : entries)
            if (s == section && k == key) out = v;
        return out;
    }

    std::vector<std::string> get_all(const std::string& section, const std::string& key) const {
        std::vector<std::string> out;
        for (const auto& [s, k, v] : entries)
            if (s == section && k == key) out.push_back(v);
        return out;
    }

    bool has(const std::string& section, const std::string& key) const {
        for (const auto& [s, k, v] : entries)
            if (s == section && k == key) return true;
        return false;
    }
};

inline bool parse_bool(const std::string& v, const std::string& what) {
    std::string s = to_lower(v);
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw std::runtime_error("invalid boolean '" + v + "' for " + what);
}

// `name:family[:key=val,key=val...]`
inline ExpertConfig parse_expert_entry(const std::string& text) {
    auto parts = split(text, ':');
    if (parts.size() < 2 || parts.size() > 3)
        throw std::runtime_error("expert entry must be name:family[:params], got '" + text + "'");
    ExpertConfig cfg;
    cfg.name = std::string(trim(parts[0]));
    cfg.family = parse_family(trim(parts[1]));
    if (cfg.name.empty()) throw std::runtime_error("expert entry has empty name: '" + text + "'");
    if (parts.size() == 3 && !trim(parts[2]).empty()) {
        for (const auto& kv : split(parts[2], ',')) {
            auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("expert hyperparameter must be key=value, got '" + kv + "'");
            std::string key(trim(std::string_view(kv).substr(0, eq)));
            std::string_view value = std::string_view(kv).substr(eq + 1);
            if (key == "seed")
                cfg.seed = parse_uint64(value, "expert seed");
            else
                cfg.params[key] = parse_double(value, "expert hyperparameter " + key);
        }
    }
    return cfg;
}

inline std::string serialize_expert_entry(const ExpertConfig& cfg) {
    std::string out = cfg.name + ":" + family_name(cfg.family) + ":";
    bool first = true;
    for (const auto& [k, v] : cfg.params) {
        if (!first) out += ',';
        out += k + "=" + fmt_double(v);
        first = false;
    }
    if (!first) out += ',';
    out += "seed=" + std::to_string(cfg.seed);
    return out;
}

struct RunConfig {
    PipelineSpec pipeline;

    std::string contractions_path, acronyms_path, symbols_path, spelling_path;
    std::string mood_path, pos_path;
    std::vector<std::tuple<std::string, std::string, std::string>> lexicon_entries;  // name, style, path
    std::map<std::string, std::string> embedding_paths;                              // group name -> path
    std::map<std::string, std::string> cache_paths;                                  // group name -> path

    std::vector<ExpertConfig> experts;  // empty -> per-task default roster

    double eta = 0.01;
    int epochs = 100;
    double tol = 1e-9;
    bool exact_gradient = false;
    bool in_sample_gating = false;
    int k = 5;
    std::uint64_t seed = 42;

    static RunConfig from_ini(const IniFile& ini) {
        RunConfig rc;
        std::string groups = ini.get("pipeline", "groups");
        if (groups.empty()) throw std::runtime_error("config: [pipeline] groups is required");
        for (auto& g : split(groups, ',')) {
            std::string name(trim(g));
            if (!name.empty()) rc.pipeline.groups.push_back(name);
        }
        rc.pipeline.standardize = parse_bool(ini.get("pipeline", "standardize", "true"), "standardize");
        rc.pipeline.min_df = static_cast<std::size_t>(parse_int(ini.get("pipeline", "min_df", "1"), "min_df"));
        rc.pipeline.max_features =
            static_cast<std::size_t>(parse_int(ini.get("pipeline", "max_features", "10000"), "max_features"));

        rc.contractions_path = ini.get("paths", "contractions");
        rc.acronyms_path = ini.get("paths", "acronyms");
        rc.symbols_path = ini.get("paths", "symbols");
        rc.spelling_path = ini.get("paths", "spelling");
        rc.mood_path = ini.get("paths", "mood");
        rc.pos_path = ini.get("paths", "pos");
        for (const auto& entry : ini.get_all("paths", "lexicon")) {
            auto c1 = entry.find(':');
            auto c2 = c1 == std::string::npos ? std::string::npos : entry.find(':', c1 + 1);
            if (c2 == std::string::npos)
                throw std::runtime_error("config: lexicon entry must be name:style:path, got '" + entry + "'");
            rc.lexicon_entries.emplace_back(std::string(trim(entry.substr(0, c1))),
                                            std::string(trim(entry.substr(c1 + 1, c2 - c1 - 1))),
                                            std::string(trim(entry.substr(c2 + 1))));
        }
        for (const auto& entry : ini.get_all("paths", "embedding")) {
            auto colon = entry.find(':');
            if (colon == std::string::npos)
                throw std::runtime_error("config: embedding entry must be group:path, got '" + entry + "'");
            rc.embedding_paths[std::string(trim(entry.substr(0, colon)))] = std::string(trim(entry.substr(colon + 1)));
        }
        for (const auto& entry : ini.get_all("paths", "cache")) {
            auto colon = entry.find(':');
            if (colon == std::string::npos)
                throw std::runtime_error("config: cache entry must be group:path, got '" + entry + "'");
            rc.cache_paths[std::string(trim(entry.substr(0, colon)))] = std::string(trim(entry.substr(colon + 1)));
        }

        for (const auto& entry : ini.get_all("experts", "expert")) rc.experts.push_back(parse_expert_entry(entry));

        rc.eta = parse_double(ini.get("gating", "eta", "0.01"), "eta");
        rc.epochs = static_cast<int>(parse_int(ini.get("gating", "epochs", "100"), "epochs"));
        rc.tol = parse_double(ini.get("gating", "tol", "1e-09"), "tol");
        rc.exact_gradient = parse_bool(ini.get("gating", "exact_gradient", "false"), "exact_gradient");
        rc.in_sample_gating = parse_bool(ini.get("gating", "in_sample", "false"), "in_sample");
        rc.k = static_cast<int>(parse_int(ini.get("run", "k", "5"), "k"));
        rc.seed = parse_uint64(ini.get("run", "seed", "42"), "seed");
        return rc;
    }

    // Canonical resolved form: every effective value explicit, fixed ordering.
    std::string serialize() const {
        std::string out = "[pipeline]\n";
        out += "groups = ";
        for (std::size_t i = 0; i < pipeline.groups.size(); ++i)
            out += (i ? "," : "") + pipeline.groups[i];
        out += "\n";
        out += std::string("standardize = ") + (pipeline.standardize ? "true" : "false") + "\n";
        out += "min_df = " + std::to_string(pipeline.min_df) + "\n";
        out += "max_features = " + std::to_string(pipeline.max_features) + "\n";
        out += "\n[paths]\n";
        auto path_line = [&](const char* key, const std::string& value) {
            if (!value.empty()) out += std::string(key) + " = " + value + "\n";
        };
        path_line("contractions", contractions_path);
        path_line("acronyms", acronyms_path);
        path_line("symbols", symbols_path);
        path_line("spelling", spelling_path);
        path_line("mood", mood_path);
        path_line("pos", pos_path);
        for (const auto& [name, style, path] : lexicon_entries) out += "lexicon = " + name + ":" + style + ":" + path + "\n";
        for (const auto& [group, path] : embedding_paths) out += "embedding = " + group + ":" + path + "\n";
        for (const auto& [group, path] : cache_paths) out += "cache = " + group + ":" + path + "\n";
        out += "\n[experts]\n";
        for (const auto& e : experts) out += "expert = " + serialize_expert_entry(e) + "\n";
        out += "\n[gating]\n";
        out += "eta = " + fmt_double(eta) + "\n";
        out += "epochs = " + std::to_string(epochs) + "\n";
        out += "tol = " + fmt_double(tol) + "\n";
        out += std::string("exact_gradient = ") + (exact_gradient ? "true" : "false") + "\n";
        out += std::string("in_sample = ") + (in_sample_gating ? "true" : "false") + "\n";
        out += "\n[run]\n";
        out += "k = " + std::to_string(k) + "\n";
        out += "seed = " + std::to_string(seed) + "\n";
        return out;
    }

    FeatureResources load_resources() const {
        FeatureResources res;
        if (!contractions_path.empty()) res.rules.contractions = load_rule_file(contractions_path);
        if (!acronyms_path.empty()) res.rules.acronyms = load_rule_file(acronyms_path);
        if (!symbols_path.empty()) res.rules.symbols = load_rule_file(symbols_path);
        if (!spelling_path.empty()) res.rules.spelling = load_rule_file(spelling_path);
        if (!mood_path.empty()) res.mood = Lexicon::load("mood", LexiconStyle::scored_sums, mood_path);
        if (!pos_path.empty()) res.pos_tags = load_pos_lexicon(pos_path);
        for (const auto& [name, style, path] : lexicon_entries)
            res.lexicons.lexicons.push_back(Lexicon::load(name, parse_lexicon_style(style), path));
        for (const auto& [group, path] : embedding_paths) res.embeddings[group] = EmbeddingTable::load(path);
        for (const auto& [group, path] : cache_paths) res.caches[group] = DenseCache::load(path);
        return res;
    }

    // Table-defined defaults, one entry per expert the task uses.
    std::vector<ExpertConfig> roster_for(const TaskKind& task) const {
        std::vector<ExpertConfig> roster = experts;
        if (roster.empty()) {
            auto add = [&](const char* name, ExpertFamily family, std::map<std::string, double> params) {
                ExpertConfig cfg;
                cfg.name = name;
                cfg.family = family;
                cfg.params = std::move(params);
                roster.push_back(std::move(cfg));
            };
            add("gb", ExpertFamily::gradient_boosting,
                {{"n_estimators", 3000}, {"learning_rate", 0.05}, {"max_depth", 4}});
            add("xgb", ExpertFamily::gradient_boosting,
                {{"n_estimators", 100}, {"learning_rate", 0.1}, {"max_depth", 3}});
            if (!task.is_multilabel())
                add("lgb", ExpertFamily::gradient_boosting,
                    {{"n_estimators", 720}, {"learning_rate", 0.05}, {"num_leaves", 5}});
            add("rf", ExpertFamily::random_forest, {{"n_estimators", 250}, {"max_depth", 4}});
            if (!task.is_ordinal()) add("nn", ExpertFamily::mlp, {});
        }
        for (std::size_t i = 0; i < roster.size(); ++i)
            if (roster[i].seed == 0) roster[i].seed = derive_seed(seed, 0x5EED + i);
        return roster;
    }
};

}  // namespace emix
