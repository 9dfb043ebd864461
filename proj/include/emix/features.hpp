#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "emix/corpus.hpp"
#include "emix/preprocess.hpp"
#include "emix/util.hpp"

namespace emix {

struct FeatureGroup {
    std::string name;
    std::vector<double> values;
    std::size_t dim() const { return values.size(); }
};

struct FeatureVector {
    std::string sample_id;
    std::vector<FeatureGroup> groups;
    std::vector<double> concatenated;
};

// ---------------------------------------------------------------------------
// Embedding tables (word2vec text format)
// ---------------------------------------------------------------------------

struct EmbeddingTable {
    std::size_t dim = 0;
    std::unordered_map<std::string, std::vector<double>> vectors;

    static EmbeddingTable load(const std::string& path) {
        EmbeddingTable t;
        auto lines = read_lines(path);
        std::size_t start = 0;
        if (!lines.empty()) {
            auto head = split_whitespace(lines[0]);
            if (head.size() == 2) {
                // optional `count dim` header
                bool numeric = true;
                for (const auto& h : head)
                    for (char c : h)
                        if (!std::isdigit(static_cast<unsigned char>(c))) numeric = false;
                if (numeric) {
                    t.dim = static_cast<std::size_t>(parse_int(head[1], path));
                    start = 1;
                }
            }
        }
        for (std::size_t i = start; i < lines.size(); ++i) {
            if (trim(lines[i]).empty()) continue;
            auto parts = split_whitespace(lines[i]);
            if (parts.size() < 2)
                throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": malformed embedding line");
            std::vector<double> vec;
            vec.reserve(parts.size() - 1);
            for (std::size_t j = 1; j < parts.size(); ++j) vec.push_back(parse_double(parts[j], path));
            if (t.dim == 0) t.dim = vec.size();
            if (vec.size() != t.dim)
                throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": embedding dim " +
                                         std::to_string(vec.size()) + " != " + std::to_string(t.dim));
            t.vectors[parts[0]] = std::move(vec);
        }
        if (t.vectors.empty()) throw std::runtime_error(path + ": empty embedding table");
        return t;
    }
};

// ---------------------------------------------------------------------------
// Lexicons
// ---------------------------------------------------------------------------

enum class LexiconStyle {
    scored_sums,          // AFINN / Sentiment140 / NRC-Hashtag: (sum positive, sum negative)
    polarity_counts,      // MPQA / Bing Liu: (count positive, count negative)
    pos_neg_neutral_sums, // SentiWordNet: (sum pos, sum neg, sum neutral)
    dimension_sums,       // NRC affect/emotion: per-dimension score sums
};

inline LexiconStyle parse_lexicon_style(std::string_view s) {
    if (s == "scored" || s == "afinn") return LexiconStyle::scored_sums;
    if (s == "counts" || s == "polarity") return LexiconStyle::polarity_counts;
    if (s == "swn") return LexiconStyle::pos_neg_neutral_sums;
    if (s == "dims" || s == "nrc") return LexiconStyle::dimension_sums;
    throw std::runtime_error("unknown lexicon style: " + std::string(s) +
                             " (expected scored|counts|swn|dims)");
}

struct Lexicon {
    std::string name;
    LexiconStyle style = LexiconStyle::scored_sums;

    std::unordered_map<std::string, double> scores;                           // scored_sums
    std::unordered_map<std::string, int> polarity;                            // polarity_counts: +1 / -1
    std::unordered_map<std::string, std::array<double, 3>> pnn;               // pos/neg/neutral sums
    std::vector<std::string> dimensions;                                      // dimension_sums, sorted
    std::unordered_map<std::string, std::vector<std::pair<int, double>>> dims;

    std::size_t dim() const {
        switch (style) {
            case LexiconStyle::scored_sums: return 2;
            case LexiconStyle::polarity_counts: return 2;
            case LexiconStyle::pos_neg_neutral_sums: return 3;
            case LexiconStyle::dimension_sums: return dimensions.size();
        }
        return 0;
    }

    // Lines: `token<TAB>score` or `token<TAB>label[<TAB>score]`; '#' comments.
    static Lexicon load(const std::string& name, LexiconStyle style, const std::string& path) {
        Lexicon lex;
        lex.name = name;
        lex.style = style;
        auto lines = read_lines(path);
        std::vector<std::tuple<std::string, std::string, std::string>> rows;  // token, col2, col3
        for (std::size_t i = 0; i < lines.size(); ++i) {
            std::string_view line = trim(lines[i]);
            if (line.empty() || line.front() == '#') continue;
            auto cols = split(std::string_view(line), '\t');
            if (cols.size() < 2)
                throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": expected at least 2 columns");
            rows.emplace_back(to_lower(trim(cols[0])), std::string(trim(cols[1])),
                              cols.size() > 2 ? std::string(trim(cols[2])) : std::string());
        }
        switch (style) {
            case LexiconStyle::scored_sums:
                for (auto& [tok, c2, c3] : rows) lex.scores[tok] = parse_double(c2, path);
                break;
            case LexiconStyle::polarity_counts:
                for (auto& [tok, c2, c3] : rows) {
                    std::string p = to_lower(c2);
                    if (p == "positive" || p == "pos")
                        lex.polarity[tok] = 1;
                    else if (p == "negative" || p == "neg")
                        lex.polarity[tok] = -1;
                    else
                        throw std::runtime_error(path + ": polarity must be positive/negative, got '" + c2 + "'");
                }
                break;
            case LexiconStyle::pos_neg_neutral_sums:
                for (auto& [tok, c2, c3] : rows) {
                    std::string p = to_lower(c2);
                    double v = parse_double(c3, path);
                    auto& slot = lex.pnn[tok];
                    if (p == "positive" || p == "pos")
                        slot[0] += v;
                    else if (p == "negative" || p == "neg")
                        slot[1] += v;
                    else if (p == "neutral" || p == "neu")
                        slot[2] += v;
                    else
                        throw std::runtime_error(path + ": label must be positive/negative/neutral, got '" + c2 + "'");
                }
                break;
            case LexiconStyle::dimension_sums: {
                std::map<std::string, int> dim_index;
                for (auto& [tok, c2, c3] : rows) dim_index[to_lower(c2)] = 0;
                int next = 0;
                for (auto& [d, idx] : dim_index) idx = next++;
                lex.dimensions.reserve(dim_index.size());
                for (auto& [d, idx] : dim_index) lex.dimensions.push_back(d);
                for (auto& [tok, c2, c3] : rows)
                    lex.dims[tok].emplace_back(dim_index[to_lower(c2)], parse_double(c3, path));
                break;
            }
        }
        return lex;
    }
};

struct LexiconSet {
    std::vector<Lexicon> lexicons;  // concatenation order
    std::size_t total_dim() const {
        std::size_t d = 0;
        for (const auto& l : lexicons) d += l.dim();
        return d;
    }
};

inline FeatureGroup lexicon_features(const TokenizedTweet& tweet, const LexiconSet& set) {
    FeatureGroup g{"lexicons", {}};
    g.values.reserve(set.total_dim());
    std::vector<std::string> lowered;
    lowered.reserve(tweet.tokens.size());
    for (const auto& t : tweet.tokens) lowered.push_back(to_lower(t));

    for (const Lexicon& lex : set.lexicons) {
        switch (lex.style) {
            case LexiconStyle::scored_sums: {
                double pos = 0, neg = 0;
                for (const auto& t : lowered) {
                    auto it = lex.scores.find(t);
                    if (it == lex.scores.end()) continue;
                    (it->second >= 0 ? pos : neg) += it->second;
                }
                g.values.push_back(pos);
                g.values.push_back(neg);
                break;
            }
            case LexiconStyle::polarity_counts: {
                double pos = 0, neg = 0;
                for (const auto& t : lowered) {
                    auto it = lex.polarity.find(t);
                    if (it == lex.polarity.end()) continue;
                    (it->second > 0 ? pos : neg) += 1;
                }
                g.values.push_back(pos);
                g.values.push_back(neg);
                break;
            }
            case LexiconStyle::pos_neg_neutral_sums: {
                double p = 0, n = 0, u = 0;
                for (const auto& t : lowered) {
                    auto it = lex.pnn.find(t);
                    if (it == lex.pnn.end()) continue;
                    p += it->second[0];
                    n += it->second[1];
                    u += it->second[2];
                }
                g.values.push_back(p);
                g.values.push_back(n);
                g.values.push_back(u);
                break;
            }
            case LexiconStyle::dimension_sums: {
                std::vector<double> sums(lex.dimensions.size(), 0.0);
                for (const auto& t : lowered) {
                    auto it = lex.dims.find(t);
                    if (it == lex.dims.end()) continue;
                    for (auto& [idx, v] : it->second) sums[static_cast<std::size_t>(idx)] += v;
                }
                g.values.insert(g.values.end(), sums.begin(), sums.end());
                break;
            }
        }
    }
    return g;
}

inline FeatureGroup embedding_features(const TokenizedTweet& tweet, const EmbeddingTable& table,
                                       const std::string& group_name) {
    FeatureGroup g{group_name, std::vector<double>(table.dim, 0.0)};
    std::size_t hits = 0;
    for (const auto& t : tweet.tokens) {
        auto it = table.vectors.find(to_lower(t));
        if (it == table.vectors.end()) continue;
        ++hits;
        for (std::size_t i = 0; i < table.dim; ++i) g.values[i] += it->second[i];
    }
    if (hits > 0)
        for (double& v : g.values) v /= static_cast<double>(hits);
    return g;
}

// Mean mood intensity over hashtag dictionary hits; 0 when no hashtag hits.
inline FeatureGroup hashtag_intensity(const TokenizedTweet& tweet, const Lexicon& mood) {
    double sum = 0;
    std::size_t hits = 0;
    for (const auto& h : tweet.hashtags) {
        std::string word = to_lower(h.size() > 1 ? h.substr(1) : "");
        auto it = mood.scores.find(word);
        if (it == mood.scores.end()) continue;
        sum += it->second;
        ++hits;
    }
    return FeatureGroup{"hashtag_intensity", {hits > 0 ? sum / static_cast<double>(hits) : 0.0}};
}

using PosLexicon = std::unordered_map<std::string, std::string>;  // token -> tag (NOUN/ADJ/ADV/...)

inline PosLexicon load_pos_lexicon(const std::string& path) {
    PosLexicon lex;
    auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = trim(lines[i]);
        if (line.empty() || line.front() == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string_view::npos)
            throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": expected token<TAB>tag");
        lex[to_lower(trim(line.substr(0, tab)))] = to_lower(trim(line.substr(tab + 1)));
    }
    return lex;
}

namespace detail {

inline bool is_emoticon_token(std::string_view t) { return match_emoticon(t, 0) == t.size(); }

inline bool is_word_token(std::string_view t) { return !t.empty() && match_word(t, 0) == t.size(); }

inline bool is_punct_token(std::string_view t) {
    if (t.empty() || is_emoticon_token(t)) return false;
    for (char c : t)
        if (!is_punct_char(static_cast<unsigned char>(c))) return false;
    return true;
}

}  // namespace detail

// [emoticons, nouns, adverbs, adjectives, punctuation tokens, word tokens, avg word length]
inline FeatureGroup stylometric_features(const TokenizedTweet& tweet, const PosLexicon& pos) {
    double nouns = 0, adverbs = 0, adjectives = 0, puncts = 0, words = 0, charsum = 0;
    for (const auto& t : tweet.tokens) {
        auto it = pos.find(to_lower(t));
        if (it != pos.end()) {
            if (it->second == "noun") ++nouns;
            else if (it->second == "adv" || it->second == "adverb") ++adverbs;
            else if (it->second == "adj" || it->second == "adjective") ++adjectives;
        }
        if (detail::is_punct_token(t)) ++puncts;
        if (detail::is_word_token(t)) {
            ++words;
            charsum += static_cast<double>(t.size());
        }
    }
    double avg_len = words > 0 ? charsum / words : 0.0;
    return FeatureGroup{"stylometric",
                        {static_cast<double>(tweet.emoticon_count), nouns, adverbs, adjectives, puncts, words, avg_len}};
}

// ---------------------------------------------------------------------------
// Bag of words / TF-IDF
// ---------------------------------------------------------------------------

struct BowTfidfModel {
    std::vector<std::string> vocab;  // ordered: df desc, then token asc
    std::unordered_map<std::string, std::size_t> index;
    std::vector<double> idf;  // ln((1+N)/(1+df)) + 1

    static BowTfidfModel fit(const std::vector<TokenizedTweet>& corpus, std::size_t min_df,
                             std::size_t max_features) {
        if (corpus.empty()) throw std::runtime_error("cannot fit bow/tfidf on empty corpus");
        std::unordered_map<std::string, std::size_t> df;
        for (const auto& tweet : corpus) {
            std::unordered_map<std::string, bool> seen;
            for (const auto& t : tweet.tokens) {
                std::string l = to_lower(t);
                if (!seen.emplace(l, true).second) continue;
                ++df[l];
            }
        }
        std::vector<std::pair<std::string, std::size_t>> entries;
        entries.reserve(df.size());
        for (auto& [tok, d] : df)
            if (d >= min_df) entries.emplace_back(tok, d);
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (max_features > 0 && entries.size() > max_features) entries.resize(max_features);

        BowTfidfModel m;
        double n_docs = static_cast<double>(corpus.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            m.vocab.push_back(entries[i].first);
            m.index[entries[i].first] = i;
            m.idf.push_back(std::log((1.0 + n_docs) / (1.0 + static_cast<double>(entries[i].second))) + 1.0);
        }
        return m;
    }

    std::pair<FeatureGroup, FeatureGroup> transform(const TokenizedTweet& tweet) const {
        FeatureGroup bow{"bow", std::vector<double>(vocab.size(), 0.0)};
        for (const auto& t : tweet.tokens) {
            auto it = index.find(to_lower(t));
            if (it != index.end()) bow.values[it->second] += 1.0;
        }
        FeatureGroup tfidf{"tfidf", std::vector<double>(vocab.size(), 0.0)};
        double norm_sq = 0.0;
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            tfidf.values[i] = bow.values[i] * idf[i];
            norm_sq += tfidf.values[i] * tfidf.values[i];
        }
        if (norm_sq > 0.0) {
            double norm = std::sqrt(norm_sq);
            for (double& v : tfidf.values) v /= norm;
        }
        return {std::move(bow), std::move(tfidf)};
    }

    std::string serialize() const {
        std::string out = "bow " + std::to_string(vocab.size()) + "\n";
        for (std::size_t i = 0; i < vocab.size(); ++i) out += vocab[i] + "\t" + fmt_double(idf[i]) + "\n";
        return out;
    }
};

// ---------------------------------------------------------------------------
// Dense feature caches (precomputed per-tweet vectors)
// ---------------------------------------------------------------------------

struct DenseCache {
    std::string name;
    std::size_t dim = 0;
    std::unordered_map<std::string, std::vector<double>> rows;

    static DenseCache load(const std::string& path) {
        auto lines = read_lines(path);
        if (lines.empty()) throw std::runtime_error(path + ": empty cache file");
        // header: `#dim <D> #name <group>`
        auto head = split_whitespace(lines[0]);
        if (head.size() != 4 || head[0] != "#dim" || head[2] != "#name")
            throw std::runtime_error(path + ": expected header '#dim <D> #name <group>'");
        DenseCache c;
        c.dim = static_cast<std::size_t>(parse_int(head[1], path));
        c.name = head[3];
        if (c.dim == 0) throw std::runtime_error(path + ": cache dim must be positive");
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (trim(lines[i]).empty()) continue;
            auto tab = lines[i].find('\t');
            if (tab == std::string::npos)
                throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": expected id<TAB>values");
            std::string id = lines[i].substr(0, tab);
            auto parts = split_whitespace(std::string_view(lines[i]).substr(tab + 1));
            if (parts.size() != c.dim)
                throw std::runtime_error(path + ": row for sample '" + id + "' has dim " +
                                         std::to_string(parts.size()) + ", expected " + std::to_string(c.dim));
            std::vector<double> vec;
            vec.reserve(c.dim);
            for (const auto& p : parts) vec.push_back(parse_double(p, path));
            if (!c.rows.emplace(std::move(id), std::move(vec)).second)
                throw std::runtime_error(path + ": duplicate sample id '" + lines[i].substr(0, tab) + "'");
        }
        return c;
    }
};

inline std::string serialize_dense_cache(const std::string& name, std::size_t dim,
                                         const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
    std::string out = "#dim " + std::to_string(dim) + " #name " + name + "\n";
    for (const auto& [id, vec] : rows) {
        out += id;
        out += '\t';
        for (std::size_t i = 0; i < vec.size(); ++i) {
            if (i) out += ' ';
            out += fmt_double(vec[i]);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Standardization (z-score with train statistics)
// ---------------------------------------------------------------------------

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;  // 0 marks a constant dimension

    static Standardizer fit(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) throw std::runtime_error("cannot fit standardizer on empty data");
        std::size_t d = rows[0].size();
        Standardizer s;
        s.mean.resize(d);
        s.stddev.resize(d);
        std::vector<double> col(rows.size());
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t i = 0; i < rows.size(); ++i) col[i] = rows[i][j];
            double m = mean_of(col);
            double var = 0.0;
            for (double v : col) var += (v - m) * (v - m);
            var /= static_cast<double>(rows.size());
            s.mean[j] = m;
            s.stddev[j] = std::sqrt(var);
        }
        return s;
    }

    void apply(std::vector<double>& v) const {
        if (v.size() != mean.size()) throw std::runtime_error("standardizer dimension mismatch");
        for (std::size_t j = 0; j < v.size(); ++j)
            v[j] = stddev[j] > 0.0 ? (v[j] - mean[j]) / stddev[j] : 0.0;
    }
};

// ---------------------------------------------------------------------------
// Pipeline: ordered group assembly with optional standardization
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& dense_group_names() {
    static const std::vector<std::string> names = {"deepemoji_softmax", "deepemoji_attention", "skipthought",
                                                   "sentiment_neuron"};
    return names;
}

inline bool is_dense_group(const std::string& name) {
    for (const auto& n : dense_group_names())
        if (n == name) return true;
    return false;
}

inline bool is_valid_group_name(const std::string& name) {
    if (is_dense_group(name)) return true;
    if (name.rfind("embedding_", 0) == 0 && name.size() > 10) return true;
    return name == "lexicons" || name == "hashtag_intensity" || name == "stylometric" || name == "bow" ||
           name == "tfidf";
}

struct PipelineSpec {
    std::vector<std::string> groups;  // concatenation order
    bool standardize = true;
    std::size_t min_df = 1;
    std::size_t max_features = 10000;
};

struct FeatureResources {
    NormalizationRules rules;
    LexiconSet lexicons;
    Lexicon mood;                                       // hashtag mood dictionary (scored style)
    PosLexicon pos_tags;
    std::map<std::string, EmbeddingTable> embeddings;   // keyed by group name, e.g. embedding_glove
    std::map<std::string, DenseCache> caches;           // keyed by group name
};

class FeaturePipeline {
public:
    FeaturePipeline() = default;

    static void validate(const PipelineSpec& spec, const FeatureResources& res) {
        if (spec.groups.empty()) throw std::runtime_error("pipeline config declares no feature groups");
        for (const auto& g : spec.groups) {
            if (!is_valid_group_name(g)) throw std::runtime_error("unknown feature group: " + g);
            if (g.rfind("embedding_", 0) == 0 && !res.embeddings.count(g))
                throw std::runtime_error("feature group " + g + " enabled but no embedding table configured");
            if (is_dense_group(g)) {
                auto it = res.caches.find(g);
                if (it == res.caches.end())
                    throw std::runtime_error("dense group " + g + " enabled without a cache file");
                if (it->second.name != g)
                    throw std::runtime_error("cache for group " + g + " is named '" + it->second.name + "'");
            }
        }
    }

    static FeaturePipeline fit(PipelineSpec spec, FeatureResources res, const Dataset& train) {
        validate(spec, res);
        FeaturePipeline p;
        p.spec_ = std::move(spec);
        p.res_ = std::move(res);
        if (p.wants("bow") || p.wants("tfidf")) {
            std::vector<TokenizedTweet> tokens;
            tokens.reserve(train.samples.size());
            for (const Sample& s : train.samples) tokens.push_back(p.preprocess(s));
            p.bow_ = BowTfidfModel::fit(tokens, p.spec_.min_df, p.spec_.max_features);
        }
        // Lock per-group dims from the first sample, then validate the rest.
        if (train.samples.empty()) throw std::runtime_error("cannot fit pipeline on empty dataset");
        std::vector<std::vector<double>> raw;
        raw.reserve(train.samples.size());
        for (const Sample& s : train.samples) {
            FeatureVector fv = p.assemble_raw(s);
            if (p.group_dims_.empty())
                for (const auto& g : fv.groups) p.group_dims_.emplace_back(g.name, g.dim());
            raw.push_back(std::move(fv.concatenated));
        }
        if (p.spec_.standardize) p.scaler_ = Standardizer::fit(raw);
        return p;
    }

    TokenizedTweet preprocess(const Sample& s) const { return tokenize(normalize(s.text, res_.rules)); }

    FeatureVector assemble(const Sample& s) const {
        FeatureVector fv = assemble_raw(s);
        if (!group_dims_.empty()) {
            if (fv.groups.size() != group_dims_.size()) throw std::runtime_error("feature group count drifted");
            for (std::size_t i = 0; i < fv.groups.size(); ++i)
                if (fv.groups[i].dim() != group_dims_[i].second)
                    throw std::runtime_error("feature group " + fv.groups[i].name + " dim drifted");
        }
        if (spec_.standardize && scaler_) {
            scaler_->apply(fv.concatenated);
            std::size_t off = 0;
            for (auto& g : fv.groups) {
                for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = fv.concatenated[off + i];
                off += g.values.size();
            }
        }
        return fv;
    }

    std::vector<std::vector<double>> assemble_matrix(const Dataset& ds) const {
        std::vector<std::vector<double>> X;
        X.reserve(ds.samples.size());
        for (const Sample& s : ds.samples) X.push_back(assemble(s).concatenated);
        return X;
    }

    const PipelineSpec& spec() const { return spec_; }
    const FeatureResources& resources() const { return res_; }
    const std::vector<std::pair<std::string, std::size_t>>& group_dims() const { return group_dims_; }

    std::size_t total_dim() const {
        std::size_t d = 0;
        for (auto& [n, dim] : group_dims_) d += dim;
        return d;
    }

    // Fitted state only (bow vocabulary + scaler + dims); resources reload from config paths.
    std::string serialize_state() const {
        std::string out = "pipeline_state 1\n";
        out += "groups";
        for (auto& [n, d] : group_dims_) out += " " + n + ":" + std::to_string(d);
        out += "\n";
        if (bow_) out += bow_->serialize();
        else out += "bow 0\n";
        if (scaler_) {
            out += "scaler " + std::to_string(scaler_->mean.size()) + "\n";
            for (std::size_t i = 0; i < scaler_->mean.size(); ++i)
                out += fmt_double(scaler_->mean[i]) + "\t" + fmt_double(scaler_->stddev[i]) + "\n";
        } else {
            out += "scaler 0\n";
        }
        return out;
    }

    static FeaturePipeline from_state(PipelineSpec spec, FeatureResources res, const std::string& state) {
        validate(spec, res);
        FeaturePipeline p;
        p.spec_ = std::move(spec);
        p.res_ = std::move(res);
        auto lines = split(state, '\n');
        std::size_t i = 0;
        auto need = [&](const char* what) -> std::string {
            if (i >= lines.size()) throw std::runtime_error(std::string("pipeline state truncated at ") + what);
            return lines[i++];
        };
        if (need("header") != "pipeline_state 1") throw std::runtime_error("unsupported pipeline state version");
        auto groups = split_whitespace(need("groups"));
        if (groups.empty() || groups[0] != "groups") throw std::runtime_error("pipeline state: missing groups");
        for (std::size_t g = 1; g < groups.size(); ++g) {
            auto colon = groups[g].rfind(':');
            p.group_dims_.emplace_back(groups[g].substr(0, colon),
                                       static_cast<std::size_t>(parse_int(groups[g].substr(colon + 1), "state")));
        }
        auto bow_head = split_whitespace(need("bow"));
        if (bow_head.size() != 2 || bow_head[0] != "bow") throw std::runtime_error("pipeline state: missing bow");
        std::size_t nvocab = static_cast<std::size_t>(parse_int(bow_head[1], "state"));
        if (nvocab > 0) {
            BowTfidfModel m;
            for (std::size_t v = 0; v < nvocab; ++v) {
                auto cols = split(need("bow entry"), '\t');
                if (cols.size() != 2) throw std::runtime_error("pipeline state: malformed bow entry");
                m.index[cols[0]] = m.vocab.size();
                m.vocab.push_back(cols[0]);
                m.idf.push_back(parse_double(cols[1], "state"));
            }
            p.bow_ = std::move(m);
        }
        auto sc_head = split_whitespace(need("scaler"));
        if (sc_head.size() != 2 || sc_head[0] != "scaler") throw std::runtime_error("pipeline state: missing scaler");
        std::size_t nd = static_cast<std::size_t>(parse_int(sc_head[1], "state"));
        if (nd > 0) {
            Standardizer s;
            for (std::size_t v = 0; v < nd; ++v) {
                auto cols = split(need("scaler entry"), '\t');
                if (cols.size() != 2) throw std::runtime_error("pipeline state: malformed scaler entry");
                s.mean.push_back(parse_double(cols[0], "state"));
                s.stddev.push_back(parse_double(cols[1], "state"));
            }
            p.scaler_ = std::move(s);
        }
        return p;
    }

private:
    bool wants(const std::string& g) const {
        for (const auto& name : spec_.groups)
            if (name == g) return true;
        return false;
    }

    FeatureVector assemble_raw(const Sample& s) const {
        TokenizedTweet tweet = preprocess(s);
        FeatureVector fv;
        fv.sample_id = s.id;
        std::optional<std::pair<FeatureGroup, FeatureGroup>> bow_pair;
        for (const std::string& name : spec_.groups) {
            FeatureGroup g;
            if (name == "lexicons") {
                g = lexicon_features(tweet, res_.lexicons);
            } else if (name == "hashtag_intensity") {
                g = hashtag_intensity(tweet, res_.mood);
            } else if (name == "stylometric") {
                g = stylometric_features(tweet, res_.pos_tags);
            } else if (name == "bow" || name == "tfidf") {
                if (!bow_) throw std::runtime_error("bow/tfidf group requested but model not fitted");
                if (!bow_pair) bow_pair = bow_->transform(tweet);
                g = (name == "bow") ? bow_pair->first : bow_pair->second;
            } else if (name.rfind("embedding_", 0) == 0) {
                g = embedding_features(tweet, res_.embeddings.at(name), name);
            } else {
                const DenseCache& cache = res_.caches.at(name);
                auto it = cache.rows.find(s.id);
                if (it == cache.rows.end())
                    throw std::runtime_error("dense cache '" + name + "' has no row for sample '" + s.id + "'");
                g = FeatureGroup{name, it->second};
            }
            fv.groups.push_back(std::move(g));
        }
        std::size_t total = 0;
        for (const auto& g : fv.groups) total += g.dim();
        fv.concatenated.reserve(total);
        for (const auto& g : fv.groups)
            fv.concatenated.insert(fv.concatenated.end(), g.values.begin(), g.values.end());
        return fv;
    }

    PipelineSpec spec_;
    FeatureResources res_;
    std::optional<BowTfidfModel> bow_;
    std::optional<Standardizer> scaler_;
    std::vector<std::pair<std::string, std::size_t>> group_dims_;
};

}  // namespace emix
