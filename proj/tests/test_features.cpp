#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "emix/config.hpp"
#include "emix/corpus.hpp"
#include "emix/features.hpp"

using namespace emix;
namespace fs = std::filesystem;

namespace {

const std::string data_dir = EMIX_DATA_DIR;

std::string write_temp(const std::string& name, const std::string& content) {
    std::string path = (fs::temp_directory_path() / ("emix_feat_" + name)).string();
    write_file(path, content);
    return path;
}

RunConfig mini_config() {
    RunConfig rc = RunConfig::from_ini(IniFile::load(data_dir + "/config/mini.ini"));
    auto fix = [&](std::string& p) {
        if (!p.empty()) p = data_dir + "/" + p.substr(std::string("data/").size());
    };
    fix(rc.contractions_path);
    fix(rc.acronyms_path);
    fix(rc.symbols_path);
    fix(rc.spelling_path);
    fix(rc.mood_path);
    fix(rc.pos_path);
    for (auto& [name, style, path] : rc.lexicon_entries) fix(path);
    for (auto& [group, path] : rc.embedding_paths) fix(path);
    return rc;
}

}  // namespace

TEST_CASE("lexicon_features sums and counts per style") {
    LexiconSet set;
    set.lexicons.push_back(Lexicon::load("afinn", LexiconStyle::scored_sums, write_temp("afinn.tsv", "good\t3\n")));
    set.lexicons.push_back(
        Lexicon::load("bingliu", LexiconStyle::polarity_counts, write_temp("bl.tsv", "bad\tnegative\n")));

    SUBCASE("no hits yields an all-zero group") {
        FeatureGroup g = lexicon_features(tokenize("nothing matches here"), set);
        CHECK(g.values == std::vector<double>{0, 0, 0, 0});
    }
    SUBCASE("afinn-style sums scores over repeated tokens") {
        FeatureGroup g = lexicon_features(tokenize("good good"), set);
        CHECK(g.values[0] == 6.0);
        CHECK(g.values[1] == 0.0);
    }
    SUBCASE("counting style counts tokens") {
        FeatureGroup g = lexicon_features(tokenize("bad"), set);
        CHECK(g.values[2] == 0.0);
        CHECK(g.values[3] == 1.0);
    }
    SUBCASE("lookups are case-insensitive") {
        FeatureGroup g = lexicon_features(tokenize("GOOD"), set);
        CHECK(g.values[0] == 3.0);
    }
}

TEST_CASE("sentiwordnet and dimension lexicon styles") {
    Lexicon swn = Lexicon::load("swn", LexiconStyle::pos_neg_neutral_sums,
                                write_temp("swn.tsv", "calm\tpositive\t0.5\ncalm\tneutral\t0.25\n"));
    LexiconSet set1{{swn}};
    FeatureGroup g1 = lexicon_features(tokenize("calm calm"), set1);
    CHECK(g1.values == std::vector<double>{1.0, 0.0, 0.5});

    Lexicon nrc = Lexicon::load("nrc", LexiconStyle::dimension_sums,
                                write_temp("nrc.tsv", "fury\tanger\t0.9\nfury\tfear\t0.2\nglee\tjoy\t0.8\n"));
    CHECK(nrc.dimensions == std::vector<std::string>{"anger", "fear", "joy"});
    LexiconSet set2{{nrc}};
    FeatureGroup g2 = lexicon_features(tokenize("fury glee fury"), set2);
    CHECK(g2.values[0] == doctest::Approx(1.8));
    CHECK(g2.values[1] == doctest::Approx(0.4));
    CHECK(g2.values[2] == doctest::Approx(0.8));
}

TEST_CASE("embedding_features averages in-vocabulary vectors") {
    EmbeddingTable table;
    table.dim = 2;
    table.vectors["a"] = {1, 3};
    table.vectors["b"] = {3, 1};

    CHECK(embedding_features(tokenize("a b"), table, "embedding_x").values == std::vector<double>{2, 2});
    CHECK(embedding_features(tokenize("zzz qqq"), table, "embedding_x").values == std::vector<double>{0, 0});
    CHECK(embedding_features(tokenize("A"), table, "embedding_x").values == std::vector<double>{1, 3});

    SUBCASE("mean stays inside the coordinate-wise bounds of contributing vectors") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> val(-2, 2);
        EmbeddingTable t2;
        t2.dim = 4;
        for (const char* w : {"u", "v", "w", "x", "y"}) {
            std::vector<double> vec(4);
            for (double& x : vec) x = val(rng);
            t2.vectors[w] = vec;
        }
        FeatureGroup g = embedding_features(tokenize("u v w x y"), t2, "embedding_t");
        for (std::size_t d = 0; d < 4; ++d) {
            double lo = 1e99, hi = -1e99;
            for (auto& [word, vec] : t2.vectors) {
                lo = std::min(lo, vec[d]);
                hi = std::max(hi, vec[d]);
            }
            CHECK(g.values[d] >= lo);
            CHECK(g.values[d] <= hi);
        }
    }
}

TEST_CASE("GloVe-format table reports its file dimension") {
    // word2vec text header + 300-dim rows
    std::string content = "2 300\n";
    for (const char* w : {"alpha", "beta"}) {
        content += w;
        for (int i = 0; i < 300; ++i) content += " 0.25";
        content += "\n";
    }
    EmbeddingTable t = EmbeddingTable::load(write_temp("glove300.txt", content));
    CHECK(t.dim == 300);
    CHECK(embedding_features(tokenize("alpha"), t, "embedding_glove").dim() == 300);
}

TEST_CASE("hashtag_intensity averages dictionary hits only") {
    Lexicon mood = Lexicon::load("mood", LexiconStyle::scored_sums, write_temp("mood.tsv", "joy\t0.8\nrage\t0.4\n"));
    CHECK(hashtag_intensity(tokenize("no tags here"), mood).values[0] == 0.0);
    CHECK(hashtag_intensity(tokenize("#joy #rage"), mood).values[0] == doctest::Approx(0.6));
    CHECK(hashtag_intensity(tokenize("#joy #unknowntag"), mood).values[0] == doctest::Approx(0.8));
    CHECK(hashtag_intensity(tokenize("#JOY"), mood).values[0] == doctest::Approx(0.8));
}

TEST_CASE("stylometric_features emits the seven counts in order") {
    PosLexicon pos = {{"happy", "adj"}, {"dog", "noun"}, {"very", "adv"}};

    FeatureGroup g = stylometric_features(tokenize("happy dog :)"), pos);
    CHECK(g.dim() == 7);
    CHECK(g.values == std::vector<double>{1, 1, 0, 1, 0, 2, 4.0});

    CHECK(stylometric_features(tokenize(""), pos).values == std::vector<double>{0, 0, 0, 0, 0, 0, 0});

    FeatureGroup h = stylometric_features(tokenize("very happy!! yes"), pos);
    CHECK(h.values[2] == 1);         // adverbs
    CHECK(h.values[3] == 1);         // adjectives
    CHECK(h.values[4] == 1);         // the "!!" run
    CHECK(h.values[5] == 3);         // word tokens
    CHECK(h.values[6] == doctest::Approx((4 + 5 + 3) / 3.0));
}

TEST_CASE("bow/tfidf fit and transform") {
    auto tok = [](const char* s) { return tokenize(s); };

    SUBCASE("single-document vocabulary") {
        BowTfidfModel m = BowTfidfModel::fit({tok("a a b")}, 1, 100);
        REQUIRE(m.vocab.size() == 2);
        CHECK(m.vocab == std::vector<std::string>{"a", "b"});  // equal df, lexicographic
    }
    SUBCASE("min_df excludes rare tokens") {
        BowTfidfModel m = BowTfidfModel::fit({tok("a b"), tok("a c")}, 2, 100);
        CHECK(m.vocab == std::vector<std::string>{"a"});
    }
    SUBCASE("idf formula: N=2 docs, df=1") {
        BowTfidfModel m = BowTfidfModel::fit({tok("a b"), tok("a c")}, 1, 100);
        REQUIRE(m.vocab[0] == "a");
        CHECK(m.idf[0] == doctest::Approx(std::log(3.0 / 3.0) + 1.0).epsilon(1e-12));
        CHECK(m.idf[1] == doctest::Approx(std::log(3.0 / 2.0) + 1.0).epsilon(1e-12));
        CHECK(m.idf[1] == doctest::Approx(1.4054651081081644).epsilon(1e-12));
    }
    SUBCASE("max_features keeps the most frequent tokens") {
        BowTfidfModel m = BowTfidfModel::fit({tok("a b"), tok("a c"), tok("a b")}, 1, 2);
        CHECK(m.vocab == std::vector<std::string>{"a", "b"});
    }
    SUBCASE("transform counts and normalizes") {
        BowTfidfModel m = BowTfidfModel::fit({tok("a b"), tok("a c")}, 1, 100);
        auto [bow, tfidf] = m.transform(tok("a a"));
        CHECK(bow.values[0] == 2.0);
        CHECK(bow.values[1] == 0.0);
        CHECK(bow.values[2] == 0.0);
        CHECK(tfidf.values[0] == doctest::Approx(1.0));
        CHECK(tfidf.values[1] == 0.0);

        auto [bow2, tfidf2] = m.transform(tok("zzz"));
        for (double v : bow2.values) CHECK(v == 0.0);
        for (double v : tfidf2.values) CHECK(v == 0.0);
    }
    SUBCASE("empty corpus is rejected") { CHECK_THROWS(BowTfidfModel::fit({}, 1, 10)); }
}

TEST_CASE("dense cache loading validates dims and ids") {
    SUBCASE("documented cache dims load as declared") {
        for (auto [dim, name] : std::vector<std::pair<int, const char*>>{
                 {64, "deepemoji_softmax"}, {4800, "skipthought"}, {4096, "sentiment_neuron"}}) {
            std::string content = "#dim " + std::to_string(dim) + " #name " + std::string(name) + "\n";
            content += "s1\t";
            for (int i = 0; i < dim; ++i) content += (i ? " 0" : "0");
            content += "\n";
            DenseCache c = DenseCache::load(write_temp("cache.tsv", content));
            CHECK(c.dim == static_cast<std::size_t>(dim));
            CHECK(c.name == name);
        }
    }
    SUBCASE("row dim mismatch names the sample") {
        auto p = write_temp("dimbad.tsv", "#dim 3 #name skipthought\nrow9\t1 2\n");
        CHECK_THROWS_WITH_AS(DenseCache::load(p), doctest::Contains("row9"), std::runtime_error);
    }
    SUBCASE("duplicate id is rejected") {
        auto p = write_temp("dupid.tsv", "#dim 1 #name skipthought\na\t1\na\t2\n");
        CHECK_THROWS_WITH_AS(DenseCache::load(p), doctest::Contains("duplicate"), std::runtime_error);
    }
    SUBCASE("cache round-trips through its writer") {
        std::vector<std::pair<std::string, std::vector<double>>> rows = {{"a", {0.5, -1.25}}, {"b", {3.0, 0.125}}};
        auto p = write_temp("rt.tsv", serialize_dense_cache("skipthought", 2, rows));
        DenseCache c = DenseCache::load(p);
        CHECK(c.rows.at("a") == std::vector<double>{0.5, -1.25});
        CHECK(c.rows.at("b") == std::vector<double>{3.0, 0.125});
    }
}

TEST_CASE("standardizer normalizes train statistics and zeroes constant dims") {
    std::vector<std::vector<double>> rows = {{1, 5, 7}, {2, 5, 9}, {3, 5, 14}, {4, 5, 2}};
    Standardizer s = Standardizer::fit(rows);
    std::vector<std::vector<double>> out = rows;
    for (auto& r : out) s.apply(r);
    for (std::size_t d : {std::size_t(0), std::size_t(2)}) {
        double mean = 0, var = 0;
        for (auto& r : out) mean += r[d];
        mean /= out.size();
        for (auto& r : out) var += (r[d] - mean) * (r[d] - mean);
        var /= out.size();
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-9);
    }
    for (auto& r : out) CHECK(r[1] == 0.0);  // constant dimension
}

TEST_CASE("pipeline assembles groups in declared order with stable dims") {
    RunConfig rc = mini_config();
    FeatureResources res = rc.load_resources();
    Dataset train = load_tsv(data_dir + "/mini/ei_reg_anger_train.tsv", TaskKind::parse("EI-reg:anger"));

    SUBCASE("single stylometric group has dim 7") {
        PipelineSpec spec;
        spec.groups = {"stylometric"};
        spec.standardize = false;
        FeaturePipeline p = FeaturePipeline::fit(spec, res, train);
        CHECK(p.assemble(train.samples[0]).concatenated.size() == 7);
    }
    SUBCASE("stylometric + hashtag_intensity has dim 8") {
        PipelineSpec spec;
        spec.groups = {"stylometric", "hashtag_intensity"};
        spec.standardize = false;
        FeaturePipeline p = FeaturePipeline::fit(spec, res, train);
        FeatureVector fv = p.assemble(train.samples[0]);
        CHECK(fv.concatenated.size() == 8);
        CHECK(fv.groups[0].name == "stylometric");
        CHECK(fv.groups[1].name == "hashtag_intensity");
    }
    SUBCASE("dense cache groups contribute their cited dims") {
        // deepemoji 64 + 2304 and skipthought 4800 sum to 7168
        FeatureResources res2 = res;
        Dataset two{TaskKind::parse("EI-reg:anger"), Split::train, {}};
        two.samples.push_back(Sample{"a", "hello", Scalar{0.5}});
        two.samples.push_back(Sample{"b", "world", Scalar{0.6}});
        auto fill = [&](const std::string& name, std::size_t dim) {
            DenseCache c;
            c.name = name;
            c.dim = dim;
            c.rows["a"] = std::vector<double>(dim, 0.25);
            c.rows["b"] = std::vector<double>(dim, 0.5);
            res2.caches[name] = std::move(c);
        };
        fill("deepemoji_softmax", 64);
        fill("deepemoji_attention", 2304);
        fill("skipthought", 4800);
        PipelineSpec spec;
        spec.groups = {"deepemoji_softmax", "deepemoji_attention", "skipthought"};
        spec.standardize = false;
        FeaturePipeline p = FeaturePipeline::fit(spec, res2, two);
        CHECK(p.assemble(two.samples[0]).concatenated.size() == 7168);
    }
    SUBCASE("missing cache row names sample and group") {
        FeatureResources res2 = res;
        DenseCache c;
        c.name = "skipthought";
        c.dim = 2;
        c.rows["only-this-id"] = {1.0, 2.0};
        res2.caches["skipthought"] = std::move(c);
        PipelineSpec spec;
        spec.groups = {"skipthought"};
        Dataset bad{TaskKind::parse("EI-reg:anger"), Split::train, {}};
        bad.samples.push_back(Sample{"missing-id", "text", Scalar{0.1}});
        CHECK_THROWS_WITH_AS(FeaturePipeline::fit(spec, res2, bad), doctest::Contains("missing-id"),
                             std::runtime_error);
    }
    SUBCASE("dense group without a cache is a config error") {
        PipelineSpec spec;
        spec.groups = {"sentiment_neuron"};
        CHECK_THROWS_WITH_AS(FeaturePipeline::fit(spec, res, train), doctest::Contains("without a cache"),
                             std::runtime_error);
    }
    SUBCASE("unknown group name is rejected") {
        PipelineSpec spec;
        spec.groups = {"nonsense_group"};
        CHECK_THROWS(FeaturePipeline::fit(spec, res, train));
    }
}

TEST_CASE("full mini pipeline: dims are uniform, extraction deterministic, train stats standardized") {
    RunConfig rc = mini_config();
    Dataset train = load_tsv(data_dir + "/mini/ei_reg_joy_train.tsv", TaskKind::parse("EI-reg:joy"));
    FeaturePipeline p = FeaturePipeline::fit(rc.pipeline, rc.load_resources(), train);

    std::vector<std::vector<double>> X = p.assemble_matrix(train);
    std::size_t dim = X[0].size();
    for (const auto& row : X) CHECK(row.size() == dim);
    CHECK(dim == p.total_dim());

    // deterministic: a second assembly is bitwise identical
    std::vector<std::vector<double>> X2 = p.assemble_matrix(train);
    CHECK(X == X2);

    // standardization: non-constant dims have mean ~0 and variance ~1 over the train split
    for (std::size_t d = 0; d < dim; ++d) {
        double mean = 0;
        for (const auto& row : X) mean += row[d];
        mean /= static_cast<double>(X.size());
        double var = 0;
        bool all_zero = true;
        for (const auto& row : X) {
            var += (row[d] - mean) * (row[d] - mean);
            if (row[d] != 0.0) all_zero = false;
        }
        var /= static_cast<double>(X.size());
        if (all_zero) continue;  // constant dimension mapped to zero
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-9);
    }

    // fitted state round-trips through serialization
    FeaturePipeline q = FeaturePipeline::from_state(rc.pipeline, rc.load_resources(), p.serialize_state());
    CHECK(q.assemble(train.samples[3]).concatenated == p.assemble(train.samples[3]).concatenated);
}
