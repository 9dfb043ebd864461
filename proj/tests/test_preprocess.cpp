#include <filesystem>
#include <map>
#include <random>

#include "doctest.h"
#include "emix/preprocess.hpp"

using namespace emix;

namespace {

const std::string data_dir = EMIX_DATA_DIR;

NormalizationRules bundled_rules() {
    NormalizationRules r;
    r.contractions = load_rule_file(data_dir + "/rules/contractions.tsv");
    r.acronyms = load_rule_file(data_dir + "/rules/acronyms.tsv");
    r.symbols = load_rule_file(data_dir + "/rules/symbols.tsv");
    r.spelling = load_rule_file(data_dir + "/rules/spelling.tsv");
    return r;
}

std::map<char, int> nonspace_histogram(std::string_view s) {
    std::map<char, int> h;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) ++h[c];
    return h;
}

}  // namespace

TEST_CASE("normalize expands the documented replacements") {
    NormalizationRules rules = bundled_rules();
    CHECK(normalize("can't", rules) == "cannot");
    CHECK(normalize("Can't stop", rules) == "cannot stop");
    CHECK(normalize("won $5", rules) == "won dollar5");
    CHECK(normalize("a = b", rules) == "a is equal to b");
    CHECK(normalize("omg I'm happpy", rules) == "oh my god i am happy");
    CHECK(normalize("hello", NormalizationRules{}) == "hello");
}

TEST_CASE("normalize respects word boundaries and match order") {
    NormalizationRules rules = bundled_rules();
    // 'fb' must not fire inside a longer word
    CHECK(normalize("fbx", rules) == "fbx");
    CHECK(normalize("fb", rules) == "facebook");
    // longest key wins: 'sooo' before 'soo'
    CHECK(normalize("sooo good", rules) == "so good");
    // replacement text is never rescanned within the same pass
    RuleMap loop = RuleMap::from_pairs({{"ab", "abab"}});
    NormalizationRules r2;
    r2.spelling = loop;
    CHECK(normalize("ab", r2) == "abab");
}

TEST_CASE("normalize applies contractions, spelling, acronyms, then symbols") {
    NormalizationRules rules;
    rules.contractions = RuleMap::from_pairs({{"a'b", "step1"}});
    rules.spelling = RuleMap::from_pairs({{"step1", "step2"}});
    rules.acronyms = RuleMap::from_pairs({{"step2", "step3"}});
    rules.symbols = RuleMap::from_pairs({{"3", "4"}});
    CHECK(normalize("a'b", rules) == "step4");

    // a later pass never feeds an earlier one
    NormalizationRules reversed;
    reversed.symbols = RuleMap::from_pairs({{"$", "can't"}});
    reversed.contractions = RuleMap::from_pairs({{"can't", "cannot"}});
    CHECK(normalize("$", reversed) == "can't");
}

TEST_CASE("normalize is deterministic and idempotent for non-self-referential rules") {
    NormalizationRules rules = bundled_rules();
    std::vector<std::string> inputs = {
        "can't won't don't I'm it's",  "omg soo gud 2day",          "u & me = luv",
        "plain text with no matches", "fb gm hpy idk btw lol brb", "$100 + 20%",
    };
    for (const auto& in : inputs) {
        std::string once = normalize(in, rules);
        CHECK(once == normalize(in, rules));
        CHECK(normalize(once, rules) == once);
    }
}

TEST_CASE("tokenize keeps tweet entities intact") {
    TokenizedTweet t = tokenize("happy #joy :)");
    CHECK(t.tokens == std::vector<std::string>{"happy", "#joy", ":)"});
    CHECK(t.hashtags == std::vector<std::string>{"#joy"});
    CHECK(t.emoticon_count == 1);

    CHECK(tokenize("").tokens.empty());
    CHECK(tokenize("I am happy").tokens == std::vector<std::string>{"I", "am", "happy"});

    TokenizedTweet u = tokenize("see http://t.co/abc @sam!! #wow2 <3");
    CHECK(u.tokens == std::vector<std::string>{"see", "http://t.co/abc", "@sam", "!!", "#wow2", "<3"});
    CHECK(u.hashtags == std::vector<std::string>{"#wow2"});
    CHECK(u.emoticon_count == 1);

    CHECK(tokenize("word!!").tokens == std::vector<std::string>{"word", "!!"});
    CHECK(tokenize("so-called can't").tokens == std::vector<std::string>{"so-called", "can't"});
    CHECK(tokenize("8) :-D ;p").emoticon_count == 3);
    CHECK(tokenize("(-: hello").tokens[0] == "(-:");
    CHECK(tokenize("1,234.5 items").tokens == std::vector<std::string>{"1,234.5", "items"});
}

TEST_CASE("tokenize drops nothing but whitespace") {
    std::mt19937_64 rng(7);
    const std::string pool = "abcXYZ #@:)(!?.'-123 \t$%&<>/";
    for (int trial = 0; trial < 300; ++trial) {
        std::uniform_int_distribution<std::size_t> len(0, 40), pick(0, pool.size() - 1);
        std::string text;
        for (std::size_t i = 0, n = len(rng); i < n; ++i) text += pool[pick(rng)];
        TokenizedTweet t = tokenize(text);
        std::string joined;
        for (const auto& tok : t.tokens) joined += tok;
        CHECK(nonspace_histogram(joined) == nonspace_histogram(text));
    }
}

TEST_CASE("every '#'-initial token is a hashtag and vice versa") {
    for (const char* text : {"#a b #c", "nothing here", "# #x", "a#b", "end #tag"}) {
        TokenizedTweet t = tokenize(text);
        std::vector<std::string> expect;
        for (const auto& tok : t.tokens)
            if (tok.front() == '#') expect.push_back(tok);
        CHECK(t.hashtags == expect);
    }
}

TEST_CASE("rule files reject malformed lines") {
    std::string p = (std::filesystem::temp_directory_path() / "emix_badrule.tsv").string();
    write_file(p, "key-without-value\n");
    CHECK_THROWS(load_rule_file(p));
    write_file(p, "# comment only\nok\tvalue\n");
    CHECK(load_rule_file(p).entries.size() == 1);
}
