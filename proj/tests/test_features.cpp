#include <doctest.h>

#include <cmath>
#include <map>
#include <memory>
#include <set>

#include "helpers.hpp"
#include "propdet/errors.hpp"
#include "propdet/features.hpp"
#include "propdet/rng.hpp"

using namespace propdet;
using testutil::doc;
using testutil::toks;

namespace {

std::map<std::string, double> named(const SparseVector& v, const FeatureSpace& space) {
    std::map<std::string, double> out;
    for (auto [i, x] : v.entries) out[space.feature_name(i).name] = x;
    return out;
}

const char* kLex = "%\n1\tfirstperson\n2\tnegemo\n3\tsocial\n%\ni\t1\nlie*\t2\nliar\t2\t3\n";

// Straight transcription of the weighting formula, no shared code with the library.
std::map<std::string, double> brute_tfidf(const std::vector<std::vector<std::string>>& corpus,
                                          const std::vector<std::string>& doc_terms,
                                          const std::set<std::string>& vocab) {
    const double n = static_cast<double>(corpus.size());
    std::map<std::string, double> raw;
    for (const auto& t : doc_terms)
        if (vocab.count(t)) raw[t] += 1.0;
    double sq = 0.0;
    for (auto& [t, tf] : raw) {
        double df = 0.0;
        for (const auto& d : corpus) {
            bool present = false;
            for (const auto& w : d) present = present || w == t;
            df += present ? 1.0 : 0.0;
        }
        tf *= std::log((1.0 + n) / (1.0 + df)) + 1.0;
        sq += tf * tf;
    }
    for (auto& [t, x] : raw) x /= std::sqrt(sq);
    return raw;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("fit_vocabulary examples") {
    const std::vector<std::vector<Token>> docs{toks({"a", "a", "b"}), toks({"b", "c"})};
    const auto v = fit_vocabulary(docs, {1}, 2);
    CHECK(v.terms == std::vector<std::string>{"a", "b"});
    CHECK(v.collection_frequency == std::vector<std::uint64_t>{2, 2});
    CHECK(v.document_frequency == std::vector<std::uint64_t>{1, 2});
    CHECK(v.n_documents_fitted == 2);
    CHECK(fit_vocabulary(docs, {1}, 100).size() == 3);
    const std::vector<std::vector<Token>> one{toks({"a", "b", "c"})};
    const auto bi = fit_vocabulary(one, {2}, 10);
    CHECK(std::set<std::string>(bi.terms.begin(), bi.terms.end()) == std::set<std::string>{"a b", "b c"});
    CHECK_THROWS_AS(fit_vocabulary(docs, {1}, 0), ConfigError);
    CHECK_THROWS_AS(fit_vocabulary(docs, {4}, 10), ConfigError);
}

TEST_CASE("vocabulary respects cap and df <= N (property)") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::vector<Token>> docs(1 + rng.index(8));
        for (auto& d : docs)
            for (std::size_t i = rng.index(10); i > 0; --i)
                d.push_back({std::string(1, static_cast<char>('a' + rng.index(12))), d.size(), d.empty()});
        const std::size_t cap = 1 + rng.index(15);
        const auto v = fit_vocabulary(docs, {1, 2}, cap);
        CHECK(v.size() <= cap);
        for (std::size_t i = 0; i < v.size(); ++i) {
            CHECK(v.document_frequency[i] <= v.n_documents_fitted);
            if (i) CHECK(v.collection_frequency[i - 1] >= v.collection_frequency[i]);
        }
    }
}

TEST_CASE("wc_vector examples") {
    const std::vector<std::vector<Token>> fit{toks({"a", "b", "c"})};
    const auto v = fit_vocabulary(fit, {1}, 10);
    const auto x = wc_vector(toks({"a", "a", "b"}), v);
    CHECK(x.dim == 3);
    CHECK(x.entries == std::vector<std::pair<std::uint32_t, double>>{{0, 2.0}, {1, 1.0}});
    const auto oov = wc_vector(toks({"z", "q"}), v);
    CHECK(oov.entries.empty());
    CHECK(oov.dim == 3);
    CHECK(wc_vector({}, v).entries.empty());
}

TEST_CASE("tfidf_vector examples") {
    const std::vector<std::vector<Token>> single{toks({"a", "b"})};
    const auto v1 = fit_vocabulary(single, {1}, 10);
    const auto x = tfidf_vector(toks({"a", "b"}), v1);
    REQUIRE(x.entries.size() == 2);
    CHECK(x.entries[0].second == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(x.entries[1].second == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(tfidf_vector(toks({"a"}), v1).entries.size() == 1);

    const std::vector<std::vector<Token>> twin{toks({"a"}), toks({"a"})};
    const auto v2 = fit_vocabulary(twin, {1}, 10);
    const auto y = tfidf_vector(toks({"a"}), v2);
    REQUIRE(y.entries.size() == 1);
    CHECK(y.entries[0].second == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("tfidf matches a brute-force oracle on small corpora (property)") {
    Rng rng(2718);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n_docs = 1 + rng.index(20);
        std::vector<std::vector<Token>> docs(n_docs);
        std::vector<std::vector<std::string>> words(n_docs);
        for (std::size_t d = 0; d < n_docs; ++d)
            for (std::size_t i = rng.index(12); i > 0; --i) {
                std::string w(1, static_cast<char>('a' + rng.index(15)));
                docs[d].push_back({w, docs[d].size(), docs[d].empty()});
                words[d].push_back(w);
            }
        const auto vocab = fit_vocabulary(docs, {1}, 1 + rng.index(15));
        const std::set<std::string> kept(vocab.terms.begin(), vocab.terms.end());
        for (std::size_t d = 0; d < n_docs; ++d) {
            const auto got = tfidf_vector(docs[d], vocab);
            const auto want = brute_tfidf(words, words[d], kept);
            REQUIRE(got.entries.size() == want.size());
            for (auto [i, x] : got.entries) CHECK(std::abs(x - want.at(vocab.terms[i])) <= 1e-12);
            const double norm = got.norm();
            CHECK((got.entries.empty() ? norm == 0.0 : std::abs(norm - 1.0) < 1e-12));
        }
    }
}

TEST_CASE("liwc_vector examples") {
    const auto lex = parse_lexicon(kLex);
    REQUIRE(lex.size() == 3);
    const auto x = liwc_vector(toks({"i", "lied"}), lex);
    CHECK(x.dim == 3);
    CHECK(x.entries == std::vector<std::pair<std::uint32_t, double>>{{0, 0.5}, {1, 0.5}});
    CHECK(liwc_vector({}, lex).entries.empty());
    const auto two = liwc_vector(toks({"liar"}), lex);
    CHECK(two.entries == std::vector<std::pair<std::uint32_t, double>>{{1, 1.0}, {2, 1.0}});
    CHECK(liwc_vector(toks({"I", "LIES", "liar"}), lex).entries.size() == 3);
}

TEST_CASE("liwc values stay in [0,1]; the sum may exceed 1") {
    const auto lex = parse_lexicon(kLex);
    Rng rng(9);
    const char* words[] = {"i", "lie", "liar", "lies", "dog", "I"};
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Token> t;
        for (std::size_t i = rng.index(8); i > 0; --i) t.push_back({words[rng.index(6)], t.size(), t.empty()});
        for (auto [i, x] : liwc_vector(t, lex).entries) {
            CHECK(x > 0.0);
            CHECK(x <= 1.0);
        }
    }
}

TEST_CASE("lexicon parser rejects bad input") {
    CHECK_THROWS_AS(parse_lexicon("word\t1\n"), DataError);
    CHECK_THROWS_AS(parse_lexicon("%\n1\ta\n%\nword\t7\n"), DataError);
    CHECK_THROWS_AS(parse_lexicon("%\n%\n"), DataError);
    const auto shipped = load_lexicon(testutil::data_dir() / "lexicon" / "open_lexicon.dic");
    CHECK(shipped.size() >= 15);
}

TEST_CASE("featurize concatenation and offsets") {
    Dataset train;
    train.name = "t";
    train.documents = {doc("a", "the liar lied again", 1), doc("b", "we met the leaders", 0),
                       doc("c", "i said the truth", 0)};
    auto lex = std::make_shared<const Lexicon>(parse_lexicon(kLex));
    const auto wc_only = fit_feature_space(train, FeatureSpec::parse("WC"), lex, nullptr);
    const auto t = feature_tokens(train.documents[0], wc_only);
    CHECK(featurize(train.documents[0], wc_only) == wc_vector(t, *wc_only.word_vocab));

    const auto combo = fit_feature_space(train, FeatureSpec::parse("WC+LIWC"), lex, nullptr);
    CHECK(combo.dim() == combo.group_dim(FeatureGroup::WC) + 3);
    CHECK(combo.group_offset(FeatureGroup::LIWC) == combo.group_dim(FeatureGroup::WC));
    const auto x = featurize(train.documents[0], combo);
    bool saw_liwc = false;
    for (auto [i, v] : x.entries) {
        if (i >= combo.group_offset(FeatureGroup::LIWC)) {
            saw_liwc = true;
            CHECK(combo.feature_name(i).group == FeatureGroup::LIWC);
            const auto name = combo.feature_name(i).name;
            CHECK((name == "negemo" || name == "social"));
        }
    }
    CHECK(saw_liwc);
    check_sparse(x);

    const auto all = fit_feature_space(train, FeatureSpec::all(), lex, nullptr);
    CHECK(all.dim() == all.group_dim(FeatureGroup::WC) + all.group_dim(FeatureGroup::TIW) +
                           all.group_dim(FeatureGroup::TIG) + all.group_dim(FeatureGroup::LIWC));
    CHECK_THROWS_AS(fit_feature_space(train, FeatureSpec::parse("LIWC"), nullptr, nullptr), ConfigError);
}

TEST_CASE("5000-wide WC plus a 76-category lexicon gives dim 5076") {
    Dataset train;
    train.name = "wide";
    std::string text;
    for (int i = 0; i < 6000; ++i) text += "w" + std::to_string(i) + " ";
    train.documents = {doc("a", text, 1), doc("b", "w1 w2", 0)};
    std::string dic = "%\n";
    for (int c = 1; c <= 76; ++c) dic += std::to_string(c) + "\tcat" + std::to_string(c) + "\n";
    dic += "%\nw1\t76\n";
    auto lex = std::make_shared<const Lexicon>(parse_lexicon(dic));
    const auto space = fit_feature_space(train, FeatureSpec::parse("WC+LIWC"), lex, nullptr);
    CHECK(space.group_dim(FeatureGroup::WC) == 5000);
    CHECK(space.dim() == 5076);
    const auto x = featurize(train.documents[1], space);
    CHECK(x.entries.back().first == 5075);
    CHECK(space.feature_name(5075).name == "cat76");
}

TEST_CASE("proper-noun removal changes exactly the iran-derived terms") {
    Dataset train;
    train.name = "pn";
    train.documents = {doc("a", "We met Iran leaders today", 1), doc("b", "leaders met here", 0)};
    auto tagger = std::make_shared<const ProperNounTagger>(ProperNounTagger::heuristic());
    FeatureSpec off = FeatureSpec::parse("WC");
    FeatureSpec on = off;
    on.remove_proper_nouns = true;
    const auto s_off = fit_feature_space(train, off, nullptr, tagger);
    const auto s_on = fit_feature_space(train, on, nullptr, tagger);
    auto a = named(featurize(train.documents[0], s_off), s_off);
    const auto b = named(featurize(train.documents[0], s_on), s_on);
    CHECK(a.erase("iran") == 1);
    CHECK(a == b);
}

TEST_CASE("featurizing test documents leaves the fitted space untouched") {
    Dataset train;
    train.name = "t";
    train.documents = {doc("a", "alpha beta beta", 1), doc("b", "gamma alpha", 0)};
    const auto space = fit_feature_space(train, FeatureSpec::parse("TI-W+TI-G"), nullptr, nullptr);
    const auto before = space.to_json().dump();
    const std::vector<Document> test{doc("x", "delta delta alpha epsilon", 1), doc("y", "", 0)};
    const auto first = featurize_all(test, space);
    CHECK(space.to_json().dump() == before);
    CHECK(featurize_all(test, space) == first);
    CHECK(featurize_all_serial(test, space) == first);
}

TEST_CASE("feature space json round trip keeps its id") {
    Dataset train;
    train.name = "t";
    train.documents = {doc("a", "alpha beta beta", 1), doc("b", "gamma alpha", 0)};
    const auto space = fit_feature_space(train, FeatureSpec::parse("WC+TI-G"), nullptr, nullptr);
    const auto back = FeatureSpace::from_json(space.to_json(), nullptr, nullptr);
    CHECK(back.id() == space.id());
    CHECK(featurize(train.documents[0], back) == featurize(train.documents[0], space));
}

TEST_CASE("FeatureSpec labels parse and print") {
    for (const char* label : {"WC", "TI-W", "TI-G", "LIWC", "ALL"}) CHECK(FeatureSpec::parse(label).label() == label);
    CHECK_THROWS_AS(FeatureSpec::parse("BOW"), ConfigError);
}

}
