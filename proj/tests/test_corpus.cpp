#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "helpers.hpp"
#include "propdet/corpus.hpp"
#include "propdet/errors.hpp"
#include "propdet/rng.hpp"

using namespace propdet;
using testutil::counts;

namespace {

std::map<std::string, int> label_map(const Dataset& ds) {
    std::map<std::string, int> m;
    for (const auto& d : ds.documents) m[d.id] = d.label.value_or(-1);
    return m;
}

void check_pairs_valid(const Dataset& ds, const std::vector<RankedPair>& pairs) {
    const auto labels = label_map(ds);
    std::set<RankedPair> seen;
    for (const auto& p : pairs) {
        CHECK(p.more_id != p.less_id);
        CHECK(labels.at(p.more_id) == 1);
        CHECK(labels.at(p.less_id) == 0);
        CHECK(seen.insert(p).second);
    }
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("rng streams are reproducible and distinct") {
    Rng a(derive_seed(7, "x")), b(derive_seed(7, "x")), c(derive_seed(7, "y"));
    for (int i = 0; i < 10; ++i) {
        const auto va = a.next();
        CHECK(va == b.next());
        CHECK(va != c.next());
    }
    Rng r(3);
    for (int i = 0; i < 1000; ++i) {
        const auto k = r.index(7);
        CHECK(k < 7);
        const double u = r.unit();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    const auto s = Rng(5).sample_sorted(20, 6);
    CHECK(s.size() == 6);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
}

TEST_CASE("parse_jsonl: three labeled lines") {
    const auto ds = parse_jsonl(
        "{\"id\":\"a\",\"text\":\"x\",\"label\":1}\n{\"id\":\"b\",\"text\":\"y\",\"label\":0}\n"
        "{\"id\":\"c\",\"text\":\"z\",\"label\":1}\n",
        "t");
    CHECK(ds.size() == 3);
    CHECK(ds.count_label(1) == 2);
    CHECK(ds.documents[0].id == "a");
    CHECK(ds.documents[2].id == "c");
}

TEST_CASE("load_jsonl: empty file gives an empty dataset") {
    const auto dir = testutil::temp_dir("empty_jsonl");
    std::ofstream(dir / "empty.jsonl").close();
    const auto ds = load_jsonl(dir / "empty.jsonl");
    CHECK(ds.size() == 0);
    CHECK(ds.name == "empty");
}

TEST_CASE("parse_jsonl errors name the line number") {
    auto message = [](const std::string& text) {
        try {
            parse_jsonl(text, "t");
        } catch (const DataError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    const std::string first = "{\"id\":\"a\",\"text\":\"x\",\"label\":1}\n";
    CHECK(message(first + "{\"id\":\"b\",\"text\":\"y\"}\n").find(":2:") != std::string::npos);
    CHECK(message(first + "{not json}\n").find(":2:") != std::string::npos);
    CHECK(message(first + first).find("duplicate") != std::string::npos);
    CHECK(message("{\"text\":\"x\",\"label\":1}\n").find(":1:") != std::string::npos);
    CHECK(message("{\"id\":\"a\",\"text\":\"x\",\"label\":2}\n") != "no error");
}

TEST_CASE("jsonl round trip preserves documents") {
    Dataset ds = counts("rt", 2, 1);
    ds.documents[0].group = "g";
    ds.documents[1].text = "quote \" and unicode \xc3\xa9";
    ds.documents[2].label.reset();
    ds.documents[2].group = "h";
    const auto back = parse_jsonl(to_jsonl(ds), "rt");
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.documents[i].id == ds.documents[i].id);
        CHECK(back.documents[i].text == ds.documents[i].text);
        CHECK(back.documents[i].label == ds.documents[i].label);
        CHECK(back.documents[i].group == ds.documents[i].group);
    }
}

TEST_CASE("balance_undersample") {
    SUBCASE("10 pos / 4 neg -> 4 / 4, order preserved") {
        const auto ds = counts("b", 10, 4);
        const auto out = balance_undersample(ds, 99);
        CHECK(out.count_label(1) == 4);
        CHECK(out.count_label(0) == 4);
        std::vector<std::size_t> pos;
        const auto idx = index_by_id(ds);
        for (const auto& d : out.documents) pos.push_back(idx.at(d.id));
        CHECK(std::is_sorted(pos.begin(), pos.end()));
        // minority untouched
        for (std::size_t i = 10; i < 14; ++i)
            CHECK(std::any_of(out.documents.begin(), out.documents.end(),
                              [&](const Document& d) { return d.id == ds.documents[i].id; }));
    }
    SUBCASE("already balanced -> identical") {
        const auto ds = counts("b", 5, 5);
        CHECK(to_jsonl(balance_undersample(ds, 1)) == to_jsonl(ds));
    }
    SUBCASE("deterministic per seed") {
        const auto ds = counts("b", 30, 7);
        CHECK(to_jsonl(balance_undersample(ds, 4)) == to_jsonl(balance_undersample(ds, 4)));
        CHECK(to_jsonl(balance_undersample(ds, 4)) != to_jsonl(balance_undersample(ds, 5)));
    }
    SUBCASE("single class is an error") { CHECK_THROWS_AS(balance_undersample(counts("b", 3, 0), 1), DataError); }
}

TEST_CASE("make_pairs_labeled examples") {
    SUBCASE("complete: one pair per positive") {
        const auto ds = counts("p", 3, 3);
        const auto pairs = make_pairs_labeled(ds, {SamplingKind::complete, 1.0, 1.0, 5});
        CHECK(pairs.size() == 3);
        check_pairs_valid(ds, pairs);
    }
    SUBCASE("over_rate=2 on 2x2 enumerates the cross product") {
        const auto ds = counts("p", 2, 2);
        auto pairs = make_pairs_labeled(ds, {SamplingKind::over, 1.0, 2.0, 5});
        std::set<RankedPair> got(pairs.begin(), pairs.end());
        std::set<RankedPair> all;
        for (const char* p : {"d0", "d1"})
            for (const char* n : {"d2", "d3"}) all.insert({p, n});
        CHECK(pairs.size() == 4);
        CHECK(got == all);
    }
    SUBCASE("over_rate=3 on 2x2 is exhausted") {
        CHECK_THROWS_AS(make_pairs_labeled(counts("p", 2, 2), {SamplingKind::over, 1.0, 3.0, 5}), DataError);
    }
    SUBCASE("under_fraction=1 equals complete") {
        const auto ds = counts("p", 9, 12);
        CHECK(make_pairs_labeled(ds, {SamplingKind::under, 1.0, 1.0, 8}) ==
              make_pairs_labeled(ds, {SamplingKind::complete, 1.0, 1.0, 8}));
    }
    SUBCASE("under_fraction shrinks both classes") {
        const auto ds = counts("p", 20, 20);
        const auto pairs = make_pairs_labeled(ds, {SamplingKind::under, 0.25, 1.0, 8});
        CHECK(pairs.size() == 5);
        check_pairs_valid(ds, pairs);
    }
    SUBCASE("invalid rates") {
        const auto ds = counts("p", 3, 3);
        CHECK_THROWS_AS(make_pairs_labeled(ds, {SamplingKind::under, 0.0, 1.0, 8}), ConfigError);
        CHECK_THROWS_AS(make_pairs_labeled(ds, {SamplingKind::over, 1.0, 0.5, 8}), ConfigError);
    }
}

TEST_CASE("pair-set invariants hold for every strategy (property)") {
    Rng rng(1234);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t pos = 1 + rng.index(15), neg = 1 + rng.index(15);
        const auto ds = counts("p", pos, neg);
        const std::uint64_t seed = rng.next();
        check_pairs_valid(ds, make_pairs_labeled(ds, {SamplingKind::complete, 1.0, 1.0, seed}));
        check_pairs_valid(ds, make_pairs_labeled(ds, {SamplingKind::under, 0.1 + 0.9 * rng.unit(), 1.0, seed}));
        const double rate = 1.0 + 2.0 * rng.unit();
        if (std::ceil(rate * double(pos)) <= double(pos * neg)) {
            const auto p = make_pairs_labeled(ds, {SamplingKind::over, 1.0, rate, seed});
            CHECK(p.size() == static_cast<std::size_t>(std::ceil(rate * double(pos))));
            check_pairs_valid(ds, p);
        }
        CHECK(make_pairs_labeled(ds, {SamplingKind::complete, 1.0, 1.0, seed}) ==
              make_pairs_labeled(ds, {SamplingKind::complete, 1.0, 1.0, seed}));
    }
}

TEST_CASE("make_pairs_ordered") {
    Dataset ds;
    ds.name = "sp";
    ds.documents = {testutil::doc("g1", "a", std::nullopt, "G"), testutil::doc("g2", "b", std::nullopt, "G"),
                    testutil::doc("c1", "c", std::nullopt, "C"), testutil::doc("c2", "d", std::nullopt, "C"),
                    testutil::doc("o1", "e", std::nullopt, "O")};
    OrderingSpec spec{{"G"}, {"C"}};
    SUBCASE("two per side -> two pairs from G") {
        const auto pairs = make_pairs_ordered(ds, spec, 3);
        CHECK(pairs.size() == 2);
        for (const auto& p : pairs) {
            CHECK(p.more_id[0] == 'g');
            CHECK(p.less_id[0] == 'c');
        }
    }
    SUBCASE("overlap is rejected") { CHECK_THROWS_AS(make_pairs_ordered(ds, {{"G"}, {"G", "C"}}, 3), ConfigError); }
    SUBCASE("empty side is rejected") { CHECK_THROWS_AS(make_pairs_ordered(ds, {{"G"}, {"X"}}, 3), DataError); }
    SUBCASE("deterministic") { CHECK(make_pairs_ordered(ds, spec, 3) == make_pairs_ordered(ds, spec, 3)); }
    SUBCASE("never pairs across unmatched groups") {
        const std::vector<OrderingSpec> specs{{{"G"}, {"C"}}};
        for (const auto& p : make_pairs_ordered(ds, specs, 9)) CHECK(p.less_id != "o1");
    }
}

TEST_CASE("split_kfold") {
    SUBCASE("10 docs, k=5 -> test size 2 each") {
        const auto folds = split_kfold(counts("k", 5, 5), 5, 1);
        REQUIRE(folds.size() == 5);
        for (const auto& f : folds) {
            CHECK(f.test.size() == 2);
            CHECK(f.train.size() == 8);
        }
    }
    SUBCASE("11 docs, k=5 -> sizes {3,2,2,2,2}") {
        Dataset ds = counts("k", 11, 0);
        const auto folds = split_kfold(ds, 5, 1);
        std::multiset<std::size_t> sizes;
        for (const auto& f : folds) sizes.insert(f.test.size());
        CHECK(sizes == std::multiset<std::size_t>{2, 2, 2, 2, 3});
    }
    SUBCASE("stratified 6 pos / 4 neg, k=2") {
        for (const auto& f : split_kfold(counts("k", 6, 4), 2, 77)) {
            CHECK(f.test.count_label(1) == 3);
            CHECK(f.test.count_label(0) == 2);
        }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(split_kfold(counts("k", 2, 2), 5, 1), DataError);
        CHECK_THROWS_AS(split_kfold(counts("k", 2, 2), 1, 1), ConfigError);
    }
}

TEST_CASE("k-fold partitions are disjoint and exhaustive (property)") {
    Rng rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t pos = rng.index(20), neg = rng.index(20);
        if (pos + neg < 2) continue;
        const Dataset ds = counts("k", pos, neg);
        const std::size_t k = 2 + rng.index(std::min<std::size_t>(pos + neg - 1, 9));
        const auto folds = split_kfold(ds, k, rng.next());
        std::multiset<std::string> seen;
        for (const auto& f : folds) {
            CHECK(f.train.size() + f.test.size() == ds.size());
            std::set<std::string> train_ids;
            for (const auto& d : f.train.documents) train_ids.insert(d.id);
            for (const auto& d : f.test.documents) {
                seen.insert(d.id);
                CHECK(train_ids.count(d.id) == 0);
            }
        }
        CHECK(seen.size() == ds.size());
        std::set<std::string> unique(seen.begin(), seen.end());
        CHECK(unique.size() == ds.size());
    }
}

TEST_CASE("pair jsonl round trip and hash") {
    const std::vector<RankedPair> pairs{{"a", "b"}, {"c", "d"}};
    CHECK(pairs_from_jsonl(pairs_to_jsonl(pairs)) == pairs);
    const std::vector<RankedPair> swapped{{"b", "a"}, {"c", "d"}};
    CHECK(pair_set_hash(pairs) != pair_set_hash(swapped));
}

}
