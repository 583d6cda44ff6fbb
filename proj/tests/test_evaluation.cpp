#include <doctest.h>

#include <cmath>
#include <memory>
#include <numeric>

#include "helpers.hpp"
#include "propdet/errors.hpp"
#include "propdet/evaluation.hpp"
#include "propdet/report.hpp"
#include "propdet/rng.hpp"
#include "propdet/synthetic.hpp"

using namespace propdet;

namespace {

struct World {
    SyntheticLexicon lex = make_synthetic_lexicon(404, 20, 150, 30);
    std::shared_ptr<const EmbeddingTable> emb =
        std::make_shared<const EmbeddingTable>(make_synthetic_embeddings(lex, 8, 404));

    Dataset domain(const std::string& name, std::size_t n, std::size_t names_from, double purity = 0.95) const {
        DomainSpec s;
        s.cue_purity = purity;
        s.name = name;
        s.n_docs = n;
        s.seed = 404;
        s.topic_names = name_slice(lex, names_from, 10);
        return generate_domain(lex, s);
    }

    MethodConfig config(Method m) const {
        MethodConfig c;
        c.method = m;
        c.features = FeatureSpec::parse("TI-W");
        c.embeddings = emb;
        c.arch.hidden = 6;
        c.arch.dense = {8};
        c.net.epochs = 4;
        c.net.learning_rate = 0.02;
        return c;
    }
};

const World& world() {
    static const World w;
    return w;
}

Metrics brute_metrics(const std::vector<int>& pred, const std::vector<int>& gold) {
    Metrics m;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == 1 && gold[i] == 1) ++m.tp;
        if (pred[i] == 1 && gold[i] == 0) ++m.fp;
        if (pred[i] == 0 && gold[i] == 1) ++m.fn;
        if (pred[i] == 0 && gold[i] == 0) ++m.tn;
    }
    m.precision = m.tp + m.fp ? double(m.tp) / double(m.tp + m.fp) : 0.0;
    m.recall = m.tp + m.fn ? double(m.tp) / double(m.tp + m.fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

Dataset halve(const Dataset& ds, bool first, const std::string& name) {
    Dataset out;
    out.name = name;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if ((i % 2 == 0) == first) out.documents.push_back(ds.documents[i]);
    return out;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("compute_metrics examples") {
    const auto m = compute_metrics(std::vector<int>{1, 1, 1, 0}, std::vector<int>{1, 0, 1, 1});
    CHECK(m.tp == 2);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(m.precision == doctest::Approx(2.0 / 3.0));
    CHECK(m.recall == doctest::Approx(2.0 / 3.0));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
    const auto perfect = compute_metrics(std::vector<int>{1, 1}, std::vector<int>{1, 1});
    CHECK(perfect.f1 == 1.0);
    CHECK(perfect.precision == 1.0);
    const auto none = compute_metrics(std::vector<int>{0, 0, 0}, std::vector<int>{1, 0, 1});
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);
    CHECK_THROWS_AS(compute_metrics(std::vector<int>{1}, std::vector<int>{1, 0}), DataError);
}

TEST_CASE("compute_metrics equals a brute-force confusion oracle on 1000 vectors") {
    Rng rng(1000);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.index(30);
        std::vector<int> pred(n), gold(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = rng.bernoulli(0.5);
            gold[i] = rng.bernoulli(0.5);
        }
        const auto got = compute_metrics(pred, gold), want = brute_metrics(pred, gold);
        CHECK(got.tp == want.tp);
        CHECK(got.fp == want.fp);
        CHECK(got.fn == want.fn);
        CHECK(got.tn == want.tn);
        CHECK(got.total() == n);
        CHECK(got.precision == want.precision);
        CHECK(got.recall == want.recall);
        CHECK(got.f1 == want.f1);
    }
}

TEST_CASE("test labels are revealed once, after prediction") {
    const auto& w = world();
    const auto train = w.domain("acc_train", 60, 0), test = w.domain("acc_test", 40, 10);
    for (Method m : {Method::LR, Method::SVM, Method::LSTM, Method::LSTMR}) {
        std::size_t reveals = 0;
        bool predicted = false, early = false;
        EvalHooks hooks;
        hooks.before_predict = [&](const std::string&) { predicted = true; };
        hooks.on_reveal = [&](const std::string& name) {
            CHECK(name == "acc_test");
            early = early || !predicted;
            ++reveals;
        };
        const auto cell = run_cross_domain(train, test, w.config(m), 3, hooks);
        CHECK(cell.error.empty());
        CHECK_MESSAGE(reveals == 1, to_string(m));
        CHECK_FALSE(early);
    }
    TestSet ts(test);
    for (const auto& d : ts.inputs()) CHECK_FALSE(d.label.has_value());
    CHECK(ts.reveal_count() == 0);
}

TEST_CASE("in-domain: planted corpus, leave-one-out and fold averaging") {
    const auto& w = world();
    const auto ds = w.domain("planted", 100, 0, 1.0);
    const auto cell = run_in_domain(ds, w.config(Method::LR), 5, 11);
    CHECK(cell.metrics.f1 >= 0.95);
    REQUIRE(cell.folds.size() == 5);
    double mean_f1 = 0.0, mean_p = 0.0;
    std::size_t tp = 0;
    for (const auto& f : cell.folds) {
        mean_f1 += f.f1 / 5.0;
        mean_p += f.precision / 5.0;
        tp += f.tp;
    }
    CHECK(cell.metrics.f1 == doctest::Approx(mean_f1).epsilon(1e-12));
    CHECK(cell.metrics.precision == doctest::Approx(mean_p).epsilon(1e-12));
    CHECK(cell.metrics.tp == tp);

    auto micro_cfg = w.config(Method::LR);
    micro_cfg.aggregation = Aggregation::micro;
    const auto micro = run_in_domain(ds, micro_cfg, 5, 11);
    const auto& mm = micro.metrics;
    CHECK(mm.f1 == doctest::Approx(2.0 * double(mm.tp) / double(2 * mm.tp + mm.fp + mm.fn)).epsilon(1e-12));
    CHECK(micro.metadata.at("aggregation") == "micro");

    const auto small = w.domain("ten", 10, 0);
    const auto loo = run_in_domain(small, w.config(Method::SVM), 10, 2);
    CHECK(loo.error.empty());
    CHECK(loo.folds.size() == 10);
    CHECK_THROWS_AS(run_in_domain(small, w.config(Method::LR), 11, 2), DataError);
}

TEST_CASE("same seed, same report") {
    const auto& w = world();
    const auto ds = w.domain("repeat", 60, 0);
    for (Method m : {Method::LR, Method::LSTMR}) {
        EvalReport a, b;
        a.cells.push_back(run_in_domain(ds, w.config(m), 3, 5));
        b.cells.push_back(run_in_domain(ds, w.config(m), 3, 5));
        CHECK(report_json(a) == report_json(b));
    }
}

TEST_CASE("cross-domain behaviour") {
    const auto& w = world();
    const auto a = w.domain("dom_a", 120, 0), b = w.domain("dom_b", 120, 10);
    const auto cell = run_cross_domain(a, b, w.config(Method::LR), 7);
    CHECK(cell.metrics.f1 > 0.5);

    const auto whole = w.domain("whole", 600, 0);
    const auto in = run_in_domain(whole, w.config(Method::LR), 2, 7);
    const auto halves = run_cross_domain(halve(whole, true, "h1"), halve(whole, false, "h2"), w.config(Method::LR), 7);
    CHECK(std::abs(halves.metrics.f1 - in.metrics.f1) <= 0.05);

    auto cfg = w.config(Method::LSTMR);
    cfg.loss = {LossKind::THR, 0.4, 10.0};
    const auto r = run_cross_domain(a, b, cfg, 7);
    CHECK(r.metadata.at("loss") == "THR");
    CHECK(r.metadata.at("theta") == 0.4);
    CHECK(r.metadata.at("tau") == 0.5);

    CHECK_THROWS_AS(run_cross_domain(a, a, w.config(Method::LR), 7), ConfigError);
}

TEST_CASE("combined training") {
    const auto& w = world();
    const auto a = w.domain("cmb_a", 100, 0), t = w.domain("cmb_t", 100, 10);
    const std::vector<Dataset> twice{a, a};
    const auto doubled = run_combined(twice, t, w.config(Method::LR), 9);
    const auto single = run_cross_domain(a, t, w.config(Method::LR), 9);
    CHECK(doubled.train_dataset == "cmb_a+cmb_a");
    CHECK(std::abs(doubled.metrics.f1 - single.metrics.f1) <= 0.05);
    CHECK_THROWS_AS(run_combined(std::vector<Dataset>{}, t, w.config(Method::LR), 9), ConfigError);
    CHECK_THROWS_AS(run_combined(std::vector<Dataset>{a, t}, t, w.config(Method::LR), 9), ConfigError);

    const auto merged = concatenate(twice);
    CHECK(merged.size() == 200);
    CHECK(index_by_id(merged).size() == 200);
}

TEST_CASE("sampling sweep") {
    const auto& w = world();
    const auto train = w.domain("sw_train", 40, 0);
    const std::vector<Dataset> tests{w.domain("sw_t1", 30, 10), w.domain("sw_t2", 30, 20)};
    auto cfg = w.config(Method::LSTMR);
    cfg.net.epochs = 2;

    const std::vector<SamplingStrategy> identity{{SamplingKind::complete, 1.0, 1.0, 0},
                                                 {SamplingKind::under, 1.0, 1.0, 0}};
    const auto id = sweep_sampling(train, tests, identity, cfg, 13);
    REQUIRE(id.cells.size() == 4);
    for (const auto& test : {"sw_t1", "sw_t2"}) {
        const EvalCell *complete = nullptr, *under = nullptr;
        for (const auto& c : id.cells)
            if (c.test_dataset == test) (c.sweep == "complete" ? complete : under) = &c;
        REQUIRE(complete);
        REQUIRE(under);
        CHECK(complete->metrics.f1 == under->metrics.f1);
        CHECK(complete->metrics.tp == under->metrics.tp);
    }

    std::vector<SamplingStrategy> rates;
    for (double r : {1.0, 2.0, 4.0, 8.0, 1000.0}) rates.push_back({SamplingKind::over, 1.0, r, 0});
    const auto over = sweep_sampling(train, tests, rates, cfg, 13);
    CHECK(over.cells.size() == 5 * tests.size());
    std::size_t errored = 0;
    for (const auto& c : over.cells) {
        if (!c.error.empty()) {
            ++errored;
            CHECK(c.sweep == "over_rate=1000");
            CHECK(c.error_kind == "data");
        }
    }
    CHECK(errored == tests.size());

    const std::vector<SamplingStrategy> bad{{SamplingKind::under, 0.0, 1.0, 0}};
    CHECK_THROWS_AS(sweep_sampling(train, tests, bad, cfg, 13), ConfigError);
}

TEST_CASE("loss sweep shares one pair set") {
    const auto& w = world();
    const auto train = w.domain("ls_train", 40, 0);
    const std::vector<Dataset> tests{w.domain("ls_1", 20, 10), w.domain("ls_2", 20, 20), w.domain("ls_3", 20, 5)};
    auto cfg = w.config(Method::LSTMR);
    cfg.net.epochs = 2;
    const std::vector<RankLoss> losses{{LossKind::LOG}, {LossKind::LIN}, {LossKind::THR}, {LossKind::COU}};
    const auto rep = sweep_losses(train, tests, losses, cfg, 17);
    REQUIRE(rep.cells.size() == 12);
    const auto hash = rep.cells.front().metadata.at("pair_set_hash");
    for (const auto& c : rep.cells) {
        CHECK(c.error.empty());
        CHECK(c.metadata.at("pair_set_hash") == hash);
        CHECK(c.metadata.contains("cou_surrogate") == (c.sweep == "loss=COU"));
    }
}

TEST_CASE("parallel grid equals the serial reference") {
    const auto& w = world();
    const auto a = w.domain("g_a", 60, 0), b = w.domain("g_b", 60, 10);
    std::vector<GridJob> jobs;
    for (Method m : {Method::LR, Method::SVM, Method::LSTM, Method::LSTMR}) {
        GridJob cross;
        cross.train = &a;
        cross.test = &b;
        cross.cfg = w.config(m);
        cross.seed = 21;
        jobs.push_back(cross);
        GridJob in = cross;
        in.kind = GridJob::Kind::in_domain;
        in.test = nullptr;
        in.k = 3;
        jobs.push_back(in);
    }
    EvalReport par, ser;
    par.cells = run_grid(jobs);
    ser.cells = run_grid_serial(jobs);
    CHECK(report_csv(par) == report_csv(ser));
    CHECK(report_json(par) == report_json(ser));
}

}
