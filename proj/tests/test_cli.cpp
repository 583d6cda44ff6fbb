#include <doctest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "propdet/errors.hpp"
#include "propdet/experiment.hpp"
#include "propdet/rng.hpp"

using namespace propdet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code;
    std::string output;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// Runs the CLI with its output root pointed at `root`.
Run cli(const fs::path& root, const std::string& args) {
    const fs::path log = root / "cli.log";
    const std::string cmd = "PROPDET_OUTPUT_ROOT='" + root.string() + "' '" + std::string(PROPDET_CLI) + "' " + args +
                            " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

fs::path configs() { return testutil::data_dir() / "fixtures" / "configs"; }
std::string cfg_arg(const char* name) { return "'" + (configs() / name).string() + "'"; }

std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "cli.log")
            out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

// A JSON config next to the fixtures so relative paths resolve.
fs::path scratch_config(const fs::path& dir, const json& body) {
    const fs::path p = dir / "config.json";
    spit(p, body.dump(2));
    return p;
}

json base_config() {
    const fs::path fx = testutil::data_dir() / "fixtures";
    return {{"seed", 5},
            {"output_dir", "out"},
            {"method", "LR"},
            {"datasets", {{"news_a", (fx / "news_a.jsonl").string()}}},
            {"features", {{"groups", {"TI-W"}}}}};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("every shipped config validates") {
    const auto root = testutil::temp_dir("cli_validate");
    for (const auto& e : fs::directory_iterator(configs())) {
        const auto r = cli(root, "validate '" + e.path().string() + "'");
        CHECK_MESSAGE(r.code == 0, (e.path().filename().string() + ": " + r.output));
        CHECK(r.output.find("OK (config hash ") != std::string::npos);
    }
}

TEST_CASE("validation errors and warnings") {
    const auto dir = testutil::temp_dir("cli_invalid");
    SUBCASE("missing dataset path is named") {
        auto c = base_config();
        c["datasets"]["ghost"] = (dir / "ghost.jsonl").string();
        const auto r = cli(dir, "validate '" + scratch_config(dir, c).string() + "'");
        CHECK(r.code == 2);
        CHECK(r.output.find("datasets.ghost") != std::string::npos);
        CHECK(r.output.find("file not found") != std::string::npos);
    }
    SUBCASE("theta with LOG warns") {
        auto c = base_config();
        c["method"] = "LSTMR";
        c["ranker"] = {{"loss", "LOG"}, {"theta", 0.3}};
        c["neural"] = {{"embeddings", (testutil::data_dir() / "fixtures" / "embeddings.txt").string()},
                       {"embedding_dim", 8}};
        const auto r = cli(dir, "validate '" + scratch_config(dir, c).string() + "'");
        CHECK(r.code == 0);
        CHECK(r.output.find("warning:") != std::string::npos);
        CHECK(r.output.find("theta") != std::string::npos);
    }
    SUBCASE("cross-domain refuses train = test") {
        const auto r = cli(dir, "validate " + cfg_arg("cross_domain.json") +
                                    " --set 'eval.test=[\"news_a\"]'");
        CHECK(r.code == 2);
        CHECK(r.output.find("news_a") != std::string::npos);
    }
    SUBCASE("schema errors") {
        CHECK(cli(dir, "validate " + cfg_arg("in_domain.toml") + " --set eval.k=1").code == 2);
        CHECK(cli(dir, "validate " + cfg_arg("in_domain.toml") + " --set method=KNN").code == 2);
        CHECK(cli(dir, "validate '" + (dir / "nope.toml").string() + "'").code == 2);
    }
}

TEST_CASE("in-domain fixture run reproduces the golden report") {
    const auto root = testutil::temp_dir("cli_golden");
    const auto r = cli(root, "eval " + cfg_arg("in_domain.toml"));
    REQUIRE_MESSAGE(r.code == 0, r.output);
    const fs::path out = root / "fixture_in_domain" / "reports";
    const fs::path golden = testutil::data_dir() / "fixtures" / "golden";
    for (const char* f : {"in_domain.csv", "in_domain.json", "in_domain.txt"}) {
        REQUIRE(fs::exists(golden / f));
        CHECK_MESSAGE(slurp(out / f) == slurp(golden / f), f);
    }
}

TEST_CASE("prepare is idempotent and leaves inputs alone") {
    const auto root = testutil::temp_dir("cli_prepare");
    const auto inputs_before = tree(testutil::data_dir() / "fixtures");
    REQUIRE(cli(root, "prepare " + cfg_arg("sweep_sampling.toml")).code == 0);
    const auto first = tree(root);
    REQUIRE(cli(root, "prepare " + cfg_arg("sweep_sampling.toml")).code == 0);
    CHECK(tree(root) == first);
    CHECK(tree(testutil::data_dir() / "fixtures") == inputs_before);

    const json manifest = json::parse(first.at("fixture_sweep_sampling/prepared/manifest.json"));
    CHECK(manifest.contains("config_hash"));
    CHECK(manifest.contains("seeds"));
    const auto news = load_jsonl(testutil::data_dir() / "fixtures" / "news_a.jsonl");
    const auto& counts = manifest.at("datasets").at("news_a").at("input");
    CHECK(counts.at("documents") == news.size());
    CHECK(counts.at("positive") == news.count_label(1));
    CHECK(counts.at("negative") == news.count_label(0));

    REQUIRE(cli(root, "prepare " + cfg_arg("ordered.toml")).code == 0);
    const json ordered = json::parse(slurp(root / "fixture_ordered" / "prepared" / "manifest.json"));
    CHECK(ordered.at("datasets").at("speeches_u").at("pairs").get<int>() > 0);
}

TEST_CASE("unlabeled data without an ordering cannot be paired") {
    const auto root = testutil::temp_dir("cli_unordered");
    const auto r = cli(root, "prepare " + cfg_arg("ordered.toml") + " --set 'ordering=[]'");
    CHECK(r.code == 3);
    CHECK(r.output.find("ordering") != std::string::npos);
}

TEST_CASE("train: linear timing, ranker metadata, corrupt embeddings") {
    const auto root = testutil::temp_dir("cli_train");
    const auto t0 = std::chrono::steady_clock::now();
    REQUIRE(cli(root, "train " + cfg_arg("train_lr.toml")).code == 0);
    CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 10.0);
    CHECK(fs::exists(root / "fixture_train" / "models" / "news_a.LR.model.json"));

    REQUIRE(cli(root, "train " + cfg_arg("cross_domain.json") + " --set method=LSTMR --set ranker.loss=THR").code == 0);
    const auto metas = tree(root / "fixture_cross_domain" / "models");
    const json meta = json::parse(metas.at("news_a.LSTMR.meta.json"));
    const std::string dumped = meta.dump();
    CHECK(dumped.find("\"loss\":\"THR\"") != std::string::npos);
    CHECK(dumped.find("\"theta\":0.4") != std::string::npos);

    const auto dir = testutil::temp_dir("cli_corrupt");
    spit(dir / "bad_embeddings.txt", "word 0.1 0.2\nother 0.3\n");
    auto c = base_config();
    c["method"] = "LSTM";
    c["neural"] = {{"embeddings", (dir / "bad_embeddings.txt").string()}, {"embedding_dim", 2}};
    const auto r = cli(dir, "train '" + scratch_config(dir, c).string() + "'");
    CHECK(r.code == 3);
    CHECK(r.output.find(":2:") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "out" / "models"));
}

TEST_CASE("analyze") {
    const auto root = testutil::temp_dir("cli_analyze");
    REQUIRE(cli(root, "train " + cfg_arg("train_lr.toml")).code == 0);
    const fs::path model = root / "fixture_train" / "models" / "news_a.LR.model.json";

    SUBCASE("default lists 15 terms") {
        const auto r = cli(root, "analyze " + cfg_arg("train_lr.toml"));
        REQUIRE(r.code == 0);
        CHECK(r.output.find("top 15 terms") != std::string::npos);
        const auto tsv = slurp(root / "fixture_train" / "analysis" / "news_a.LR.model.top_features.tsv");
        std::istringstream in(tsv);
        std::size_t term_rows = 0;
        for (std::string line; std::getline(in, line);) term_rows += line.rfind("term\t", 0) == 0;
        CHECK(term_rows == 15);
        const auto config = load_config(configs() / "train_lr.toml");
        CHECK(config.top_n == 15);
        auto bare = base_config();
        CHECK(parse_config(bare, configs()).top_n == 15);
    }
    SUBCASE("hand-weighted model has a known top term") {
        json j = json::parse(slurp(model));
        auto& w = j["model"]["weights"];
        for (auto& x : w) x = 0.1;
        auto lex = std::make_shared<const Lexicon>(load_lexicon(testutil::data_dir() / "fixtures" / "fixture.dic"));
        const auto space = FeatureSpace::from_json(j["feature_space"], lex, nullptr);
        const auto idx = space.group_offset(FeatureGroup::TIW) + *space.word_vocab->find(space.word_vocab->terms[3]);
        w[idx] = 0.9;
        const fs::path hand = root / "hand.model.json";
        spit(hand, j.dump());
        const auto r = cli(root, "analyze " + cfg_arg("train_lr.toml") + " --model '" + hand.string() + "' --top-n 1");
        REQUIRE_MESSAGE(r.code == 0, r.output);
        CHECK(r.output.find("1. " + space.word_vocab->terms[3] + "  0.900000") != std::string::npos);
    }
    SUBCASE("neural models are refused with an explanation") {
        REQUIRE(cli(root, "train " + cfg_arg("cross_domain.json") + " --set method=LSTM").code == 0);
        const auto r = cli(root, "analyze " + cfg_arg("cross_domain.json") + " --set method=LSTM");
        CHECK(r.code == 2);
        CHECK(r.output.find("neural model") != std::string::npos);
    }
}

TEST_CASE("eval modes and exit codes") {
    const auto root = testutil::temp_dir("cli_eval");
    SUBCASE("sweep mode writes one table per swept parameter") {
        REQUIRE(cli(root, "eval " + cfg_arg("sweep_sampling.toml")).code == 0);
        const fs::path rep = root / "fixture_sweep_sampling" / "reports";
        CHECK(fs::exists(rep / "sweep_sampling_over_rate.tsv"));
        CHECK(fs::exists(rep / "sweep_sampling_under_fraction.tsv"));
        REQUIRE(cli(root, "eval " + cfg_arg("sweep_losses.toml")).code == 0);
        CHECK(fs::exists(root / "fixture_sweep_losses" / "reports" / "sweep_losses_loss.tsv"));
    }
    SUBCASE("gradcheck passes") {
        const auto r = cli(root, "gradcheck " + cfg_arg("in_domain.toml"));
        CHECK_MESSAGE(r.code == 0, r.output);
    }
    SUBCASE("typed errors map to exit codes") {
        auto code = [](auto thrower) {
            try {
                thrower();
            } catch (...) {
                return exit_code_for(std::current_exception());
            }
            return 0;
        };
        CHECK(code([] { throw ConfigError("x"); }) == 2);
        CHECK(code([] { throw DataError("x"); }) == 3);
        CHECK(code([] { throw TrainingDivergence("x"); }) == 4);
        CHECK(code([] { throw std::runtime_error("x"); }) == 1);
    }
    SUBCASE("identical configs give identical artifacts") {
        const auto a = testutil::temp_dir("cli_eval_a"), b = testutil::temp_dir("cli_eval_b");
        REQUIRE(cli(a, "eval " + cfg_arg("combined.toml")).code == 0);
        REQUIRE(cli(b, "eval " + cfg_arg("combined.toml")).code == 0);
        CHECK(tree(a) == tree(b));
        const auto c = testutil::temp_dir("cli_eval_c");
        REQUIRE(cli(c, "eval " + cfg_arg("combined.toml") + " --seed 99").code == 0);
        CHECK(tree(c) != tree(a));
    }
}

TEST_CASE("config overrides") {
    json raw{{"a", {{"b", 1}}}};
    apply_override(raw, "a.b=2.5");
    apply_override(raw, "a.c=text");
    apply_override(raw, "d=[1,2]");
    CHECK(raw["a"]["b"] == 2.5);
    CHECK(raw["a"]["c"] == "text");
    CHECK(raw["d"].size() == 2);
    CHECK_THROWS_AS(apply_override(raw, "novalue"), ConfigError);
    CHECK(config_hash(raw) != config_hash(json{{"a", 1}}));
}

}
