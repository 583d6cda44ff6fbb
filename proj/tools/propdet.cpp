// propdet: experiment runner. One config file per experiment; flags only
// override individual keys.

#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "propdet/experiment.hpp"

namespace {

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string output_dir;

    std::vector<std::string> assignments() const {
        auto out = overrides;
        if (seed) out.push_back("seed=" + std::to_string(*seed));
        if (!output_dir.empty()) out.push_back("output_dir=\"" + output_dir + "\"");
        return out;
    }
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("config", c.config, "Experiment config (.toml or .json)")->required();
    sub->add_option("--set", c.overrides, "Override a config key, e.g. --set eval.k=10")->take_all();
    sub->add_option("--seed", c.seed, "Override the experiment seed");
    sub->add_option("--output-dir", c.output_dir, "Override output_dir");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-domain propaganda classification workbench"};
    app.require_subcommand(1);

    Common validate_c, prepare_c, train_c, eval_c, analyze_c, grad_c;
    auto* validate = app.add_subcommand("validate", "Check config schema, paths and cross-field constraints");
    add_common(validate, validate_c);
    auto* prepare = app.add_subcommand("prepare", "Write balanced datasets, pair files and a manifest");
    add_common(prepare, prepare_c);
    auto* train = app.add_subcommand("train", "Train the configured method and save the model");
    add_common(train, train_c);
    auto* eval = app.add_subcommand("eval", "Run the configured evaluation mode and write reports");
    add_common(eval, eval_c);
    std::string mode;
    eval->add_option("--mode", mode, "Override eval.mode");
    auto* analyze = app.add_subcommand("analyze", "Top-weighted terms and lexicon categories of a linear model");
    add_common(analyze, analyze_c);
    std::string model_path;
    std::optional<std::size_t> top_n;
    analyze->add_option("--model", model_path, "Model file (defaults to the train command's output)");
    analyze->add_option("--top-n", top_n, "Number of terms to list (default 15)");
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
    add_common(gradcheck, grad_c);

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return propdet::cmd_validate(validate_c.config, validate_c.assignments(), std::cout);

        auto load = [](const Common& c, std::vector<std::string> extra = {}) {
            auto a = c.assignments();
            a.insert(a.end(), extra.begin(), extra.end());
            auto cfg = propdet::load_config(c.config, a);
            return cfg;
        };
        if (prepare->parsed()) return propdet::cmd_prepare(load(prepare_c), std::cout);
        if (train->parsed()) return propdet::cmd_train(load(train_c), std::cout);
        if (eval->parsed()) {
            std::vector<std::string> extra;
            if (!mode.empty()) extra.push_back("eval.mode=\"" + mode + "\"");
            return propdet::cmd_eval(load(eval_c, extra), std::cout);
        }
        if (analyze->parsed()) {
            std::vector<std::string> extra;
            if (top_n) extra.push_back("analyze.top_n=" + std::to_string(*top_n));
            std::optional<propdet::fs::path> mp;
            if (!model_path.empty()) mp = model_path;
            return propdet::cmd_analyze(load(analyze_c, extra), mp, std::cout);
        }
        if (gradcheck->parsed()) return propdet::cmd_gradcheck(load(grad_c), std::cout);
    } catch (const std::exception& e) {
        std::cerr << "propdet: " << e.what() << '\n';
        return propdet::exit_code_for(std::current_exception());
    }
    return 1;
}
