// Regenerates the synthetic fixture corpora, embeddings and lexicons under
// the given directory. Output is a pure function of the seed.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "propdet/synthetic.hpp"

namespace {

void write(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << content;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Write the synthetic fixture set"};
    std::string dir;
    std::uint64_t seed = 2024;
    app.add_option("dir", dir, "Output directory")->required();
    app.add_option("--seed", seed, "Generator seed");
    CLI11_PARSE(app, argc, argv);

    try {
        const auto fx = propdet::make_fixture_set(seed);
        const std::filesystem::path out(dir);
        std::filesystem::create_directories(out);
        for (const auto& ds : fx.datasets) write(out / (ds.name + ".jsonl"), propdet::to_jsonl(ds));
        write(out / "embeddings.txt", propdet::embeddings_to_text(fx.embeddings));
        write(out / "fixture.dic", fx.category_lexicon);
        std::string names;
        for (const auto& n : fx.names) names += n + '\n';
        write(out / "names.txt", names);
        std::cout << "wrote " << fx.datasets.size() << " corpora to " << out.string() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "make_fixtures: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
