#pragma once

#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "propdet/corpus.hpp"
#include "propdet/textpipe.hpp"

namespace testutil {

inline std::filesystem::path data_dir() { return PROPDET_DATA_DIR; }

inline propdet::Document doc(std::string id, std::string text, std::optional<int> label = std::nullopt,
                             std::string group = "") {
    propdet::Document d;
    d.id = std::move(id);
    d.text = std::move(text);
    d.label = label;
    d.group = std::move(group);
    return d;
}

// Dataset with one document per label, ids "<prefix><i>".
inline propdet::Dataset labeled(const std::string& name, std::initializer_list<int> labels,
                                const std::string& prefix = "d") {
    propdet::Dataset ds;
    ds.name = name;
    int i = 0;
    for (int y : labels) {
        ds.documents.push_back(doc(prefix + std::to_string(i), "text " + std::to_string(i), y));
        ++i;
    }
    return ds;
}

inline propdet::Dataset counts(const std::string& name, std::size_t pos, std::size_t neg) {
    propdet::Dataset ds;
    ds.name = name;
    for (std::size_t i = 0; i < pos + neg; ++i)
        ds.documents.push_back(doc("d" + std::to_string(i), "text " + std::to_string(i), i < pos ? 1 : 0));
    return ds;
}

// Tokens with sentence_initial only on the first.
inline std::vector<propdet::Token> toks(std::initializer_list<const char*> words) {
    std::vector<propdet::Token> out;
    std::size_t i = 0;
    for (const char* w : words) {
        out.push_back({w, i, i == 0});
        ++i;
    }
    return out;
}

inline std::vector<std::string> surfaces(const std::vector<propdet::Token>& t) {
    std::vector<std::string> out;
    for (const auto& x : t) out.push_back(x.surface);
    return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("propdet_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testutil
