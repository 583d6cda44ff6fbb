#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "propdet/corpus.hpp"
#include "propdet/textpipe.hpp"

namespace propdet {

struct SparseVector {
    std::size_t dim = 0;
    std::vector<std::pair<std::uint32_t, double>> entries;  // strictly increasing index, no zeros

    double norm() const;
    bool operator==(const SparseVector&) const = default;
};

// Raises on unsorted/duplicate/out-of-range indices or explicit zeros.
void check_sparse(const SparseVector& v);

struct Vocabulary {
    std::vector<std::string> terms;  // index = feature id
    std::vector<std::uint64_t> collection_frequency;
    std::vector<std::uint64_t> document_frequency;
    std::uint64_t n_documents_fitted = 0;
    std::set<int> ngram_orders;

    std::size_t size() const { return terms.size(); }
    std::optional<std::uint32_t> find(const std::string& term) const;
    void rebuild_index();

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);

private:
    std::unordered_map<std::string, std::uint32_t> index_;
};

// Category lexicon in the conventional `%`-header dictionary layout.
struct Lexicon {
    std::vector<std::string> categories;
    std::map<std::string, std::vector<std::uint32_t>> exact;   // folded word -> category indices
    std::vector<std::pair<std::string, std::vector<std::uint32_t>>> prefixes;  // "lie*" stored as "lie"

    std::size_t size() const { return categories.size(); }
    // Distinct categories matched by one folded token.
    std::vector<std::uint32_t> match(const std::string& folded_token) const;
};

Lexicon parse_lexicon(std::string_view content);
Lexicon load_lexicon(const std::filesystem::path& path);

enum class FeatureGroup { WC, TIW, TIG, LIWC };

std::string to_string(FeatureGroup g);
FeatureGroup parse_feature_group(const std::string& s);

struct FeatureSpec {
    std::set<FeatureGroup> groups{FeatureGroup::TIW};
    bool remove_proper_nouns = false;
    std::size_t cap_per_group = 5000;

    static FeatureSpec all();
    // "WC", "TI-W", "TI-G", "LIWC" or "ALL" (groups joined by '+').
    std::string label() const;
    static FeatureSpec parse(const std::string& label);
};

// `docs` are post-removal token streams of the training set.
Vocabulary fit_vocabulary(std::span<const std::vector<Token>> docs, const std::set<int>& orders,
                          std::size_t cap);

// Terms of the requested orders in document order (unigrams first, then bigrams, ...).
std::vector<std::string> extract_terms(const std::vector<Token>& tokens, const std::set<int>& orders);

SparseVector wc_vector(const std::vector<Token>& tokens, const Vocabulary& vocab);
SparseVector tfidf_vector(const std::vector<Token>& tokens, const Vocabulary& vocab);
SparseVector liwc_vector(const std::vector<Token>& tokens, const Lexicon& lex);

// Everything fitted on a training set that featurization needs. Immutable
// after fit_feature_space and safe to share across threads.
struct FeatureSpace {
    FeatureSpec spec;
    std::optional<Vocabulary> word_vocab;  // orders {1}: WC and TI-W
    std::optional<Vocabulary> gram_vocab;  // orders {2,3}: TI-G
    std::shared_ptr<const Lexicon> lexicon;
    std::shared_ptr<const ProperNounTagger> tagger;  // used iff spec.remove_proper_nouns

    std::size_t dim() const;
    std::size_t group_dim(FeatureGroup g) const;
    std::size_t group_offset(FeatureGroup g) const;
    bool has_group(FeatureGroup g) const;

    struct FeatureName {
        FeatureGroup group;
        std::string name;
    };
    FeatureName feature_name(std::size_t index) const;

    std::string id() const;  // content hash, ties models to their feature space
    nlohmann::json to_json() const;
    // Lexicon and tagger are external resources; the caller re-attaches them.
    static FeatureSpace from_json(const nlohmann::json& j, std::shared_ptr<const Lexicon> lexicon,
                                  std::shared_ptr<const ProperNounTagger> tagger);
};

FeatureSpace fit_feature_space(const Dataset& train, const FeatureSpec& spec,
                               std::shared_ptr<const Lexicon> lexicon,
                               std::shared_ptr<const ProperNounTagger> tagger);

std::vector<Token> feature_tokens(const Document& doc, const FeatureSpace& space);

// Concatenation in fixed group order WC, TI-W, TI-G, LIWC.
SparseVector featurize(const std::vector<Token>& tokens, const FeatureSpec& spec, const FeatureSpace& space);
SparseVector featurize(const Document& doc, const FeatureSpace& space);

// OpenMP over documents; featurize_all_serial is the reference path.
std::vector<SparseVector> featurize_all(std::span<const Document> docs, const FeatureSpace& space);
std::vector<SparseVector> featurize_all_serial(std::span<const Document> docs, const FeatureSpace& space);

}  // namespace propdet
