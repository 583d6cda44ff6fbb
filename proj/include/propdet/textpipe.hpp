#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace propdet {

struct Document;

struct Token {
    std::string surface;  // case preserved
    std::size_t position = 0;
    bool sentence_initial = false;

    bool operator==(const Token&) const = default;
};

enum class TaggerMode { heuristic, list, external_tags };

std::string to_string(TaggerMode m);
TaggerMode parse_tagger_mode(const std::string& s);

struct ProperNounTagger {
    TaggerMode mode = TaggerMode::heuristic;
    std::set<std::string> lexicon;                        // case-folded entries
    std::map<std::string, std::vector<std::string>> tags; // document id -> per-token tags

    static ProperNounTagger heuristic(const std::set<std::string>& lexicon = {});
    static ProperNounTagger list(const std::set<std::string>& lexicon);
    static ProperNounTagger external(std::map<std::string, std::vector<std::string>> tags);
};

// Splits on non-alphanumeric boundaries (UTF-8 aware); apostrophes between
// two word characters stay inside the token.
std::vector<Token> tokenize(std::string_view text);

// Output is a re-indexed subsequence of the input. `doc_id` selects the
// sidecar tags in external_tags mode.
std::vector<Token> strip_proper_nouns(const std::vector<Token>& tokens, const ProperNounTagger& tagger,
                                      const std::string& doc_id = {});

// Contiguous lowercased n-grams joined by a single space.
std::vector<std::string> ngrams(const std::vector<Token>& tokens, std::size_t n);

// Case folding for ASCII, Latin-1, Greek and Cyrillic letters.
std::string fold_case(std::string_view s);
bool is_capitalized(std::string_view s);

std::vector<std::string> folded_surfaces(const std::vector<Token>& tokens);

// Tokenize a document and apply proper-noun removal when a tagger is given.
std::vector<Token> prepare_tokens(const Document& doc, const ProperNounTagger* tagger);

// Sidecar JSONL: {"id": ..., "tags": [...]} per line.
std::map<std::string, std::vector<std::string>> load_tag_sidecar(const std::filesystem::path& path);
std::set<std::string> load_word_list(const std::filesystem::path& path);

}  // namespace propdet
