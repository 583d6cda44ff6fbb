#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "propdet/corpus.hpp"
#include "propdet/neural_core.hpp"

namespace propdet {

// Pseudo-word inventory shared by synthetic domains. All words are distinct
// lowercase letter strings; names are stored lowercase and capitalized when
// written into text.
struct SyntheticLexicon {
    std::vector<std::string> propaganda_cues;
    std::vector<std::string> normal_cues;
    std::vector<std::string> filler;
    std::vector<std::string> names;
};

SyntheticLexicon make_synthetic_lexicon(std::uint64_t seed, std::size_t n_cues = 30, std::size_t n_filler = 400,
                                        std::size_t n_names = 80);

struct DomainSpec {
    std::string name = "synthetic";
    std::size_t n_docs = 200;
    std::uint64_t seed = 1;
    Granularity granularity = Granularity::sentence;
    double positive_fraction = 0.5;

    std::size_t min_sentences = 1, max_sentences = 1;
    std::size_t min_words = 8, max_words = 14;  // per sentence, before cues and names

    std::size_t min_cues = 2, max_cues = 3;
    double cue_purity = 0.95;  // chance a cue slot draws from the document's own class

    // Label-neutral proper nouns, inserted mid-sentence with probability topic_rate.
    std::vector<std::string> topic_names;
    double topic_rate = 0.6;
    // Proper nouns inserted (mid-sentence) into documents of confound_label
    // with probability confound_rate; confound_label < 0 disables them.
    std::vector<std::string> confound_names;
    int confound_label = -1;
    double confound_rate = 0.0;

    double label_noise = 0.0;  // label flip probability, applied last
    std::string group_positive = "src_p";
    std::string group_negative = "src_n";
};

Dataset generate_domain(const SyntheticLexicon& lex, const DomainSpec& spec);

// Cue words get +signal or -signal along a shared random direction plus
// N(0, noise) jitter; filler and names are pure jitter.
EmbeddingTable make_synthetic_embeddings(const SyntheticLexicon& lex, std::size_t dim, std::uint64_t seed,
                                         double signal = 1.0, double noise = 0.3);

// word v1 v2 ... per line, sorted by word, %.6f values.
std::string embeddings_to_text(const EmbeddingTable& table);

// Names slice [begin, begin + count) of lex.names.
std::vector<std::string> name_slice(const SyntheticLexicon& lex, std::size_t begin, std::size_t count);

// The committed fixture corpora: two labeled domains with disjoint topic
// names and an inverted confound, a noisy third domain, and an unlabeled
// speaker-grouped set for ordered pairing.
struct FixtureSet {
    SyntheticLexicon lexicon;
    std::vector<Dataset> datasets;
    EmbeddingTable embeddings;
    std::string category_lexicon;  // `.dic` text with cue categories
    std::vector<std::string> names;  // every proper noun used, lowercase
};

FixtureSet make_fixture_set(std::uint64_t seed = 2024);

}  // namespace propdet
