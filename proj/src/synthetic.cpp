#include "propdet/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "propdet/errors.hpp"
#include "propdet/rng.hpp"

namespace propdet {

namespace {

constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "st", "tr"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u"};

std::string pseudo_word(Rng& rng, std::size_t syllables) {
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[rng.index(std::size(kOnsets))];
        w += kVowels[rng.index(std::size(kVowels))];
    }
    if (rng.bernoulli(0.4)) w += kOnsets[rng.index(12)];  // single-letter codas only
    return w;
}

std::vector<std::string> draw_words(Rng& rng, std::set<std::string>& used, std::size_t n, std::size_t syllables) {
    std::vector<std::string> out;
    while (out.size() < n) {
        auto w = pseudo_word(rng, syllables);
        if (used.insert(w).second) out.push_back(std::move(w));
    }
    return out;
}

std::string capitalize(std::string w) {
    if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 'a' + 'A');
    return w;
}

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

}  // namespace

SyntheticLexicon make_synthetic_lexicon(std::uint64_t seed, std::size_t n_cues, std::size_t n_filler,
                                        std::size_t n_names) {
    Rng rng(derive_seed(seed, "synthetic/lexicon"));
    std::set<std::string> used{"i"};
    SyntheticLexicon lex;
    lex.propaganda_cues = draw_words(rng, used, n_cues, 3);
    lex.normal_cues = draw_words(rng, used, n_cues, 3);
    lex.filler = draw_words(rng, used, n_filler, 2);
    lex.names = draw_words(rng, used, n_names, 3);
    return lex;
}

std::vector<std::string> name_slice(const SyntheticLexicon& lex, std::size_t begin, std::size_t count) {
    if (begin + count > lex.names.size()) throw ConfigError("name slice exceeds the synthetic name inventory");
    return {lex.names.begin() + static_cast<std::ptrdiff_t>(begin),
            lex.names.begin() + static_cast<std::ptrdiff_t>(begin + count)};
}

Dataset generate_domain(const SyntheticLexicon& lex, const DomainSpec& spec) {
    if (spec.min_sentences < 1 || spec.max_sentences < spec.min_sentences || spec.min_words < 2 ||
        spec.max_words < spec.min_words || spec.max_cues < spec.min_cues)
        throw ConfigError("inconsistent synthetic domain ranges");
    if (lex.propaganda_cues.empty() || lex.normal_cues.empty() || lex.filler.empty())
        throw ConfigError("synthetic lexicon is empty");

    Rng rng(derive_seed(spec.seed, "synthetic/domain/" + spec.name));
    Dataset ds;
    ds.name = spec.name;
    ds.granularity = spec.granularity;
    const auto n_pos = static_cast<std::size_t>(spec.positive_fraction * static_cast<double>(spec.n_docs) + 0.5);

    for (std::size_t d = 0; d < spec.n_docs; ++d) {
        const int label = d < n_pos ? 1 : 0;
        const std::size_t n_sent = between(rng, spec.min_sentences, spec.max_sentences);
        std::vector<std::vector<std::string>> sentences(n_sent);
        for (auto& s : sentences) {
            const std::size_t n = between(rng, spec.min_words, spec.max_words);
            for (std::size_t i = 0; i < n; ++i) s.push_back(lex.filler[rng.index(lex.filler.size())]);
        }
        // Cue words land anywhere; they are lowercase and survive proper-noun removal.
        const std::size_t n_cues = between(rng, spec.min_cues, spec.max_cues);
        for (std::size_t c = 0; c < n_cues; ++c) {
            const bool own = rng.bernoulli(spec.cue_purity);
            const auto& pool = (label == 1) == own ? lex.propaganda_cues : lex.normal_cues;
            auto& s = sentences[rng.index(n_sent)];
            s.insert(s.begin() + static_cast<std::ptrdiff_t>(rng.index(s.size() + 1)), pool[rng.index(pool.size())]);
        }
        // Names never open a sentence, so the heuristic tagger sees them.
        auto place_name = [&](const std::string& name) {
            auto& s = sentences[rng.index(n_sent)];
            s.insert(s.begin() + static_cast<std::ptrdiff_t>(1 + rng.index(s.size())), capitalize(name));
        };
        if (!spec.topic_names.empty() && rng.bernoulli(spec.topic_rate))
            place_name(spec.topic_names[rng.index(spec.topic_names.size())]);
        if (!spec.confound_names.empty() && label == spec.confound_label && rng.bernoulli(spec.confound_rate))
            place_name(spec.confound_names[rng.index(spec.confound_names.size())]);

        std::string text;
        for (const auto& s : sentences) {
            if (!text.empty()) text += ' ';
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (i) text += ' ';
                text += i == 0 ? capitalize(s[i]) : s[i];
            }
            text += '.';
        }
        int final_label = label;
        if (spec.label_noise > 0.0 && rng.bernoulli(spec.label_noise)) final_label = 1 - label;

        Document doc;
        char id[32];
        std::snprintf(id, sizeof id, "%s-%05zu", spec.name.c_str(), d);
        doc.id = id;
        doc.text = std::move(text);
        doc.label = final_label;
        doc.group = label == 1 ? spec.group_positive : spec.group_negative;
        doc.granularity = spec.granularity;
        ds.documents.push_back(std::move(doc));
    }
    // Interleave classes so file order carries no label signal.
    rng.shuffle(ds.documents);
    return ds;
}

EmbeddingTable make_synthetic_embeddings(const SyntheticLexicon& lex, std::size_t dim, std::uint64_t seed,
                                         double signal, double noise) {
    if (dim == 0) throw ConfigError("embedding dim must be positive");
    Rng rng(derive_seed(seed, "synthetic/embeddings"));
    Eigen::VectorXd dir(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = rng.normal();
    dir.normalize();

    EmbeddingTable t;
    t.dim = dim;
    auto add = [&](const std::string& w, double sign) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = noise * rng.normal();
        v += sign * signal * dir;
        t.vectors.emplace(w, std::move(v));
    };
    for (const auto& w : lex.propaganda_cues) add(w, 1.0);
    for (const auto& w : lex.normal_cues) add(w, -1.0);
    for (const auto& w : lex.filler) add(w, 0.0);
    for (const auto& w : lex.names) add(w, 0.0);
    return t;
}

std::string embeddings_to_text(const EmbeddingTable& table) {
    std::vector<const std::string*> words;
    for (const auto& [w, v] : table.vectors) words.push_back(&w);
    std::sort(words.begin(), words.end(), [](auto* a, auto* b) { return *a < *b; });
    std::string out;
    char buf[32];
    for (const auto* w : words) {
        out += *w;
        for (double x : table.vectors.at(*w)) {
            std::snprintf(buf, sizeof buf, " %.6f", x);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

FixtureSet make_fixture_set(std::uint64_t seed) {
    FixtureSet f;
    f.lexicon = make_synthetic_lexicon(seed, 20, 150, 40);
    const auto& lex = f.lexicon;

    DomainSpec a;
    a.name = "news_a";
    a.n_docs = 160;
    a.seed = seed;
    a.topic_names = name_slice(lex, 0, 10);
    a.confound_names = name_slice(lex, 30, 5);
    a.confound_label = 1;
    a.confound_rate = 0.5;
    a.group_positive = "outlet_p";
    a.group_negative = "outlet_n";

    DomainSpec b = a;
    b.name = "speech_b";
    b.topic_names = name_slice(lex, 10, 10);
    b.confound_label = 0;
    b.group_positive = "speaker_p";
    b.group_negative = "speaker_n";

    DomainSpec c = a;
    c.name = "tweets_c";
    c.n_docs = 120;
    c.min_words = 5;
    c.max_words = 9;
    c.topic_names = name_slice(lex, 20, 10);
    c.confound_names.clear();
    c.confound_label = -1;
    c.label_noise = 0.05;
    c.group_positive = "account_p";
    c.group_negative = "account_n";

    DomainSpec u = b;
    u.name = "speeches_u";
    u.n_docs = 40;
    u.confound_names.clear();
    u.confound_label = -1;

    for (const auto& spec : {a, b, c}) f.datasets.push_back(generate_domain(lex, spec));
    Dataset unlabeled = generate_domain(lex, u);
    for (auto& d : unlabeled.documents) d.label.reset();
    f.datasets.push_back(std::move(unlabeled));

    f.embeddings = make_synthetic_embeddings(lex, 8, seed);
    f.names = name_slice(lex, 0, 35);

    std::string dic = "%\n1\tcue_p\n2\tcue_n\n3\tfiller\n%\n";
    for (const auto& w : lex.propaganda_cues) dic += w + "\t1\n";
    for (const auto& w : lex.normal_cues) dic += w + "\t2\n";
    // Two-letter prefixes cover a slice of the filler vocabulary.
    dic += "ba*\t3\nko*\t3\n";
    f.category_lexicon = std::move(dic);
    return f;
}

}  // namespace propdet
