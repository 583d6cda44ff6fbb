#include "propdet/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "propdet/errors.hpp"
#include "propdet/rng.hpp"

namespace propdet {

using nlohmann::json;

double SparseVector::norm() const {
    double s = 0.0;
    for (const auto& [i, v] : entries) s += v * v;
    return std::sqrt(s);
}

void check_sparse(const SparseVector& v) {
    for (std::size_t k = 0; k < v.entries.size(); ++k) {
        const auto [i, x] = v.entries[k];
        if (i >= v.dim) throw DataError("sparse index " + std::to_string(i) + " out of range");
        if (k > 0 && v.entries[k - 1].first >= i) throw DataError("sparse indices not strictly increasing");
        if (x == 0.0) throw DataError("explicit zero in sparse vector");
        if (!std::isfinite(x)) throw DataError("non-finite feature value");
    }
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

std::optional<std::uint32_t> Vocabulary::find(const std::string& term) const {
    const auto it = index_.find(term);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

void Vocabulary::rebuild_index() {
    index_.clear();
    index_.reserve(terms.size());
    for (std::size_t i = 0; i < terms.size(); ++i) index_.emplace(terms[i], static_cast<std::uint32_t>(i));
}

json Vocabulary::to_json() const {
    return json{{"terms", terms},
                {"cf", collection_frequency},
                {"df", document_frequency},
                {"N", n_documents_fitted},
                {"orders", std::vector<int>(ngram_orders.begin(), ngram_orders.end())}};
}

Vocabulary Vocabulary::from_json(const json& j) {
    Vocabulary v;
    try {
        v.terms = j.at("terms").get<std::vector<std::string>>();
        v.document_frequency = j.at("df").get<std::vector<std::uint64_t>>();
        v.collection_frequency = j.value("cf", std::vector<std::uint64_t>(v.terms.size(), 0));
        v.n_documents_fitted = j.at("N").get<std::uint64_t>();
        const auto orders = j.at("orders").get<std::vector<int>>();
        v.ngram_orders = {orders.begin(), orders.end()};
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed vocabulary: ") + e.what());
    }
    if (v.document_frequency.size() != v.terms.size() || v.collection_frequency.size() != v.terms.size())
        throw DataError("vocabulary arrays have inconsistent lengths");
    v.rebuild_index();
    return v;
}

std::vector<std::string> extract_terms(const std::vector<Token>& tokens, const std::set<int>& orders) {
    std::vector<std::string> out;
    for (int n : orders) {
        auto g = ngrams(tokens, static_cast<std::size_t>(n));
        out.insert(out.end(), std::make_move_iterator(g.begin()), std::make_move_iterator(g.end()));
    }
    return out;
}

Vocabulary fit_vocabulary(std::span<const std::vector<Token>> docs, const std::set<int>& orders,
                          std::size_t cap) {
    if (cap < 1) throw ConfigError("vocabulary cap must be >= 1");
    if (orders.empty()) throw ConfigError("vocabulary needs at least one n-gram order");
    for (int n : orders)
        if (n < 1 || n > 3) throw ConfigError("n-gram orders must lie in {1,2,3}");

    struct Counts {
        std::uint64_t cf = 0;
        std::uint64_t df = 0;
        std::size_t last_doc = SIZE_MAX;
    };
    std::unordered_map<std::string, Counts> counts;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        for (auto& term : extract_terms(docs[d], orders)) {
            auto& c = counts[std::move(term)];
            ++c.cf;
            if (c.last_doc != d) {
                ++c.df;
                c.last_doc = d;
            }
        }
    }

    std::vector<std::pair<std::string, Counts>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second.cf != b.second.cf) return a.second.cf > b.second.cf;
        return a.first < b.first;
    });
    if (ranked.size() > cap) ranked.resize(cap);

    Vocabulary v;
    v.ngram_orders = orders;
    v.n_documents_fitted = docs.size();
    for (auto& [term, c] : ranked) {
        v.terms.push_back(term);
        v.collection_frequency.push_back(c.cf);
        v.document_frequency.push_back(c.df);
    }
    v.rebuild_index();
    return v;
}

namespace {

std::map<std::uint32_t, double> term_counts(const std::vector<Token>& tokens, const Vocabulary& vocab) {
    std::map<std::uint32_t, double> tf;
    for (const auto& term : extract_terms(tokens, vocab.ngram_orders))
        if (auto id = vocab.find(term)) tf[*id] += 1.0;
    return tf;
}

}  // namespace

SparseVector wc_vector(const std::vector<Token>& tokens, const Vocabulary& vocab) {
    SparseVector v;
    v.dim = vocab.size();
    for (const auto& [i, c] : term_counts(tokens, vocab)) v.entries.emplace_back(i, c);
    return v;
}

SparseVector tfidf_vector(const std::vector<Token>& tokens, const Vocabulary& vocab) {
    SparseVector v;
    v.dim = vocab.size();
    const double n = static_cast<double>(vocab.n_documents_fitted);
    for (const auto& [i, tf] : term_counts(tokens, vocab)) {
        const double df = static_cast<double>(vocab.document_frequency[i]);
        const double idf = std::log((1.0 + n) / (1.0 + df)) + 1.0;
        v.entries.emplace_back(i, tf * idf);
    }
    const double norm = v.norm();
    if (norm > 0.0)
        for (auto& e : v.entries) e.second /= norm;
    return v;
}

// ---------------------------------------------------------------------------
// Lexicon
// ---------------------------------------------------------------------------

std::vector<std::uint32_t> Lexicon::match(const std::string& folded_token) const {
    std::vector<std::uint32_t> cats;
    if (const auto it = exact.find(folded_token); it != exact.end())
        cats.insert(cats.end(), it->second.begin(), it->second.end());
    for (const auto& [prefix, ids] : prefixes)
        if (folded_token.compare(0, prefix.size(), prefix) == 0) cats.insert(cats.end(), ids.begin(), ids.end());
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    return cats;
}

Lexicon parse_lexicon(std::string_view content) {
    Lexicon lex;
    std::map<std::string, std::uint32_t> id_to_pos;
    std::map<std::string, std::vector<std::uint32_t>> prefix_map;
    std::istringstream in{std::string(content)};
    std::string line;
    int section = 0;  // 0 before header, 1 inside header, 2 entries
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        if (line[first] == '%') {
            if (section >= 2) throw DataError("lexicon:" + std::to_string(line_no) + ": unexpected '%'");
            ++section;
            continue;
        }
        if (section == 0) throw DataError("lexicon:" + std::to_string(line_no) + ": missing '%' header");

        std::istringstream fields(line);
        if (section == 1) {
            std::string id, name;
            fields >> id >> name;
            if (name.empty()) throw DataError("lexicon:" + std::to_string(line_no) + ": expected 'index<TAB>name'");
            if (id_to_pos.count(id)) throw DataError("lexicon:" + std::to_string(line_no) + ": duplicate category " + id);
            id_to_pos[id] = static_cast<std::uint32_t>(lex.categories.size());
            lex.categories.push_back(name);
            continue;
        }

        // Entries: the pattern is everything before the first tab so that
        // multi-word patterns survive; categories follow.
        const auto tab = line.find('\t', first);
        if (tab == std::string::npos)
            throw DataError("lexicon:" + std::to_string(line_no) + ": entry has no categories");
        std::string pattern = fold_case(line.substr(first, tab - first));
        std::istringstream ids(line.substr(tab + 1));
        std::vector<std::uint32_t> cats;
        std::string id;
        while (ids >> id) {
            const auto it = id_to_pos.find(id);
            if (it == id_to_pos.end())
                throw DataError("lexicon:" + std::to_string(line_no) + ": unknown category '" + id + "'");
            cats.push_back(it->second);
        }
        if (cats.empty()) throw DataError("lexicon:" + std::to_string(line_no) + ": entry has no categories");
        auto& dst = (!pattern.empty() && pattern.back() == '*') ? prefix_map[pattern.substr(0, pattern.size() - 1)]
                                                                  : lex.exact[pattern];
        dst.insert(dst.end(), cats.begin(), cats.end());
    }
    if (lex.categories.empty()) throw DataError("lexicon defines no categories");
    for (auto& [p, ids] : prefix_map) lex.prefixes.emplace_back(p, std::move(ids));
    return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open lexicon " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_lexicon(buf.str());
}

SparseVector liwc_vector(const std::vector<Token>& tokens, const Lexicon& lex) {
    std::vector<double> counts(lex.size(), 0.0);
    for (const auto& t : tokens)
        for (auto c : lex.match(fold_case(t.surface))) counts[c] += 1.0;
    const double denom = std::max<double>(1.0, static_cast<double>(tokens.size()));
    SparseVector v;
    v.dim = lex.size();
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] > 0.0) v.entries.emplace_back(static_cast<std::uint32_t>(c), counts[c] / denom);
    return v;
}

// ---------------------------------------------------------------------------
// Feature specs and fitted feature spaces
// ---------------------------------------------------------------------------

std::string to_string(FeatureGroup g) {
    switch (g) {
        case FeatureGroup::WC: return "WC";
        case FeatureGroup::TIW: return "TI-W";
        case FeatureGroup::TIG: return "TI-G";
        case FeatureGroup::LIWC: return "LIWC";
    }
    return "WC";
}

FeatureGroup parse_feature_group(const std::string& s) {
    if (s == "WC") return FeatureGroup::WC;
    if (s == "TI-W" || s == "TIW") return FeatureGroup::TIW;
    if (s == "TI-G" || s == "TIG") return FeatureGroup::TIG;
    if (s == "LIWC") return FeatureGroup::LIWC;
    throw ConfigError("unknown feature group '" + s + "' (expected WC|TI-W|TI-G|LIWC|ALL)");
}

FeatureSpec FeatureSpec::all() {
    FeatureSpec s;
    s.groups = {FeatureGroup::WC, FeatureGroup::TIW, FeatureGroup::TIG, FeatureGroup::LIWC};
    return s;
}

std::string FeatureSpec::label() const {
    if (groups.size() == 4) return "ALL";
    std::string out;
    for (auto g : groups) {
        if (!out.empty()) out += '+';
        out += to_string(g);
    }
    return out;
}

FeatureSpec FeatureSpec::parse(const std::string& label) {
    if (label == "ALL") return all();
    FeatureSpec s;
    s.groups.clear();
    std::size_t start = 0;
    while (start <= label.size()) {
        const auto plus = label.find('+', start);
        s.groups.insert(parse_feature_group(label.substr(start, plus - start)));
        if (plus == std::string::npos) break;
        start = plus + 1;
    }
    return s;
}

bool FeatureSpace::has_group(FeatureGroup g) const {
    switch (g) {
        case FeatureGroup::WC:
        case FeatureGroup::TIW: return word_vocab.has_value();
        case FeatureGroup::TIG: return gram_vocab.has_value();
        case FeatureGroup::LIWC: return lexicon != nullptr;
    }
    return false;
}

std::size_t FeatureSpace::group_dim(FeatureGroup g) const {
    if (!has_group(g)) return 0;
    switch (g) {
        case FeatureGroup::WC:
        case FeatureGroup::TIW: return word_vocab->size();
        case FeatureGroup::TIG: return gram_vocab->size();
        case FeatureGroup::LIWC: return lexicon->size();
    }
    return 0;
}

std::size_t FeatureSpace::group_offset(FeatureGroup g) const {
    std::size_t off = 0;
    for (auto h : spec.groups) {
        if (h == g) return off;
        off += group_dim(h);
    }
    throw ConfigError("feature group " + to_string(g) + " is not part of this feature space");
}

std::size_t FeatureSpace::dim() const {
    std::size_t d = 0;
    for (auto g : spec.groups) d += group_dim(g);
    return d;
}

FeatureSpace::FeatureName FeatureSpace::feature_name(std::size_t index) const {
    std::size_t off = 0;
    for (auto g : spec.groups) {
        const std::size_t d = group_dim(g);
        if (index < off + d) {
            const std::size_t local = index - off;
            switch (g) {
                case FeatureGroup::WC:
                case FeatureGroup::TIW: return {g, word_vocab->terms[local]};
                case FeatureGroup::TIG: return {g, gram_vocab->terms[local]};
                case FeatureGroup::LIWC: return {g, lexicon->categories[local]};
            }
        }
        off += d;
    }
    throw ConfigError("feature index " + std::to_string(index) + " out of range");
}

json FeatureSpace::to_json() const {
    std::vector<std::string> groups;
    for (auto g : spec.groups) groups.push_back(to_string(g));
    json j{{"groups", groups},
           {"remove_proper_nouns", spec.remove_proper_nouns},
           {"cap_per_group", spec.cap_per_group}};
    if (word_vocab) j["word_vocab"] = word_vocab->to_json();
    if (gram_vocab) j["gram_vocab"] = gram_vocab->to_json();
    if (lexicon) j["lexicon_categories"] = lexicon->categories;
    if (tagger && spec.remove_proper_nouns) j["tagger_mode"] = to_string(tagger->mode);
    return j;
}

std::string FeatureSpace::id() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
    return buf;
}

FeatureSpace FeatureSpace::from_json(const json& j, std::shared_ptr<const Lexicon> lexicon,
                                     std::shared_ptr<const ProperNounTagger> tagger) {
    FeatureSpace s;
    try {
        s.spec.groups.clear();
        for (const auto& g : j.at("groups")) s.spec.groups.insert(parse_feature_group(g.get<std::string>()));
        s.spec.remove_proper_nouns = j.at("remove_proper_nouns").get<bool>();
        s.spec.cap_per_group = j.at("cap_per_group").get<std::size_t>();
        if (j.contains("word_vocab")) s.word_vocab = Vocabulary::from_json(j["word_vocab"]);
        if (j.contains("gram_vocab")) s.gram_vocab = Vocabulary::from_json(j["gram_vocab"]);
        if (j.contains("lexicon_categories")) {
            if (!lexicon) throw DataError("feature space needs a lexicon but none was supplied");
            if (j["lexicon_categories"].get<std::vector<std::string>>() != lexicon->categories)
                throw DataError("supplied lexicon categories differ from the fitted feature space");
            s.lexicon = std::move(lexicon);
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed feature space: ") + e.what());
    }
    if (s.spec.remove_proper_nouns) {
        if (!tagger) throw DataError("feature space removes proper nouns but no tagger was supplied");
        s.tagger = std::move(tagger);
    }
    return s;
}

std::vector<Token> feature_tokens(const Document& doc, const FeatureSpace& space) {
    if (space.spec.remove_proper_nouns && !space.tagger)
        throw ConfigError("proper-noun removal requested without a tagger");
    return prepare_tokens(doc, space.spec.remove_proper_nouns ? space.tagger.get() : nullptr);
}

FeatureSpace fit_feature_space(const Dataset& train, const FeatureSpec& spec,
                               std::shared_ptr<const Lexicon> lexicon,
                               std::shared_ptr<const ProperNounTagger> tagger) {
    if (spec.groups.empty()) throw ConfigError("feature spec needs at least one group");
    if (train.documents.empty()) throw DataError("cannot fit features on empty dataset '" + train.name + "'");
    if (spec.groups.count(FeatureGroup::LIWC) && !lexicon)
        throw ConfigError("LIWC features requested but no lexicon loaded");
    if (spec.remove_proper_nouns && !tagger) throw ConfigError("proper-noun removal requested without a tagger");

    FeatureSpace space;
    space.spec = spec;
    space.tagger = std::move(tagger);
    if (spec.groups.count(FeatureGroup::LIWC)) space.lexicon = std::move(lexicon);

    std::vector<std::vector<Token>> streams;
    streams.reserve(train.documents.size());
    for (const auto& d : train.documents) streams.push_back(feature_tokens(d, space));

    if (spec.groups.count(FeatureGroup::WC) || spec.groups.count(FeatureGroup::TIW))
        space.word_vocab = fit_vocabulary(streams, {1}, spec.cap_per_group);
    if (spec.groups.count(FeatureGroup::TIG))
        space.gram_vocab = fit_vocabulary(streams, {2, 3}, spec.cap_per_group);
    return space;
}

SparseVector featurize(const std::vector<Token>& tokens, const FeatureSpec& spec, const FeatureSpace& space) {
    SparseVector out;
    for (auto g : spec.groups) {
        if (!space.has_group(g)) throw ConfigError("feature group " + to_string(g) + " has not been fitted");
        SparseVector part;
        switch (g) {
            case FeatureGroup::WC: part = wc_vector(tokens, *space.word_vocab); break;
            case FeatureGroup::TIW: part = tfidf_vector(tokens, *space.word_vocab); break;
            case FeatureGroup::TIG: part = tfidf_vector(tokens, *space.gram_vocab); break;
            case FeatureGroup::LIWC: part = liwc_vector(tokens, *space.lexicon); break;
        }
        const auto offset = static_cast<std::uint32_t>(out.dim);
        for (const auto& [i, v] : part.entries) out.entries.emplace_back(offset + i, v);
        out.dim += part.dim;
    }
    return out;
}

SparseVector featurize(const Document& doc, const FeatureSpace& space) {
    return featurize(feature_tokens(doc, space), space.spec, space);
}

std::vector<SparseVector> featurize_all_serial(std::span<const Document> docs, const FeatureSpace& space) {
    std::vector<SparseVector> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back(featurize(d, space));
    return out;
}

std::vector<SparseVector> featurize_all(std::span<const Document> docs, const FeatureSpace& space) {
    std::vector<SparseVector> out(docs.size());
    const auto n = static_cast<std::ptrdiff_t>(docs.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            out[i] = featurize(docs[i], space);
        } catch (...) {
#pragma omp critical(propdet_featurize_error)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

}  // namespace propdet
