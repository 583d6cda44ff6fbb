#include "propdet/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "propdet/errors.hpp"
#include "propdet/rng.hpp"

namespace propdet {

using nlohmann::json;

std::string to_string(Granularity g) {
    return g == Granularity::article ? "article" : "sentence";
}

Granularity parse_granularity(const std::string& s) {
    if (s == "article") return Granularity::article;
    if (s == "sentence") return Granularity::sentence;
    throw DataError("unknown granularity '" + s + "' (expected article|sentence)");
}

std::string to_string(SamplingKind k) {
    switch (k) {
        case SamplingKind::complete: return "complete";
        case SamplingKind::under: return "under";
        case SamplingKind::over: return "over";
    }
    return "complete";
}

SamplingKind parse_sampling_kind(const std::string& s) {
    if (s == "complete") return SamplingKind::complete;
    if (s == "under") return SamplingKind::under;
    if (s == "over") return SamplingKind::over;
    throw ConfigError("unknown sampling kind '" + s + "' (expected complete|under|over)");
}

std::size_t Dataset::count_label(int label) const {
    return static_cast<std::size_t>(std::count_if(
        documents.begin(), documents.end(),
        [label](const Document& d) { return d.label && *d.label == label; }));
}

bool Dataset::has_labels() const {
    return std::any_of(documents.begin(), documents.end(),
                       [](const Document& d) { return d.label.has_value(); });
}

std::unordered_map<std::string, std::size_t> index_by_id(const Dataset& ds) {
    std::unordered_map<std::string, std::size_t> idx;
    idx.reserve(ds.documents.size());
    for (std::size_t i = 0; i < ds.documents.size(); ++i) idx.emplace(ds.documents[i].id, i);
    return idx;
}

// ---------------------------------------------------------------------------
// JSONL
// ---------------------------------------------------------------------------

Dataset parse_jsonl(std::string_view content, std::string name, Granularity default_granularity) {
    Dataset ds;
    ds.name = std::move(name);
    ds.granularity = default_granularity;

    std::unordered_set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool granularity_fixed = false;
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

        const std::string where = ds.name + ":" + std::to_string(line_no) + ": ";
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(where + "malformed JSON (" + e.what() + ")");
        }
        if (!obj.is_object()) throw DataError(where + "expected a JSON object");

        Document doc;
        if (!obj.contains("id")) throw DataError(where + "missing required field 'id'");
        if (!obj.contains("text")) throw DataError(where + "missing required field 'text'");
        try {
            doc.id = obj["id"].is_string() ? obj["id"].get<std::string>() : obj["id"].dump();
            doc.text = obj.at("text").get<std::string>();
            if (obj.contains("label") && !obj["label"].is_null()) {
                const int label = obj["label"].get<int>();
                if (label != 0 && label != 1) throw DataError(where + "label must be 0 or 1");
                doc.label = label;
            }
            if (obj.contains("group") && !obj["group"].is_null())
                doc.group = obj["group"].get<std::string>();
        } catch (const json::exception& e) {
            throw DataError(where + "field has wrong type (" + e.what() + ")");
        }
        if (!doc.label && doc.group.empty())
            throw DataError(where + "document '" + doc.id + "' has neither 'label' nor 'group'");

        doc.granularity = default_granularity;
        if (obj.contains("granularity")) doc.granularity = parse_granularity(obj["granularity"].get<std::string>());
        if (!granularity_fixed) {
            ds.granularity = doc.granularity;
            granularity_fixed = true;
        } else if (doc.granularity != ds.granularity) {
            throw DataError(where + "granularity '" + to_string(doc.granularity) +
                            "' differs from dataset granularity '" + to_string(ds.granularity) + "'");
        }

        if (!seen.insert(doc.id).second) throw DataError(where + "duplicate id '" + doc.id + "'");
        ds.documents.push_back(std::move(doc));
    }
    return ds;
}

Dataset load_jsonl(const std::filesystem::path& path, std::optional<std::string> name,
                   Granularity default_granularity) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_jsonl(buf.str(), name.value_or(path.stem().string()), default_granularity);
}

std::string to_jsonl(const Dataset& ds) {
    std::string out;
    for (const auto& d : ds.documents) {
        json obj = {{"id", d.id}, {"text", d.text}, {"granularity", to_string(d.granularity)}};
        if (d.label) obj["label"] = *d.label;
        if (!d.group.empty()) obj["group"] = d.group;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

void write_jsonl(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_jsonl(ds);
}

std::string pairs_to_jsonl(std::span<const RankedPair> pairs) {
    std::string out;
    for (const auto& p : pairs) {
        out += json{{"more", p.more_id}, {"less", p.less_id}}.dump();
        out += '\n';
    }
    return out;
}

std::vector<RankedPair> pairs_from_jsonl(std::string_view content) {
    std::vector<RankedPair> pairs;
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json obj = json::parse(line);
            pairs.push_back({obj.at("more").get<std::string>(), obj.at("less").get<std::string>()});
        } catch (const json::exception& e) {
            throw DataError("pairs:" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return pairs;
}

std::uint64_t pair_set_hash(std::span<const RankedPair> pairs) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : pairs) {
        h = fnv1a64(p.more_id, h);
        h = fnv1a64("\t", h);
        h = fnv1a64(p.less_id, h);
        h = fnv1a64("\n", h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Balancing and pairing
// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> indices_with_label(const Dataset& ds, int label) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.documents.size(); ++i)
        if (ds.documents[i].label && *ds.documents[i].label == label) out.push_back(i);
    return out;
}

// Seeded subset of `idx` of size `keep`, original order preserved.
std::vector<std::size_t> subsample(const std::vector<std::size_t>& idx, std::size_t keep, Rng& rng) {
    if (keep >= idx.size()) return idx;
    std::vector<std::size_t> out;
    out.reserve(keep);
    for (std::size_t j : rng.sample_sorted(idx.size(), keep)) out.push_back(idx[j]);
    return out;
}

std::vector<RankedPair> pair_complete(const Dataset& ds, const std::vector<std::size_t>& pos,
                                      const std::vector<std::size_t>& neg, Rng& rng) {
    std::vector<RankedPair> pairs;
    pairs.reserve(pos.size());
    std::vector<std::size_t> pool;
    std::size_t next = 0;
    for (std::size_t p : pos) {
        // Each positive gets a distinct negative until the negatives run out,
        // then the pool is reshuffled.
        if (next == pool.size()) {
            pool = neg;
            rng.shuffle(pool);
            next = 0;
        }
        pairs.push_back({ds.documents[p].id, ds.documents[pool[next++]].id});
    }
    return pairs;
}

}  // namespace

Dataset balance_undersample(const Dataset& ds, std::uint64_t seed) {
    const auto pos = indices_with_label(ds, 1);
    const auto neg = indices_with_label(ds, 0);
    if (pos.empty() || neg.empty())
        throw DataError("dataset '" + ds.name + "' cannot be balanced: only one class present");

    Rng rng(derive_seed(seed, "balance"));
    const bool pos_major = pos.size() > neg.size();
    const auto& major = pos_major ? pos : neg;
    const std::size_t keep = std::min(pos.size(), neg.size());
    const auto kept = subsample(major, keep, rng);
    std::vector<bool> drop(ds.documents.size(), false);
    for (std::size_t i : major) drop[i] = true;
    for (std::size_t i : kept) drop[i] = false;

    Dataset out;
    out.name = ds.name;
    out.granularity = ds.granularity;
    for (std::size_t i = 0; i < ds.documents.size(); ++i)
        if (!drop[i]) out.documents.push_back(ds.documents[i]);
    return out;
}

std::vector<RankedPair> make_pairs_labeled(const Dataset& ds, const SamplingStrategy& strategy) {
    auto pos = indices_with_label(ds, 1);
    auto neg = indices_with_label(ds, 0);
    if (pos.empty() || neg.empty())
        throw DataError("dataset '" + ds.name + "' needs both classes to form ranked pairs");

    Rng sub_rng(derive_seed(strategy.seed, "pairs/subsample"));
    Rng pair_rng(derive_seed(strategy.seed, "pairs/draw"));

    switch (strategy.kind) {
        case SamplingKind::complete:
            return pair_complete(ds, pos, neg, pair_rng);

        case SamplingKind::under: {
            const double f = strategy.under_fraction;
            if (!(f > 0.0 && f <= 1.0)) throw ConfigError("under_fraction must lie in (0, 1]");
            auto keep = [f](std::size_t n) {
                return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(f * n - 1e-9)));
            };
            pos = subsample(pos, keep(pos.size()), sub_rng);
            neg = subsample(neg, keep(neg.size()), sub_rng);
            return pair_complete(ds, pos, neg, pair_rng);
        }

        case SamplingKind::over: {
            const double r = strategy.over_rate;
            if (!(r >= 1.0)) throw ConfigError("over_rate must be >= 1");
            const auto wanted =
                static_cast<std::size_t>(std::ceil(r * static_cast<double>(pos.size()) - 1e-9));
            const std::size_t total = pos.size() * neg.size();
            if (wanted > total)
                throw DataError("over_rate " + std::to_string(r) + " needs " + std::to_string(wanted) +
                                " distinct pairs but only " + std::to_string(total) + " exist");

            std::vector<std::pair<std::size_t, std::size_t>> chosen;
            chosen.reserve(wanted);
            if (2 * wanted > total) {
                // Dense regime: rejection would stall near exhaustion.
                std::vector<std::pair<std::size_t, std::size_t>> all;
                all.reserve(total);
                for (std::size_t p : pos)
                    for (std::size_t n : neg) all.emplace_back(p, n);
                pair_rng.shuffle(all);
                all.resize(wanted);
                chosen = std::move(all);
            } else {
                std::set<std::pair<std::size_t, std::size_t>> seen;
                while (chosen.size() < wanted) {
                    std::pair<std::size_t, std::size_t> c{pos[pair_rng.index(pos.size())],
                                                          neg[pair_rng.index(neg.size())]};
                    if (seen.insert(c).second) chosen.push_back(c);
                }
            }
            std::vector<RankedPair> pairs;
            pairs.reserve(chosen.size());
            for (auto [p, n] : chosen) pairs.push_back({ds.documents[p].id, ds.documents[n].id});
            return pairs;
        }
    }
    return {};
}

std::vector<RankedPair> make_pairs_ordered(const Dataset& ds, const OrderingSpec& spec, std::uint64_t seed) {
    for (const auto& g : spec.more_groups)
        if (spec.less_groups.count(g))
            throw ConfigError("ordering spec lists group '" + g + "' on both sides");

    std::vector<std::size_t> more, less;
    for (std::size_t i = 0; i < ds.documents.size(); ++i) {
        const auto& g = ds.documents[i].group;
        if (spec.more_groups.count(g)) more.push_back(i);
        else if (spec.less_groups.count(g)) less.push_back(i);
    }
    if (more.empty() || less.empty())
        throw DataError("dataset '" + ds.name + "' has no documents on one side of the ordering spec");

    Rng rng(derive_seed(seed, "pairs/ordered"));
    rng.shuffle(more);
    rng.shuffle(less);
    const std::size_t n = std::min(more.size(), less.size());
    std::vector<RankedPair> pairs;
    pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        pairs.push_back({ds.documents[more[i]].id, ds.documents[less[i]].id});
    return pairs;
}

std::vector<RankedPair> make_pairs_ordered(const Dataset& ds, std::span<const OrderingSpec> specs,
                                           std::uint64_t seed) {
    std::vector<RankedPair> out;
    std::set<RankedPair> seen;
    for (std::size_t s = 0; s < specs.size(); ++s) {
        for (auto& p : make_pairs_ordered(ds, specs[s], derive_seed(seed, "spec/" + std::to_string(s))))
            if (seen.insert(p).second) out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

std::vector<Fold> split_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold needs k >= 2");
    if (k > ds.size())
        throw DataError("k = " + std::to_string(k) + " exceeds dataset size " + std::to_string(ds.size()));

    // Stratify by label (unlabeled documents form their own stratum); deal
    // shuffled members round-robin, continuing the fold cursor across strata.
    std::vector<std::vector<std::size_t>> strata(3);
    for (std::size_t i = 0; i < ds.documents.size(); ++i) {
        const auto& l = ds.documents[i].label;
        strata[l ? static_cast<std::size_t>(*l) : 2].push_back(i);
    }
    Rng rng(derive_seed(seed, "kfold"));
    std::vector<std::size_t> fold_of(ds.size());
    std::size_t cursor = 0;
    for (auto& s : strata) {
        rng.shuffle(s);
        for (std::size_t i : s) fold_of[i] = cursor++ % k;
    }

    std::vector<Fold> folds(k);
    for (std::size_t f = 0; f < k; ++f) {
        const std::string prefix = ds.name + "/fold" + std::to_string(f);
        folds[f].train.name = prefix + "/train";
        folds[f].test.name = prefix + "/test";
        folds[f].train.granularity = folds[f].test.granularity = ds.granularity;
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t f = 0; f < k; ++f) {
            auto& dst = (fold_of[i] == f) ? folds[f].test : folds[f].train;
            dst.documents.push_back(ds.documents[i]);
        }
    }
    return folds;
}

}  // namespace propdet
