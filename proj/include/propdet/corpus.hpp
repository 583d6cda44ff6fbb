#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace propdet {

enum class Granularity { article, sentence };

std::string to_string(Granularity g);
Granularity parse_granularity(const std::string& s);

struct Document {
    std::string id;
    std::string text;
    std::optional<int> label;  // 1 = propagandistic, 0 = normal
    std::string group;         // speaker or source, used for ordered pairing
    Granularity granularity = Granularity::sentence;
};

struct Dataset {
    std::string name;
    Granularity granularity = Granularity::sentence;
    std::vector<Document> documents;

    std::size_t size() const { return documents.size(); }
    std::size_t count_label(int label) const;
    bool has_labels() const;
};

// Ordered (more-propagandistic, less-propagandistic) training unit.
struct RankedPair {
    std::string more_id;
    std::string less_id;

    auto operator<=>(const RankedPair&) const = default;
};

// more_groups are assumed more propagandistic than less_groups.
struct OrderingSpec {
    std::set<std::string> more_groups;
    std::set<std::string> less_groups;
};

enum class SamplingKind { complete, under, over };

std::string to_string(SamplingKind k);
SamplingKind parse_sampling_kind(const std::string& s);

struct SamplingStrategy {
    SamplingKind kind = SamplingKind::complete;
    double under_fraction = 1.0;  // (0, 1], kind == under
    double over_rate = 1.0;       // >= 1, kind == over
    std::uint64_t seed = 0;
};

struct Fold {
    Dataset train;
    Dataset test;
};

// JSONL ingestion. `name` defaults to the file stem; `default_granularity`
// applies to lines without a granularity field.
Dataset load_jsonl(const std::filesystem::path& path,
                   std::optional<std::string> name = std::nullopt,
                   Granularity default_granularity = Granularity::sentence);
Dataset parse_jsonl(std::string_view content, std::string name,
                    Granularity default_granularity = Granularity::sentence);
void write_jsonl(const Dataset& ds, const std::filesystem::path& path);
std::string to_jsonl(const Dataset& ds);

// Majority class randomly down-sampled to the minority size; order preserved.
// Unlabeled documents pass through untouched.
Dataset balance_undersample(const Dataset& ds, std::uint64_t seed);

std::vector<RankedPair> make_pairs_labeled(const Dataset& ds, const SamplingStrategy& strategy);
std::vector<RankedPair> make_pairs_ordered(const Dataset& ds, const OrderingSpec& spec,
                                           std::uint64_t seed);
// Pairs from several matched group pairings; never crosses specs.
std::vector<RankedPair> make_pairs_ordered(const Dataset& ds, std::span<const OrderingSpec> specs,
                                           std::uint64_t seed);

std::vector<Fold> split_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed);

std::string pairs_to_jsonl(std::span<const RankedPair> pairs);
std::vector<RankedPair> pairs_from_jsonl(std::string_view content);
std::uint64_t pair_set_hash(std::span<const RankedPair> pairs);

std::unordered_map<std::string, std::size_t> index_by_id(const Dataset& ds);

}  // namespace propdet
