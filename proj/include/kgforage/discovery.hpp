#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgforage/kg_client.hpp"
#include "kgforage/planner.hpp"
#include "kgforage/tabular.hpp"

namespace kgforage {

struct DiscoveryConfig {
    std::size_t sample_size = 25;
    std::size_t top_k = 50;
    std::size_t detail_sample = 25;
    std::optional<std::uint64_t> rng_seed;
};

struct AttributeDescriptor {
    PropertyId property;
    std::string label;
    std::string description;
    Datatype datatype = Datatype::string;
    std::optional<std::string> unit;
    double coverage = 0;
    std::size_t hits = 0;          // sampled rows whose entity holds the property
    std::size_t sample_count = 0;  // sampled rows, resolved or not
    Cardinality cardinality = Cardinality::one;
    std::vector<Value> examples;             // up to 3, drawn from distribution_sample
    std::vector<Value> distribution_sample;  // up to detail_sample
    std::map<std::string, std::string> value_labels;  // entity id -> label
};

struct Histogram {
    Datatype datatype = Datatype::number;
    // number/datetime: equal-width bins over the sample. `edges` has
    // counts.size() + 1 entries (epoch milliseconds for datetimes).
    std::vector<double> edges;
    std::vector<std::size_t> counts;
    // string/entity: the ten most frequent values.
    std::vector<std::pair<Value, std::size_t>> frequencies;
    // Values outside the top ten, or of an unexpected kind.
    std::size_t other = 0;
    std::size_t total = 0;
};

inline constexpr std::size_t kHistogramBins = 10;
inline constexpr std::size_t kTopFrequencies = 10;
inline constexpr std::size_t kExampleCount = 3;

// Entity behind one cell: the recorded id for entity-valued augmented
// columns, otherwise the top resolution candidate. Blank cells give nullopt.
std::optional<EntityId> resolve_cell(KgClient& client, const Column& column, std::size_t row);

// Hits over sampled rows. Throws BadCounts unless 0 <= hits <= n and n >= 1.
double estimate_coverage(long long hits, long long n);

// min(k, row_count) distinct row indices drawn uniformly without replacement,
// returned in ascending order. Deterministic for a given seed.
std::vector<std::size_t> sample_rows(std::size_t row_count, std::size_t k, std::uint64_t seed);

// Rank the properties held by the entities behind a string column. Throws
// UnknownColumn, NotAStringColumn, AllCellsUnresolved.
std::vector<AttributeDescriptor> discover_related(KgClient& client, const Dataset& dataset,
                                                  std::string_view column_name,
                                                  const DiscoveryConfig& config = {});

// Throws EmptySample.
Histogram attribute_histogram(const AttributeDescriptor& descriptor);
Histogram value_histogram(Datatype datatype, std::span<const Value> values);

nlohmann::json value_to_json(const Value& v, const std::map<std::string, std::string>& labels = {});
nlohmann::json descriptor_to_json(const AttributeDescriptor& d);
nlohmann::json histogram_to_json(const Histogram& h,
                                 const std::map<std::string, std::string>& labels = {});

}  // namespace kgforage
