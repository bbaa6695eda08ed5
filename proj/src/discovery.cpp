#include "kgforage/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "kgforage/errors.hpp"
#include "kgforage/query_gen.hpp"

namespace kgforage {

using json = nlohmann::json;

namespace {

// Unbiased draw in [0, bound) by rejection; the engine is fixed so seeds
// reproduce across standard libraries.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = 0;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

std::uint64_t fresh_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

}  // namespace

double estimate_coverage(long long hits, long long n) {
    if (n < 1 || hits < 0 || hits > n) {
        throw BadCounts(hits, n);
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

std::vector<std::size_t> sample_rows(std::size_t row_count, std::size_t k, std::uint64_t seed) {
    k = std::min(k, row_count);
    std::vector<std::size_t> idx(row_count);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + bounded(rng, row_count - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::optional<EntityId> resolve_cell(KgClient& client, const Column& column, std::size_t row) {
    if (column.provenance && row < column.provenance->entity_ids.size()) {
        return column.provenance->entity_ids[row];
    }
    const auto& cell = column.cells.at(row);
    if (!cell) {
        return std::nullopt;
    }
    try {
        return client.resolve(*cell).chosen;
    } catch (const EmptyCell&) {
        return std::nullopt;
    }
}

std::vector<AttributeDescriptor> discover_related(KgClient& client, const Dataset& dataset,
                                                  std::string_view column_name,
                                                  const DiscoveryConfig& config) {
    if (config.sample_size < 1 || config.top_k < 1) {
        throw Error("sample_size and top_k must be at least 1");
    }
    const Column& col = dataset.column(column_name);
    if (col.ctype != ColumnType::string) {
        throw NotAStringColumn(col.name);
    }
    if (dataset.row_count() == 0) {
        throw AllCellsUnresolved();
    }
    const auto rows =
        sample_rows(dataset.row_count(), config.sample_size, config.rng_seed.value_or(fresh_seed()));

    // Resolve sampled cells; blank or unmatched cells are misses.
    std::vector<std::optional<EntityId>> row_entity(rows.size());
    std::vector<EntityId> entities;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto chosen = resolve_cell(client, col, rows[i]);
        if (!chosen) {
            continue;
        }
        row_entity[i] = *chosen;
        if (seen.insert(chosen->id).second) {
            entities.push_back(*chosen);
        }
    }
    if (entities.empty()) {
        throw AllCellsUnresolved();
    }

    // (entity, property) -> statement count.
    const auto table =
        client.run_select_batched(compile_discovery(entities, client.dialect()), entities);
    const auto ce = table.column("e");
    const auto cp = table.column("p");
    const auto cn = table.column("n");
    if (!ce || !cp || !cn) {
        throw BackendUnavailable("discovery result lacks ?e ?p ?n columns");
    }
    std::unordered_map<std::string, std::vector<std::pair<std::string, double>>> props_of;
    std::vector<PropertyId> candidates;
    std::unordered_set<std::string> candidate_set;
    for (const auto& r : table.rows) {
        if (!r[*ce] || !r[*cp] || !r[*cn]) {
            continue;
        }
        const auto* e = std::get_if<EntityId>(&*r[*ce]);
        const auto* p = std::get_if<PropertyId>(&*r[*cp]);
        const auto* n = std::get_if<double>(&*r[*cn]);
        if (e == nullptr || p == nullptr || n == nullptr) {
            continue;
        }
        props_of[e->id].emplace_back(p->id, *n);
        if (candidate_set.insert(p->id).second) {
            candidates.push_back(*p);
        }
    }
    const auto info = client.property_info(candidates);

    struct Tally {
        std::size_t hits = 0;
        bool many = false;
    };
    std::unordered_map<std::string, Tally> tally;
    for (const auto& ent : row_entity) {
        if (!ent) {
            continue;
        }
        auto it = props_of.find(ent->id);
        if (it == props_of.end()) {
            continue;
        }
        for (const auto& [p, n] : it->second) {
            if (info.count(p) == 0) {
                continue;
            }
            auto& t = tally[p];
            ++t.hits;
            t.many = t.many || n >= 2;
        }
    }

    std::vector<std::pair<std::string, Tally>> ranked(tally.begin(), tally.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second.hits != b.second.hits) {
            return a.second.hits > b.second.hits;
        }
        return a.first < b.first;
    });
    if (ranked.size() > config.top_k) {
        ranked.resize(config.top_k);
    }

    std::vector<AttributeDescriptor> out;
    out.reserve(ranked.size());
    std::vector<PropertyId> chosen_props;
    for (const auto& [p, t] : ranked) {
        const auto& meta = info.at(p);
        AttributeDescriptor d;
        d.property = meta.id;
        d.label = meta.label;
        d.description = meta.description;
        d.datatype = meta.datatype;
        d.unit = meta.unit;
        d.hits = t.hits;
        d.sample_count = rows.size();
        d.coverage = estimate_coverage(static_cast<long long>(t.hits),
                                       static_cast<long long>(rows.size()));
        d.cardinality = t.many ? Cardinality::many : Cardinality::one;
        out.push_back(std::move(d));
        chosen_props.push_back(meta.id);
    }
    if (out.empty() || config.detail_sample == 0) {
        return out;
    }

    // Details: values per (entity, property) in statement order.
    const auto detail = client.run_select_batched(
        compile_detail_fetch(chosen_props, entities, client.dialect()), entities);
    const auto de = detail.column("e");
    const auto dp = detail.column("p");
    const auto dv = detail.column("v");
    std::unordered_map<std::string, std::vector<Value>> values;  // "entity\x1fproperty"
    if (de && dp && dv) {
        for (const auto& r : detail.rows) {
            if (!r[*de] || !r[*dp] || !r[*dv] || std::holds_alternative<PropertyId>(*r[*dv])) {
                continue;
            }
            values[render_term(*r[*de]) + '\x1f' + render_term(*r[*dp])].push_back(
                term_to_value(*r[*dv]));
        }
    }
    std::vector<EntityId> value_entities;
    for (auto& d : out) {
        for (const auto& ent : row_entity) {
            if (!ent || d.distribution_sample.size() >= config.detail_sample) {
                continue;
            }
            auto it = values.find(ent->id + '\x1f' + d.property.id);
            if (it == values.end()) {
                continue;
            }
            for (const auto& v : it->second) {
                if (d.distribution_sample.size() >= config.detail_sample) {
                    break;
                }
                d.distribution_sample.push_back(v);
            }
        }
        for (const auto& v : d.distribution_sample) {
            if (d.examples.size() >= kExampleCount) {
                break;
            }
            if (std::find(d.examples.begin(), d.examples.end(), v) == d.examples.end()) {
                d.examples.push_back(v);
            }
        }
        for (const auto& v : d.distribution_sample) {
            if (v.is_entity()) {
                value_entities.push_back(v.as_entity());
            }
        }
    }
    if (!value_entities.empty()) {
        const auto labels = client.entity_labels(value_entities);
        for (auto& d : out) {
            for (const auto& v : d.distribution_sample) {
                if (v.is_entity()) {
                    d.value_labels[v.as_entity().id] = labels.at(v.as_entity().id);
                }
            }
        }
    }
    return out;
}

Histogram value_histogram(Datatype datatype, std::span<const Value> values) {
    if (values.empty()) {
        throw EmptySample();
    }
    Histogram h;
    h.datatype = datatype;
    h.total = values.size();
    if (datatype == Datatype::number || datatype == Datatype::datetime) {
        std::vector<double> xs;
        for (const auto& v : values) {
            if (datatype == Datatype::number && v.is_number()) {
                xs.push_back(v.as_number());
            } else if (datatype == Datatype::datetime && v.is_datetime()) {
                xs.push_back(static_cast<double>(v.as_datetime().epoch_ms));
            } else {
                ++h.other;
            }
        }
        if (xs.empty()) {
            return h;
        }
        const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
        const double lo = *lo_it;
        const double hi = *hi_it;
        if (lo == hi) {
            h.edges = {lo, hi};
            h.counts = {xs.size()};
            return h;
        }
        const double width = (hi - lo) / static_cast<double>(kHistogramBins);
        h.edges.resize(kHistogramBins + 1);
        for (std::size_t i = 0; i <= kHistogramBins; ++i) {
            h.edges[i] = lo + width * static_cast<double>(i);
        }
        h.edges.back() = hi;
        h.counts.assign(kHistogramBins, 0);
        for (double x : xs) {
            auto bin = static_cast<std::size_t>(std::floor((x - lo) / width));
            h.counts[std::min(bin, kHistogramBins - 1)]++;
        }
        return h;
    }
    // Frequencies, most common first; ties keep first-seen order.
    std::vector<std::pair<Value, std::size_t>> freq;
    for (const auto& v : values) {
        auto it = std::find_if(freq.begin(), freq.end(), [&](const auto& f) { return f.first == v; });
        if (it == freq.end()) {
            freq.emplace_back(v, 1);
        } else {
            ++it->second;
        }
    }
    std::stable_sort(freq.begin(), freq.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (std::size_t i = 0; i < freq.size(); ++i) {
        if (i < kTopFrequencies) {
            h.frequencies.push_back(freq[i]);
        } else {
            h.other += freq[i].second;
        }
    }
    return h;
}

Histogram attribute_histogram(const AttributeDescriptor& descriptor) {
    return value_histogram(descriptor.datatype, descriptor.distribution_sample);
}

json value_to_json(const Value& v, const std::map<std::string, std::string>& labels) {
    switch (v.kind()) {
        case Datatype::number:
            return json{{"number", v.as_number()}};
        case Datatype::string:
            return json{{"string", v.as_text().text}};
        case Datatype::datetime:
            return json{{"datetime", v.as_datetime().iso}};
        case Datatype::entity: {
            json j = {{"entity", v.as_entity().id}};
            if (auto it = labels.find(v.as_entity().id); it != labels.end()) {
                j["label"] = it->second;
            }
            return j;
        }
    }
    return nullptr;
}

json histogram_to_json(const Histogram& h, const std::map<std::string, std::string>& labels) {
    json j = {{"datatype", std::string(to_string(h.datatype))}, {"total", h.total}, {"other", h.other}};
    if (h.datatype == Datatype::number || h.datatype == Datatype::datetime) {
        j["edges"] = h.edges;
        j["counts"] = h.counts;
        if (h.datatype == Datatype::datetime) {
            json iso = json::array();
            for (double e : h.edges) {
                // Edges are epoch milliseconds; render them back as timestamps.
                const auto secs = static_cast<std::int64_t>(std::floor(e / 1000.0));
                const auto days = std::chrono::sys_days{std::chrono::days{
                    (secs >= 0 ? secs : secs - 86399) / 86400}};
                const std::chrono::year_month_day ymd{days};
                const auto rem = secs - static_cast<std::int64_t>(days.time_since_epoch().count()) * 86400;
                char buf[32];
                std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ",
                              static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                              static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                              static_cast<int>((rem % 3600) / 60), static_cast<int>(rem % 60));
                iso.push_back(buf);
            }
            j["edges_iso"] = std::move(iso);
        }
    } else {
        json freq = json::array();
        for (const auto& [v, n] : h.frequencies) {
            freq.push_back({{"value", value_to_json(v, labels)}, {"count", n}});
        }
        j["frequencies"] = std::move(freq);
    }
    return j;
}

json descriptor_to_json(const AttributeDescriptor& d) {
    json examples = json::array();
    for (const auto& v : d.examples) {
        examples.push_back(value_to_json(v, d.value_labels));
    }
    json dist = json::array();
    for (const auto& v : d.distribution_sample) {
        dist.push_back(value_to_json(v, d.value_labels));
    }
    json j = {{"property", d.property.id},
              {"label", d.label},
              {"description", d.description},
              {"datatype", std::string(to_string(d.datatype))},
              {"unit", d.unit ? json(*d.unit) : json(nullptr)},
              {"coverage", d.coverage},
              {"hits", d.hits},
              {"sample_count", d.sample_count},
              {"cardinality", std::string(to_string(d.cardinality))},
              {"examples", std::move(examples)},
              {"distribution_sample", std::move(dist)}};
    if (!d.distribution_sample.empty()) {
        j["histogram"] = histogram_to_json(attribute_histogram(d), d.value_labels);
    } else {
        j["histogram"] = nullptr;
    }
    j["allowed_aggregations"] = json::array();
    for (auto op : allowed_aggregations(d.datatype, d.cardinality, HopPosition::final)) {
        j["allowed_aggregations"].push_back(std::string(to_string(op)));
    }
    if (d.datatype == Datatype::entity) {
        j["allowed_intermediate"] = json::array();
        for (auto op : allowed_aggregations(d.datatype, d.cardinality, HopPosition::intermediate)) {
            j["allowed_intermediate"].push_back(std::string(to_string(op)));
        }
    }
    return j;
}

}  // namespace kgforage
