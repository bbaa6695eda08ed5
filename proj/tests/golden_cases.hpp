#pragma once

// Query texts pinned by the files under tests/golden/.

#include <string>
#include <utility>
#include <vector>

#include "kgforage/query_gen.hpp"
#include "oracle.hpp"
#include "test_support.hpp"

namespace kgforage::testing {

inline JoinPlan count_chain(const std::vector<std::string>& props) {
    JoinPlan p{"Country", {}, "out", std::nullopt};
    for (std::size_t i = 0; i < props.size(); ++i) {
        const bool last = i + 1 == props.size();
        p.hops.push_back({PropertyId{props[i]}, last ? AggOp::count : AggOp::through,
                          last ? std::nullopt : std::optional<AggOp>(AggOp::sum)});
    }
    return p;
}

inline std::vector<std::pair<std::string, std::string>> golden_cases() {
    const auto lookup = graph_lookup(mini_countries());
    const std::vector<EntityId> three{EntityId{"Q1"}, EntityId{"Q2"}, EntityId{"Q3"}};
    const std::vector<EntityId> two{EntityId{"Q1"}, EntityId{"Q2"}};
    const std::vector<PropertyId> props{PropertyId{"P1"}, PropertyId{"P3"}};
    const std::vector<EntityId> detail{EntityId{"Q1"}, EntityId{"Q3"}};
    return {
        {"discovery_local.rq", compile_discovery(three).text},
        {"discovery_wikidata.rq", compile_discovery(three, Dialect::wikidata).text},
        {"values_depth1_local.rq", compile_values_fetch(count_chain({"P1"}), lookup, two).text},
        {"values_depth2_local.rq", compile_values_fetch(count_chain({"P2", "P3"}), lookup, two).text},
        {"values_depth2_wikidata.rq",
         compile_values_fetch(count_chain({"P2", "P3"}), lookup, two, Dialect::wikidata).text},
        {"values_depth3_local.rq", compile_values_fetch(count_chain({"P2", "P2", "P1"}), lookup, two).text},
        {"detail_local.rq", compile_detail_fetch(props, detail).text},
        {"subgraph_wikidata.rq",
         compile_subgraph(count_chain({"P2", "P3"}), lookup, EntityId{"Q1"}, 3, Dialect::wikidata).text},
    };
}

inline std::string golden_path(const std::string& name) {
    return std::string(KGFORAGE_GOLDEN_DIR) + "/" + name;
}

}  // namespace kgforage::testing
