#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kgforage/graph_store.hpp"
#include "kgforage/value.hpp"

namespace kgforage {

// A bound RDF term. Entity and property ids are both resources; two
// resources are the same term when their ids match.
using Term = std::variant<EntityId, PropertyId, double, Text, DateTime>;

bool same_term(const Term& a, const Term& b);
std::string render_term(const Term& t);
Term to_term(const Value& v);
// Throws Error for property terms, which have no Value counterpart.
Value term_to_value(const Term& t);

struct BindingTable {
    std::vector<std::string> variables;
    std::vector<std::vector<std::optional<Term>>> rows;

    std::optional<std::size_t> column(std::string_view var) const;
    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }
};

enum class SparqlKind { discovery, values_fetch, subgraph };

// `local` renders ids bare (Q1, P1); `wikidata` renders wd:Q1 / wdt:P1 with
// PREFIX declarations.
enum class Dialect { local, wikidata };

std::string render_entity(const EntityId& e, Dialect d);
std::string render_property(const PropertyId& p, Dialect d);

// Query text plus the metadata the client needs to batch it. The entity
// list of the `VALUES ?e { ... }` block occupies text[values_begin, values_end).
struct SparqlText {
    std::string text;
    std::vector<std::string> variables;
    SparqlKind kind = SparqlKind::values_fetch;
    Dialect dialect = Dialect::local;
    std::size_t values_begin = 0;
    std::size_t values_end = 0;
    bool has_values_slot = false;
    // For subgraph queries: how many distinct values per level the caller keeps.
    std::size_t per_level_limit = 0;

    // Copy with the VALUES slot rewritten to hold `entities`.
    SparqlText with_entities(std::span<const EntityId> entities) const;
};

// Supported subset: PREFIX, SELECT with variables and
// (COUNT|MIN|MAX|SUM|AVG)(?v) AS ?x projections, a WHERE group of triple
// patterns, single-variable VALUES and OPTIONAL, GROUP BY, LIMIT. Anything
// else raises UnsupportedSyntax; malformed input raises SparqlParseError.
BindingTable execute_select(const KnowledgeGraph& g, std::string_view query);

// Parse-only check, used by tests and the remote client for early rejection.
void check_select_syntax(std::string_view query);

}  // namespace kgforage
