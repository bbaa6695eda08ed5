#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kgforage/planner.hpp"
#include "kgforage/sparql.hpp"

namespace kgforage {

// Per-(entity, property) statement counts:
//   SELECT ?e ?p (COUNT(?v) AS ?n) WHERE { VALUES ?e { ... } ?e ?p ?v . } GROUP BY ?e ?p
// Throws EmptyEntitySet.
SparqlText compile_discovery(std::span<const EntityId> entities, Dialect dialect = Dialect::local);

// Raw values of a fixed property set, for descriptor detail:
//   SELECT ?e ?p ?v WHERE { VALUES ?e { ... } VALUES ?p { ... } ?e ?p ?v . }
SparqlText compile_detail_fetch(std::span<const PropertyId> properties,
                                std::span<const EntityId> entities, Dialect dialect = Dialect::local);

// Chain of raw bindings (?e ?x1 ... ?xk) along the plan's hops. Aggregation
// happens client-side. Throws InvalidPlan (including depth over the cap) and
// EmptyEntitySet.
SparqlText compile_values_fetch(const JoinPlan& plan, const PropertyLookup& lookup,
                                std::span<const EntityId> entities, Dialect dialect = Dialect::local,
                                const PlanLimits& limits = {});

// Same chain for a single entity; requires depth >= 2. The caller keeps the
// first `per_level_limit` distinct values per level.
SparqlText compile_subgraph(const JoinPlan& plan, const PropertyLookup& lookup,
                            const EntityId& entity, std::size_t per_level_limit = 3,
                            Dialect dialect = Dialect::local, const PlanLimits& limits = {});

}  // namespace kgforage
