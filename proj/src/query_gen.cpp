#include "kgforage/query_gen.hpp"

#include "kgforage/errors.hpp"

namespace kgforage {

namespace {

constexpr std::string_view kWikidataPrologue =
    "PREFIX wd: <http://www.wikidata.org/entity/>\n"
    "PREFIX wdt: <http://www.wikidata.org/prop/direct/>\n";

// Emits "  VALUES ?e { <list> }\n" and records the slot position.
void emit_entity_values(SparqlText& q, std::span<const EntityId> entities) {
    q.text += "  VALUES ?e { ";
    q.values_begin = q.text.size();
    for (std::size_t i = 0; i < entities.size(); ++i) {
        if (i > 0) {
            q.text += ' ';
        }
        q.text += render_entity(entities[i], q.dialect);
    }
    q.values_end = q.text.size();
    q.has_values_slot = true;
    q.text += " }\n";
}

void begin(SparqlText& q, Dialect dialect, SparqlKind kind) {
    q.dialect = dialect;
    q.kind = kind;
    if (dialect == Dialect::wikidata) {
        q.text += kWikidataPrologue;
    }
}

SparqlText chain_query(const JoinPlan& plan, std::span<const EntityId> entities, Dialect dialect,
                       SparqlKind kind) {
    SparqlText q;
    begin(q, dialect, kind);
    q.variables.push_back("e");
    for (std::size_t i = 1; i <= plan.hops.size(); ++i) {
        q.variables.push_back("x" + std::to_string(i));
    }
    q.text += "SELECT";
    for (const auto& v : q.variables) {
        q.text += " ?" + v;
    }
    q.text += " WHERE {\n";
    emit_entity_values(q, entities);
    std::string subject = "?e";
    for (std::size_t i = 0; i < plan.hops.size(); ++i) {
        const std::string object = "?x" + std::to_string(i + 1);
        q.text += "  " + subject + " " + render_property(plan.hops[i].property, dialect) + " " +
                  object + " .\n";
        subject = object;
    }
    q.text += "}\n";
    return q;
}

}  // namespace

SparqlText compile_discovery(std::span<const EntityId> entities, Dialect dialect) {
    if (entities.empty()) {
        throw EmptyEntitySet();
    }
    SparqlText q;
    begin(q, dialect, SparqlKind::discovery);
    q.variables = {"e", "p", "n"};
    q.text += "SELECT ?e ?p (COUNT(?v) AS ?n) WHERE {\n";
    emit_entity_values(q, entities);
    q.text += "  ?e ?p ?v .\n}\nGROUP BY ?e ?p\n";
    return q;
}

SparqlText compile_detail_fetch(std::span<const PropertyId> properties,
                                std::span<const EntityId> entities, Dialect dialect) {
    if (entities.empty()) {
        throw EmptyEntitySet();
    }
    SparqlText q;
    begin(q, dialect, SparqlKind::values_fetch);
    q.variables = {"e", "p", "v"};
    q.text += "SELECT ?e ?p ?v WHERE {\n";
    emit_entity_values(q, entities);
    q.text += "  VALUES ?p {";
    for (const auto& p : properties) {
        q.text += " " + render_property(p, dialect);
    }
    q.text += " }\n  ?e ?p ?v .\n}\n";
    return q;
}

SparqlText compile_values_fetch(const JoinPlan& plan, const PropertyLookup& lookup,
                                std::span<const EntityId> entities, Dialect dialect,
                                const PlanLimits& limits) {
    require_valid(plan, lookup, limits);
    if (entities.empty()) {
        throw EmptyEntitySet();
    }
    return chain_query(plan, entities, dialect, SparqlKind::values_fetch);
}

SparqlText compile_subgraph(const JoinPlan& plan, const PropertyLookup& lookup,
                            const EntityId& entity, std::size_t per_level_limit, Dialect dialect,
                            const PlanLimits& limits) {
    require_valid(plan, lookup, limits);
    if (plan.depth() < 2) {
        throw InvalidPlan({{-1, "an example subgraph needs a plan with at least two hops"}});
    }
    auto q = chain_query(plan, std::span<const EntityId>(&entity, 1), dialect, SparqlKind::subgraph);
    q.per_level_limit = per_level_limit;
    return q;
}

}  // namespace kgforage
