#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgforage/value.hpp"

namespace kgforage {

struct EntityInfo {
    EntityId id;
    std::string label;
    std::vector<std::string> aliases;
    std::string description;
};

struct PropertyInfo {
    PropertyId id;
    std::string label;
    std::string description;
    Datatype datatype = Datatype::string;
    std::optional<std::string> unit;
};

struct Statement {
    EntityId subject;
    PropertyId property;
    Value value;
};

struct SearchHit {
    EntityId id;
    std::string label;
    std::string description;

    friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

// In-memory entity/statement store. Immutable once built; every iteration
// order is insertion order.
class KnowledgeGraph {
public:
    std::size_t entity_count() const { return entities_.size(); }
    std::size_t property_count() const { return properties_.size(); }
    std::size_t statement_count() const { return statements_.size(); }

    const std::vector<EntityInfo>& entities() const { return entities_; }
    const std::vector<PropertyInfo>& properties() const { return properties_; }
    const std::vector<Statement>& statements() const { return statements_; }

    const EntityInfo* find_entity(std::string_view id) const;
    const PropertyInfo* find_property(std::string_view id) const;

    // Statements with the given subject, optionally restricted to one property.
    // Throws UnknownEntity.
    std::vector<Statement> statements_of(const EntityId& e,
                                         const std::optional<PropertyId>& p = {}) const;

    // Indices into statements() for subject `e`, in insertion order.
    const std::vector<std::size_t>& statement_indices(std::string_view e) const;

    // Ranked lookup: exact label, then exact alias, then case-insensitive
    // label/alias match; ties by id.
    std::vector<SearchHit> search_entities(std::string_view query) const;

    class Builder;

private:
    std::vector<EntityInfo> entities_;
    std::vector<PropertyInfo> properties_;
    std::vector<Statement> statements_;
    std::unordered_map<std::string, std::size_t> entity_index_;
    std::unordered_map<std::string, std::size_t> property_index_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_subject_;
};

// Incremental construction with validation. Statements may only reference
// entities/properties already added.
class KnowledgeGraph::Builder {
public:
    Builder& add_entity(EntityInfo e);
    Builder& add_property(PropertyInfo p);
    Builder& add_statement(Statement s);
    // Checks that every Entity value resolves; throws ReferenceError.
    KnowledgeGraph build() &&;

private:
    friend KnowledgeGraph load_fixture(std::istream& in);
    Builder& add_statement_at(Statement s, std::size_t line);

    KnowledgeGraph g_;
    std::vector<std::pair<std::size_t, std::size_t>> pending_refs_;  // (statement, line)
};

// Line-delimited JSON fixture: entity, property and statement records.
KnowledgeGraph load_fixture(std::istream& in);
KnowledgeGraph load_fixture_file(const std::string& path);
KnowledgeGraph load_fixture_string(std::string_view text);

// Writes entities, then properties, then statements, one JSON record per line.
void serialize_fixture(const KnowledgeGraph& g, std::ostream& out);
std::string serialize_fixture(const KnowledgeGraph& g);

}  // namespace kgforage
