#include "kgforage/graph_store.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kgforage/errors.hpp"

namespace kgforage {

using json = nlohmann::json;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

const std::vector<std::size_t> kNoStatements;

Value value_from_json(const json& j, std::size_t line) {
    if (!j.is_object() || j.size() != 1) {
        throw FixtureParseError(line, "value must be an object with exactly one key");
    }
    const auto& [key, v] = *j.items().begin();
    if (key == "number") {
        if (!v.is_number()) {
            throw FixtureParseError(line, "number value is not numeric");
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            throw FixtureParseError(line, "number value is not finite");
        }
        return Value::number(d);
    }
    if (key == "string") {
        if (!v.is_string()) {
            throw FixtureParseError(line, "string value is not a string");
        }
        return Value::text(v.get<std::string>());
    }
    if (key == "datetime") {
        if (!v.is_string()) {
            throw FixtureParseError(line, "datetime value is not a string");
        }
        auto dt = DateTime::parse(v.get<std::string>());
        if (!dt) {
            throw FixtureParseError(line, "datetime is not ISO-8601: " + v.get<std::string>());
        }
        return Value(*dt);
    }
    if (key == "entity") {
        if (!v.is_string() || v.get<std::string>().empty()) {
            throw FixtureParseError(line, "entity value must be a non-empty string");
        }
        return Value::entity(v.get<std::string>());
    }
    throw FixtureParseError(line, "unknown value kind: " + key);
}

json value_to_json(const Value& v) {
    switch (v.kind()) {
        case Datatype::number: {
            const double d = v.as_number();
            if (std::trunc(d) == d && std::fabs(d) < 9007199254740992.0) {
                return json{{"number", static_cast<std::int64_t>(d)}};
            }
            return json{{"number", d}};
        }
        case Datatype::string:
            return json{{"string", v.as_text().text}};
        case Datatype::datetime:
            return json{{"datetime", v.as_datetime().iso}};
        case Datatype::entity:
            return json{{"entity", v.as_entity().id}};
    }
    return {};
}

std::string required_string(const json& rec, const char* key, std::size_t line) {
    auto it = rec.find(key);
    if (it == rec.end() || !it->is_string() || it->get<std::string>().empty()) {
        throw FixtureParseError(line, std::string("missing or empty \"") + key + "\"");
    }
    return it->get<std::string>();
}

std::string optional_string(const json& rec, const char* key, std::size_t line) {
    auto it = rec.find(key);
    if (it == rec.end() || it->is_null()) {
        return {};
    }
    if (!it->is_string()) {
        throw FixtureParseError(line, std::string("\"") + key + "\" must be a string");
    }
    return it->get<std::string>();
}

}  // namespace

const EntityInfo* KnowledgeGraph::find_entity(std::string_view id) const {
    auto it = entity_index_.find(std::string(id));
    return it == entity_index_.end() ? nullptr : &entities_[it->second];
}

const PropertyInfo* KnowledgeGraph::find_property(std::string_view id) const {
    auto it = property_index_.find(std::string(id));
    return it == property_index_.end() ? nullptr : &properties_[it->second];
}

const std::vector<std::size_t>& KnowledgeGraph::statement_indices(std::string_view e) const {
    auto it = by_subject_.find(std::string(e));
    return it == by_subject_.end() ? kNoStatements : it->second;
}

std::vector<Statement> KnowledgeGraph::statements_of(const EntityId& e,
                                                     const std::optional<PropertyId>& p) const {
    if (find_entity(e.id) == nullptr) {
        throw UnknownEntity(e.id);
    }
    std::vector<Statement> out;
    for (std::size_t idx : statement_indices(e.id)) {
        const auto& s = statements_[idx];
        if (!p || s.property == *p) {
            out.push_back(s);
        }
    }
    return out;
}

std::vector<SearchHit> KnowledgeGraph::search_entities(std::string_view query) const {
    if (query.empty()) {
        return {};
    }
    const std::string q_lower = lower(query);
    std::vector<std::pair<int, const EntityInfo*>> ranked;
    for (const auto& e : entities_) {
        int tier = -1;
        if (e.label == query) {
            tier = 0;
        } else if (std::find(e.aliases.begin(), e.aliases.end(), query) != e.aliases.end()) {
            tier = 1;
        } else if (lower(e.label) == q_lower ||
                   std::any_of(e.aliases.begin(), e.aliases.end(),
                               [&](const std::string& a) { return lower(a) == q_lower; })) {
            tier = 2;
        }
        if (tier >= 0) {
            ranked.emplace_back(tier, &e);
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) {
            return a.first < b.first;
        }
        return a.second->id.id < b.second->id.id;
    });
    std::vector<SearchHit> out;
    out.reserve(ranked.size());
    for (const auto& [tier, e] : ranked) {
        out.push_back({e->id, e->label, e->description});
    }
    return out;
}

// ---- Builder ----------------------------------------------------------------

KnowledgeGraph::Builder& KnowledgeGraph::Builder::add_entity(EntityInfo e) {
    if (e.id.id.empty()) {
        throw Error("entity id must be non-empty");
    }
    if (g_.entity_index_.count(e.id.id) != 0) {
        throw Error("duplicate entity id: " + e.id.id);
    }
    g_.entity_index_.emplace(e.id.id, g_.entities_.size());
    g_.entities_.push_back(std::move(e));
    return *this;
}

KnowledgeGraph::Builder& KnowledgeGraph::Builder::add_property(PropertyInfo p) {
    if (p.id.id.empty()) {
        throw Error("property id must be non-empty");
    }
    if (g_.property_index_.count(p.id.id) != 0) {
        throw Error("duplicate property id: " + p.id.id);
    }
    g_.property_index_.emplace(p.id.id, g_.properties_.size());
    g_.properties_.push_back(std::move(p));
    return *this;
}

KnowledgeGraph::Builder& KnowledgeGraph::Builder::add_statement(Statement s) {
    return add_statement_at(std::move(s), 0);
}

KnowledgeGraph::Builder& KnowledgeGraph::Builder::add_statement_at(Statement s, std::size_t line) {
    const auto idx = g_.statements_.size();
    g_.by_subject_[s.subject.id].push_back(idx);
    g_.statements_.push_back(std::move(s));
    pending_refs_.emplace_back(idx, line);
    return *this;
}

KnowledgeGraph KnowledgeGraph::Builder::build() && {
    for (const auto& [idx, line] : pending_refs_) {
        const auto& s = g_.statements_[idx];
        if (g_.find_entity(s.subject.id) == nullptr) {
            throw ReferenceError(line, "statement subject is not a declared entity: " + s.subject.id);
        }
        const auto* prop = g_.find_property(s.property.id);
        if (prop == nullptr) {
            throw ReferenceError(line, "statement property is not declared: " + s.property.id);
        }
        if (s.value.kind() != prop->datatype) {
            throw ReferenceError(line, "value kind " + std::string(to_string(s.value.kind())) +
                                           " does not match datatype of " + prop->id.id);
        }
        if (s.value.is_entity() && g_.find_entity(s.value.as_entity().id) == nullptr) {
            throw ReferenceError(line, "statement value is not a declared entity: " +
                                           s.value.as_entity().id);
        }
    }
    pending_refs_.clear();
    return std::move(g_);
}

// ---- fixture I/O ------------------------------------------------------------

KnowledgeGraph load_fixture(std::istream& in) {
    KnowledgeGraph::Builder b;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') {
            text.pop_back();
        }
        if (text.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        json rec;
        try {
            rec = json::parse(text);
        } catch (const json::parse_error& e) {
            throw FixtureParseError(line, e.what());
        }
        if (!rec.is_object()) {
            throw FixtureParseError(line, "record is not a JSON object");
        }
        const std::string kind = required_string(rec, "kind", line);
        try {
            if (kind == "entity") {
                EntityInfo e;
                e.id = EntityId{required_string(rec, "id", line)};
                e.label = optional_string(rec, "label", line);
                e.description = optional_string(rec, "description", line);
                if (auto it = rec.find("aliases"); it != rec.end() && !it->is_null()) {
                    if (!it->is_array()) {
                        throw FixtureParseError(line, "\"aliases\" must be an array");
                    }
                    for (const auto& a : *it) {
                        if (!a.is_string()) {
                            throw FixtureParseError(line, "alias must be a string");
                        }
                        e.aliases.push_back(a.get<std::string>());
                    }
                }
                b.add_entity(std::move(e));
            } else if (kind == "property") {
                PropertyInfo p;
                p.id = PropertyId{required_string(rec, "id", line)};
                p.label = optional_string(rec, "label", line);
                p.description = optional_string(rec, "description", line);
                auto dt = parse_datatype(required_string(rec, "datatype", line));
                if (!dt) {
                    throw FixtureParseError(line, "unknown datatype");
                }
                p.datatype = *dt;
                if (auto u = optional_string(rec, "unit", line); !u.empty()) {
                    p.unit = u;
                }
                b.add_property(std::move(p));
            } else if (kind == "statement") {
                Statement s;
                s.subject = EntityId{required_string(rec, "subject", line)};
                s.property = PropertyId{required_string(rec, "property", line)};
                auto it = rec.find("value");
                if (it == rec.end()) {
                    throw FixtureParseError(line, "missing \"value\"");
                }
                s.value = value_from_json(*it, line);
                b.add_statement_at(std::move(s), line);
            } else {
                throw FixtureParseError(line, "unknown record kind: " + kind);
            }
        } catch (const FixtureParseError&) {
            throw;
        } catch (const Error& e) {
            throw FixtureParseError(line, e.what());
        }
    }
    return std::move(b).build();
}

KnowledgeGraph load_fixture_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open fixture: " + path);
    }
    return load_fixture(in);
}

KnowledgeGraph load_fixture_string(std::string_view text) {
    std::istringstream in{std::string(text)};
    return load_fixture(in);
}

void serialize_fixture(const KnowledgeGraph& g, std::ostream& out) {
    for (const auto& e : g.entities()) {
        json rec = {{"kind", "entity"},
                    {"id", e.id.id},
                    {"label", e.label},
                    {"aliases", e.aliases},
                    {"description", e.description}};
        out << rec.dump() << '\n';
    }
    for (const auto& p : g.properties()) {
        json rec = {{"kind", "property"},
                    {"id", p.id.id},
                    {"label", p.label},
                    {"datatype", std::string(to_string(p.datatype))},
                    {"unit", p.unit ? json(*p.unit) : json(nullptr)},
                    {"description", p.description}};
        out << rec.dump() << '\n';
    }
    for (const auto& s : g.statements()) {
        json rec = {{"kind", "statement"},
                    {"subject", s.subject.id},
                    {"property", s.property.id},
                    {"value", value_to_json(s.value)}};
        out << rec.dump() << '\n';
    }
}

std::string serialize_fixture(const KnowledgeGraph& g) {
    std::ostringstream out;
    serialize_fixture(g, out);
    return out.str();
}

}  // namespace kgforage
