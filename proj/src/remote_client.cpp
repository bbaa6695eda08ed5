#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <nlohmann/json.hpp>

#include "kgforage/errors.hpp"
#include "kgforage/kg_client.hpp"

namespace kgforage {

using json = nlohmann::json;

namespace {

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Url split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error("URL needs a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string local_name(const std::string& iri) {
    const auto cut = iri.find_last_of("/#");
    return cut == std::string::npos ? iri : iri.substr(cut + 1);
}

Term term_from_binding(const json& b) {
    const auto type = b.value("type", "");
    const auto value = b.value("value", "");
    if (type == "uri") {
        if (value.find("/prop/direct/") != std::string::npos) {
            return PropertyId{local_name(value)};
        }
        if (value.find("/entity/") != std::string::npos) {
            return EntityId{local_name(value)};
        }
        return EntityId{value};
    }
    if (type == "bnode") {
        return EntityId{"_:" + value};
    }
    const auto datatype = local_name(b.value("datatype", ""));
    if (datatype == "integer" || datatype == "decimal" || datatype == "double" ||
        datatype == "float" || datatype == "int" || datatype == "long") {
        if (auto d = parse_number(value)) {
            return *d;
        }
    } else if (datatype == "dateTime" || datatype == "date") {
        if (auto d = DateTime::parse(value)) {
            return *d;
        }
    }
    return Text{value};
}

std::optional<Datatype> datatype_from_wikibase(const std::string& t) {
    if (t == "wikibase-item") return Datatype::entity;
    if (t == "quantity") return Datatype::number;
    if (t == "time") return Datatype::datetime;
    if (t.empty()) return std::nullopt;
    return Datatype::string;
}

std::string join_ids(std::span<const std::string> ids) {
    std::string out;
    for (const auto& id : ids) {
        if (!out.empty()) {
            out += '|';
        }
        out += id;
    }
    return out;
}

}  // namespace

BindingTable parse_sparql_json(std::string_view body) {
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::parse_error& e) {
        throw BackendUnavailable(std::string("malformed SPARQL JSON: ") + e.what());
    }
    BindingTable out;
    if (!doc.contains("head") || !doc["head"].contains("vars") || !doc.contains("results")) {
        throw BackendUnavailable("SPARQL JSON lacks head.vars or results");
    }
    for (const auto& v : doc["head"]["vars"]) {
        out.variables.push_back(v.get<std::string>());
    }
    for (const auto& row : doc["results"].value("bindings", json::array())) {
        std::vector<std::optional<Term>> cells(out.variables.size());
        for (std::size_t i = 0; i < out.variables.size(); ++i) {
            if (auto it = row.find(out.variables[i]); it != row.end()) {
                cells[i] = term_from_binding(*it);
            }
        }
        out.rows.push_back(std::move(cells));
    }
    return out;
}

struct RemoteClient::Impl {
    Url sparql;
    Url api;
    BackendConfig cfg;

    std::unique_ptr<httplib::Client> client_for(const Url& url) const {
        auto c = std::make_unique<httplib::Client>(url.origin);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.request_timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.request_timeout - secs);
        c->set_connection_timeout(secs.count(), usecs.count());
        c->set_read_timeout(secs.count(), usecs.count());
        c->set_write_timeout(secs.count(), usecs.count());
        c->set_follow_location(true);
        c->set_default_headers({{"User-Agent", cfg.user_agent}});
        return c;
    }

    json api_get(const httplib::Params& params) const {
        auto c = client_for(api);
        auto res = c->Get(api.path, params, httplib::Headers{});
        if (!res) {
            throw BackendUnavailable("entity service: " + httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            throw BackendUnavailable("entity service returned HTTP " + std::to_string(res->status));
        }
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw BackendUnavailable(std::string("entity service sent malformed JSON: ") + e.what());
        }
    }

    // wbgetentities accepts at most 50 ids per call.
    std::vector<json> get_entities(std::span<const std::string> ids, const std::string& props) const {
        std::vector<json> out;
        for (std::size_t i = 0; i < ids.size(); i += 50) {
            const auto n = std::min<std::size_t>(50, ids.size() - i);
            auto doc = api_get({{"action", "wbgetentities"},
                                {"ids", join_ids(ids.subspan(i, n))},
                                {"props", props},
                                {"languages", "en"},
                                {"format", "json"}});
            if (doc.contains("entities")) {
                for (const auto& [id, e] : doc["entities"].items()) {
                    if (!e.contains("missing")) {
                        out.push_back(e);
                    }
                }
            }
        }
        return out;
    }
};

RemoteClient::RemoteClient(BackendConfig config)
    : KgClient(std::move(config)), impl_(std::make_unique<Impl>()) {
    impl_->cfg = this->config();
    impl_->sparql = split_url(impl_->cfg.sparql_url);
    impl_->api = split_url(impl_->cfg.entity_search_url);
}

RemoteClient::~RemoteClient() = default;

std::vector<Candidate> RemoteClient::search(const std::string& normalized_text) {
    auto doc = impl_->api_get({{"action", "wbsearchentities"},
                               {"search", normalized_text},
                               {"language", "en"},
                               {"type", "item"},
                               {"limit", "10"},
                               {"format", "json"}});
    std::vector<Candidate> out;
    if (!doc.contains("search")) {
        return out;
    }
    std::size_t rank = 0;
    for (const auto& hit : doc["search"]) {
        Candidate c;
        c.id = EntityId{hit.value("id", "")};
        if (c.id.id.empty()) {
            continue;
        }
        c.label = hit.value("label", c.id.id);
        c.description = hit.value("description", "");
        c.score = 1.0 / (1.0 + static_cast<double>(rank++));
        out.push_back(std::move(c));
    }
    return out;
}

BindingTable RemoteClient::do_run_select(const SparqlText& query) {
    auto c = impl_->client_for(impl_->sparql);
    httplib::Headers headers{{"Accept", "application/sparql-results+json"}};
    httplib::Params form{{"query", query.text}};
    auto res = c->Post(impl_->sparql.path, headers, form);
    if (!res) {
        throw BackendUnavailable("SPARQL endpoint: " + httplib::to_string(res.error()));
    }
    if (res->status == 400) {
        auto msg = res->body.substr(0, 2000);
        throw QueryRejected(msg.empty() ? "HTTP 400" : msg);
    }
    if (res->status != 200) {
        throw BackendUnavailable("SPARQL endpoint returned HTTP " + std::to_string(res->status));
    }
    return parse_sparql_json(res->body);
}

std::vector<PropertyInfo> RemoteClient::fetch_property_info(std::span<const PropertyId> ids) {
    std::vector<std::string> wanted;
    for (const auto& id : ids) {
        // Only Wikibase property ids have metadata; other predicates are skipped.
        if (id.id.size() > 1 && id.id[0] == 'P' &&
            id.id.find_first_not_of("0123456789", 1) == std::string::npos) {
            wanted.push_back(id.id);
        }
    }
    std::vector<PropertyInfo> out;
    for (const auto& e : impl_->get_entities(wanted, "labels|descriptions|datatype")) {
        auto dt = datatype_from_wikibase(e.value("datatype", ""));
        if (!dt) {
            continue;
        }
        PropertyInfo p;
        p.id = PropertyId{e.value("id", "")};
        p.datatype = *dt;
        if (e.contains("labels") && e["labels"].contains("en")) {
            p.label = e["labels"]["en"].value("value", p.id.id);
        } else {
            p.label = p.id.id;
        }
        if (e.contains("descriptions") && e["descriptions"].contains("en")) {
            p.description = e["descriptions"]["en"].value("value", "");
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<std::pair<EntityId, std::string>> RemoteClient::fetch_entity_labels(
    std::span<const EntityId> ids) {
    std::vector<std::string> wanted;
    for (const auto& id : ids) {
        if (id.id.size() > 1 && id.id[0] == 'Q' &&
            id.id.find_first_not_of("0123456789", 1) == std::string::npos) {
            wanted.push_back(id.id);
        }
    }
    std::vector<std::pair<EntityId, std::string>> out;
    for (const auto& e : impl_->get_entities(wanted, "labels")) {
        const auto id = e.value("id", "");
        if (e.contains("labels") && e["labels"].contains("en")) {
            out.emplace_back(EntityId{id}, e["labels"]["en"].value("value", id));
        }
    }
    return out;
}

}  // namespace kgforage
