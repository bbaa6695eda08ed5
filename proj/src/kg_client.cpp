#include "kgforage/kg_client.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <exception>
#include <future>

#include "kgforage/errors.hpp"

namespace kgforage {

namespace {

std::ptrdiff_t clamp_concurrency(std::size_t n) {
    return static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(n, 1, 1024));
}

}  // namespace

// ---- BackendConfig ----------------------------------------------------------

BackendConfig BackendConfig::from_selector(std::string_view selector) {
    BackendConfig cfg;
    const auto colon = selector.find(':');
    const auto scheme = selector.substr(0, colon);
    const auto rest = colon == std::string_view::npos ? std::string_view{} : selector.substr(colon + 1);
    if (scheme == "local") {
        if (rest.empty()) {
            throw Error("local backend needs a fixture path: local:<fixture.jsonl>");
        }
        cfg.kind = Kind::local;
        cfg.fixture_path = std::string(rest);
    } else if (scheme == "remote") {
        cfg.kind = Kind::remote;
        // URLs contain ':' themselves, so only a ',' separates the two endpoints.
        const auto comma = rest.find(',');
        cfg.sparql_url = std::string(rest.substr(0, comma));
        cfg.entity_search_url = comma == std::string_view::npos ? std::string(kDefaultEntitySearchUrl)
                                                                : std::string(rest.substr(comma + 1));
        if (cfg.sparql_url.empty()) {
            cfg.sparql_url = std::string(kDefaultSparqlUrl);
        }
    } else {
        throw Error("backend selector must be local:<fixture> or remote:<url>, got '" +
                    std::string(selector) + "'");
    }
    if (cfg.kind == Kind::remote) {
        if (const char* env = std::getenv("KGFORAGE_ENDPOINT"); env != nullptr && *env != '\0') {
            cfg.sparql_url = env;
        }
    }
    return cfg;
}

std::string BackendConfig::selector() const {
    if (kind == Kind::local) {
        return "local:" + fixture_path;
    }
    return "remote:" + sparql_url + "," + entity_search_url;
}

void BackendConfig::check() const {
    if (max_concurrency < 1) {
        throw Error("max_concurrency must be at least 1");
    }
    if (batch_size < 1) {
        throw Error("batch_size must be at least 1");
    }
    if (kind == Kind::remote && (sparql_url.empty() || entity_search_url.empty())) {
        throw Error("remote backend needs both a SPARQL URL and an entity search URL");
    }
}

std::string normalize_cell(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c)) != 0) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c);
    }
    return out;
}

// ---- KgClient ---------------------------------------------------------------

KgClient::KgClient(BackendConfig config)
    : config_(std::move(config)), in_flight_(clamp_concurrency(config_.max_concurrency)) {
    config_.check();
}

ResolutionResult KgClient::resolve(std::string_view cell_text) {
    std::string key = normalize_cell(cell_text);
    if (key.empty()) {
        throw EmptyCell();
    }
    {
        std::lock_guard lock(cache_mu_);
        if (auto it = resolution_cache_.find(key); it != resolution_cache_.end()) {
            return it->second;
        }
    }
    ResolutionResult r;
    r.cell_text = key;
    {
        in_flight_.acquire();
        struct Release {
            std::counting_semaphore<1024>& s;
            ~Release() { s.release(); }
        } release{in_flight_};
        r.candidates = search(key);
    }
    std::stable_sort(r.candidates.begin(), r.candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    if (!r.candidates.empty()) {
        r.chosen = r.candidates.front().id;
    }
    std::lock_guard lock(cache_mu_);
    return resolution_cache_.emplace(std::move(key), std::move(r)).first->second;
}

BindingTable KgClient::run_select(const SparqlText& query) {
    in_flight_.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{in_flight_};
    return do_run_select(query);
}

BindingTable KgClient::run_select_batched(const SparqlText& query_template,
                                          std::span<const EntityId> entities) {
    if (entities.empty()) {
        throw EmptyEntitySet();
    }
    const std::size_t batch = config_.batch_size;
    const std::size_t chunks = (entities.size() + batch - 1) / batch;

    auto run_chunk = [&](std::size_t k) {
        const auto first = k * batch;
        const auto len = std::min(batch, entities.size() - first);
        return run_select(query_template.with_entities(entities.subspan(first, len)));
    };
    auto annotate = [](std::exception_ptr ep, std::size_t chunk) {
        try {
            std::rethrow_exception(ep);
        } catch (const BackendUnavailable& e) {
            throw BackendUnavailable(e.reason(), chunk);
        } catch (const QueryRejected& e) {
            throw QueryRejected(e.message(), chunk);
        }
    };

    std::vector<BindingTable> parts(chunks);
    if (chunks == 1) {
        try {
            parts[0] = run_chunk(0);
        } catch (...) {
            annotate(std::current_exception(), 1);
        }
    } else {
        std::vector<std::future<BindingTable>> futures;
        futures.reserve(chunks);
        for (std::size_t k = 0; k < chunks; ++k) {
            futures.push_back(std::async(std::launch::async, run_chunk, k));
        }
        std::exception_ptr first_error;
        std::size_t failed_chunk = 0;
        for (std::size_t k = 0; k < chunks; ++k) {
            try {
                parts[k] = futures[k].get();
            } catch (...) {
                if (!first_error) {
                    first_error = std::current_exception();
                    failed_chunk = k + 1;
                }
            }
        }
        if (first_error) {
            annotate(first_error, failed_chunk);
        }
    }

    BindingTable out;
    out.variables = parts.front().variables;
    for (auto& p : parts) {
        if (out.variables.empty()) {
            out.variables = p.variables;
        }
        std::move(p.rows.begin(), p.rows.end(), std::back_inserter(out.rows));
    }
    if (out.variables.empty()) {
        out.variables = query_template.variables;
    }
    return out;
}

std::unordered_map<std::string, PropertyInfo> KgClient::property_info(
    std::span<const PropertyId> ids) {
    std::vector<PropertyId> missing;
    {
        std::lock_guard lock(cache_mu_);
        for (const auto& id : ids) {
            if (property_cache_.count(id.id) == 0 && property_missing_.count(id.id) == 0 &&
                std::find(missing.begin(), missing.end(), id) == missing.end()) {
                missing.push_back(id);
            }
        }
    }
    if (!missing.empty()) {
        auto fetched = fetch_property_info(missing);
        std::lock_guard lock(cache_mu_);
        for (auto& p : fetched) {
            property_cache_[p.id.id] = std::move(p);
        }
        for (const auto& id : missing) {
            if (property_cache_.count(id.id) == 0) {
                property_missing_[id.id] = true;
            }
        }
    }
    std::unordered_map<std::string, PropertyInfo> out;
    std::lock_guard lock(cache_mu_);
    for (const auto& id : ids) {
        if (auto it = property_cache_.find(id.id); it != property_cache_.end()) {
            out.emplace(id.id, it->second);
        }
    }
    return out;
}

std::unordered_map<std::string, std::string> KgClient::entity_labels(std::span<const EntityId> ids) {
    std::vector<EntityId> missing;
    {
        std::lock_guard lock(cache_mu_);
        for (const auto& id : ids) {
            if (label_cache_.count(id.id) == 0 &&
                std::find(missing.begin(), missing.end(), id) == missing.end()) {
                missing.push_back(id);
            }
        }
    }
    if (!missing.empty()) {
        auto fetched = fetch_entity_labels(missing);
        std::lock_guard lock(cache_mu_);
        for (auto& [id, label] : fetched) {
            label_cache_[id.id] = label.empty() ? id.id : std::move(label);
        }
        for (const auto& id : missing) {
            label_cache_.try_emplace(id.id, id.id);
        }
    }
    std::unordered_map<std::string, std::string> out;
    std::lock_guard lock(cache_mu_);
    for (const auto& id : ids) {
        out.emplace(id.id, label_cache_.at(id.id));
    }
    return out;
}

PropertyLookup KgClient::property_lookup() {
    return [this](const PropertyId& id) -> std::optional<PropertyMeta> {
        auto info = property_info(std::span<const PropertyId>(&id, 1));
        auto it = info.find(id.id);
        if (it == info.end()) {
            return std::nullopt;
        }
        return PropertyMeta{it->second.label, it->second.datatype, std::nullopt};
    };
}

// ---- LocalClient ------------------------------------------------------------

LocalClient::LocalClient(std::shared_ptr<const KnowledgeGraph> graph, BackendConfig config)
    : KgClient(std::move(config)), graph_(std::move(graph)) {}

std::vector<Candidate> LocalClient::search(const std::string& normalized_text) {
    std::vector<Candidate> out;
    const auto hits = graph_->search_entities(normalized_text);
    for (std::size_t rank = 0; rank < hits.size(); ++rank) {
        out.push_back({hits[rank].id, hits[rank].label, hits[rank].description,
                       1.0 / (1.0 + static_cast<double>(rank))});
    }
    return out;
}

BindingTable LocalClient::do_run_select(const SparqlText& query) {
    return execute_select(*graph_, query.text);
}

std::vector<PropertyInfo> LocalClient::fetch_property_info(std::span<const PropertyId> ids) {
    std::vector<PropertyInfo> out;
    for (const auto& id : ids) {
        if (const auto* p = graph_->find_property(id.id)) {
            out.push_back(*p);
        }
    }
    return out;
}

std::vector<std::pair<EntityId, std::string>> LocalClient::fetch_entity_labels(
    std::span<const EntityId> ids) {
    std::vector<std::pair<EntityId, std::string>> out;
    for (const auto& id : ids) {
        if (const auto* e = graph_->find_entity(id.id)) {
            out.emplace_back(id, e->label);
        }
    }
    return out;
}

std::shared_ptr<KgClient> make_client(const BackendConfig& config) {
    config.check();
    if (config.kind == BackendConfig::Kind::local) {
        auto graph = std::make_shared<const KnowledgeGraph>(load_fixture_file(config.fixture_path));
        return std::make_shared<LocalClient>(std::move(graph), config);
    }
    return std::make_shared<RemoteClient>(config);
}

}  // namespace kgforage
