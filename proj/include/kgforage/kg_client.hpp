#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgforage/graph_store.hpp"
#include "kgforage/planner.hpp"
#include "kgforage/sparql.hpp"

namespace kgforage {

struct BackendConfig {
    enum class Kind { local, remote };

    Kind kind = Kind::local;
    std::string fixture_path;       // local
    std::string sparql_url;         // remote
    std::string entity_search_url;  // remote, MediaWiki action API endpoint
    std::size_t max_concurrency = 4;
    std::chrono::milliseconds request_timeout{30'000};
    std::size_t batch_size = 50;
    std::string user_agent = "kgforage/0.1 (column augmentation engine)";

    // "local:<fixture.jsonl>" or "remote:<sparql_url>[,<entity_search_url>]".
    // KGFORAGE_ENDPOINT, when set, overrides the remote SPARQL URL.
    static BackendConfig from_selector(std::string_view selector);
    std::string selector() const;
    // Throws Error when a limit is zero or a required URL/path is missing.
    void check() const;
};

inline constexpr std::string_view kDefaultSparqlUrl = "https://query.wikidata.org/sparql";
inline constexpr std::string_view kDefaultEntitySearchUrl = "https://www.wikidata.org/w/api.php";

struct Candidate {
    EntityId id;
    std::string label;
    std::string description;
    double score = 0;  // 1 / (1 + rank)
};

struct ResolutionResult {
    std::string cell_text;
    std::vector<Candidate> candidates;  // descending score
    std::optional<EntityId> chosen;
};

// Trim and collapse internal whitespace runs to one space.
std::string normalize_cell(std::string_view text);

// Graph access shared by every backend: cached entity resolution, queries
// bounded by max_concurrency, and VALUES batching. Safe to share across
// threads.
class KgClient {
public:
    explicit KgClient(BackendConfig config);
    virtual ~KgClient() = default;
    KgClient(const KgClient&) = delete;
    KgClient& operator=(const KgClient&) = delete;

    const BackendConfig& config() const { return config_; }
    virtual Dialect dialect() const = 0;

    // Throws EmptyCell for blank text; BackendUnavailable on transport errors.
    ResolutionResult resolve(std::string_view cell_text);

    BindingTable run_select(const SparqlText& query);

    // Splits `entities` into batch_size chunks, runs them concurrently and
    // concatenates the rows in chunk order. Errors carry the 1-based chunk.
    virtual BindingTable run_select_batched(const SparqlText& query_template,
                                            std::span<const EntityId> entities);

    // Metadata for known properties; unknown ids are omitted. Cached.
    std::unordered_map<std::string, PropertyInfo> property_info(std::span<const PropertyId> ids);
    // Display labels; entities without a label map to their id. Cached.
    std::unordered_map<std::string, std::string> entity_labels(std::span<const EntityId> ids);

    // Planner lookup backed by property_info().
    PropertyLookup property_lookup();

protected:
    virtual std::vector<Candidate> search(const std::string& normalized_text) = 0;
    virtual BindingTable do_run_select(const SparqlText& query) = 0;
    virtual std::vector<PropertyInfo> fetch_property_info(std::span<const PropertyId> ids) = 0;
    virtual std::vector<std::pair<EntityId, std::string>> fetch_entity_labels(
        std::span<const EntityId> ids) = 0;

private:
    BackendConfig config_;
    std::counting_semaphore<1024> in_flight_;

    std::mutex cache_mu_;
    std::unordered_map<std::string, ResolutionResult> resolution_cache_;
    std::unordered_map<std::string, PropertyInfo> property_cache_;
    std::unordered_map<std::string, bool> property_missing_;
    std::unordered_map<std::string, std::string> label_cache_;
};

// Backend over an in-memory KnowledgeGraph; queries go to execute_select.
class LocalClient : public KgClient {
public:
    LocalClient(std::shared_ptr<const KnowledgeGraph> graph, BackendConfig config = {});
    Dialect dialect() const override { return Dialect::local; }
    const KnowledgeGraph& graph() const { return *graph_; }

protected:
    std::vector<Candidate> search(const std::string& normalized_text) override;
    BindingTable do_run_select(const SparqlText& query) override;
    std::vector<PropertyInfo> fetch_property_info(std::span<const PropertyId> ids) override;
    std::vector<std::pair<EntityId, std::string>> fetch_entity_labels(
        std::span<const EntityId> ids) override;

private:
    std::shared_ptr<const KnowledgeGraph> graph_;
};

// SPARQL 1.1 protocol endpoint plus a Wikidata-compatible action API for
// entity search and labels.
class RemoteClient : public KgClient {
public:
    explicit RemoteClient(BackendConfig config);
    ~RemoteClient() override;
    Dialect dialect() const override { return Dialect::wikidata; }

protected:
    std::vector<Candidate> search(const std::string& normalized_text) override;
    BindingTable do_run_select(const SparqlText& query) override;
    std::vector<PropertyInfo> fetch_property_info(std::span<const PropertyId> ids) override;
    std::vector<std::pair<EntityId, std::string>> fetch_entity_labels(
        std::span<const EntityId> ids) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::shared_ptr<KgClient> make_client(const BackendConfig& config);

// Parses an application/sparql-results+json document into a BindingTable.
// Wikidata entity IRIs become EntityId, direct-claim IRIs PropertyId.
BindingTable parse_sparql_json(std::string_view body);

}  // namespace kgforage
