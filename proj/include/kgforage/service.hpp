#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "kgforage/kg_client.hpp"

namespace kgforage {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    // First entry is the default; sessions may pick any listed selector.
    std::vector<BackendConfig> backends;
    std::size_t max_upload_bytes = 50u * 1024 * 1024;
    std::chrono::seconds session_ttl{2 * 60 * 60};
    // Commits still running after this long answer 202 with a job URL.
    std::chrono::milliseconds async_threshold{10'000};
    std::string ui_dir;  // served under /ui when non-empty
};

// Session-scoped HTTP API. Each backend selector maps to one shared client.
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Registers a ready-made client under `selector` (tests inject fakes).
    void add_client(const std::string& selector, std::shared_ptr<KgClient> client);

    // Binds the listening socket and returns the bound port.
    int bind();
    // Serves until stop(); bind() must have succeeded.
    void serve();
    void stop();

    std::size_t session_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace kgforage
