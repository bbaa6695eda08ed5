#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "kgforage/service.hpp"

#include <atomic>
#include <future>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kgforage/discovery.hpp"
#include "kgforage/errors.hpp"
#include "kgforage/materializer.hpp"
#include "kgforage/planner.hpp"
#include "kgforage/tabular.hpp"

namespace kgforage {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

class HttpError : public Error {
public:
    HttpError(int status, const std::string& message) : Error(message), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

std::string random_token() {
    std::random_device rd;
    std::ostringstream out;
    out << std::hex;
    for (int i = 0; i < 4; ++i) {
        out.width(8);
        out.fill('0');
        out << rd();
    }
    return out.str();
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message,
                json extra = json::object()) {
    json err = {{"kind", kind}, {"message", message}};
    err.update(extra);
    send_json(res, json{{"error", std::move(err)}}, status);
}

json plan_errors_json(const std::vector<PlanError>& errors) {
    json out = json::array();
    for (const auto& e : errors) {
        out.push_back({{"hop_index", e.hop_index}, {"reason", e.reason}});
    }
    return out;
}

template <typename F>
void guarded(httplib::Response& res, F&& fn) {
    try {
        fn();
    } catch (const HttpError& e) {
        send_error(res, e.status(), e.status() == 404 ? "not_found" : "bad_request", e.what());
    } catch (const UnknownColumn& e) {
        send_error(res, 404, "unknown_column", e.what());
    } catch (const InvalidPlan& e) {
        send_error(res, 422, "invalid_plan", e.what(), {{"errors", plan_errors_json(e.errors())}});
    } catch (const RowUnresolvable& e) {
        send_error(res, 422, "row_unresolvable", e.what());
    } catch (const NotAStringColumn& e) {
        send_error(res, 422, "not_a_string_column", e.what());
    } catch (const AllCellsUnresolved& e) {
        send_error(res, 422, "all_cells_unresolved", e.what());
    } catch (const MultiplicityViolation& e) {
        send_error(res, 422, "multiplicity_violation", e.what());
    } catch (const IllegalOp& e) {
        send_error(res, 422, "illegal_op", e.what());
    } catch (const EmptySample& e) {
        send_error(res, 422, "empty_sample", e.what());
    } catch (const CsvError& e) {
        send_error(res, 400, "csv_error", e.what(), {{"row", e.row()}});
    } catch (const BackendUnavailable& e) {
        json extra = json::object();
        if (e.chunk()) {
            extra["chunk"] = *e.chunk();
        }
        send_error(res, 502, "backend_unavailable", e.what(), extra);
    } catch (const QueryRejected& e) {
        json extra = json::object();
        if (e.chunk()) {
            extra["chunk"] = *e.chunk();
        }
        send_error(res, 502, "query_rejected", e.what(), extra);
    } catch (const json::exception& e) {
        send_error(res, 400, "bad_request", std::string("malformed JSON: ") + e.what());
    } catch (const Error& e) {
        send_error(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
    }
}

std::optional<std::uint64_t> uint_param(const httplib::Request& req, const std::string& name) {
    if (!req.has_param(name)) {
        return std::nullopt;
    }
    const auto text = req.get_param_value(name);
    const auto v = parse_number(text);
    if (!v || *v < 0 || *v != static_cast<double>(static_cast<std::uint64_t>(*v))) {
        throw HttpError(400, "query parameter '" + name + "' must be a non-negative integer");
    }
    return static_cast<std::uint64_t>(*v);
}

json column_json(const Column& c) {
    std::size_t nulls = 0;
    for (const auto& cell : c.cells) {
        nulls += cell ? 0 : 1;
    }
    json j = {{"name", c.name},
              {"type", std::string(to_string(c.ctype))},
              {"enabled", c.enabled},
              {"augmented", c.augmented()},
              {"null_count", nulls}};
    if (c.provenance) {
        const auto& p = *c.provenance;
        j["parent_column"] = p.parent_column;
        j["plan"] = plan_to_json(p.plan);
        j["unit"] = p.unit ? json(*p.unit) : json(nullptr);
        j["mixed_units"] = p.mixed_units;
        j["entity_valued"] = !p.entity_ids.empty();
    }
    return j;
}

json columns_json(const Dataset& d) {
    json cols = json::array();
    for (const auto& c : d.columns()) {
        cols.push_back(column_json(c));
    }
    return cols;
}

Datatype datatype_of(ColumnType t) {
    switch (t) {
        case ColumnType::number:
            return Datatype::number;
        case ColumnType::datetime:
            return Datatype::datetime;
        case ColumnType::string:
            return Datatype::string;
    }
    return Datatype::string;
}

json allowed_table() {
    json out = json::array();
    for (auto pos : {HopPosition::final, HopPosition::intermediate}) {
        for (auto dt : {Datatype::number, Datatype::datetime, Datatype::string, Datatype::entity}) {
            for (auto card : {Cardinality::one, Cardinality::many}) {
                json ops = json::array();
                for (auto op : allowed_aggregations(dt, card, pos)) {
                    ops.push_back(std::string(to_string(op)));
                }
                out.push_back({{"position", pos == HopPosition::final ? "final" : "intermediate"},
                               {"datatype", std::string(to_string(dt))},
                               {"cardinality", std::string(to_string(card))},
                               {"ops", std::move(ops)}});
            }
        }
    }
    return out;
}

std::vector<std::optional<AggOp>> parse_level_ops(const std::string& text) {
    std::vector<std::optional<AggOp>> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = text.find(',', start);
        const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (item.empty()) {
            out.emplace_back(std::nullopt);
        } else if (auto op = parse_agg_op(item)) {
            out.emplace_back(*op);
        } else {
            throw HttpError(400, "unknown aggregation '" + item + "' in ops");
        }
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

struct Job {
    std::shared_future<json> result;
};

struct Session {
    std::string id;
    std::string backend;
    std::shared_ptr<KgClient> client;

    std::mutex writer;  // serializes mutations

    mutable std::mutex state_mu;  // guards the fields below; held only briefly
    std::shared_ptr<const Dataset> dataset;
    std::vector<JoinPlan> history;
    std::map<std::string, Job> jobs;
    Clock::time_point last_access = Clock::now();

    std::shared_ptr<const Dataset> snapshot() const {
        std::lock_guard lock(state_mu);
        return dataset;
    }
};

}  // namespace

struct Service::Impl {
    ServiceConfig cfg;
    httplib::Server server;
    int bound_port = -1;

    std::mutex clients_mu;
    std::vector<std::string> offered;  // selector order; first is the default
    std::map<std::string, std::shared_ptr<KgClient>> clients;
    std::map<std::string, BackendConfig> configs;

    mutable std::mutex sessions_mu;
    std::map<std::string, std::shared_ptr<Session>> sessions;

    explicit Impl(ServiceConfig c) : cfg(std::move(c)) {
        for (const auto& b : cfg.backends) {
            const auto sel = b.selector();
            if (configs.emplace(sel, b).second) {
                offered.push_back(sel);
            }
        }
        routes();
    }

    std::shared_ptr<KgClient> client_for(const std::string& selector) {
        std::lock_guard lock(clients_mu);
        if (auto it = clients.find(selector); it != clients.end()) {
            return it->second;
        }
        auto cfg_it = configs.find(selector);
        if (cfg_it == configs.end()) {
            throw HttpError(400, "backend '" + selector + "' is not offered by this server");
        }
        auto client = make_client(cfg_it->second);
        clients.emplace(selector, client);
        return client;
    }

    void sweep() {
        const auto now = Clock::now();
        std::lock_guard lock(sessions_mu);
        for (auto it = sessions.begin(); it != sessions.end();) {
            bool expired = false;
            {
                std::lock_guard s(it->second->state_mu);
                expired = now - it->second->last_access > cfg.session_ttl;
            }
            it = expired ? sessions.erase(it) : std::next(it);
        }
    }

    std::shared_ptr<Session> session(const std::string& id) {
        sweep();
        std::shared_ptr<Session> s;
        {
            std::lock_guard lock(sessions_mu);
            auto it = sessions.find(id);
            if (it == sessions.end()) {
                throw HttpError(404, "unknown session: " + id);
            }
            s = it->second;
        }
        std::lock_guard lock(s->state_mu);
        s->last_access = Clock::now();
        return s;
    }

    json session_json(const Session& s) const {
        const auto d = s.snapshot();
        json history = json::array();
        {
            std::lock_guard lock(s.state_mu);
            for (const auto& p : s.history) {
                history.push_back(plan_to_json(p));
            }
        }
        return json{{"session_id", s.id},
                    {"backend", s.backend},
                    {"row_count", d->row_count()},
                    {"columns", columns_json(*d)},
                    {"history", std::move(history)}};
    }

    json commit(const std::shared_ptr<Session>& s, const JoinPlan& plan) {
        std::lock_guard write(s->writer);
        const auto before = s->snapshot();
        auto after = std::make_shared<const Dataset>(materialize(*s->client, *before, plan));
        const auto& added = after->columns().back();
        {
            std::lock_guard lock(s->state_mu);
            s->dataset = after;
            s->history.push_back(added.provenance->plan);
        }
        return json{{"column", column_json(added)}, {"columns", columns_json(*after)}};
    }

    void routes() {
        server.set_payload_max_length(cfg.max_upload_bytes);

        server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                sweep();
                std::string selector;
                if (req.has_param("backend")) {
                    selector = req.get_param_value("backend");
                } else {
                    std::lock_guard lock(clients_mu);
                    if (offered.empty()) {
                        throw HttpError(400, "server has no backend configured");
                    }
                    selector = offered.front();
                }
                auto client = client_for(selector);
                CsvOptions opts;
                if (req.has_param("header")) {
                    opts.has_header = req.get_param_value("header") != "false";
                }
                auto s = std::make_shared<Session>();
                s->id = random_token();
                s->backend = selector;
                s->client = std::move(client);
                s->dataset = std::make_shared<const Dataset>(import_csv(req.body, opts));
                {
                    std::lock_guard lock(sessions_mu);
                    sessions.emplace(s->id, s);
                }
                send_json(res, session_json(*s));
            });
        });

        server.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { send_json(res, session_json(*session(req.matches[1]))); });
        });

        server.Delete(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                session(req.matches[1]);
                std::lock_guard lock(sessions_mu);
                sessions.erase(req.matches[1]);
                res.status = 204;
            });
        });

        server.Get(R"(/sessions/([^/]+)/columns)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       guarded(res, [&] {
                           const auto d = session(req.matches[1])->snapshot();
                           send_json(res, json{{"columns", columns_json(*d)}});
                       });
                   });

        server.Get(R"(/sessions/([^/]+)/columns/(.+)/related)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       guarded(res, [&] {
                           auto s = session(req.matches[1]);
                           DiscoveryConfig dc;
                           dc.sample_size = uint_param(req, "sample_size").value_or(dc.sample_size);
                           dc.top_k = uint_param(req, "top_k").value_or(dc.top_k);
                           dc.rng_seed = uint_param(req, "seed");
                           const auto d = s->snapshot();
                           json out = json::array();
                           for (const auto& desc : discover_related(*s->client, *d, req.matches[2].str(), dc)) {
                               out.push_back(descriptor_to_json(desc));
                           }
                           send_json(res, out);
                       });
                   });

        server.Get(R"(/sessions/([^/]+)/columns/(.+)/detail)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       guarded(res, [&] { detail(req, res); });
                   });

        server.Patch(R"(/sessions/([^/]+)/columns/(.+))",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         guarded(res, [&] {
                             auto s = session(req.matches[1]);
                             const auto body = json::parse(req.body);
                             if (!body.contains("enabled") || !body["enabled"].is_boolean()) {
                                 throw HttpError(400, "body must be {\"enabled\": true|false}");
                             }
                             std::lock_guard write(s->writer);
                             auto after = std::make_shared<const Dataset>(
                                 set_enabled(*s->snapshot(), req.matches[2].str(), body["enabled"].get<bool>()));
                             {
                                 std::lock_guard lock(s->state_mu);
                                 s->dataset = after;
                             }
                             send_json(res, json{{"column", column_json(after->column(req.matches[2].str()))},
                                                 {"columns", columns_json(*after)}});
                         });
                     });

        server.Post(R"(/sessions/([^/]+)/joins:preview)",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        guarded(res, [&] {
                            auto s = session(req.matches[1]);
                            const auto plan = plan_from_json(json::parse(req.body));
                            const auto d = s->snapshot();
                            send_json(res, preview_to_json(preview_join(*s->client, *d, plan)));
                        });
                    });

        server.Post(R"(/sessions/([^/]+)/joins)",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        guarded(res, [&] {
                            auto s = session(req.matches[1]);
                            const auto plan = plan_from_json(json::parse(req.body));
                            std::shared_future<json> fut =
                                std::async(std::launch::async, [this, s, plan] { return commit(s, plan); }).share();
                            if (fut.wait_for(cfg.async_threshold) == std::future_status::ready) {
                                send_json(res, fut.get());
                                return;
                            }
                            const auto job = random_token();
                            {
                                std::lock_guard lock(s->state_mu);
                                s->jobs.emplace(job, Job{fut});
                            }
                            send_json(res,
                                      json{{"job", job},
                                           {"state", "running"},
                                           {"poll", "/sessions/" + s->id + "/jobs/" + job}},
                                      202);
                        });
                    });

        server.Get(R"(/sessions/([^/]+)/jobs/([^/]+))",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       guarded(res, [&] {
                           auto s = session(req.matches[1]);
                           std::shared_future<json> fut;
                           {
                               std::lock_guard lock(s->state_mu);
                               auto it = s->jobs.find(req.matches[2]);
                               if (it == s->jobs.end()) {
                                   throw HttpError(404, "unknown job: " + req.matches[2].str());
                               }
                               fut = it->second.result;
                           }
                           if (fut.wait_for(std::chrono::seconds(0)) != std::future_status::ready) {
                               send_json(res, json{{"job", req.matches[2].str()}, {"state", "running"}}, 202);
                               return;
                           }
                           json out = fut.get();  // rethrows the job's error
                           out["state"] = "done";
                           send_json(res, out);
                       });
                   });

        server.Post(R"(/sessions/([^/]+)/subgraph)",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        guarded(res, [&] {
                            auto s = session(req.matches[1]);
                            const auto body = json::parse(req.body);
                            const auto plan = plan_from_json(body.contains("plan") ? body["plan"] : body);
                            std::size_t row = body.contains("row") ? body["row"].get<std::size_t>() : 0;
                            if (auto r = uint_param(req, "row")) {
                                row = static_cast<std::size_t>(*r);
                            }
                            std::vector<std::optional<AggOp>> ops;
                            if (req.has_param("ops")) {
                                ops = parse_level_ops(req.get_param_value("ops"));
                            }
                            const auto d = s->snapshot();
                            send_json(res, subgraph_to_json(example_subgraph(*s->client, *d, plan, row, ops)));
                        });
                    });

        server.Get(R"(/sessions/([^/]+)/preview)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       guarded(res, [&] {
                           const auto d = session(req.matches[1])->snapshot();
                           const auto n = uint_param(req, "n").value_or(kPreviewRows);
                           const auto h = head(*d, static_cast<std::size_t>(n));
                           json names = json::array();
                           json rows = json::array();
                           for (const auto& c : h.columns()) {
                               names.push_back(c.name);
                           }
                           for (std::size_t r = 0; r < h.row_count(); ++r) {
                               json row = json::array();
                               for (const auto& c : h.columns()) {
                                   row.push_back(c.cells[r] ? json(*c.cells[r]) : json(nullptr));
                               }
                               rows.push_back(std::move(row));
                           }
                           send_json(res, json{{"columns", std::move(names)},
                                               {"rows", std::move(rows)},
                                               {"row_count", d->row_count()}});
                       });
                   });

        server.Get(R"(/sessions/([^/]+)/export)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       guarded(res, [&] {
                           auto s = session(req.matches[1]);
                           const auto d = s->snapshot();
                           if (req.get_param_value("part") == "sidecar") {
                               res.set_header("Content-Disposition",
                                              "attachment; filename=\"" + s->id + ".plans.json\"");
                               res.set_content(provenance_sidecar(*d).dump(2) + "\n", "application/json");
                               return;
                           }
                           res.set_header("Content-Disposition", "attachment; filename=\"" + s->id + ".csv\"");
                           res.set_content(export_csv(*d), "text/csv");
                       });
                   });

        server.Get("/allowed_aggregations", [](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                if (!req.has_param("datatype")) {
                    send_json(res, allowed_table());
                    return;
                }
                const auto dt = parse_datatype(req.get_param_value("datatype"));
                if (!dt) {
                    throw HttpError(400, "unknown datatype " + req.get_param_value("datatype"));
                }
                auto card = Cardinality::many;
                if (req.has_param("cardinality")) {
                    auto c = parse_cardinality(req.get_param_value("cardinality"));
                    if (!c) {
                        throw HttpError(400, "unknown cardinality " + req.get_param_value("cardinality"));
                    }
                    card = *c;
                }
                const auto pos_text = req.has_param("position") ? req.get_param_value("position") : "final";
                if (pos_text != "final" && pos_text != "intermediate") {
                    throw HttpError(400, "position must be final or intermediate");
                }
                const auto pos = pos_text == "final" ? HopPosition::final : HopPosition::intermediate;
                json ops = json::array();
                for (auto op : allowed_aggregations(*dt, card, pos)) {
                    ops.push_back(std::string(to_string(op)));
                }
                send_json(res, json{{"datatype", std::string(to_string(*dt))},
                                    {"cardinality", std::string(to_string(card))},
                                    {"position", pos_text},
                                    {"ops", std::move(ops)}});
            });
        });

        server.Get("/backends", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(clients_mu);
            send_json(res, json{{"backends", offered}});
        });

        if (!cfg.ui_dir.empty() && !server.set_mount_point("/ui", cfg.ui_dir)) {
            std::cerr << "kgforage: ui directory not found: " << cfg.ui_dir << "\n";
        }
    }

    // Column detail: histogram of the column's own values, or with
    // ?property=P.. the descriptor of one related attribute.
    void detail(const httplib::Request& req, httplib::Response& res) {
        auto s = session(req.matches[1]);
        const auto d = s->snapshot();
        const Column& col = d->column(req.matches[2].str());
        if (req.has_param("property")) {
            DiscoveryConfig dc;
            dc.sample_size = uint_param(req, "sample_size").value_or(dc.sample_size);
            dc.top_k = std::numeric_limits<std::size_t>::max();
            dc.rng_seed = uint_param(req, "seed");
            const auto wanted = req.get_param_value("property");
            for (const auto& desc : discover_related(*s->client, *d, col.name, dc)) {
                if (desc.property.id == wanted) {
                    send_json(res, descriptor_to_json(desc));
                    return;
                }
            }
            throw HttpError(404, "property " + wanted + " is not related to column " + col.name);
        }
        std::vector<Value> values;
        for (std::size_t r = 0; r < d->row_count(); ++r) {
            if (auto v = cell_value(col, r)) {
                values.push_back(std::move(*v));
            }
        }
        json examples = json::array();
        for (std::size_t i = 0; i < values.size() && i < kExampleCount; ++i) {
            examples.push_back(value_to_json(values[i]));
        }
        json j = column_json(col);
        j["examples"] = std::move(examples);
        j["histogram"] = values.empty() ? json(nullptr)
                                        : histogram_to_json(value_histogram(datatype_of(col.ctype), values));
        send_json(res, j);
    }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() {
    stop();
}

void Service::add_client(const std::string& selector, std::shared_ptr<KgClient> client) {
    std::lock_guard lock(impl_->clients_mu);
    if (impl_->clients.find(selector) == impl_->clients.end() &&
        impl_->configs.find(selector) == impl_->configs.end()) {
        impl_->offered.push_back(selector);
    }
    impl_->clients[selector] = std::move(client);
}

int Service::bind() {
    if (impl_->cfg.port == 0) {
        impl_->bound_port = impl_->server.bind_to_any_port(impl_->cfg.host);
    } else if (impl_->server.bind_to_port(impl_->cfg.host, impl_->cfg.port)) {
        impl_->bound_port = impl_->cfg.port;
    }
    if (impl_->bound_port <= 0) {
        throw Error("cannot bind " + impl_->cfg.host + ":" + std::to_string(impl_->cfg.port));
    }
    return impl_->bound_port;
}

void Service::serve() {
    impl_->server.listen_after_bind();
}

void Service::stop() {
    if (impl_->server.is_running()) {
        impl_->server.stop();
    }
}

std::size_t Service::session_count() const {
    std::lock_guard lock(impl_->sessions_mu);
    return impl_->sessions.size();
}

}  // namespace kgforage
