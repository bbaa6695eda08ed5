#include "kgforage/cli.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kgforage/discovery.hpp"
#include "kgforage/errors.hpp"
#include "kgforage/kg_client.hpp"
#include "kgforage/materializer.hpp"
#include "kgforage/service.hpp"
#include "kgforage/tabular.hpp"

namespace kgforage {

using json = nlohmann::json;

namespace {

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_all(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path);
    }
    out << bytes;
    if (!out.flush()) {
        throw Error("write failed: " + path);
    }
}

// A plan file holds one plan, an array of plans, or {"plans": [...]}.
std::vector<JoinPlan> load_plans(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_all(path));
    } catch (const json::parse_error& e) {
        throw Error(path + ": " + e.what());
    }
    if (doc.is_object() && doc.contains("plans")) {
        doc = doc["plans"];
    }
    if (doc.is_object()) {
        doc = json::array({doc});
    }
    if (!doc.is_array()) {
        throw Error(path + ": expected a plan object or an array of plans");
    }
    std::vector<JoinPlan> plans;
    for (const auto& p : doc) {
        plans.push_back(plan_from_json(p));
    }
    return plans;
}

std::string tsv_field(std::string s) {
    for (auto& c : s) {
        if (c == '\t' || c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return s;
}

std::string coverage_text(double c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", c);
    return buf;
}

void print_tsv(std::ostream& out, const std::vector<AttributeDescriptor>& descs) {
    out << "property\tlabel\tcoverage\tdatatype\tcardinality\tunit\texamples\n";
    for (const auto& d : descs) {
        std::string examples;
        for (const auto& v : d.examples) {
            if (!examples.empty()) {
                examples += "; ";
            }
            if (v.is_entity()) {
                auto it = d.value_labels.find(v.as_entity().id);
                examples += it != d.value_labels.end() ? it->second : v.as_entity().id;
            } else {
                examples += v.render();
            }
        }
        out << d.property.id << '\t' << tsv_field(d.label) << '\t' << coverage_text(d.coverage) << '\t'
            << to_string(d.datatype) << '\t' << to_string(d.cardinality) << '\t'
            << tsv_field(d.unit.value_or("")) << '\t' << tsv_field(examples) << '\n';
    }
}

Service* g_service = nullptr;

extern "C" void on_signal(int) {
    if (g_service != nullptr) {
        g_service->stop();
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Augment tabular datasets with knowledge-graph attributes", "kgforage"};
    app.require_subcommand(1);

    std::string input;
    std::string column;
    std::string backend = "remote:";
    std::optional<std::uint64_t> seed;
    std::string format = "tsv";
    std::size_t sample_size = 25;
    std::size_t top_k = 50;

    auto* discover = app.add_subcommand("discover", "List attributes related to a column");
    discover->add_option("--input", input, "CSV file")->required();
    discover->add_option("--column", column, "String column to explore")->required();
    discover->add_option("--backend", backend, "local:<fixture.jsonl> or remote:<sparql_url>[,<api_url>]");
    discover->add_option("--seed", seed, "Sampling seed");
    discover->add_option("--format", format, "Output format")->check(CLI::IsMember({"tsv", "json"}));
    discover->add_option("--sample-size", sample_size, "Rows to sample")->check(CLI::PositiveNumber);
    discover->add_option("--top-k", top_k, "Attributes to keep")->check(CLI::PositiveNumber);

    std::string plans_path;
    std::string output;
    std::string sidecar;
    auto* join = app.add_subcommand("join", "Apply plan files and write the augmented CSV");
    join->add_option("--input", input, "CSV file")->required();
    join->add_option("--plans", plans_path, "Plan JSON file")->required();
    join->add_option("--output", output, "Augmented CSV to write")->required();
    join->add_option("--sidecar", sidecar, "Where to write the plan sidecar JSON");
    join->add_option("--backend", backend, "local:<fixture.jsonl> or remote:<sparql_url>[,<api_url>]");
    join->add_option("--seed", seed, "Seed for plans that carry none");

    std::string host = "127.0.0.1";
    int port = 8080;
    std::vector<std::string> backends;
    std::string ui_dir;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--host", host, "Listen address");
    serve->add_option("--port", port, "Listen port")->check(CLI::Range(0, 65535));
    serve->add_option("--backend", backends, "Backend selector; repeat to offer several");
    serve->add_option("--ui-dir", ui_dir, "Static UI assets served under /ui");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*discover) {
            auto client = make_client(BackendConfig::from_selector(backend));
            const auto dataset = import_csv(read_all(input));
            DiscoveryConfig dc;
            dc.sample_size = sample_size;
            dc.top_k = top_k;
            dc.rng_seed = seed;
            const auto descs = discover_related(*client, dataset, column, dc);
            if (format == "json") {
                json arr = json::array();
                for (const auto& d : descs) {
                    arr.push_back(descriptor_to_json(d));
                }
                out << arr.dump(2) << '\n';
            } else {
                print_tsv(out, descs);
            }
            return exit_ok;
        }
        if (*join) {
            auto client = make_client(BackendConfig::from_selector(backend));
            auto dataset = import_csv(read_all(input));
            for (auto plan : load_plans(plans_path)) {
                if (!plan.rng_seed) {
                    plan.rng_seed = seed;
                }
                dataset = materialize(*client, dataset, plan);
            }
            write_all(output, export_csv(dataset));
            if (!sidecar.empty()) {
                write_all(sidecar, provenance_sidecar(dataset).dump(2) + "\n");
            }
            return exit_ok;
        }
        if (*serve) {
            ServiceConfig sc;
            sc.host = host;
            sc.port = port;
            sc.ui_dir = ui_dir;
            if (backends.empty()) {
                backends.push_back(backend);
            }
            for (const auto& b : backends) {
                sc.backends.push_back(BackendConfig::from_selector(b));
            }
            Service service(std::move(sc));
            const int bound = service.bind();
            out << "listening on http://" << host << ':' << bound << std::endl;
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            service.serve();
            g_service = nullptr;
            return exit_ok;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_runtime;
    }
    return exit_usage;
}

}  // namespace kgforage
