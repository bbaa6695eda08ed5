// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "golden_cases.hpp"
#include "kgforage/cli.hpp"
#include "kgforage/discovery.hpp"
#include "kgforage/errors.hpp"
#include "kgforage/materializer.hpp"
#include "kgforage/service.hpp"
#include "oracle.hpp"
#include "synthetic.hpp"
#include "test_support.hpp"

using namespace kgforage;
using namespace kgforage::testing;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void fail(const std::string& why) {
        if (ok) detail = why;
        ok = false;
    }
};

int failures = 0;

template <typename F>
void criterion(const std::string& name, F&& body) {
    Outcome o;
    try {
        body(o);
    } catch (const std::exception& e) {
        o.fail(std::string("exception: ") + e.what());
    }
    std::cout << (o.ok ? "PASS " : "FAIL ") << name;
    if (!o.detail.empty()) std::cout << " -- " << o.detail;
    std::cout << std::endl;
    if (!o.ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool same_value(const std::optional<Value>& a, const std::optional<Value>& b) {
    if (a.has_value() != b.has_value()) return false;
    if (!a) return true;
    if (a->is_number() && b->is_number()) return std::abs(a->as_number() - b->as_number()) <= 1e-9;
    return *a == *b;
}

std::optional<std::string> rendered_cell(const KnowledgeGraph& g, const std::optional<Value>& v) {
    if (!v) return std::nullopt;
    if (v->is_entity()) return g.find_entity(v->as_entity().id)->label;
    return v->render();
}

void oracle_equivalence(Outcome& o) {
    const auto& g = mini_countries();
    const auto d = import_csv("Country\nAtlantis\nBorduria\nCascadia\nNarnia\n\"\"\nATL\n");
    LocalClient c(share(mini_countries()));
    std::vector<std::size_t> rows(d.row_count());
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
    const auto t0 = Clock::now();
    std::size_t plans = 0;
    for (std::size_t depth = 1; depth <= 2; ++depth) {
        for (auto plan : enumerate_plans(g, depth)) {
            plan.output_name.clear();
            plan.rng_seed = plans % 3 == 0 ? std::nullopt : std::optional<std::uint64_t>(plans * 7919);
            ++plans;
            std::vector<std::optional<Value>> expected;
            bool multi = false;
            try {
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    expected.push_back(oracle_join(g, plan, d.columns()[0].cells[r]));
                }
            } catch (const OracleMultiplicity&) {
                multi = true;
            }
            const auto prepared = prepare_plan(c, d, plan);
            if (multi) {
                try {
                    materialize(c, d, prepared);
                    o.fail("expected multiplicity error for " + plan_to_json(plan).dump());
                } catch (const MultiplicityViolation&) {
                }
                continue;
            }
            const auto got = join_values(c, d, prepared, rows);
            const auto full = materialize(c, d, prepared).columns().back();
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (!same_value(got[r], expected[r])) {
                    o.fail("row " + std::to_string(r) + " differs for " + plan_to_json(plan).dump());
                }
                if (full.cells[r] != rendered_cell(g, expected[r]) &&
                    !(expected[r] && expected[r]->is_number() && full.cells[r] &&
                      std::abs(std::stod(*full.cells[r]) - expected[r]->as_number()) <= 1e-9)) {
                    o.fail("materialized row " + std::to_string(r) + " differs for " + plan_to_json(plan).dump());
                }
            }
        }
    }
    const double secs = seconds_since(t0);
    if (plans < 60) o.fail("only " + std::to_string(plans) + " plans");
    if (secs >= 10.0) o.fail("took " + std::to_string(secs) + " s");
    if (o.ok) o.detail = std::to_string(plans) + " plans in " + std::to_string(secs) + " s";
}

void multi_hop_order(Outcome& o) {
    LocalClient c(share(mini_countries()));
    const auto d = import_csv(read_file(data_path("countries.csv")));
    const auto run = [&](AggOp combine, AggOp agg) {
        JoinPlan p{"Country",
                   {{PropertyId{"P2"}, AggOp::through, combine}, {PropertyId{"P3"}, agg, std::nullopt}},
                   "",
                   std::nullopt};
        return materialize(c, d, p).columns().back().cells[0];
    };
    const auto a = run(AggOp::min, AggOp::max);
    const auto b = run(AggOp::max, AggOp::mean);
    if (a != std::optional<std::string>("65")) o.fail("inner max, outer min gave " + a.value_or("null"));
    if (b != std::optional<std::string>("80")) o.fail("inner mean, outer max gave " + b.value_or("null"));
    JoinPlan p{"Country",
               {{PropertyId{"P2"}, AggOp::through, AggOp::min}, {PropertyId{"P3"}, AggOp::max, std::nullopt}},
               "",
               std::nullopt};
    const std::vector<std::optional<AggOp>> swap{AggOp::max, AggOp::mean};
    if (example_subgraph(c, d, p, 0).computed_result != Value::number(65) ||
        example_subgraph(c, d, p, 0, swap).computed_result != Value::number(80)) {
        o.fail("subgraph disagrees with the join");
    }
    if (o.ok) o.detail = "65 and 80";
}

void coverage_calibration(Outcome& o) {
    const auto g = share(coverage_graph(300, 200));
    const auto d = entity_label_dataset(*g, 300);
    LocalClient c(g);
    double total = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        DiscoveryConfig cfg;
        cfg.sample_size = 25;
        cfg.rng_seed = seed;
        double cov = 0;
        for (const auto& desc : discover_related(c, d, "Name", cfg)) {
            if (desc.property.id == "P1") cov = desc.coverage;
        }
        if (cov < 0 || cov > 1) o.fail("estimate outside [0,1]");
        total += cov;
    }
    const double mean = total / 100;
    const double truth = 200.0 / 300.0;
    if (std::abs(mean - truth) > 0.10) o.fail("mean estimate " + std::to_string(mean));
    if (o.ok) o.detail = "mean estimate " + std::to_string(mean) + " vs " + std::to_string(truth);
}

std::string descriptors_text(const std::vector<AttributeDescriptor>& ds) {
    json arr = json::array();
    for (const auto& d : ds) arr.push_back(descriptor_to_json(d));
    return arr.dump();
}

void discovery_bounds(Outcome& o) {
    const auto g = share(wide_graph(120, 90, 8));
    const auto d = entity_label_dataset(*g, 120);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        DiscoveryConfig cfg;
        cfg.rng_seed = seed;
        LocalClient a(g);
        LocalClient b(g);
        const auto x = discover_related(a, d, "Name", cfg);
        if (descriptors_text(x) != descriptors_text(discover_related(b, d, "Name", cfg))) {
            o.fail("seed " + std::to_string(seed) + " not reproducible");
        }
        if (x.size() > 50) o.fail("returned " + std::to_string(x.size()) + " attributes");
    }
    const auto small = share(wide_graph(30, 12, 5));
    const auto sd = entity_label_dataset(*small, 30);
    LocalClient c(small);
    DiscoveryConfig cfg;
    cfg.sample_size = 30;
    cfg.rng_seed = 11;
    for (const auto& desc : discover_related(c, sd, "Name", cfg)) {
        std::size_t holders = 0;
        for (const auto& e : small->entities()) holders += small->statements_of(e.id, desc.property).empty() ? 0 : 1;
        if (desc.coverage != static_cast<double>(holders) / 30.0) o.fail("inexact coverage for " + desc.property.id);
    }
}

std::multiset<std::vector<std::string>> rendered_rows(const BindingTable& t) {
    std::multiset<std::vector<std::string>> out;
    for (const auto& row : t.rows) {
        std::vector<std::string> r;
        for (const auto& cell : row) r.push_back(cell ? term_to_value(*cell).render() : "<unbound>");
        out.insert(std::move(r));
    }
    return out;
}

void dialect_round_trip(Outcome& o) {
    std::size_t checked = 0;
    for (const auto* g : {&mini_countries(), &acled_graph()}) {
        const auto lookup = graph_lookup(*g);
        std::vector<EntityId> all;
        for (const auto& e : g->entities()) all.push_back(e.id);
        std::set<std::vector<std::string>> seen;
        for (std::size_t depth = 1; depth <= 3; ++depth) {
            for (const auto& plan : enumerate_plans(*g, depth)) {
                std::vector<std::string> path;
                for (const auto& h : plan.hops) path.push_back(h.property.id);
                if (!seen.insert(path).second) continue;
                std::multiset<std::vector<std::string>> expected;
                for (const auto& e : all) {
                    std::vector<std::vector<std::string>> rows;
                    std::vector<std::string> prefix{e.id};
                    oracle_chains(*g, plan, e, 0, prefix, rows);
                    expected.insert(rows.begin(), rows.end());
                }
                for (auto dialect : {Dialect::local, Dialect::wikidata}) {
                    const auto q = compile_values_fetch(plan, lookup, all, dialect);
                    check_select_syntax(q.text);
                    if (rendered_rows(execute_select(*g, q.text)) != expected) {
                        o.fail("rows differ for path " + json(path).dump());
                    }
                    ++checked;
                }
            }
        }
    }
    std::size_t goldens = 0;
    for (const auto& [name, text] : golden_cases()) {
        if (read_file(golden_path(name)) != text) o.fail("golden drift: " + name);
        ++goldens;
    }
    if (o.ok) o.detail = std::to_string(checked) + " queries, " + std::to_string(goldens) + " goldens";
}

void preview_contract(Outcome& o) {
    for (std::size_t n : {3u, 10u, 11u, 1200u}) {
        const auto g = share(coverage_graph(n, n * 2 / 3));
        const auto d = entity_label_dataset(*g, n);
        CountingClient c(g);
        JoinPlan plan{"Name", {{PropertyId{"P1"}, AggOp::sample, std::nullopt}}, "", 42};
        const auto p = preview_join(c, d, plan);
        const std::size_t want = std::min<std::size_t>(10, n);
        if (p.rows.size() != want || c.searches.load() != want || c.entities_fetched.load() != want) {
            o.fail("n=" + std::to_string(n) + ": touched " + std::to_string(c.searches.load()) + " rows");
        }
        const auto full = materialize(c, d, plan).columns().back();
        for (std::size_t i = 0; i < p.rows.size(); ++i) {
            const auto rendered = p.values[i] ? std::optional<std::string>(p.values[i]->render()) : std::nullopt;
            if (full.cells[p.rows[i]] != rendered) o.fail("preview row " + std::to_string(i) + " differs");
        }
    }
}

void aggregation_properties(Outcome& o) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> mag(-1e4, 1e4);
    const std::vector<Value> none;
    if (aggregate(none, AggOp::count, 0) != Value::number(0)) o.fail("count{} != 0");
    for (auto op : {AggOp::mean, AggOp::max, AggOp::min, AggOp::sum, AggOp::variance, AggOp::sample, AggOp::value}) {
        if (aggregate(none, op, 0)) o.fail(std::string(to_string(op)) + "{} not null");
    }
    std::size_t lists = 0;
    for (; lists < 2000; ++lists) {
        const std::size_t n = 1 + rng() % 30;
        std::vector<Value> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back(Value::number(std::round(mag(rng) * 100) / 100));
        const double mn = aggregate(v, AggOp::min, 0)->as_number();
        const double mx = aggregate(v, AggOp::max, 0)->as_number();
        const double mean = aggregate(v, AggOp::mean, 0)->as_number();
        const double var = aggregate(v, AggOp::variance, 0)->as_number();
        if (!(mn <= mean && mean <= mx)) o.fail("mean outside [min,max]");
        if (var < 0 || (n == 1 && var != 0)) o.fail("variance sign");
        const auto seed = rng();
        if (aggregate(v, AggOp::sample, seed) != aggregate(v, AggOp::sample, seed)) o.fail("sample not deterministic");
    }
    if (o.ok) o.detail = std::to_string(lists) + " random lists";
}

struct RunningService {
    explicit RunningService(ServiceConfig cfg) : service(std::move(cfg)) {
        port = service.bind();
        thread = std::thread([this] { service.serve(); });
        http = std::make_unique<httplib::Client>("127.0.0.1", port);
        for (int i = 0; i < 200 && !http->Get("/backends"); ++i) {
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }
    ~RunningService() {
        service.stop();
        thread.join();
    }
    Service service;
    int port = 0;
    std::thread thread;
    std::unique_ptr<httplib::Client> http;
};

void cli_end_to_end(Outcome& o) {
    const auto dir = std::filesystem::temp_directory_path() / "kgforage_acceptance";
    std::filesystem::create_directories(dir);
    const auto out_csv = (dir / "acled_augmented.csv").string();
    const std::string backend = "local:" + data_path("acled_graph.jsonl");
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli({"join", "--input", data_path("acled_events.csv"), "--plans",
                              data_path("acled_plans.json"), "--output", out_csv, "--backend", backend},
                             out, err);
    if (code != exit_ok) {
        o.fail("cli exit " + std::to_string(code) + ": " + err.str());
        return;
    }
    const auto cli_bytes = read_file(out_csv);
    const auto augmented = import_csv(cli_bytes);
    const auto& g = acled_graph();
    std::size_t resolved = 0;
    for (std::size_t r = 0; r < augmented.row_count(); ++r) {
        if (!oracle_resolve(g, augmented.column("Country").cells[r])) continue;
        ++resolved;
        for (const char* name : {"basic form of government", "government type"}) {
            const auto& cell = augmented.column(name).cells[r];
            if (!cell || cell->empty()) o.fail(std::string(name) + " empty on row " + std::to_string(r));
        }
    }
    if (resolved == 0) o.fail("no rows resolved");

    ServiceConfig cfg;
    cfg.port = 0;
    cfg.backends.push_back(BackendConfig::from_selector(backend));
    RunningService svc(cfg);
    auto created = svc.http->Post("/sessions", read_file(data_path("acled_events.csv")), "text/csv");
    if (!created || created->status != 200) {
        o.fail("session create failed");
        return;
    }
    const auto id = json::parse(created->body)["session_id"].get<std::string>();
    for (const auto& plan : json::parse(read_file(data_path("acled_plans.json")))) {
        auto r = svc.http->Post("/sessions/" + id + "/joins", plan.dump(), "application/json");
        if (!r || r->status != 200) {
            o.fail("service join failed");
            return;
        }
    }
    const auto exported = svc.http->Get("/sessions/" + id + "/export");
    if (!exported || exported->body != cli_bytes) o.fail("service export differs from cli output");
    if (o.ok) o.detail = std::to_string(resolved) + "/" + std::to_string(augmented.row_count()) + " rows resolved";
}

// Network-dependent; reported but never counted as a failure.
void live_wikidata() {
    if (std::getenv("KGFORAGE_LIVE") == nullptr) {
        std::cout << "SKIP live Wikidata discovery -- set KGFORAGE_LIVE=1 to run" << std::endl;
        return;
    }
    const std::vector<std::string> names{
        "Egypt",   "Iran",   "Iraq",     "Jordan", "Lebanon", "Libya",   "Saudi Arabia", "Syria",   "Turkey",
        "Yemen",   "Israel", "Kuwait",   "Qatar",  "Bahrain", "Oman",    "Morocco",      "Tunisia", "Algeria",
        "Sudan",   "France", "Germany",  "Japan",  "Brazil",  "Canada",  "India"};
    std::vector<std::optional<std::string>> cells(names.begin(), names.end());
    const auto t0 = Clock::now();
    try {
        auto client = make_client(BackendConfig::from_selector("remote:"));
        const auto ds = discover_related(*client, column_dataset("Country", cells), "Country");
        bool found = false;
        for (const auto& d : ds) found = found || d.label == "basic form of government";
        const double secs = seconds_since(t0);
        std::cout << (found && secs < 30 ? "PASS" : "FAIL") << " live Wikidata discovery -- " << ds.size()
                  << " attributes in " << secs << " s (informational)" << std::endl;
    } catch (const std::exception& e) {
        std::cout << "FAIL live Wikidata discovery -- " << e.what() << " (informational)" << std::endl;
    }
}

}  // namespace

int main() {
    criterion("oracle equivalence", oracle_equivalence);
    criterion("multi-hop order", multi_hop_order);
    criterion("coverage calibration", coverage_calibration);
    criterion("discovery determinism and bounds", discovery_bounds);
    criterion("query dialect round-trip", dialect_round_trip);
    criterion("preview contract", preview_contract);
    criterion("aggregation properties", aggregation_properties);
    criterion("end-to-end cli join", cli_end_to_end);
    live_wikidata();
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
