#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "kgforage/errors.hpp"
#include "kgforage/materializer.hpp"
#include "kgforage/query_gen.hpp"
#include "oracle.hpp"
#include "synthetic.hpp"
#include "test_support.hpp"

using namespace kgforage;
using namespace kgforage::testing;

namespace {

Dataset countries() {
    return import_csv(read_file(data_path("countries.csv")));
}

JoinPlan plan1(const char* p, AggOp op) {
    return JoinPlan{"Country", {{PropertyId{p}, op, {}}}, "", std::nullopt};
}

JoinPlan plan2(const char* p, AggOp combine, const char* q, AggOp op) {
    return JoinPlan{"Country", {{PropertyId{p}, AggOp::through, combine}, {PropertyId{q}, op, {}}}, "",
                    std::nullopt};
}

std::vector<Value> nums(std::initializer_list<double> xs) {
    std::vector<Value> out;
    for (double x : xs) out.push_back(Value::number(x));
    return out;
}

std::vector<std::optional<std::string>> cells(const Dataset& d) {
    return d.columns().back().cells;
}

ValueTree atlantis_tree() {
    ValueTree t;
    t.root = EntityId{"Q1"};
    t.depth = 2;
    t.node.children.push_back({EntityId{"Q2"}, ValueNode{nums({60, 65}), {}}});
    t.node.children.push_back({EntityId{"Q3"}, ValueNode{nums({80}), {}}});
    return t;
}

std::shared_ptr<CountingClient> mini_client() {
    return std::make_shared<CountingClient>(share(mini_countries()));
}

}  // namespace

TEST(Aggregate, WorkedExamples) {
    const auto v = nums({100, 200, 300});
    EXPECT_DOUBLE_EQ(aggregate(v, AggOp::mean, 0)->as_number(), 200);
    EXPECT_NEAR(aggregate(v, AggOp::variance, 0)->as_number(), 20000.0 / 3.0, 1e-9);
    EXPECT_DOUBLE_EQ(aggregate(v, AggOp::sum, 0)->as_number(), 600);
    EXPECT_DOUBLE_EQ(aggregate(v, AggOp::max, 0)->as_number(), 300);
    EXPECT_DOUBLE_EQ(aggregate(v, AggOp::min, 0)->as_number(), 100);
    EXPECT_DOUBLE_EQ(aggregate(v, AggOp::count, 0)->as_number(), 3);
}

TEST(Aggregate, EmptySetRules) {
    const std::vector<Value> none;
    EXPECT_DOUBLE_EQ(aggregate(none, AggOp::count, 0)->as_number(), 0);
    for (auto op : {AggOp::mean, AggOp::max, AggOp::min, AggOp::sum, AggOp::variance, AggOp::sample,
                    AggOp::value}) {
        EXPECT_FALSE(aggregate(none, op, 0)) << to_string(op);
    }
}

TEST(Aggregate, IllegalAndMultiplicity) {
    EXPECT_THROW(aggregate(nums({60, 65}), AggOp::value, 0), MultiplicityViolation);
    EXPECT_EQ(aggregate(nums({60}), AggOp::value, 0), Value::number(60));
    EXPECT_THROW(aggregate(nums({1}), AggOp::through, 0), IllegalOp);
    const std::vector<Value> text{Value::text("a"), Value::text("b")};
    EXPECT_THROW(aggregate(text, AggOp::mean, 0), IllegalOp);
    EXPECT_THROW(aggregate(text, AggOp::max, 0), IllegalOp);
    EXPECT_EQ(aggregate(text, AggOp::count, 0), Value::number(2));
    const std::vector<Value> mixed{Value::number(1), Value(*DateTime::parse("2000-01-01"))};
    EXPECT_THROW(aggregate(mixed, AggOp::min, 0), IllegalOp);
}

TEST(Aggregate, DatetimesChronological) {
    const std::vector<Value> ds{Value(*DateTime::parse("2001-05-01")), Value(*DateTime::parse("1999-12-31")),
                                Value(*DateTime::parse("2001-05-01T10:00:00+02:00"))};
    EXPECT_EQ(aggregate(ds, AggOp::min, 0)->as_datetime().iso, "1999-12-31T00:00:00Z");
    EXPECT_EQ(aggregate(ds, AggOp::max, 0)->as_datetime().iso, "2001-05-01T08:00:00Z");
}

TEST(Aggregate, SampleIgnoresInputOrder) {
    auto v = nums({5, 1, 9, 3});
    const auto a = aggregate(v, AggOp::sample, 1234);
    std::reverse(v.begin(), v.end());
    EXPECT_EQ(aggregate(v, AggOp::sample, 1234), a);
}

// Random numeric lists: ordering and sign properties of the statistics.
TEST(Aggregate, NumericProperties) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> mag(-1e6, 1e6);
    for (int trial = 0; trial < 1500; ++trial) {
        const std::size_t n = 1 + rng() % 40;
        std::vector<Value> v;
        const bool constant = trial % 7 == 0;
        const double c = mag(rng);
        for (std::size_t i = 0; i < n; ++i) v.push_back(Value::number(constant ? c : mag(rng)));
        const double mn = aggregate(v, AggOp::min, 0)->as_number();
        const double mx = aggregate(v, AggOp::max, 0)->as_number();
        const double mean = aggregate(v, AggOp::mean, 0)->as_number();
        const double var = aggregate(v, AggOp::variance, 0)->as_number();
        EXPECT_LE(mn, mean);
        EXPECT_LE(mean, mx);
        EXPECT_GE(var, 0);
        if (n == 1) EXPECT_EQ(var, 0);
        if (constant) {
            EXPECT_EQ(var, 0);
            EXPECT_NEAR(aggregate(v, AggOp::sum, 0)->as_number(), static_cast<double>(n) * mean,
                        1e-9 * std::abs(static_cast<double>(n) * mean) + 1e-9);
        }
        const auto seed = rng();
        EXPECT_EQ(aggregate(v, AggOp::sample, seed), aggregate(v, AggOp::sample, seed));
        const auto s = aggregate(v, AggOp::sample, seed)->as_number();
        EXPECT_TRUE(s >= mn && s <= mx);
    }
}

TEST(Sampling, IndexUniformEnough) {
    std::vector<int> hist(5, 0);
    for (std::uint64_t s = 0; s < 5000; ++s) ++hist[sample_index(s, 5)];
    for (int h : hist) EXPECT_NEAR(h, 1000, 150);
    EXPECT_THROW(sample_index(1, 0), Error);
    const std::vector<EntityId> path{EntityId{"Q2"}};
    EXPECT_NE(node_seed(0, EntityId{"Q1"}, {}), node_seed(0, EntityId{"Q1"}, path));
    EXPECT_NE(node_seed(0, EntityId{"Q1"}, {}), node_seed(1, EntityId{"Q1"}, {}));
    EXPECT_EQ(node_seed(7, EntityId{"Q1"}, path), node_seed(7, EntityId{"Q1"}, path));
}

TEST(FoldTree, InnerFirstThenOuter) {
    const auto t = atlantis_tree();
    EXPECT_EQ(fold_tree(t, plan2("P2", AggOp::min, "P3", AggOp::max)), Value::number(65));
    EXPECT_EQ(fold_tree(t, plan2("P2", AggOp::max, "P3", AggOp::mean)), Value::number(80));
    // The two-level fold does not commute.
    EXPECT_EQ(fold_tree(t, plan2("P2", AggOp::max, "P3", AggOp::min)), Value::number(80));
    EXPECT_EQ(fold_tree(t, plan2("P2", AggOp::count, "P3", AggOp::max)), Value::number(2));
}

TEST(FoldTree, ShapeMismatch) {
    EXPECT_THROW(fold_tree(atlantis_tree(), plan1("P3", AggOp::max)), ShapeMismatch);
    ValueTree flat;
    flat.depth = 2;
    flat.node.leaves = nums({1});
    EXPECT_THROW(fold_tree(flat, plan2("P2", AggOp::min, "P3", AggOp::max)), ShapeMismatch);
}

TEST(FoldTree, EmptyTreeFollowsEmptySetRules) {
    ValueTree t;
    t.root = EntityId{"Q3"};
    t.depth = 1;
    EXPECT_EQ(fold_tree(t, plan1("P1", AggOp::count)), Value::number(0));
    EXPECT_FALSE(fold_tree(t, plan1("P1", AggOp::mean)));
}

TEST(BuildTrees, GroupsChildrenInFirstSeenOrder) {
    const auto& g = mini_countries();
    const std::vector<EntityId> ents{EntityId{"Q1"}};
    const auto plan = plan2("P2", AggOp::min, "P3", AggOp::max);
    const auto q = compile_values_fetch(JoinPlan{plan.source_column, plan.hops, "x", {}}, graph_lookup(g), ents);
    const auto trees = build_trees(execute_select(g, q.text), 2, Datatype::number);
    const auto& t = trees.at("Q1");
    ASSERT_EQ(t.node.children.size(), 2u);
    EXPECT_EQ(t.node.children[0].first, EntityId{"Q2"});
    EXPECT_EQ(t.node.children[0].second.leaves, nums({60, 65}));
    EXPECT_EQ(t.node.children[1].second.leaves, nums({80}));
    // Leaves of the wrong kind are dropped along with their branch.
    EXPECT_TRUE(build_trees(execute_select(g, q.text), 2, Datatype::string).empty());
}

TEST(Preview, MeanPopulation) {
    auto c = mini_client();
    const auto p = preview_join(*c, countries(), plan1("P1", AggOp::mean));
    ASSERT_EQ(p.values.size(), 3u);
    EXPECT_EQ(p.values[0], Value::number(200));
    EXPECT_EQ(p.values[1], Value::number(1000));
    EXPECT_FALSE(p.values[2]);
    EXPECT_EQ(p.null_count, 1u);
    EXPECT_EQ(p.plan.output_name, "mean of population");
    const auto j = preview_to_json(p);
    EXPECT_EQ(j["values"][0]["number"], 200);
    EXPECT_TRUE(j["values"][2].is_null());
}

TEST(Preview, TouchesOnlyTenRows) {
    const auto g = share(coverage_graph(1200, 900));
    const auto d = entity_label_dataset(*g, 1200);
    CountingClient c(g);
    JoinPlan plan{"Name", {{PropertyId{"P1"}, AggOp::max, {}}}, "", {}};
    const auto p = preview_join(c, d, plan);
    EXPECT_EQ(p.values.size(), 10u);
    EXPECT_EQ(c.searches.load(), 10u);
    EXPECT_EQ(c.entities_fetched.load(), 10u);
}

TEST(Preview, RejectsNumericSource) {
    auto c = mini_client();
    const auto d = import_csv("n\n1\n");
    JoinPlan plan{"n", {{PropertyId{"P1"}, AggOp::mean, {}}}, "", {}};
    EXPECT_THROW(preview_join(*c, d, plan), InvalidPlan);
    JoinPlan missing{"zzz", {{PropertyId{"P1"}, AggOp::mean, {}}}, "", {}};
    EXPECT_THROW(preview_join(*c, d, missing), UnknownColumn);
}

TEST(Materialize, CountBorders) {
    auto c = mini_client();
    const auto d = materialize(*c, countries(), plan1("P2", AggOp::count));
    EXPECT_EQ(cells(d), (std::vector<std::optional<std::string>>{"2", "1", "1"}));
    EXPECT_EQ(d.columns().back().ctype, ColumnType::number);
    EXPECT_EQ(d.columns().back().provenance->parent_column, "Country");
}

TEST(Materialize, ThroughJoinRows) {
    auto c = mini_client();
    const auto d = materialize(*c, countries(), plan2("P2", AggOp::min, "P3", AggOp::max));
    EXPECT_EQ(cells(d), (std::vector<std::optional<std::string>>{"65", "70", "70"}));
    EXPECT_EQ(d.columns().back().name, "min over sharesBorderWith of max of lifeExpectancy");
    EXPECT_EQ(d.columns().back().provenance->unit, std::optional<std::string>("year"));
}

TEST(Materialize, EntityResultsRenderLabels) {
    auto c = mini_client();
    auto plan = plan1("P2", AggOp::sample);
    plan.rng_seed = 5;
    const auto d = materialize(*c, countries(), plan);
    const auto& col = d.columns().back();
    EXPECT_EQ(col.ctype, ColumnType::string);
    ASSERT_EQ(col.provenance->entity_ids.size(), 3u);
    for (std::size_t r = 0; r < 3; ++r) {
        const auto id = col.provenance->entity_ids[r];
        ASSERT_TRUE(id);
        EXPECT_EQ(*col.cells[r], mini_countries().find_entity(id->id)->label);
    }
    EXPECT_EQ(*col.cells[1], "Atlantis");
}

TEST(Materialize, DatetimeAndUnresolved) {
    auto c = mini_client();
    const auto d = import_csv("Country\nAtlantis\nNarnia\n\"\"\n");
    const auto out = materialize(*c, d, plan1("P4", AggOp::count));
    EXPECT_EQ(cells(out), (std::vector<std::optional<std::string>>{"0", std::nullopt, std::nullopt}));
}

TEST(Materialize, IdempotentAndRenamed) {
    auto c = mini_client();
    auto d = materialize(*c, countries(), plan1("P1", AggOp::sum));
    d = materialize(*c, d, plan1("P1", AggOp::sum));
    ASSERT_EQ(d.columns().size(), 3u);
    EXPECT_EQ(d.columns()[1].cells, d.columns()[2].cells);
    EXPECT_EQ(d.columns()[2].name, "sum of population (2)");
}

TEST(Materialize, DuplicateCellsResolveOnce) {
    auto c = mini_client();
    std::vector<std::optional<std::string>> cs;
    for (int i = 0; i < 60; ++i) cs.emplace_back(i % 2 ? "Atlantis" : "Borduria");
    materialize(*c, column_dataset("Country", cs), plan1("P1", AggOp::max));
    EXPECT_EQ(c->searches.load(), 2u);
    EXPECT_EQ(c->entities_fetched.load(), 2u);
}

TEST(Materialize, MultiplicityAtJoinTime) {
    auto c = mini_client();
    EXPECT_THROW(materialize(*c, countries(), plan1("P3", AggOp::value)), MultiplicityViolation);
}

TEST(Materialize, BackendFailureLeavesDatasetUnchanged) {
    auto c = mini_client();
    const auto before = countries();
    c->fail_selects = true;
    EXPECT_THROW(materialize(*c, before, plan1("P1", AggOp::mean)), BackendUnavailable);
    EXPECT_EQ(before.columns().size(), 1u);
}

TEST(Materialize, PreviewAgreesWithFullJoin) {
    const auto g = share(coverage_graph(40, 25));
    const auto d = entity_label_dataset(*g, 40);
    CountingClient c(g);
    JoinPlan plan{"Name", {{PropertyId{"P1"}, AggOp::sample, {}}}, "", 77};
    const auto p = preview_join(c, d, plan);
    const auto full = materialize(c, d, plan);
    for (std::size_t r = 0; r < p.rows.size(); ++r) {
        const auto& cell = full.columns().back().cells[p.rows[r]];
        if (p.values[r]) {
            EXPECT_EQ(cell, p.values[r]->render());
        } else {
            EXPECT_FALSE(cell);
        }
    }
}

// All depth <= 2 plans over the fixture, row by row, against the brute-force walk.
TEST(Materialize, MatchesOracle) {
    const auto& g = mini_countries();
    const auto d = import_csv("Country\nAtlantis\nBorduria\nCascadia\nNarnia\n\"\"\nATL\n");
    auto c = mini_client();
    std::size_t plans = 0;
    for (std::size_t depth = 1; depth <= 2; ++depth) {
        for (auto plan : enumerate_plans(g, depth)) {
            plan.output_name.clear();
            plan.rng_seed = plans % 3 == 0 ? std::nullopt : std::optional<std::uint64_t>(plans);
            ++plans;
            std::vector<std::optional<Value>> expected;
            bool oracle_multi = false;
            try {
                for (std::size_t r = 0; r < d.row_count(); ++r) {
                    expected.push_back(oracle_join(g, plan, d.columns()[0].cells[r]));
                }
            } catch (const OracleMultiplicity&) {
                oracle_multi = true;
            }
            if (oracle_multi) {
                EXPECT_THROW(join_values(*c, d, prepare_plan(*c, d, plan), std::vector<std::size_t>{0, 1, 2, 3, 4, 5}),
                             MultiplicityViolation)
                    << plan_to_json(plan).dump();
                continue;
            }
            const auto got = join_values(*c, d, prepare_plan(*c, d, plan), std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
            ASSERT_EQ(got.size(), expected.size());
            for (std::size_t r = 0; r < got.size(); ++r) {
                ASSERT_EQ(got[r].has_value(), expected[r].has_value()) << plan_to_json(plan).dump() << " row " << r;
                if (!got[r]) continue;
                if (got[r]->is_number()) {
                    EXPECT_NEAR(got[r]->as_number(), expected[r]->as_number(), 1e-9) << plan_to_json(plan).dump();
                } else {
                    EXPECT_EQ(*got[r], *expected[r]) << plan_to_json(plan).dump();
                }
            }
        }
    }
    EXPECT_GE(plans, 60u);
}

TEST(Subgraph, AtlantisExample) {
    auto c = mini_client();
    const auto s = example_subgraph(*c, countries(), plan2("P2", AggOp::min, "P3", AggOp::max), 0);
    EXPECT_EQ(s.root, EntityId{"Q1"});
    ASSERT_EQ(s.tree.node.children.size(), 2u);
    EXPECT_EQ(s.tree.node.children[0].second.leaves, nums({60, 65}));
    EXPECT_EQ(s.computed_result, Value::number(65));
    EXPECT_EQ(s.level_ops, (std::vector<AggOp>{AggOp::min, AggOp::max}));

    const std::vector<std::optional<AggOp>> ops{AggOp::max, AggOp::mean};
    const auto swapped = example_subgraph(*c, countries(), plan2("P2", AggOp::min, "P3", AggOp::max), 0, ops);
    EXPECT_EQ(swapped.computed_result, Value::number(80));
    const auto j = subgraph_to_json(swapped);
    EXPECT_EQ(j["root"]["label"], "Atlantis");
    EXPECT_EQ(j["root"]["children"][0]["label"], "Borduria");
    EXPECT_EQ(j["computed_result"]["number"], 80);
    EXPECT_EQ(j["levels"][0]["op"], "max");
}

TEST(Subgraph, ShowsThreeOfSixNeighbors) {
    KnowledgeGraph::Builder b;
    b.add_property({PropertyId{"P2"}, "sharesBorderWith", "", Datatype::entity, std::nullopt});
    b.add_property({PropertyId{"P3"}, "lifeExpectancy", "", Datatype::number, std::string("year")});
    b.add_entity({EntityId{"Q100"}, "Hub", {}, ""});
    for (int i = 1; i <= 6; ++i) {
        const EntityId n{"Q" + std::to_string(i)};
        b.add_entity({n, "N" + std::to_string(i), {}, ""});
        for (int k = 0; k < 5; ++k) b.add_statement({n, PropertyId{"P3"}, Value::number(50 + i + k)});
    }
    for (int i = 1; i <= 6; ++i) {
        b.add_statement({EntityId{"Q100"}, PropertyId{"P2"}, Value::entity("Q" + std::to_string(i))});
    }
    CountingClient c(share(std::move(b).build()));
    const auto d = import_csv("Country\nHub\n");
    const auto s = example_subgraph(c, d, plan2("P2", AggOp::max, "P3", AggOp::max), 0);
    ASSERT_EQ(s.tree.node.children.size(), 3u);
    EXPECT_EQ(s.tree.node.children[0].first, EntityId{"Q1"});
    EXPECT_EQ(s.tree.node.children[2].first, EntityId{"Q3"});
    for (const auto& [id, child] : s.tree.node.children) EXPECT_EQ(child.leaves.size(), 3u);
    // Illustrative only: the full join would see Q6's larger values.
    EXPECT_EQ(s.computed_result, Value::number(55));
    EXPECT_EQ(materialize(c, d, plan2("P2", AggOp::max, "P3", AggOp::max)).columns().back().cells[0], "60");
}

TEST(Subgraph, Errors) {
    auto c = mini_client();
    const auto d = import_csv("Country\n\"\"\nNarnia\nAtlantis\n");
    const auto plan = plan2("P2", AggOp::min, "P3", AggOp::max);
    EXPECT_THROW(example_subgraph(*c, d, plan, 0), RowUnresolvable);
    EXPECT_THROW(example_subgraph(*c, d, plan, 1), RowUnresolvable);
    EXPECT_THROW(example_subgraph(*c, d, plan, 9), RowUnresolvable);
    EXPECT_THROW(example_subgraph(*c, d, plan1("P1", AggOp::mean), 2), InvalidPlan);
    const std::vector<std::optional<AggOp>> bad{AggOp::mean, AggOp::sample};
    EXPECT_THROW(example_subgraph(*c, countries(), plan2("P2", AggOp::min, "P5", AggOp::count), 0, bad),
                 InvalidPlan);
}
