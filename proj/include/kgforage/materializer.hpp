#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgforage/kg_client.hpp"
#include "kgforage/planner.hpp"
#include "kgforage/sparql.hpp"
#include "kgforage/tabular.hpp"

namespace kgforage {

// Seed for the `sample` draw at one node of a row's tree. `path` lists the
// intermediate entities from the root down to the node.
std::uint64_t node_seed(std::uint64_t plan_seed, const EntityId& root,
                        std::span<const EntityId> path);

// Uniform index in [0, n) from a seed; n must be positive.
std::size_t sample_index(std::uint64_t seed, std::size_t n);

// count -> number of values (0 when empty); every other op -> nullopt on an
// empty list. `sample` draws from the values in sorted order.
// Throws IllegalOp, MultiplicityViolation.
std::optional<Value> aggregate(std::span<const Value> values, AggOp op, std::uint64_t seed);

struct ValueNode {
    std::vector<Value> leaves;                             // final level only
    std::vector<std::pair<EntityId, ValueNode>> children;  // first-seen order
};

// The neighborhood one row's entity reaches along a plan.
struct ValueTree {
    EntityId root;
    std::size_t depth = 1;
    ValueNode node;
};

// Groups chain bindings (?e ?x1 ... ?xk) into one tree per root entity.
// Leaves whose kind is not `final_type` are dropped, and so are branches
// left empty.
std::map<std::string, ValueTree> build_trees(const BindingTable& table, std::size_t depth,
                                             Datatype final_type);

// Innermost op at the leaves, then each through level's combine op over its
// children's non-null results. Throws ShapeMismatch.
std::optional<Value> fold_tree(const ValueTree& tree, const JoinPlan& plan);

// Fills a missing output name from describe() and validates the plan
// against the dataset. Throws InvalidPlan, UnknownColumn.
JoinPlan prepare_plan(KgClient& client, const Dataset& dataset, JoinPlan plan);

struct JoinPreview {
    std::vector<std::size_t> rows;
    std::vector<std::optional<Value>> values;
    JoinPlan plan;
    std::size_t null_count = 0;
    std::map<std::string, std::string> labels;  // entity id -> label
};

inline constexpr std::size_t kPreviewRows = 10;

// Joins only the first min(10, row_count) rows.
JoinPreview preview_join(KgClient& client, const Dataset& dataset, const JoinPlan& plan);

// Joined values for the given rows, unrendered. Distinct cells resolve once.
std::vector<std::optional<Value>> join_values(KgClient& client, const Dataset& dataset,
                                              const JoinPlan& plan,
                                              std::span<const std::size_t> rows);

// Appends the joined column for every row. Nothing is appended on failure.
Dataset materialize(KgClient& client, const Dataset& dataset, const JoinPlan& plan);

struct SubgraphSample {
    std::size_t row = 0;
    EntityId root;
    ValueTree tree;                 // truncated to kSubgraphBranches per level
    std::vector<AggOp> level_ops;   // one per hop: combine ops, then the final op
    std::optional<Value> computed_result;  // fold over the truncated tree only
    std::map<std::string, std::string> labels;
    JoinPlan plan;
};

inline constexpr std::size_t kSubgraphBranches = 3;

// Example neighborhood of one row for a plan of depth >= 2. `level_ops`
// replaces the op at each level where set, without touching `plan`.
// Throws RowUnresolvable, InvalidPlan.
SubgraphSample example_subgraph(KgClient& client, const Dataset& dataset, const JoinPlan& plan,
                                std::size_t row,
                                std::span<const std::optional<AggOp>> level_ops = {});

// The plan with each level's op replaced where `level_ops` is set.
JoinPlan with_level_ops(JoinPlan plan, std::span<const std::optional<AggOp>> level_ops);

nlohmann::json preview_to_json(const JoinPreview& p);
nlohmann::json subgraph_to_json(const SubgraphSample& s);

}  // namespace kgforage
