#include "kgforage/materializer.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "kgforage/discovery.hpp"
#include "kgforage/errors.hpp"
#include "kgforage/query_gen.hpp"

namespace kgforage {

using json = nlohmann::json;

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, std::string_view bytes) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    h ^= 0xff;  // separator, so ("ab","c") and ("a","bc") differ
    h *= kFnvPrime;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<double> numbers_of(std::span<const Value> values, AggOp op) {
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& v : values) {
        if (!v.is_number()) {
            throw IllegalOp(std::string(to_string(op)) + " needs numbers, got " +
                            std::string(to_string(v.kind())));
        }
        out.push_back(v.as_number());
    }
    return out;
}

const Value& extreme(std::span<const Value> values, AggOp op) {
    const Datatype kind = values.front().kind();
    if (kind != Datatype::number && kind != Datatype::datetime) {
        throw IllegalOp(std::string(to_string(op)) + " needs numbers or datetimes, got " +
                        std::string(to_string(kind)));
    }
    for (const auto& v : values) {
        if (v.kind() != kind) {
            throw IllegalOp(std::string(to_string(op)) + " over mixed value kinds");
        }
    }
    auto less = [](const Value& a, const Value& b) { return a < b; };
    return op == AggOp::max ? *std::max_element(values.begin(), values.end(), less)
                            : *std::min_element(values.begin(), values.end(), less);
}

// Mean clamped into [min, max]; summation rounding can otherwise push it out.
double mean_of(const std::vector<double>& xs) {
    double sum = 0;
    for (double x : xs) {
        sum += x;
    }
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    return std::clamp(sum / static_cast<double>(xs.size()), *lo, *hi);
}

struct NodeBuilder {
    std::vector<Value> leaves;
    std::vector<std::pair<EntityId, NodeBuilder>> children;
    std::unordered_map<std::string, std::size_t> index;

    NodeBuilder& child(const EntityId& id) {
        auto [it, fresh] = index.try_emplace(id.id, children.size());
        if (fresh) {
            children.emplace_back(id, NodeBuilder{});
        }
        return children[it->second].second;
    }

    ValueNode finish() && {
        ValueNode n;
        n.leaves = std::move(leaves);
        n.children.reserve(children.size());
        for (auto& [id, c] : children) {
            n.children.emplace_back(std::move(id), std::move(c).finish());
        }
        return n;
    }
};

std::optional<Value> fold_node(const ValueNode& node, const JoinPlan& plan, std::size_t level,
                               std::uint64_t seed, const EntityId& root,
                               std::vector<EntityId>& path) {
    const Hop& hop = plan.hops[level];
    if (level + 1 == plan.hops.size()) {
        if (!node.children.empty()) {
            throw ShapeMismatch("tree is deeper than the plan");
        }
        return aggregate(node.leaves, hop.agg, node_seed(seed, root, path));
    }
    if (!node.leaves.empty()) {
        throw ShapeMismatch("values found at intermediate level " + std::to_string(level));
    }
    if (!hop.combine) {
        throw ShapeMismatch("through hop " + std::to_string(level) + " has no combine op");
    }
    std::vector<Value> results;
    results.reserve(node.children.size());
    for (const auto& [id, child] : node.children) {
        path.push_back(id);
        auto r = fold_node(child, plan, level + 1, seed, root, path);
        path.pop_back();
        if (r) {
            results.push_back(std::move(*r));
        }
    }
    return aggregate(results, *hop.combine, node_seed(seed, root, path));
}

ValueNode truncate(const ValueNode& node, std::size_t keep) {
    ValueNode out;
    out.leaves.assign(node.leaves.begin(),
                      node.leaves.begin() + static_cast<std::ptrdiff_t>(std::min(keep, node.leaves.size())));
    for (std::size_t i = 0; i < node.children.size() && i < keep; ++i) {
        out.children.emplace_back(node.children[i].first, truncate(node.children[i].second, keep));
    }
    return out;
}

void collect_entities(const ValueNode& node, std::vector<EntityId>& out) {
    for (const auto& v : node.leaves) {
        if (v.is_entity()) {
            out.push_back(v.as_entity());
        }
    }
    for (const auto& [id, child] : node.children) {
        out.push_back(id);
        collect_entities(child, out);
    }
}

std::map<std::string, std::string> labels_for(KgClient& client, std::vector<EntityId> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::map<std::string, std::string> out;
    if (ids.empty()) {
        return out;
    }
    for (auto& [id, label] : client.entity_labels(ids)) {
        out.emplace(id, std::move(label));
    }
    return out;
}

Datatype final_datatype(const JoinPlan& plan, const PropertyLookup& lookup) {
    const auto meta = lookup(plan.hops.back().property);
    if (!meta) {
        throw InvalidPlan({{static_cast<int>(plan.hops.size()) - 1,
                            "unknown property " + plan.hops.back().property.id}});
    }
    return meta->datatype;
}

ColumnType column_type_for(Datatype d) {
    switch (d) {
        case Datatype::number:
            return ColumnType::number;
        case Datatype::datetime:
            return ColumnType::datetime;
        case Datatype::string:
        case Datatype::entity:
            return ColumnType::string;
    }
    return ColumnType::string;
}

json node_to_json(const ValueNode& node, const std::map<std::string, std::string>& labels) {
    json j = json::object();
    if (!node.children.empty()) {
        json children = json::array();
        for (const auto& [id, child] : node.children) {
            json c = node_to_json(child, labels);
            c["entity"] = id.id;
            auto it = labels.find(id.id);
            c["label"] = it != labels.end() ? it->second : id.id;
            children.push_back(std::move(c));
        }
        j["children"] = std::move(children);
    } else {
        json leaves = json::array();
        for (const auto& v : node.leaves) {
            leaves.push_back(value_to_json(v, labels));
        }
        j["leaves"] = std::move(leaves);
    }
    return j;
}

}  // namespace

std::uint64_t node_seed(std::uint64_t plan_seed, const EntityId& root,
                        std::span<const EntityId> path) {
    std::uint64_t h = kFnvOffset;
    char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<char>((plan_seed >> (8 * i)) & 0xff);
    }
    fnv_mix(h, std::string_view(bytes, 8));
    fnv_mix(h, root.id);
    for (const auto& e : path) {
        fnv_mix(h, e.id);
    }
    return splitmix(h);
}

std::size_t sample_index(std::uint64_t seed, std::size_t n) {
    if (n == 0) {
        throw Error("sample_index needs a non-empty range");
    }
    std::mt19937_64 gen(seed);
    const auto range = static_cast<std::uint64_t>(n);
    // Reject the low 2^64 mod n draws so every residue is equally likely.
    const std::uint64_t threshold = (0 - range) % range;
    std::uint64_t r = gen();
    while (r < threshold) {
        r = gen();
    }
    return static_cast<std::size_t>(r % range);
}

std::optional<Value> aggregate(std::span<const Value> values, AggOp op, std::uint64_t seed) {
    if (op == AggOp::through) {
        throw IllegalOp("through is a traversal, not an aggregation");
    }
    if (op == AggOp::count) {
        return Value::number(static_cast<double>(values.size()));
    }
    if (values.empty()) {
        return std::nullopt;
    }
    switch (op) {
        case AggOp::mean:
            return Value::number(mean_of(numbers_of(values, op)));
        case AggOp::sum: {
            double s = 0;
            for (double x : numbers_of(values, op)) {
                s += x;
            }
            return Value::number(s);
        }
        case AggOp::variance: {
            const auto xs = numbers_of(values, op);
            const double m = mean_of(xs);
            double ss = 0;
            for (double x : xs) {
                ss += (x - m) * (x - m);
            }
            return Value::number(ss / static_cast<double>(xs.size()));
        }
        case AggOp::max:
        case AggOp::min:
            return extreme(values, op);
        case AggOp::sample: {
            std::vector<Value> sorted(values.begin(), values.end());
            std::sort(sorted.begin(), sorted.end(), [](const Value& a, const Value& b) { return a < b; });
            return sorted[sample_index(seed, sorted.size())];
        }
        case AggOp::value:
            if (values.size() > 1) {
                throw MultiplicityViolation(values.size());
            }
            return values.front();
        case AggOp::count:
        case AggOp::through:
            break;
    }
    throw IllegalOp("unhandled aggregation");
}

std::map<std::string, ValueTree> build_trees(const BindingTable& table, std::size_t depth,
                                             Datatype final_type) {
    if (depth == 0) {
        throw ShapeMismatch("plan depth must be at least 1");
    }
    std::vector<std::size_t> cols;
    const auto ce = table.column("e");
    if (!ce) {
        throw ShapeMismatch("bindings lack ?e");
    }
    cols.push_back(*ce);
    for (std::size_t k = 1; k <= depth; ++k) {
        const auto c = table.column("x" + std::to_string(k));
        if (!c) {
            throw ShapeMismatch("bindings lack ?x" + std::to_string(k));
        }
        cols.push_back(*c);
    }

    std::map<std::string, std::pair<EntityId, NodeBuilder>> roots;
    for (const auto& row : table.rows) {
        const auto& e = row[cols[0]];
        const auto* root = e ? std::get_if<EntityId>(&*e) : nullptr;
        if (root == nullptr) {
            continue;
        }
        std::vector<const EntityId*> path;
        bool ok = true;
        for (std::size_t k = 1; k < depth && ok; ++k) {
            const auto& t = row[cols[k]];
            const auto* id = t ? std::get_if<EntityId>(&*t) : nullptr;
            ok = id != nullptr;
            path.push_back(id);
        }
        const auto& leaf = row[cols[depth]];
        if (!ok || !leaf || std::holds_alternative<PropertyId>(*leaf)) {
            continue;
        }
        Value v = term_to_value(*leaf);
        if (v.kind() != final_type) {
            continue;
        }
        auto& slot = roots.try_emplace(root->id, *root, NodeBuilder{}).first->second;
        NodeBuilder* node = &slot.second;
        for (const auto* id : path) {
            node = &node->child(*id);
        }
        node->leaves.push_back(std::move(v));
    }

    std::map<std::string, ValueTree> out;
    for (auto& [key, slot] : roots) {
        ValueTree t;
        t.root = slot.first;
        t.depth = depth;
        t.node = std::move(slot.second).finish();
        out.emplace(key, std::move(t));
    }
    return out;
}

std::optional<Value> fold_tree(const ValueTree& tree, const JoinPlan& plan) {
    if (plan.hops.empty() || tree.depth != plan.depth()) {
        throw ShapeMismatch("tree depth " + std::to_string(tree.depth) + " does not match plan depth " +
                            std::to_string(plan.depth()));
    }
    std::vector<EntityId> path;
    return fold_node(tree.node, plan, 0, plan.rng_seed.value_or(0), tree.root, path);
}

JoinPlan prepare_plan(KgClient& client, const Dataset& dataset, JoinPlan plan) {
    const auto lookup = client.property_lookup();
    if (plan.output_name.empty()) {
        plan.output_name = describe(plan, lookup);
    }
    const Column& col = dataset.column(plan.source_column);
    if (col.ctype != ColumnType::string) {
        throw InvalidPlan({{-1, "source column '" + col.name + "' is " +
                                    std::string(to_string(col.ctype)) + ", joins need a string column"}});
    }
    require_valid(plan, lookup);
    return plan;
}

std::vector<std::optional<Value>> join_values(KgClient& client, const Dataset& dataset,
                                              const JoinPlan& plan,
                                              std::span<const std::size_t> rows) {
    const Column& col = dataset.column(plan.source_column);
    const auto lookup = client.property_lookup();

    std::vector<std::optional<EntityId>> row_entity(rows.size());
    std::unordered_map<std::string, std::optional<EntityId>> by_text;
    std::vector<EntityId> entities;
    std::unordered_set<std::string> seen;
    const bool stored_ids = col.provenance && !col.provenance->entity_ids.empty();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows[i];
        if (r >= dataset.row_count()) {
            throw Error("row " + std::to_string(r) + " is out of range");
        }
        if (stored_ids || !col.cells[r]) {
            row_entity[i] = resolve_cell(client, col, r);
        } else {
            auto [it, fresh] = by_text.try_emplace(normalize_cell(*col.cells[r]));
            if (fresh) {
                it->second = resolve_cell(client, col, r);
            }
            row_entity[i] = it->second;
        }
        if (row_entity[i] && seen.insert(row_entity[i]->id).second) {
            entities.push_back(*row_entity[i]);
        }
    }

    std::vector<std::optional<Value>> out(rows.size());
    if (entities.empty()) {
        return out;
    }
    const auto query = compile_values_fetch(plan, lookup, entities, client.dialect());
    const auto table = client.run_select_batched(query, entities);
    const auto trees = build_trees(table, plan.depth(), final_datatype(plan, lookup));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!row_entity[i]) {
            continue;
        }
        if (auto it = trees.find(row_entity[i]->id); it != trees.end()) {
            out[i] = fold_tree(it->second, plan);
        } else {
            ValueTree empty;
            empty.root = *row_entity[i];
            empty.depth = plan.depth();
            out[i] = fold_tree(empty, plan);
        }
    }
    return out;
}

JoinPreview preview_join(KgClient& client, const Dataset& dataset, const JoinPlan& plan) {
    JoinPreview p;
    p.plan = prepare_plan(client, dataset, plan);
    const auto n = std::min(kPreviewRows, dataset.row_count());
    for (std::size_t r = 0; r < n; ++r) {
        p.rows.push_back(r);
    }
    p.values = join_values(client, dataset, p.plan, p.rows);
    std::vector<EntityId> ids;
    for (const auto& v : p.values) {
        if (!v) {
            ++p.null_count;
        } else if (v->is_entity()) {
            ids.push_back(v->as_entity());
        }
    }
    p.labels = labels_for(client, std::move(ids));
    return p;
}

Dataset materialize(KgClient& client, const Dataset& dataset, const JoinPlan& plan) {
    const JoinPlan prepared = prepare_plan(client, dataset, plan);
    const auto lookup = client.property_lookup();
    std::vector<std::size_t> rows(dataset.row_count());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        rows[r] = r;
    }
    auto values = join_values(client, dataset, prepared, rows);

    const auto result = plan_result_datatype(prepared, lookup).value_or(Datatype::string);
    Provenance prov;
    prov.plan = prepared;
    prov.parent_column = prepared.source_column;

    if (result == Datatype::entity) {
        std::vector<EntityId> ids;
        for (const auto& v : values) {
            if (v && v->is_entity()) {
                ids.push_back(v->as_entity());
            }
        }
        const auto labels = labels_for(client, std::move(ids));
        prov.entity_ids.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i] && values[i]->is_entity()) {
                const auto id = values[i]->as_entity();
                auto it = labels.find(id.id);
                values[i] = Value::text(it != labels.end() ? it->second : id.id);
                prov.entity_ids[i] = id;
            }
        }
    }

    // count and variance change the unit, so it is only carried through
    // plans built from the other ops.
    const bool keeps_unit = std::none_of(prepared.hops.begin(), prepared.hops.end(), [](const Hop& h) {
        const AggOp op = h.combine.value_or(h.agg);
        return op == AggOp::count || op == AggOp::variance;
    });
    if (keeps_unit && result == Datatype::number) {
        const auto& final_prop = prepared.hops.back().property;
        const auto info = client.property_info(std::span<const PropertyId>(&final_prop, 1));
        if (auto it = info.find(final_prop.id); it != info.end()) {
            prov.unit = it->second.unit;
        }
    }
    return add_augmented_column(dataset, prepared.output_name, values, column_type_for(result),
                                std::move(prov));
}

JoinPlan with_level_ops(JoinPlan plan, std::span<const std::optional<AggOp>> level_ops) {
    if (level_ops.size() > plan.hops.size()) {
        throw InvalidPlan({{-1, "got " + std::to_string(level_ops.size()) + " level ops for " +
                                    std::to_string(plan.hops.size()) + " hops"}});
    }
    for (std::size_t k = 0; k < level_ops.size(); ++k) {
        if (!level_ops[k]) {
            continue;
        }
        if (k + 1 < plan.hops.size()) {
            plan.hops[k].combine = *level_ops[k];
        } else {
            plan.hops[k].agg = *level_ops[k];
        }
    }
    return plan;
}

SubgraphSample example_subgraph(KgClient& client, const Dataset& dataset, const JoinPlan& plan,
                                std::size_t row, std::span<const std::optional<AggOp>> level_ops) {
    const auto lookup = client.property_lookup();
    JoinPlan effective = with_level_ops(prepare_plan(client, dataset, plan), level_ops);
    require_valid(effective, lookup);
    if (effective.depth() < 2) {
        throw InvalidPlan({{-1, "an example subgraph needs a plan with at least two hops"}});
    }
    if (row >= dataset.row_count()) {
        throw RowUnresolvable(row);
    }
    const auto entity = resolve_cell(client, dataset.column(effective.source_column), row);
    if (!entity) {
        throw RowUnresolvable(row);
    }

    SubgraphSample s;
    s.row = row;
    s.root = *entity;
    const auto query =
        compile_subgraph(effective, lookup, *entity, kSubgraphBranches, client.dialect());
    const auto trees = build_trees(client.run_select(query), effective.depth(),
                                   final_datatype(effective, lookup));
    s.tree.root = *entity;
    s.tree.depth = effective.depth();
    if (auto it = trees.find(entity->id); it != trees.end()) {
        s.tree.node = truncate(it->second.node, kSubgraphBranches);
    }
    for (std::size_t k = 0; k < effective.hops.size(); ++k) {
        const auto& h = effective.hops[k];
        s.level_ops.push_back(k + 1 < effective.hops.size() ? h.combine.value_or(h.agg) : h.agg);
    }
    s.computed_result = fold_tree(s.tree, effective);

    std::vector<EntityId> ids{*entity};
    collect_entities(s.tree.node, ids);
    if (s.computed_result && s.computed_result->is_entity()) {
        ids.push_back(s.computed_result->as_entity());
    }
    s.labels = labels_for(client, std::move(ids));
    s.plan = std::move(effective);
    return s;
}

json preview_to_json(const JoinPreview& p) {
    json values = json::array();
    for (const auto& v : p.values) {
        values.push_back(v ? value_to_json(*v, p.labels) : json(nullptr));
    }
    return json{{"plan", plan_to_json(p.plan)},
                {"rows", p.rows},
                {"values", std::move(values)},
                {"null_count", p.null_count}};
}

json subgraph_to_json(const SubgraphSample& s) {
    json levels = json::array();
    for (std::size_t k = 0; k < s.plan.hops.size(); ++k) {
        levels.push_back({{"property", s.plan.hops[k].property.id},
                          {"op", std::string(to_string(s.level_ops[k]))}});
    }
    json root = node_to_json(s.tree.node, s.labels);
    root["entity"] = s.root.id;
    auto it = s.labels.find(s.root.id);
    root["label"] = it != s.labels.end() ? it->second : s.root.id;
    return json{{"row", s.row},
                {"root", std::move(root)},
                {"levels", std::move(levels)},
                {"computed_result",
                 s.computed_result ? value_to_json(*s.computed_result, s.labels) : json(nullptr)},
                {"illustrative", true},
                {"plan", plan_to_json(s.plan)}};
}

}  // namespace kgforage
