#include "kgforage/planner.hpp"

#include <algorithm>
#include <array>

#include <nlohmann/json.hpp>

namespace kgforage {

namespace {

constexpr std::array<std::pair<AggOp, std::string_view>, 9> kOpNames = {{
    {AggOp::count, "count"},
    {AggOp::mean, "mean"},
    {AggOp::max, "max"},
    {AggOp::min, "min"},
    {AggOp::sum, "sum"},
    {AggOp::variance, "variance"},
    {AggOp::sample, "sample"},
    {AggOp::through, "through"},
    {AggOp::value, "value"},
}};

bool contains(const std::vector<AggOp>& ops, AggOp op) {
    return std::find(ops.begin(), ops.end(), op) != ops.end();
}

std::string label_of(const PropertyId& p, const PropertyLookup& lookup) {
    if (auto meta = lookup(p); meta && !meta->label.empty()) {
        return meta->label;
    }
    return p.id;
}

}  // namespace

std::string_view to_string(AggOp op) {
    for (const auto& [o, name] : kOpNames) {
        if (o == op) {
            return name;
        }
    }
    return "value";
}

std::optional<AggOp> parse_agg_op(std::string_view s) {
    for (const auto& [o, name] : kOpNames) {
        if (name == s) {
            return o;
        }
    }
    return std::nullopt;
}

std::string_view to_string(Cardinality c) { return c == Cardinality::one ? "one" : "many"; }

std::optional<Cardinality> parse_cardinality(std::string_view s) {
    if (s == "one") return Cardinality::one;
    if (s == "many") return Cardinality::many;
    return std::nullopt;
}

std::vector<AggOp> allowed_aggregations(Datatype datatype, Cardinality cardinality,
                                        HopPosition position) {
    if (position == HopPosition::intermediate) {
        if (datatype == Datatype::entity) {
            return {AggOp::through, AggOp::count, AggOp::sample};
        }
        return {};
    }
    std::vector<AggOp> ops;
    switch (datatype) {
        case Datatype::number:
            ops = {AggOp::count, AggOp::mean, AggOp::max,     AggOp::min,
                   AggOp::sum,   AggOp::variance, AggOp::sample};
            break;
        case Datatype::datetime:
            ops = {AggOp::count, AggOp::max, AggOp::min, AggOp::sample};
            break;
        case Datatype::string:
        case Datatype::entity:
            ops = {AggOp::count, AggOp::sample};
            break;
    }
    if (cardinality == Cardinality::one) {
        ops.push_back(AggOp::value);
    }
    return ops;
}

Datatype result_datatype(AggOp op, Datatype input) {
    switch (op) {
        case AggOp::count:
        case AggOp::mean:
        case AggOp::sum:
        case AggOp::variance:
            return Datatype::number;
        default:
            return input;
    }
}

std::optional<Datatype> plan_result_datatype(const JoinPlan& plan, const PropertyLookup& lookup) {
    if (plan.hops.empty()) {
        return std::nullopt;
    }
    auto meta = lookup(plan.hops.back().property);
    if (!meta) {
        return std::nullopt;
    }
    Datatype dt = result_datatype(plan.hops.back().agg, meta->datatype);
    for (auto it = plan.hops.rbegin() + 1; it != plan.hops.rend(); ++it) {
        dt = result_datatype(it->combine.value_or(AggOp::sample), dt);
    }
    return dt;
}

std::vector<PlanError> validate(const JoinPlan& plan, const PropertyLookup& lookup,
                                const PlanLimits& limits) {
    std::vector<PlanError> errors;
    if (plan.source_column.empty()) {
        errors.push_back({-1, "source column is empty"});
    }
    if (plan.output_name.empty()) {
        errors.push_back({-1, "output name is empty"});
    }
    if (plan.hops.empty()) {
        errors.push_back({-1, "plan has no hops"});
        return errors;
    }
    if (plan.hops.size() > limits.max_depth) {
        errors.push_back({-1, "plan depth " + std::to_string(plan.hops.size()) +
                                  " exceeds the maximum of " + std::to_string(limits.max_depth)});
    }

    // Walk target -> source so each through hop knows what its children yield.
    // Result type of the level below; unset once a lower hop is invalid.
    Datatype child_type = Datatype::string;
    bool child_known = false;
    for (std::size_t k = plan.hops.size(); k-- > 0;) {
        const Hop& hop = plan.hops[k];
        const int idx = static_cast<int>(k);
        const bool is_final = k + 1 == plan.hops.size();
        const auto meta = lookup(hop.property);
        if (!meta) {
            errors.push_back({idx, "unknown property " + hop.property.id});
            child_known = false;
            continue;
        }
        if (is_final) {
            if (hop.agg == AggOp::through) {
                if (meta->datatype != Datatype::entity) {
                    errors.push_back({idx, "through requires an entity-valued property, " +
                                               hop.property.id + " is " +
                                               std::string(to_string(meta->datatype))});
                }
                errors.push_back({idx, "through cannot be the final hop"});
                child_known = false;
            } else {
                // Unknown cardinality keeps `value` available; multiplicity is
                // checked again when the join runs.
                auto ops = allowed_aggregations(meta->datatype,
                                                meta->cardinality.value_or(Cardinality::one),
                                                HopPosition::final);
                if (!contains(ops, hop.agg)) {
                    errors.push_back({idx, std::string(to_string(hop.agg)) + " is not allowed on " +
                                               std::string(to_string(meta->datatype)) + " values"});
                    child_known = false;
                } else {
                    child_type = result_datatype(hop.agg, meta->datatype);
                    child_known = true;
                }
            }
            if (hop.combine) {
                errors.push_back({idx, "only through hops take a combine operator"});
            }
            continue;
        }
        if (hop.agg != AggOp::through) {
            errors.push_back({idx, "intermediate hops must use through, got " +
                                       std::string(to_string(hop.agg))});
        }
        if (meta->datatype != Datatype::entity) {
            errors.push_back({idx, "through requires an entity-valued property, " +
                                       hop.property.id + " is " +
                                       std::string(to_string(meta->datatype))});
        }
        if (!hop.combine) {
            errors.push_back({idx, "through hop needs a combine operator"});
            child_known = false;
            continue;
        }
        if (child_known) {
            const Datatype child = child_type;
            auto ops = allowed_aggregations(child,
                                            meta->cardinality.value_or(Cardinality::one),
                                            HopPosition::final);
            if (!contains(ops, *hop.combine)) {
                errors.push_back({idx, "combine " + std::string(to_string(*hop.combine)) +
                                           " is not allowed on " +
                                           std::string(to_string(child)) + " results"});
                child_known = false;
            } else {
                child_type = result_datatype(*hop.combine, child);
            }
        }
    }
    std::stable_sort(errors.begin(), errors.end(),
                     [](const PlanError& a, const PlanError& b) { return a.hop_index < b.hop_index; });
    return errors;
}

void require_valid(const JoinPlan& plan, const PropertyLookup& lookup, const PlanLimits& limits) {
    auto errors = validate(plan, lookup, limits);
    if (!errors.empty()) {
        throw InvalidPlan(std::move(errors));
    }
}

std::string describe(const JoinPlan& plan, const PropertyLookup& lookup) {
    if (plan.hops.empty()) {
        return {};
    }
    const Hop& last = plan.hops.back();
    std::string text = std::string(to_string(last.agg)) + " of " + label_of(last.property, lookup);
    for (auto it = plan.hops.rbegin() + 1; it != plan.hops.rend(); ++it) {
        const auto combine = it->combine ? to_string(*it->combine) : std::string_view("through");
        text = std::string(combine) + " over " + label_of(it->property, lookup) + " of " + text;
    }
    return text;
}

nlohmann::json plan_to_json(const JoinPlan& plan) {
    nlohmann::json hops = nlohmann::json::array();
    for (const auto& h : plan.hops) {
        nlohmann::json hop = {{"property", h.property.id}, {"agg", std::string(to_string(h.agg))}};
        if (h.combine) {
            hop["combine"] = std::string(to_string(*h.combine));
        }
        hops.push_back(std::move(hop));
    }
    nlohmann::json j = {{"source_column", plan.source_column},
                        {"output_name", plan.output_name},
                        {"hops", std::move(hops)}};
    if (plan.rng_seed) {
        j["rng_seed"] = *plan.rng_seed;
    }
    return j;
}

JoinPlan plan_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw Error("plan must be a JSON object");
    }
    JoinPlan plan;
    auto str = [&](const char* key, bool required) -> std::string {
        auto it = j.find(key);
        if (it == j.end() || it->is_null()) {
            if (required) {
                throw Error(std::string("plan is missing \"") + key + "\"");
            }
            return {};
        }
        if (!it->is_string()) {
            throw Error(std::string("plan field \"") + key + "\" must be a string");
        }
        return it->get<std::string>();
    };
    plan.source_column = str("source_column", true);
    plan.output_name = str("output_name", false);
    auto hops = j.find("hops");
    if (hops == j.end() || !hops->is_array()) {
        throw Error("plan field \"hops\" must be an array");
    }
    for (const auto& h : *hops) {
        if (!h.is_object() || !h.contains("property") || !h["property"].is_string() ||
            !h.contains("agg") || !h["agg"].is_string()) {
            throw Error("each hop needs string \"property\" and \"agg\" fields");
        }
        Hop hop;
        hop.property = PropertyId{h["property"].get<std::string>()};
        auto op = parse_agg_op(h["agg"].get<std::string>());
        if (!op) {
            throw Error("unknown aggregation: " + h["agg"].get<std::string>());
        }
        hop.agg = *op;
        if (auto c = h.find("combine"); c != h.end() && !c->is_null()) {
            if (!c->is_string()) {
                throw Error("hop field \"combine\" must be a string");
            }
            auto cop = parse_agg_op(c->get<std::string>());
            if (!cop) {
                throw Error("unknown aggregation: " + c->get<std::string>());
            }
            hop.combine = *cop;
        }
        plan.hops.push_back(std::move(hop));
    }
    if (auto s = j.find("rng_seed"); s != j.end() && !s->is_null()) {
        if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<std::int64_t>() >= 0)) {
            throw Error("plan field \"rng_seed\" must be a non-negative integer");
        }
        plan.rng_seed = s->get<std::uint64_t>();
    }
    return plan;
}

}  // namespace kgforage
