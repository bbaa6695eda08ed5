#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgforage/errors.hpp"
#include "kgforage/value.hpp"

namespace kgforage {

// `value` is the identity aggregation for one-to-one relationships: it
// yields the single element and fails on multiplicity.
enum class AggOp { count, mean, max, min, sum, variance, sample, through, value };

enum class Cardinality { one, many };

enum class HopPosition { intermediate, final };

std::string_view to_string(AggOp op);
std::optional<AggOp> parse_agg_op(std::string_view s);
std::string_view to_string(Cardinality c);
std::optional<Cardinality> parse_cardinality(std::string_view s);

// One step along the join path. A `through` hop steps into the entities it
// points at; `combine` then folds the per-child results of the next level.
struct Hop {
    PropertyId property;
    AggOp agg = AggOp::value;
    std::optional<AggOp> combine;

    friend bool operator==(const Hop&, const Hop&) = default;
};

struct JoinPlan {
    std::string source_column;
    std::vector<Hop> hops;  // source -> target
    std::string output_name;
    std::optional<std::uint64_t> rng_seed;

    std::size_t depth() const { return hops.size(); }
    friend bool operator==(const JoinPlan&, const JoinPlan&) = default;
};

struct PlanLimits {
    std::size_t max_depth = 3;
};

// What validation needs to know about a property. Cardinality is optional:
// when unknown, `value` is accepted and re-checked at join time.
struct PropertyMeta {
    std::string label;
    Datatype datatype = Datatype::string;
    std::optional<Cardinality> cardinality;
};

using PropertyLookup = std::function<std::optional<PropertyMeta>(const PropertyId&)>;

// Menu of operators offered for an attribute, in display order.
std::vector<AggOp> allowed_aggregations(Datatype datatype, Cardinality cardinality,
                                        HopPosition position);

// Datatype of the value an operator produces from inputs of `input`.
Datatype result_datatype(AggOp op, Datatype input);

// Datatype of the folded plan result; nullopt when a property is unknown.
std::optional<Datatype> plan_result_datatype(const JoinPlan& plan, const PropertyLookup& lookup);

// Empty result means the plan is valid.
std::vector<PlanError> validate(const JoinPlan& plan, const PropertyLookup& lookup,
                                const PlanLimits& limits = {});

// Throws InvalidPlan when validate() reports anything.
void require_valid(const JoinPlan& plan, const PropertyLookup& lookup,
                   const PlanLimits& limits = {});

// "min over sharesBorderWith of max of lifeExpectancy"
std::string describe(const JoinPlan& plan, const PropertyLookup& lookup);

nlohmann::json plan_to_json(const JoinPlan& plan);
// Throws Error on schema violations. A missing output_name is left empty.
JoinPlan plan_from_json(const nlohmann::json& j);

}  // namespace kgforage
