#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace kgforage {

struct EntityId {
    std::string id;
    auto operator<=>(const EntityId&) const = default;
};

struct PropertyId {
    std::string id;
    auto operator<=>(const PropertyId&) const = default;
};

struct Text {
    std::string text;
    auto operator<=>(const Text&) const = default;
};

// ISO-8601 timestamp. Ordering is chronological; `iso` keeps the canonical
// rendering ("YYYY-MM-DDThh:mm:ssZ", fractional seconds kept when present).
struct DateTime {
    std::int64_t epoch_ms = 0;
    std::string iso;

    static std::optional<DateTime> parse(std::string_view text);

    bool operator==(const DateTime& o) const { return epoch_ms == o.epoch_ms; }
    auto operator<=>(const DateTime& o) const { return epoch_ms <=> o.epoch_ms; }
};

enum class Datatype { entity, number, string, datetime };

std::string_view to_string(Datatype t);
std::optional<Datatype> parse_datatype(std::string_view s);

// Tagged union of the literal and entity values a statement can carry.
class Value {
public:
    using Storage = std::variant<EntityId, double, Text, DateTime>;

    Value() = default;
    Value(EntityId e) : v_(std::move(e)) {}
    Value(double d) : v_(d) {}
    Value(Text t) : v_(std::move(t)) {}
    Value(DateTime t) : v_(std::move(t)) {}

    static Value entity(std::string id) { return Value(EntityId{std::move(id)}); }
    static Value number(double d) { return Value(d); }
    static Value text(std::string s) { return Value(Text{std::move(s)}); }

    Datatype kind() const;

    bool is_entity() const { return std::holds_alternative<EntityId>(v_); }
    bool is_number() const { return std::holds_alternative<double>(v_); }
    bool is_text() const { return std::holds_alternative<Text>(v_); }
    bool is_datetime() const { return std::holds_alternative<DateTime>(v_); }

    const EntityId& as_entity() const { return std::get<EntityId>(v_); }
    double as_number() const { return std::get<double>(v_); }
    const Text& as_text() const { return std::get<Text>(v_); }
    const DateTime& as_datetime() const { return std::get<DateTime>(v_); }

    const Storage& storage() const { return v_; }

    // Plain rendering used for CSV cells and tables: shortest round-trip
    // decimal for numbers, canonical ISO for datetimes, the raw id for
    // entities.
    std::string render() const;

    friend bool operator==(const Value&, const Value&) = default;
    // Orders by kind first, then by value within a kind.
    friend std::partial_ordering operator<=>(const Value& a, const Value& b) {
        return a.v_ <=> b.v_;
    }

private:
    Storage v_;
};

// Shortest decimal string that parses back to the same double.
std::string format_number(double d);

// Strict full-string decimal parse; rejects empty, partial, and non-finite input.
std::optional<double> parse_number(std::string_view s);

}  // namespace kgforage
