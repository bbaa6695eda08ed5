#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgforage/planner.hpp"
#include "kgforage/value.hpp"

namespace kgforage {

enum class ColumnType { string, number, datetime };

std::string_view to_string(ColumnType t);

// Where an augmented column came from.
struct Provenance {
    JoinPlan plan;
    std::string parent_column;
    std::optional<std::string> unit;
    bool mixed_units = false;
    // Entity behind each rendered label, for entity-valued results.
    std::vector<std::optional<EntityId>> entity_ids;
};

struct Column {
    std::string name;
    ColumnType ctype = ColumnType::string;
    // Cells keep their source text; numbers are parsed when aggregated.
    std::vector<std::optional<std::string>> cells;
    std::shared_ptr<const Provenance> provenance;  // null for original columns
    bool enabled = true;

    bool augmented() const { return provenance != nullptr; }
};

struct CsvOptions {
    bool has_header = true;
    char delimiter = ',';
};

// Immutable snapshot: every mutating operation returns a new version.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::string id, std::vector<Column> columns);

    const std::string& id() const { return id_; }
    std::size_t row_count() const { return row_count_; }
    const std::vector<Column>& columns() const { return columns_; }

    const Column* find(std::string_view name) const;
    // Throws UnknownColumn.
    const Column& column(std::string_view name) const;

private:
    std::string id_;
    std::vector<Column> columns_;
    std::size_t row_count_ = 0;
};

// Type inference per column: all non-empty cells numeric -> number; all ISO-8601
// -> datetime; otherwise string. Empty fields become nulls.
Dataset import_csv(std::string_view bytes, const CsvOptions& options = {});

// Enabled columns only, RFC 4180 quoting, '\n' line endings.
std::string export_csv(const Dataset& d, char delimiter = ',');

ColumnType infer_column_type(const std::vector<std::optional<std::string>>& cells);

// Appends a column; a taken name gets " (2)", " (3)", ... Throws LengthMismatch.
Dataset add_augmented_column(const Dataset& d, std::string name,
                             const std::vector<std::optional<Value>>& values, ColumnType ctype,
                             Provenance provenance);

Dataset set_enabled(const Dataset& d, std::string_view column_name, bool enabled);

// First min(n, row_count) rows of the enabled columns.
Dataset head(const Dataset& d, std::size_t n);

// Sidecar listing each augmented column's plan, in column order.
nlohmann::json provenance_sidecar(const Dataset& d);

// Cell text as a typed value for the column (number/datetime parse, else text).
std::optional<Value> cell_value(const Column& c, std::size_t row);

std::string new_dataset_id();

}  // namespace kgforage
