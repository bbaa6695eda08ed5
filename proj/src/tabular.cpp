#include "kgforage/tabular.hpp"

#include <atomic>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "kgforage/errors.hpp"

namespace kgforage {

std::string_view to_string(ColumnType t) {
    switch (t) {
        case ColumnType::string:
            return "string";
        case ColumnType::number:
            return "number";
        case ColumnType::datetime:
            return "datetime";
    }
    return "string";
}

std::string new_dataset_id() {
    static std::atomic<std::uint64_t> counter{0};
    return "ds-" + std::to_string(++counter);
}

Dataset::Dataset(std::string id, std::vector<Column> columns)
    : id_(std::move(id)), columns_(std::move(columns)) {
    row_count_ = columns_.empty() ? 0 : columns_.front().cells.size();
    std::unordered_set<std::string> names;
    for (const auto& c : columns_) {
        if (c.cells.size() != row_count_) {
            throw LengthMismatch(row_count_, c.cells.size());
        }
        if (!names.insert(c.name).second) {
            throw Error("duplicate column name: " + c.name);
        }
    }
}

const Column* Dataset::find(std::string_view name) const {
    for (const auto& c : columns_) {
        if (c.name == name) {
            return &c;
        }
    }
    return nullptr;
}

const Column& Dataset::column(std::string_view name) const {
    const auto* c = find(name);
    if (c == nullptr) {
        throw UnknownColumn(std::string(name));
    }
    return *c;
}

// ---- CSV --------------------------------------------------------------------

namespace {

// RFC 4180 record splitter. Returns records of raw fields; `quoted` marks
// fields that were enclosed in quotes (an empty quoted field is "" not null).
struct Field {
    std::string text;
    bool quoted = false;
};

std::vector<std::vector<Field>> parse_records(std::string_view in, char delim) {
    std::vector<std::vector<Field>> records;
    std::vector<Field> record;
    Field field;
    std::size_t i = 0;
    std::size_t row = 1;
    bool at_field_start = true;
    bool any_in_record = false;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field = Field{};
        at_field_start = true;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
        any_in_record = false;
        ++row;
    };

    if (in.size() >= 3 && static_cast<unsigned char>(in[0]) == 0xEF &&
        static_cast<unsigned char>(in[1]) == 0xBB && static_cast<unsigned char>(in[2]) == 0xBF) {
        i = 3;  // UTF-8 BOM
    }
    while (i < in.size()) {
        const char c = in[i];
        if (at_field_start && c == '"') {
            field.quoted = true;
            at_field_start = false;
            any_in_record = true;
            ++i;
            bool closed = false;
            while (i < in.size()) {
                if (in[i] == '"') {
                    if (i + 1 < in.size() && in[i + 1] == '"') {
                        field.text.push_back('"');
                        i += 2;
                        continue;
                    }
                    closed = true;
                    ++i;
                    break;
                }
                field.text.push_back(in[i++]);
            }
            if (!closed) {
                throw CsvError(row, "unterminated quoted field");
            }
            if (i < in.size() && in[i] != delim && in[i] != '\n' && in[i] != '\r') {
                throw CsvError(row, "unexpected character after closing quote");
            }
            continue;
        }
        if (c == delim) {
            any_in_record = true;
            end_field();
            ++i;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < in.size() && in[i + 1] == '\n') {
                ++i;
            }
            ++i;
            if (any_in_record || !field.text.empty()) {
                end_record();
            } else {
                ++row;  // blank line
            }
        } else {
            if (field.quoted) {
                throw CsvError(row, "unexpected character after closing quote");
            }
            if (c == '"') {
                throw CsvError(row, "stray quote inside unquoted field");
            }
            field.text.push_back(c);
            at_field_start = false;
            any_in_record = true;
            ++i;
        }
    }
    if (any_in_record || !field.text.empty()) {
        end_record();
    }
    return records;
}

bool needs_quoting(std::string_view s, char delim) {
    return s.find_first_of(std::string{delim, '"', '\n', '\r'}) != std::string_view::npos;
}

void write_field(std::string& out, std::string_view s, char delim) {
    if (!needs_quoting(s, delim)) {
        out += s;
        return;
    }
    out.push_back('"');
    for (char c : s) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
}

}  // namespace

ColumnType infer_column_type(const std::vector<std::optional<std::string>>& cells) {
    bool all_number = true;
    bool all_datetime = true;
    bool any = false;
    for (const auto& c : cells) {
        if (!c) {
            continue;
        }
        any = true;
        if (all_number && !parse_number(*c)) {
            all_number = false;
        }
        if (all_datetime && !DateTime::parse(*c)) {
            all_datetime = false;
        }
        if (!all_number && !all_datetime) {
            break;
        }
    }
    if (!any) {
        return ColumnType::string;
    }
    if (all_number) {
        return ColumnType::number;
    }
    if (all_datetime) {
        return ColumnType::datetime;
    }
    return ColumnType::string;
}

Dataset import_csv(std::string_view bytes, const CsvOptions& options) {
    auto records = parse_records(bytes, options.delimiter);
    std::vector<std::string> names;
    std::size_t first_data = 0;
    if (options.has_header) {
        if (records.empty()) {
            throw CsvError(1, "missing header row");
        }
        for (auto& f : records.front()) {
            names.push_back(std::move(f.text));
        }
        first_data = 1;
    } else if (!records.empty()) {
        for (std::size_t i = 0; i < records.front().size(); ++i) {
            names.push_back("col_" + std::to_string(i));
        }
    }
    std::unordered_set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) {
            throw CsvError(1, "duplicate column name: " + n);
        }
    }
    std::vector<Column> columns(names.size());
    for (std::size_t c = 0; c < names.size(); ++c) {
        columns[c].name = names[c];
    }
    for (std::size_t r = first_data; r < records.size(); ++r) {
        auto& rec = records[r];
        if (rec.size() != names.size()) {
            throw RaggedRows(r + 1, names.size(), rec.size());
        }
        for (std::size_t c = 0; c < rec.size(); ++c) {
            if (rec[c].text.empty()) {
                columns[c].cells.emplace_back(std::nullopt);
            } else {
                columns[c].cells.emplace_back(std::move(rec[c].text));
            }
        }
    }
    for (auto& col : columns) {
        col.ctype = infer_column_type(col.cells);
    }
    return Dataset(new_dataset_id(), std::move(columns));
}

std::string export_csv(const Dataset& d, char delimiter) {
    std::vector<const Column*> cols;
    for (const auto& c : d.columns()) {
        if (c.enabled) {
            cols.push_back(&c);
        }
    }
    std::string out;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (i > 0) {
            out.push_back(delimiter);
        }
        write_field(out, cols[i]->name, delimiter);
    }
    out.push_back('\n');
    for (std::size_t r = 0; r < d.row_count(); ++r) {
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (i > 0) {
                out.push_back(delimiter);
            }
            if (const auto& cell = cols[i]->cells[r]) {
                write_field(out, *cell, delimiter);
            } else if (cols.size() == 1) {
                out += "\"\"";  // keeps a lone null from reading back as a blank line
            }
        }
        out.push_back('\n');
    }
    return out;
}

Dataset add_augmented_column(const Dataset& d, std::string name,
                             const std::vector<std::optional<Value>>& values, ColumnType ctype,
                             Provenance provenance) {
    if (values.size() != d.row_count()) {
        throw LengthMismatch(d.row_count(), values.size());
    }
    if (d.find(provenance.parent_column) == nullptr) {
        throw UnknownColumn(provenance.parent_column);
    }
    if (d.find(name) != nullptr) {
        for (int k = 2;; ++k) {
            auto candidate = name + " (" + std::to_string(k) + ")";
            if (d.find(candidate) == nullptr) {
                name = std::move(candidate);
                break;
            }
        }
    }
    Column col;
    col.name = std::move(name);
    col.ctype = ctype;
    col.cells.reserve(values.size());
    for (const auto& v : values) {
        if (v) {
            col.cells.emplace_back(v->render());
        } else {
            col.cells.emplace_back(std::nullopt);
        }
    }
    provenance.plan.output_name = col.name;
    col.provenance = std::make_shared<const Provenance>(std::move(provenance));
    auto cols = d.columns();
    cols.push_back(std::move(col));
    return Dataset(d.id(), std::move(cols));
}

Dataset set_enabled(const Dataset& d, std::string_view column_name, bool enabled) {
    d.column(column_name);
    auto cols = d.columns();
    for (auto& c : cols) {
        if (c.name == column_name) {
            c.enabled = enabled;
        }
    }
    return Dataset(d.id(), std::move(cols));
}

Dataset head(const Dataset& d, std::size_t n) {
    const std::size_t rows = std::min(n, d.row_count());
    std::vector<Column> cols;
    for (const auto& c : d.columns()) {
        if (!c.enabled) {
            continue;
        }
        Column slice = c;
        slice.cells.resize(rows);
        cols.push_back(std::move(slice));
    }
    return Dataset(d.id(), std::move(cols));
}

nlohmann::json provenance_sidecar(const Dataset& d) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : d.columns()) {
        if (!c.provenance) {
            continue;
        }
        const auto& p = *c.provenance;
        nlohmann::json ids = nlohmann::json::array();
        for (const auto& e : p.entity_ids) {
            ids.push_back(e ? nlohmann::json(e->id) : nlohmann::json(nullptr));
        }
        nlohmann::json entry = {{"name", c.name},
                                {"type", std::string(to_string(c.ctype))},
                                {"enabled", c.enabled},
                                {"parent_column", p.parent_column},
                                {"plan", plan_to_json(p.plan)},
                                {"unit", p.unit ? nlohmann::json(*p.unit) : nlohmann::json(nullptr)},
                                {"mixed_units", p.mixed_units}};
        if (!p.entity_ids.empty()) {
            entry["entity_ids"] = std::move(ids);
        }
        cols.push_back(std::move(entry));
    }
    return nlohmann::json{{"columns", std::move(cols)}};
}

std::optional<Value> cell_value(const Column& c, std::size_t row) {
    const auto& cell = c.cells.at(row);
    if (!cell) {
        return std::nullopt;
    }
    switch (c.ctype) {
        case ColumnType::number:
            if (auto v = parse_number(*cell)) {
                return Value::number(*v);
            }
            break;
        case ColumnType::datetime:
            if (auto v = DateTime::parse(*cell)) {
                return Value(*v);
            }
            break;
        case ColumnType::string:
            break;
    }
    return Value::text(*cell);
}

}  // namespace kgforage
