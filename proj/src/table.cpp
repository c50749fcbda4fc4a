#include "sqlqg/table.hpp"

#include <algorithm>

#include "sqlqg/text.hpp"

namespace sqlqg {

std::string column_type_name(ColumnType t) {
  return t == ColumnType::Text ? "text" : "real";
}

Cell::Cell(std::string surface) : text(to_lower(std::move(surface))) {
  num = parse_number(text);
}

const std::string& Table::column_name(size_t i) const {
  if (i >= column_display.size())
    throw DataError("table " + id + ": column index " + std::to_string(i) + " out of range");
  return column_display[i];
}

void Table::validate() const {
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != num_columns())
      throw DataError("table " + id + ": row " + std::to_string(r) + " has " +
                      std::to_string(rows[r].size()) + " cells, expected " +
                      std::to_string(num_columns()));
  }
  for (size_t c = 0; c < num_columns(); ++c) {
    if (column_types[c] != ColumnType::Numeric) continue;
    for (size_t r = 0; r < rows.size(); ++r) {
      const Cell& cell = rows[r][c];
      if (!cell.empty() && !cell.num)
        throw DataError("table " + id + ": cell \"" + cell.text + "\" in numeric column \"" +
                        column_display[c] + "\" is not a number");
    }
  }
}

void TableSet::add(Table table) {
  if (contains(table.id)) throw DataError("duplicate table id: " + table.id);
  ids_.push_back(table.id);
  tables_.push_back(std::move(table));
}

bool TableSet::contains(const std::string& id) const {
  return std::find(ids_.begin(), ids_.end(), id) != ids_.end();
}

const Table& TableSet::at(const std::string& id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw DataError("unknown table id: " + id);
  return tables_[static_cast<size_t>(it - ids_.begin())];
}

}  // namespace sqlqg
