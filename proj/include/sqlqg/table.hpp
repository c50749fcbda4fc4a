#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sqlqg/error.hpp"

namespace sqlqg {

enum class ColumnType { Text, Numeric };

std::string column_type_name(ColumnType t);

// One table cell: the stored surface form plus its parsed numeric value when
// the surface is a numeric literal. Surfaces are lowercased at load time so
// that questions, SQL strings and cells share one casing convention.
struct Cell {
  std::string text;
  std::optional<double> num;

  Cell() = default;
  explicit Cell(std::string surface);

  bool empty() const { return text.empty(); }
};

struct Table {
  std::string id;
  std::vector<std::vector<std::string>> column_names;  // tokenized names
  std::vector<std::string> column_display;             // tokens joined by spaces
  std::vector<ColumnType> column_types;
  std::vector<std::vector<Cell>> rows;

  size_t num_columns() const { return column_names.size(); }
  size_t num_rows() const { return rows.size(); }

  const std::string& column_name(size_t i) const;

  // Enforces row arity and the numeric-column invariant.
  void validate() const;
};

// Tables keyed by id, preserving file order for deterministic iteration.
class TableSet {
 public:
  void add(Table table);
  bool contains(const std::string& id) const;
  const Table& at(const std::string& id) const;
  size_t size() const { return tables_.size(); }
  const std::vector<Table>& all() const { return tables_; }

 private:
  std::vector<Table> tables_;
  std::vector<std::string> ids_;  // parallel to tables_
};

}  // namespace sqlqg
