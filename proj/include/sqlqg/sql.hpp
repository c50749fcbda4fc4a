#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sqlqg/table.hpp"

namespace sqlqg {

enum class AggOp { None, Count, Max, Min };
enum class CondOp { Eq, Gt, Lt };

std::string agg_keyword(AggOp op);     // "", "COUNT", "MAX", "MIN"
std::string cond_keyword(CondOp op);   // "=", ">", "<"

// A condition literal: surface form plus its numeric value when parseable.
struct SqlValue {
  std::string text;
  std::optional<double> num;

  SqlValue() = default;
  explicit SqlValue(std::string surface);
  explicit SqlValue(double value);

  bool operator==(const SqlValue& other) const { return text == other.text; }
};

struct Condition {
  int col = 0;
  CondOp op = CondOp::Eq;
  SqlValue value;
};

// One SELECT aggregate over a column plus conjunctive WHERE conditions.
struct SqlQuery {
  AggOp agg_op = AggOp::None;
  int agg_col = 0;
  std::vector<Condition> conds;
};

struct ResultSet {
  enum class Kind { Cells, Scalar };
  Kind kind = Kind::Cells;
  std::vector<std::string> cells;  // when kind == Cells
  double scalar = 0.0;             // when kind == Scalar

  static ResultSet of_cells(std::vector<std::string> c);
  static ResultSet of_scalar(double s);
  bool operator==(const ResultSet& other) const;
};

// Execution failures that are properties of the data, not of the caller:
// an aggregate over zero values, a comparison against the wrong column type.
class ExecError : public Error {
 public:
  enum class Kind { EmptyAggregate, TypeMismatch, ColumnRange };
  ExecError(Kind kind, const std::string& what) : Error(what), kind(kind) {}
  Kind kind;
};

class SqlParseError : public Error {
 public:
  explicit SqlParseError(const std::string& what) : Error(what) {}
};

// Throws ExecError if the query violates type or range invariants for t.
void validate_query(const SqlQuery& q, const Table& t);

// Canonical string form. This exact string is the unit of logical-form
// accuracy, so condition order is preserved as stored.
std::string serialize_sql(const SqlQuery& q, const Table& t);

// Inverse of serialize_sql. Keywords are matched case-insensitively; column
// names are matched greedily-longest against the table header.
SqlQuery parse_sql(const std::string& s, const Table& t);

// Rows (indices) satisfying every condition of q.
std::vector<size_t> selected_rows(const SqlQuery& q, const Table& t);

ResultSet execute(const SqlQuery& q, const Table& t);

// True when the query selects no rows or aggregates over no values.
bool empty_result(const SqlQuery& q, const Table& t);

bool queries_equal(const SqlQuery& a, const SqlQuery& b, const Table& t);

// Tokenized canonical form; the copy-candidate pool for question generation.
std::vector<std::string> linearize_for_qg(const SqlQuery& q, const Table& t);

}  // namespace sqlqg
