#include "sqlqg/sql.hpp"

#include <algorithm>
#include <cmath>

#include "sqlqg/text.hpp"

namespace sqlqg {

std::string agg_keyword(AggOp op) {
  switch (op) {
    case AggOp::None: return "";
    case AggOp::Count: return "COUNT";
    case AggOp::Max: return "MAX";
    case AggOp::Min: return "MIN";
  }
  return "";
}

std::string cond_keyword(CondOp op) {
  switch (op) {
    case CondOp::Eq: return "=";
    case CondOp::Gt: return ">";
    case CondOp::Lt: return "<";
  }
  return "=";
}

SqlValue::SqlValue(std::string surface) : text(std::move(surface)) {
  num = parse_number(text);
}

SqlValue::SqlValue(double value) : text(format_number(value)), num(value) {}

ResultSet ResultSet::of_cells(std::vector<std::string> c) {
  ResultSet r;
  r.kind = Kind::Cells;
  r.cells = std::move(c);
  return r;
}

ResultSet ResultSet::of_scalar(double s) {
  ResultSet r;
  r.kind = Kind::Scalar;
  r.scalar = s;
  return r;
}

bool ResultSet::operator==(const ResultSet& other) const {
  if (kind != other.kind) return false;
  if (kind == Kind::Scalar) return scalar == other.scalar;
  return cells == other.cells;
}

void validate_query(const SqlQuery& q, const Table& t) {
  const int ncols = static_cast<int>(t.num_columns());
  if (q.agg_col < 0 || q.agg_col >= ncols)
    throw ExecError(ExecError::Kind::ColumnRange,
                    "aggregation column " + std::to_string(q.agg_col) + " out of range for table " + t.id);
  if ((q.agg_op == AggOp::Max || q.agg_op == AggOp::Min) &&
      t.column_types[static_cast<size_t>(q.agg_col)] != ColumnType::Numeric)
    throw ExecError(ExecError::Kind::TypeMismatch,
                    agg_keyword(q.agg_op) + " over text column \"" + t.column_name(static_cast<size_t>(q.agg_col)) + "\"");
  for (const Condition& c : q.conds) {
    if (c.col < 0 || c.col >= ncols)
      throw ExecError(ExecError::Kind::ColumnRange,
                      "condition column " + std::to_string(c.col) + " out of range for table " + t.id);
    if (c.op != CondOp::Eq && t.column_types[static_cast<size_t>(c.col)] != ColumnType::Numeric)
      throw ExecError(ExecError::Kind::TypeMismatch,
                      "comparison \"" + cond_keyword(c.op) + "\" against text column \"" +
                          t.column_name(static_cast<size_t>(c.col)) + "\"");
  }
}

std::string serialize_sql(const SqlQuery& q, const Table& t) {
  validate_query(q, t);
  std::string s = "SELECT ";
  if (q.agg_op != AggOp::None) {
    s += agg_keyword(q.agg_op);
    s += ' ';
  }
  s += t.column_name(static_cast<size_t>(q.agg_col));
  for (size_t i = 0; i < q.conds.size(); ++i) {
    s += i == 0 ? " WHERE " : " AND ";
    const Condition& c = q.conds[i];
    s += t.column_name(static_cast<size_t>(c.col));
    s += ' ';
    s += cond_keyword(c.op);
    s += ' ';
    s += c.value.text;
  }
  return s;
}

namespace {

// Longest run of tokens starting at pos that equals a column name of t.
// Returns (column index, token count) or (-1, 0). First column wins ties.
std::pair<int, size_t> match_column(const std::vector<std::string>& tokens, size_t pos, const Table& t) {
  int best_col = -1;
  size_t best_len = 0;
  for (size_t c = 0; c < t.num_columns(); ++c) {
    const auto& name = t.column_names[c];
    if (name.empty() || pos + name.size() > tokens.size()) continue;
    if (name.size() <= best_len) continue;
    if (std::equal(name.begin(), name.end(), tokens.begin() + static_cast<long>(pos)))
      best_col = static_cast<int>(c), best_len = name.size();
  }
  return {best_col, best_len};
}

bool is_op_token(const std::string& tok) { return tok == "=" || tok == ">" || tok == "<"; }

CondOp op_from_token(const std::string& tok) {
  if (tok == "=") return CondOp::Eq;
  if (tok == ">") return CondOp::Gt;
  return CondOp::Lt;
}

// Whether tokens[pos..] starts a parseable condition (column then operator).
bool starts_condition(const std::vector<std::string>& tokens, size_t pos, const Table& t) {
  auto [col, len] = match_column(tokens, pos, t);
  if (col < 0) return false;
  return pos + len < tokens.size() && is_op_token(tokens[pos + len]);
}

}  // namespace

SqlQuery parse_sql(const std::string& s, const Table& t) {
  // Stored text is lowercase, so the whole input can be folded up front;
  // keyword matching becomes case-insensitive for free.
  const std::vector<std::string> tokens = split_ws(to_lower(s));
  size_t pos = 0;
  auto expect = [&](const std::string& what) {
    if (pos >= tokens.size()) throw SqlParseError("unexpected end of query, expected " + what);
  };
  expect("SELECT");
  if (tokens[pos] != "select") throw SqlParseError("query must start with SELECT");
  ++pos;

  SqlQuery q;
  expect("aggregate or column name");
  if (tokens[pos] == "count") {
    q.agg_op = AggOp::Count;
    ++pos;
  } else if (tokens[pos] == "max") {
    q.agg_op = AggOp::Max;
    ++pos;
  } else if (tokens[pos] == "min") {
    q.agg_op = AggOp::Min;
    ++pos;
  }
  expect("column name");
  {
    auto [col, len] = match_column(tokens, pos, t);
    if (col < 0) throw SqlParseError("unknown column at \"" + tokens[pos] + "\" in table " + t.id);
    q.agg_col = col;
    pos += len;
  }
  if (pos < tokens.size()) {
    if (tokens[pos] != "where") throw SqlParseError("expected WHERE, got \"" + tokens[pos] + "\"");
    ++pos;
    while (true) {
      expect("condition column");
      auto [col, len] = match_column(tokens, pos, t);
      if (col < 0) throw SqlParseError("unknown condition column at \"" + tokens[pos] + "\"");
      pos += len;
      expect("condition operator");
      if (!is_op_token(tokens[pos]))
        throw SqlParseError("unknown operator \"" + tokens[pos] + "\"");
      const CondOp op = op_from_token(tokens[pos]);
      ++pos;
      expect("condition value");
      // Value runs until an AND that begins another parseable condition; an
      // AND at the very end of the input is dangling, not a value token.
      std::vector<std::string> value_tokens;
      while (pos < tokens.size()) {
        if (tokens[pos] == "and" &&
            (pos + 1 == tokens.size() || starts_condition(tokens, pos + 1, t)))
          break;
        value_tokens.push_back(tokens[pos]);
        ++pos;
      }
      if (value_tokens.empty()) throw SqlParseError("missing condition value");
      Condition c;
      c.col = col;
      c.op = op;
      c.value = SqlValue(join_tokens(value_tokens));
      q.conds.push_back(std::move(c));
      if (pos >= tokens.size()) break;
      ++pos;  // consume AND
    }
  }
  validate_query(q, t);
  return q;
}

namespace {

bool condition_holds(const Condition& c, const Cell& cell, ColumnType type) {
  switch (c.op) {
    case CondOp::Eq:
      if (type == ColumnType::Numeric)
        return cell.num && c.value.num && *cell.num == *c.value.num;
      return cell.text == c.value.text;
    case CondOp::Gt:
      return cell.num && c.value.num && *cell.num > *c.value.num;
    case CondOp::Lt:
      return cell.num && c.value.num && *cell.num < *c.value.num;
  }
  return false;
}

}  // namespace

std::vector<size_t> selected_rows(const SqlQuery& q, const Table& t) {
  validate_query(q, t);
  std::vector<size_t> rows;
  for (size_t r = 0; r < t.num_rows(); ++r) {
    bool ok = true;
    for (const Condition& c : q.conds) {
      const Cell& cell = t.rows[r][static_cast<size_t>(c.col)];
      if (!condition_holds(c, cell, t.column_types[static_cast<size_t>(c.col)])) {
        ok = false;
        break;
      }
    }
    if (ok) rows.push_back(r);
  }
  return rows;
}

ResultSet execute(const SqlQuery& q, const Table& t) {
  const std::vector<size_t> rows = selected_rows(q, t);
  const size_t col = static_cast<size_t>(q.agg_col);
  switch (q.agg_op) {
    case AggOp::None: {
      std::vector<std::string> cells;
      cells.reserve(rows.size());
      for (size_t r : rows) cells.push_back(t.rows[r][col].text);
      return ResultSet::of_cells(std::move(cells));
    }
    case AggOp::Count:
      return ResultSet::of_scalar(static_cast<double>(rows.size()));
    case AggOp::Max:
    case AggOp::Min: {
      std::optional<double> acc;
      for (size_t r : rows) {
        const Cell& cell = t.rows[r][col];
        if (cell.empty() || !cell.num) continue;  // aggregates skip empty cells
        if (!acc) {
          acc = *cell.num;
        } else {
          acc = q.agg_op == AggOp::Max ? std::max(*acc, *cell.num) : std::min(*acc, *cell.num);
        }
      }
      if (!acc)
        throw ExecError(ExecError::Kind::EmptyAggregate,
                        agg_keyword(q.agg_op) + " over zero values in table " + t.id);
      return ResultSet::of_scalar(*acc);
    }
  }
  throw ExecError(ExecError::Kind::TypeMismatch, "unreachable aggregate");
}

bool empty_result(const SqlQuery& q, const Table& t) {
  if (selected_rows(q, t).empty()) return true;
  if (q.agg_op == AggOp::Max || q.agg_op == AggOp::Min) {
    try {
      execute(q, t);
    } catch (const ExecError& e) {
      if (e.kind == ExecError::Kind::EmptyAggregate) return true;
      throw;
    }
  }
  return false;
}

bool queries_equal(const SqlQuery& a, const SqlQuery& b, const Table& t) {
  return serialize_sql(a, t) == serialize_sql(b, t);
}

std::vector<std::string> linearize_for_qg(const SqlQuery& q, const Table& t) {
  return tokenize(serialize_sql(q, t));
}

}  // namespace sqlqg
