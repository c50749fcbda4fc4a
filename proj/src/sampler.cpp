#include "sqlqg/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "sqlqg/error.hpp"
#include "sqlqg/text.hpp"

namespace sqlqg {

void SamplerConfig::validate() const {
  if (per_table < 1) throw ConfigError("sampler: per_table must be >= 1");
  if (max_conditions < 0) throw ConfigError("sampler: max_conditions must be >= 0");
  if (retry_cap < 1) throw ConfigError("sampler: retry_cap must be >= 1");
}

namespace {

// Cell indices of rows with a non-empty cell in column col.
std::vector<size_t> non_empty_rows(const Table& t, size_t col) {
  std::vector<size_t> rows;
  for (size_t r = 0; r < t.num_rows(); ++r)
    if (!t.rows[r][col].empty()) rows.push_back(r);
  return rows;
}

int decimal_places(const std::string& surface) {
  const auto dot = surface.find('.');
  return dot == std::string::npos ? 0 : static_cast<int>(surface.size() - dot - 1);
}

// Range value for a numeric column: integers when every cell is integral,
// otherwise a uniform real rounded to the column's max observed decimals.
std::optional<SqlValue> sample_range_value(const Table& t, size_t col, Rng& rng) {
  double lo = 0, hi = 0;
  bool any = false, all_integral = true;
  int max_decimals = 0;
  for (size_t r = 0; r < t.num_rows(); ++r) {
    const Cell& cell = t.rows[r][col];
    if (cell.empty() || !cell.num) continue;
    const double v = *cell.num;
    if (!any) {
      lo = hi = v;
      any = true;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (v != std::floor(v)) all_integral = false;
    max_decimals = std::max(max_decimals, decimal_places(cell.text));
  }
  if (!any) return std::nullopt;
  if (all_integral)
    return SqlValue(static_cast<double>(
        rng.uniform_int(static_cast<int64_t>(lo), static_cast<int64_t>(hi))));
  const double scale = std::pow(10.0, max_decimals);
  const double v = std::round(rng.uniform(lo, hi) * scale) / scale;
  return SqlValue(v);
}

}  // namespace

SqlQuery minimize_conditions(const SqlQuery& q, const Table& t) {
  const ResultSet target = execute(q, t);
  SqlQuery cur = q;
  bool dropped = true;
  while (dropped) {
    dropped = false;
    for (size_t i = 0; i < cur.conds.size();) {
      SqlQuery cand = cur;
      cand.conds.erase(cand.conds.begin() + static_cast<long>(i));
      bool same = false;
      try {
        same = execute(cand, t) == target;
      } catch (const ExecError&) {
        same = false;
      }
      if (same) {
        cur = std::move(cand);
        dropped = true;
      } else {
        ++i;
      }
    }
  }
  return cur;
}

std::optional<SqlQuery> sample_query(const Table& t, Rng& rng, int max_conditions) {
  if (t.num_columns() == 0 || t.num_rows() == 0)
    throw DataError("sample_query: table " + t.id + " is empty");

  SqlQuery q;
  q.agg_col = static_cast<int>(rng.pick_index(t.num_columns()));
  const bool agg_numeric = t.column_types[static_cast<size_t>(q.agg_col)] == ColumnType::Numeric;
  q.agg_op = agg_numeric ? static_cast<AggOp>(rng.uniform_int(0, 3))
                         : static_cast<AggOp>(rng.uniform_int(0, 1));

  const int cond_cap = std::min<int>(max_conditions, static_cast<int>(t.num_columns()));
  const int n_conds = cond_cap >= 1 ? static_cast<int>(rng.uniform_int(1, cond_cap)) : 0;
  for (int i = 0; i < n_conds; ++i) {
    Condition c;
    c.col = static_cast<int>(rng.pick_index(t.num_columns()));
    const size_t col = static_cast<size_t>(c.col);
    const bool numeric = t.column_types[col] == ColumnType::Numeric;
    c.op = numeric ? static_cast<CondOp>(rng.uniform_int(0, 2)) : CondOp::Eq;
    if (c.op == CondOp::Eq) {
      const auto rows = non_empty_rows(t, col);
      if (rows.empty()) return std::nullopt;
      c.value = SqlValue(t.rows[rows[rng.pick_index(rows.size())]][col].text);
    } else {
      auto value = sample_range_value(t, col, rng);
      if (!value) return std::nullopt;
      c.value = *value;
    }
    q.conds.push_back(std::move(c));
  }

  try {
    if (empty_result(q, t)) return std::nullopt;
  } catch (const ExecError&) {
    return std::nullopt;
  }
  return minimize_conditions(q, t);
}

SampleReport sample_dataset(const TableSet& tables, const SamplerConfig& cfg) {
  cfg.validate();
  SampleReport report;
  size_t table_index = 0;
  for (const Table& t : tables.all()) {
    Rng rng(Rng::mix(cfg.rng_seed, table_index++));
    std::vector<SampledQuery> accepted;
    bool skipped = false;
    for (int slot = 0; slot < cfg.per_table && !skipped; ++slot) {
      bool done = false;
      for (int attempt = 0; attempt < cfg.retry_cap; ++attempt) {
        auto q = sample_query(t, rng, cfg.max_conditions);
        if (q) {
          accepted.push_back({t.id, std::move(*q)});
          done = true;
          break;
        }
      }
      if (!done) skipped = true;
    }
    if (skipped) {
      report.skipped_tables.push_back(t.id);
    } else {
      for (auto& sq : accepted) report.queries.push_back(std::move(sq));
    }
  }
  return report;
}

}  // namespace sqlqg
