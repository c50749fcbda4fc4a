#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sqlqg/rng.hpp"
#include "sqlqg/sql.hpp"
#include "sqlqg/table.hpp"

namespace sqlqg {

struct SamplerConfig {
  int max_conditions = 4;
  int per_table = 5;
  uint64_t rng_seed = 0;
  int retry_cap = 100;

  void validate() const;
};

struct SampledQuery {
  std::string table_id;
  SqlQuery query;
};

struct SampleReport {
  std::vector<SampledQuery> queries;
  std::vector<std::string> skipped_tables;  // retry cap exhausted
};

// One draw under the sampling rules: uniform columns, aggregate and operator
// sets widened for numeric columns, equality values from cells, range values
// from [min, max] of the column. Returns nullopt when the query executes to
// an empty result. Accepted queries come back condition-minimized.
std::optional<SqlQuery> sample_query(const Table& t, Rng& rng, int max_conditions);

// Drops conditions left-to-right whenever removal leaves the ResultSet
// unchanged, repeating until a full pass drops nothing.
SqlQuery minimize_conditions(const SqlQuery& q, const Table& t);

// Exactly per_table accepted queries per table (tables that exhaust the
// retry cap are skipped and reported). Deterministic given rng_seed: each
// table gets its own stream derived from the seed and table position.
SampleReport sample_dataset(const TableSet& tables, const SamplerConfig& cfg);

}  // namespace sqlqg
