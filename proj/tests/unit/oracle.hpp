#pragma once

#include <optional>

#include "sqlqg/sql.hpp"
#include "sqlqg/table.hpp"

namespace sqlqg::testing {

// Independent brute-force executor: scans every row and applies the
// selection and aggregation definitions literally. Shares only the data
// types with the library executor, never its logic. nullopt stands for the
// empty-aggregate error.
std::optional<ResultSet> oracle_execute(const SqlQuery& q, const Table& t);

// Row indices the oracle selects; used for monotonicity checks.
std::vector<size_t> oracle_selected_rows(const SqlQuery& q, const Table& t);

// Non-empty result under the oracle's reading of filter rule 2.
bool oracle_non_empty(const SqlQuery& q, const Table& t);

}  // namespace sqlqg::testing
