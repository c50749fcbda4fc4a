#include "sqlqg/sampler.hpp"

#include "doctest.h"
#include "oracle.hpp"
#include "sqlqg/fixture.hpp"

using namespace sqlqg;

namespace {

Table one_cell_table() {
  Table t;
  t.id = "one";
  t.column_names = {{"name"}};
  t.column_display = {"name"};
  t.column_types = {ColumnType::Text};
  t.rows = {{Cell("solo")}};
  t.validate();
  return t;
}

Table implied_conditions_table() {
  // c1 (name = x) is implied by c2 (built = 7): both select exactly row 0.
  Table t;
  t.id = "implied";
  t.column_names = {{"name"}, {"built"}};
  t.column_display = {"name", "built"};
  t.column_types = {ColumnType::Text, ColumnType::Numeric};
  t.rows = {{Cell("x"), Cell("7")}, {Cell("y"), Cell("9")}, {Cell("z"), Cell("9")}};
  t.validate();
  return t;
}

}  // namespace

TEST_CASE("single-cell table: every accepted query conditions on the only cell") {
  const Table t = one_cell_table();
  Rng rng(5);
  int accepted = 0;
  for (int i = 0; i < 50; ++i) {
    auto q = sample_query(t, rng, 1);
    if (!q) continue;
    ++accepted;
    for (const Condition& c : q->conds) CHECK(c.value.text == "solo");
  }
  CHECK(accepted > 0);
}

TEST_CASE("sampling rules hold over many accepted queries") {
  FixtureSpec spec;
  spec.num_tables = 6;
  spec.instances_per_table = 1;
  spec.seed = 4242;
  const FixtureData data = make_fixture(spec);
  Rng rng(77);
  size_t accepted = 0;
  while (accepted < 2000) {
    for (const Table& t : data.tables.all()) {
      auto q = sample_query(t, rng, 4);
      if (!q) continue;
      ++accepted;
      // Aggregate ops restricted by the aggregation column type.
      if (t.column_types[static_cast<size_t>(q->agg_col)] == ColumnType::Text)
        CHECK((q->agg_op == AggOp::None || q->agg_op == AggOp::Count));
      for (const Condition& c : q->conds) {
        const bool numeric = t.column_types[static_cast<size_t>(c.col)] == ColumnType::Numeric;
        if (!numeric) CHECK(c.op == CondOp::Eq);
        if (c.op == CondOp::Eq && !numeric) {
          bool found = false;
          for (const auto& row : t.rows)
            if (row[static_cast<size_t>(c.col)].text == c.value.text) found = true;
          CHECK(found);
        }
        if (c.op != CondOp::Eq) {
          // Range values stay inside [min, max] of the column.
          double lo = 0, hi = 0;
          bool any = false;
          for (const auto& row : t.rows) {
            const Cell& cell = row[static_cast<size_t>(c.col)];
            if (cell.empty() || !cell.num) continue;
            if (!any) {
              lo = hi = *cell.num;
              any = true;
            } else {
              lo = std::min(lo, *cell.num);
              hi = std::max(hi, *cell.num);
            }
          }
          REQUIRE(any);
          CHECK(c.value.num.value() >= lo);
          CHECK(c.value.num.value() <= hi);
        }
      }
      // Filter rule 2 under the independent oracle.
      CHECK(sqlqg::testing::oracle_non_empty(*q, t));
    }
  }
}

TEST_CASE("minimize_conditions drops implied conditions") {
  const Table t = implied_conditions_table();
  SqlQuery q;
  q.agg_col = 0;
  q.conds = {{0, CondOp::Eq, SqlValue("x")}, {1, CondOp::Eq, SqlValue(7.0)}};
  const SqlQuery minimized = minimize_conditions(q, t);
  REQUIRE(minimized.conds.size() == 1);
  CHECK(minimized.conds[0].col == 1);
  CHECK(execute(minimized, t) == execute(q, t));
}

TEST_CASE("minimize_conditions leaves empty condition lists unchanged") {
  const Table t = implied_conditions_table();
  SqlQuery q;
  q.agg_col = 0;
  const SqlQuery minimized = minimize_conditions(q, t);
  CHECK(minimized.conds.empty());
  CHECK(queries_equal(minimized, q, t));
}

TEST_CASE("minimize_conditions collapses duplicate conditions") {
  const Table t = implied_conditions_table();
  SqlQuery q;
  q.agg_col = 0;
  q.conds = {{0, CondOp::Eq, SqlValue("y")}, {0, CondOp::Eq, SqlValue("y")}};
  const SqlQuery minimized = minimize_conditions(q, t);
  CHECK(minimized.conds.size() == 1);
  CHECK(execute(minimized, t) == execute(q, t));
}

TEST_CASE("minimize_conditions is idempotent and result-preserving on samples") {
  FixtureSpec spec;
  spec.num_tables = 4;
  spec.instances_per_table = 1;
  spec.seed = 31;
  const FixtureData data = make_fixture(spec);
  Rng rng(8);
  size_t accepted = 0;
  while (accepted < 300) {
    for (const Table& t : data.tables.all()) {
      auto q = sample_query(t, rng, 4);
      if (!q) continue;
      ++accepted;
      const SqlQuery once = minimize_conditions(*q, t);
      const SqlQuery twice = minimize_conditions(once, t);
      CHECK(queries_equal(once, twice, t));
      CHECK(execute(once, t) == execute(*q, t));
    }
  }
}

TEST_CASE("sample_dataset yields per_table queries per table, deterministically") {
  FixtureSpec spec;
  spec.num_tables = 10;
  spec.instances_per_table = 1;
  spec.seed = 21;
  const FixtureData data = make_fixture(spec);

  SamplerConfig cfg;
  cfg.per_table = 5;
  cfg.rng_seed = 2024;
  const SampleReport a = sample_dataset(data.tables, cfg);
  CHECK(a.skipped_tables.empty());
  CHECK(a.queries.size() == 50);

  const SampleReport b = sample_dataset(data.tables, cfg);
  REQUIRE(a.queries.size() == b.queries.size());
  for (size_t i = 0; i < a.queries.size(); ++i) {
    CHECK(a.queries[i].table_id == b.queries[i].table_id);
    const Table& t = data.tables.at(a.queries[i].table_id);
    CHECK(queries_equal(a.queries[i].query, b.queries[i].query, t));
  }
}

TEST_CASE("sampler config validation") {
  SamplerConfig cfg;
  cfg.per_table = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.per_table = 1;
  cfg.max_conditions = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("sample_query requires a non-empty table") {
  Table t;
  t.id = "empty";
  t.column_names = {{"a"}};
  t.column_display = {"a"};
  t.column_types = {ColumnType::Text};
  Rng rng(1);
  CHECK_THROWS_AS(sample_query(t, rng, 1), DataError);
}
