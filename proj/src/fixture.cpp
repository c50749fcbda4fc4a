#include "sqlqg/fixture.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sqlqg/sampler.hpp"
#include "sqlqg/text.hpp"

namespace sqlqg {

using nlohmann::json;

namespace {

struct ColumnPool {
  std::string name;
  bool numeric;
  std::vector<std::string> values;  // text pools
  long long lo = 0, hi = 0;         // numeric ranges
};

const std::vector<ColumnPool> kTextPools = {
    {"name", false, {"arden", "brant", "calder", "doyle", "emory", "foster", "gray", "hale"}, 0, 0},
    {"team", false, {"falcons", "rovers", "united", "wanderers", "city", "rangers", "athletic"}, 0, 0},
    {"home city", false, {"aberdeen", "boston", "chester", "dover", "easton", "fairview"}, 0, 0},
    {"country", false, {"brazil", "canada", "denmark", "france", "italy", "japan", "kenya"}, 0, 0},
    {"opponent", false, {"harriers", "lions", "miners", "pirates", "saints", "titans"}, 0, 0},
    {"final score", false, {"7-2", "3-1", "2-0", "4-4", "1-0", "5-3", "2-2", "0-0"}, 0, 0},
    {"driver", false, {"ines", "jonas", "karim", "lena", "marco", "nadia", "otto"}, 0, 0},
    {"venue", false, {"north park", "south field", "east arena", "west ground", "old stadium"}, 0, 0},
};

const std::vector<ColumnPool> kNumericPools = {
    {"built", true, {}, 1950, 1999},
    {"points", true, {}, 0, 48},
    {"rank", true, {}, 1, 12},
    {"attendance", true, {}, 100, 980},
    {"year", true, {}, 2001, 2019},
    {"wins", true, {}, 0, 25},
    {"2nd leg", true, {}, 1, 9},
    {"laps", true, {}, 10, 70},
};

Table make_table(int index, Rng& rng) {
  Table t;
  t.id = "t" + std::to_string(index);

  // Two text and two numeric columns, distinct pools, shuffled order.
  std::vector<ColumnPool> chosen;
  {
    size_t a = rng.pick_index(kTextPools.size());
    size_t b = rng.pick_index(kTextPools.size() - 1);
    if (b >= a) ++b;
    chosen.push_back(kTextPools[a]);
    chosen.push_back(kTextPools[b]);
    size_t c = rng.pick_index(kNumericPools.size());
    size_t d = rng.pick_index(kNumericPools.size() - 1);
    if (d >= c) ++d;
    chosen.push_back(kNumericPools[c]);
    chosen.push_back(kNumericPools[d]);
  }
  for (size_t i = chosen.size(); i > 1; --i)
    std::swap(chosen[i - 1], chosen[rng.pick_index(i)]);

  for (const ColumnPool& pool : chosen) {
    const auto tokens = tokenize(pool.name);
    t.column_names.push_back(tokens);
    t.column_display.push_back(join_tokens(tokens));
    t.column_types.push_back(pool.numeric ? ColumnType::Numeric : ColumnType::Text);
  }

  const int rows = static_cast<int>(rng.uniform_int(4, 7));
  for (int r = 0; r < rows; ++r) {
    std::vector<Cell> row_cells;
    for (const ColumnPool& pool : chosen) {
      if (pool.numeric)
        row_cells.push_back(Cell(format_number(static_cast<double>(rng.uniform_int(pool.lo, pool.hi)))));
      else
        row_cells.push_back(Cell(pool.values[rng.pick_index(pool.values.size())]));
    }
    t.rows.push_back(std::move(row_cells));
  }
  t.validate();
  return t;
}

std::string pick(Rng& rng, const std::vector<std::string>& options) {
  return options[rng.pick_index(options.size())];
}

std::string condition_phrase(const Condition& c, const Table& t, Rng& rng) {
  const std::string col = t.column_name(static_cast<size_t>(c.col));
  const std::string& val = c.value.text;
  switch (c.op) {
    case CondOp::Eq:
      return pick(rng, {col + " is " + val, col + " being " + val, "the " + col + " is " + val});
    case CondOp::Gt:
      return pick(rng, {col + " is larger than " + val, col + " is more than " + val,
                        col + " is above " + val});
    case CondOp::Lt:
      return pick(rng, {col + " is smaller than " + val, col + " is less than " + val,
                        col + " is below " + val});
  }
  return col + " is " + val;
}

}  // namespace

std::vector<std::string> template_question(const SqlQuery& q, const Table& t, Rng& rng) {
  const std::string col = t.column_name(static_cast<size_t>(q.agg_col));
  std::string conds;
  for (size_t i = 0; i < q.conds.size(); ++i) {
    conds += i == 0 ? " when " : " and ";
    conds += condition_phrase(q.conds[i], t, rng);
  }
  std::string text;
  switch (q.agg_op) {
    case AggOp::None:
      if (conds.empty())
        text = pick(rng, {"what are all the " + col + " values", "list every " + col});
      else
        text = pick(rng, {"what is the " + col + conds, "which " + col + " has" + conds,
                          "name the " + col + conds, "tell me the " + col + conds});
      break;
    case AggOp::Count:
      text = pick(rng, {"what is the total number of " + col + conds,
                        "how many " + col + conds, "count the number of " + col + conds});
      break;
    case AggOp::Max:
      text = pick(rng, {"what is the highest " + col + conds,
                        "what is the largest " + col + conds});
      break;
    case AggOp::Min:
      text = pick(rng, {"what is the lowest " + col + conds,
                        "what is the smallest " + col + conds});
      break;
  }
  if (rng.uniform() < 0.3) text += " ?";
  return tokenize(text);
}

FixtureData make_fixture(const FixtureSpec& spec) {
  if (spec.num_tables < 1 || spec.instances_per_table < 1)
    throw ConfigError("fixture: table and instance counts must be >= 1");
  if (spec.dev_fraction + spec.test_fraction >= 1.0)
    throw ConfigError("fixture: dev and test fractions leave no training data");

  FixtureData data;
  Rng table_rng(Rng::mix(spec.seed, 0x7AB1E));
  for (int i = 0; i < spec.num_tables; ++i) data.tables.add(make_table(i, table_rng));

  std::vector<Instance> all;
  Rng inst_rng(Rng::mix(spec.seed, 0x1257));
  for (const Table& t : data.tables.all()) {
    for (int k = 0; k < spec.instances_per_table; ++k) {
      // Gold queries come from the sampler itself, so they respect the same
      // sampling and filter rules as generated data.
      std::optional<SqlQuery> q;
      for (int attempt = 0; attempt < 200 && !q; ++attempt)
        q = sample_query(t, inst_rng, spec.max_conditions);
      if (!q) throw Error("fixture: sampler failed on table " + t.id);
      Instance inst;
      inst.table_id = t.id;
      inst.query = *q;
      inst.question = template_question(*q, t, inst_rng);
      inst.origin = Origin::Supervised;
      all.push_back(std::move(inst));
    }
  }

  Rng split_rng(Rng::mix(spec.seed, 0x59111));
  for (size_t i = all.size(); i > 1; --i)
    std::swap(all[i - 1], all[split_rng.pick_index(i)]);
  const size_t n = all.size();
  const size_t n_dev = static_cast<size_t>(spec.dev_fraction * static_cast<double>(n));
  const size_t n_test = static_cast<size_t>(spec.test_fraction * static_cast<double>(n));
  for (size_t i = 0; i < n; ++i) {
    if (i < n_dev)
      data.dev.push_back(all[i]);
    else if (i < n_dev + n_test)
      data.test.push_back(all[i]);
    else
      data.train.push_back(all[i]);
  }
  return data;
}

FixturePaths write_fixture(const std::string& dir, const FixtureSpec& spec) {
  const FixtureData data = make_fixture(spec);
  std::filesystem::create_directories(dir);
  FixturePaths paths;
  paths.tables = dir + "/tables.jsonl";
  paths.train = dir + "/train.jsonl";
  paths.dev = dir + "/dev.jsonl";
  paths.test = dir + "/test.jsonl";

  {
    std::ofstream out(paths.tables);
    if (!out) throw DataError("cannot write " + paths.tables);
    for (const Table& t : data.tables.all()) {
      json rec;
      rec["id"] = t.id;
      json header = json::array();
      for (const auto& name : t.column_display) header.push_back(name);
      rec["header"] = std::move(header);
      json types = json::array();
      for (ColumnType type : t.column_types) types.push_back(column_type_name(type));
      rec["types"] = std::move(types);
      json rows = json::array();
      for (const auto& row_cells : t.rows) {
        json row = json::array();
        for (const Cell& cell : row_cells) row.push_back(cell.text);
        rows.push_back(std::move(row));
      }
      rec["rows"] = std::move(rows);
      out << rec.dump() << '\n';
    }
  }
  save_instances(paths.train, data.train, data.tables);
  save_instances(paths.dev, data.dev, data.tables);
  save_instances(paths.test, data.test, data.tables);
  return paths;
}

}  // namespace sqlqg
