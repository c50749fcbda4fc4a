#include "sqlqg/parser_model.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "sqlqg/fixture.hpp"
#include "sqlqg/text.hpp"

using namespace sqlqg;

namespace {

Table demo_table() {
  Table t;
  t.id = "demo";
  t.column_names = {{"name"}, {"built"}, {"final", "score"}};
  t.column_display = {"name", "built", "final score"};
  t.column_types = {ColumnType::Text, ColumnType::Numeric, ColumnType::Text};
  t.rows = {{Cell("alpha"), Cell("1950"), Cell("7-2")},
            {Cell("beta"), Cell("1962"), Cell("3-1")},
            {Cell("gamma"), Cell("1950"), Cell("2-0")}};
  t.validate();
  return t;
}

ParserConfig tiny_parser_config() {
  ParserConfig cfg;
  cfg.hidden_size = 2;
  cfg.embed_size = 2;
  cfg.dropout = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  return cfg;
}

Vocabulary vocab_for(const Table& t, const std::vector<std::vector<std::string>>& questions) {
  std::vector<std::vector<std::string>> corpus = questions;
  for (const auto& name : t.column_names) corpus.push_back(name);
  for (const auto& row : t.rows)
    for (const Cell& cell : row) corpus.push_back(tokenize(cell.text));
  return build_vocab(corpus, 1);
}

}  // namespace

TEST_CASE("cell_weights is uniform without overlap and softmax-shaped with it") {
  const std::vector<Cell> cells = {Cell("7-2"), Cell("3-1"), Cell("2-0")};
  const auto uniform = cell_weights({"what", "is", "this"}, cells);
  for (double w : uniform) CHECK(w == doctest::Approx(1.0 / 3.0));

  const auto weighted = cell_weights({"the", "7-2", "game"}, cells);
  // One co-occurring token: e / (e + 2).
  CHECK(weighted[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 2.0)).epsilon(1e-9));
  CHECK(weighted[0] == doctest::Approx(0.576).epsilon(1e-2));
}

TEST_CASE("cell_weights sums to one on random inputs") {
  Rng rng(14);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "7-2", "1950"};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Cell> cells;
    const size_t n = 1 + rng.pick_index(6);
    for (size_t i = 0; i < n; ++i) cells.push_back(Cell(pool[rng.pick_index(pool.size())]));
    std::vector<std::string> question;
    for (size_t i = 0; i < 1 + rng.pick_index(8); ++i)
      question.push_back(pool[rng.pick_index(pool.size())]);
    const auto w = cell_weights(question, cells);
    double sum = 0;
    for (double v : w) sum += v;
    CHECK(std::fabs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("linearize_gold tags channels and finds every matching cell") {
  const Table t = demo_table();
  SqlQuery q;
  q.agg_op = AggOp::Count;
  q.agg_col = 0;
  q.conds = {{1, CondOp::Eq, SqlValue(1950.0)}};
  const auto steps = linearize_gold(q, t);
  // SELECT, COUNT, col, WHERE, col, =, value, EOS.
  REQUIRE(steps.size() == 8);
  CHECK(steps[0].channel == Channel::Sql);
  CHECK(steps[0].token == static_cast<int>(SqlKeyword::Select));
  CHECK(steps[1].token == static_cast<int>(SqlKeyword::Count));
  CHECK(steps[2].channel == Channel::Col);
  CHECK(steps[2].token == 0);
  CHECK(steps[3].token == static_cast<int>(SqlKeyword::Where));
  CHECK(steps[4].channel == Channel::Col);
  CHECK(steps[4].token == 1);
  CHECK(steps[5].channel == Channel::Sql);
  CHECK(steps[5].token == static_cast<int>(SqlKeyword::Eq));
  CHECK(steps[6].channel == Channel::Val);
  CHECK(steps[6].value_rows == std::vector<int>{0, 2});  // both 1950 rows
  CHECK(steps[7].token == static_cast<int>(SqlKeyword::Eos));

  SqlQuery bad = q;
  bad.conds[0].value = SqlValue(1900.0);
  CHECK_THROWS_AS(linearize_gold(bad, t), DataError);
  CHECK(parser_trainable(q, t));
  CHECK_FALSE(parser_trainable(bad, t));
}

TEST_CASE("value channel endpoints follow the mixing weight") {
  const Table t = demo_table();
  const std::vector<std::string> question = tokenize("which name has final score 7-2");
  const Vocabulary vocab = vocab_for(t, {question});

  ParserConfig zero_cfg = tiny_parser_config();
  zero_cfg.lambda = 0.0;
  ParserConfig one_cfg = tiny_parser_config();
  one_cfg.lambda = 1.0;
  ParserConfig half_cfg = tiny_parser_config();
  half_cfg.lambda = 0.5;

  // Identical seeds give identical parameters; only lambda differs.
  ParserModel zero(zero_cfg, vocab, 55);
  ParserModel one(one_cfg, vocab, 55);
  ParserModel half(half_cfg, vocab, 55);

  NoGradGuard guard;
  Rng rng(0);
  const int width = 2 * zero.config().hidden_size;
  const Tensor state = Tensor::from(1, width, {0.3, -0.5, 0.8, 0.1});
  const auto rep_zero = zero.encode_table(t, question, rng, false);
  const auto rep_one = one.encode_table(t, question, rng, false);
  const auto rep_half = half.encode_table(t, question, rng, false);

  const int col = 2;  // "final score"
  const auto alpha = cell_weights(question, {t.rows[0][2], t.rows[1][2], t.rows[2][2]});
  const auto p_zero = zero.val_channel(state, rep_zero, col).value();
  const auto p_one = one.val_channel(state, rep_one, col).value();
  const auto p_half = half.val_channel(state, rep_half, col).value();

  for (size_t r = 0; r < alpha.size(); ++r) {
    // lambda = 0: exactly the co-occurrence weights.
    CHECK(p_zero[r] == alpha[r]);
    // lambda = 1: exactly the learned attention distribution, recoverable
    // from the half mixture: attn = 2 * p_half - alpha.
    CHECK(p_one[r] == doctest::Approx(2.0 * p_half[r] - alpha[r]).epsilon(1e-12));
  }
  // The learned endpoint is a distribution of its own.
  double sum = 0;
  for (double v : p_one) sum += v;
  CHECK(std::fabs(sum - 1.0) < 1e-9);
  CHECK_THROWS_AS(zero.val_channel(state, rep_zero, -1), Error);
}

TEST_CASE("grammar mask: only legal moves after SELECT") {
  const Table t = demo_table();
  GrammarState g(t);
  CHECK(g.phase() == GrammarState::Phase::ExpectSelect);
  auto kw = g.keyword_mask();
  CHECK(kw[static_cast<size_t>(SqlKeyword::Select)]);
  for (SqlKeyword other : {SqlKeyword::Where, SqlKeyword::And, SqlKeyword::Eq, SqlKeyword::Eos})
    CHECK_FALSE(kw[static_cast<size_t>(other)]);

  g.advance_keyword(SqlKeyword::Select);
  const auto channels = g.channel_mask();
  CHECK(channels[static_cast<int>(Channel::Sql)]);
  CHECK(channels[static_cast<int>(Channel::Col)]);
  CHECK_FALSE(channels[static_cast<int>(Channel::Val)]);
  kw = g.keyword_mask();
  CHECK(kw[static_cast<size_t>(SqlKeyword::Count)]);
  CHECK(kw[static_cast<size_t>(SqlKeyword::Max)]);
  CHECK(kw[static_cast<size_t>(SqlKeyword::Min)]);
  CHECK_FALSE(kw[static_cast<size_t>(SqlKeyword::Select)]);
  CHECK_FALSE(kw[static_cast<size_t>(SqlKeyword::Eos)]);

  // MAX restricts the aggregation column to numeric ones.
  g.advance_keyword(SqlKeyword::Max);
  const auto cols = g.column_mask();
  CHECK_FALSE(cols[0]);
  CHECK(cols[1]);
  CHECK_FALSE(cols[2]);

  g.advance_column(1);
  // Condition operators: numeric column allows > and <.
  g.advance_keyword(SqlKeyword::Where);
  g.advance_column(1);
  auto ops = g.keyword_mask();
  CHECK(ops[static_cast<size_t>(SqlKeyword::Eq)]);
  CHECK(ops[static_cast<size_t>(SqlKeyword::Gt)]);
  CHECK(ops[static_cast<size_t>(SqlKeyword::Lt)]);
  g.advance_keyword(SqlKeyword::Gt);
  const auto values = g.value_mask();
  CHECK(values == std::vector<bool>{true, true, true});
  g.advance_value(0);
  g.advance_keyword(SqlKeyword::Eos);
  CHECK(g.done());
  const SqlQuery q = g.query();
  CHECK(q.agg_op == AggOp::Max);
  CHECK(q.agg_col == 1);
  REQUIRE(q.conds.size() == 1);
  CHECK(q.conds[0].value.text == "1950");
  CHECK_NOTHROW(validate_query(q, t));
}

TEST_CASE("grammar mask forbids comparison operators on text columns") {
  const Table t = demo_table();
  GrammarState g(t);
  g.advance_keyword(SqlKeyword::Select);
  g.advance_column(0);
  g.advance_keyword(SqlKeyword::Where);
  g.advance_column(0);  // text column
  const auto ops = g.keyword_mask();
  CHECK(ops[static_cast<size_t>(SqlKeyword::Eq)]);
  CHECK_FALSE(ops[static_cast<size_t>(SqlKeyword::Gt)]);
  CHECK_FALSE(ops[static_cast<size_t>(SqlKeyword::Lt)]);
  CHECK_THROWS_AS(g.advance_keyword(SqlKeyword::Gt), Error);
}

TEST_CASE("predictions always serialize, re-parse, and satisfy invariants") {
  FixtureSpec spec;
  spec.num_tables = 3;
  spec.instances_per_table = 4;
  spec.seed = 17;
  const FixtureData data = make_fixture(spec);
  std::vector<Instance> all = data.train;
  all.insert(all.end(), data.dev.begin(), data.dev.end());

  ParserConfig cfg = tiny_parser_config();
  ParserModel model = train_parser(all, data.tables, cfg, 5);
  for (const Instance& inst : all) {
    const Table& t = data.tables.at(inst.table_id);
    const SqlQuery pred = model.predict(inst.question, t);
    CHECK_NOTHROW(validate_query(pred, t));
    const std::string canon = serialize_sql(pred, t);
    CHECK(serialize_sql(parse_sql(canon, t), t) == canon);
  }
}

TEST_CASE("gate-weighted mixture is a proper distribution") {
  const Table t = demo_table();
  const std::vector<std::string> question = tokenize("which name has built 1950");
  ParserModel model(tiny_parser_config(), vocab_for(t, {question}), 23);
  NoGradGuard guard;
  Rng rng(41);
  const auto enc = model.encode_question(question, rng, false);
  const auto rep = model.encode_table(t, question, rng, false);
  const int width = 2 * model.config().hidden_size;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> sv(static_cast<size_t>(width)), cv(static_cast<size_t>(width));
    for (double& v : sv) v = rng.uniform(-2, 2);
    for (double& v : cv) v = rng.uniform(-2, 2);
    const Tensor state = Tensor::from(1, width, sv);
    const Tensor ctx = Tensor::from(1, width, cv);
    const auto step = model.advance(state, ctx, model.encode_table(t, question, rng, false).col_reps[0], enc, rng, false);
    const auto gate = step.gate.value();
    const std::vector<Tensor> channels = {model.sql_channel(step.state),
                                          model.col_channel(step.state, rep),
                                          model.val_channel(step.state, rep, 1)};
    double marginal = 0;
    for (size_t z = 0; z < 3; ++z) {
      double channel_sum = 0;
      for (double v : channels[z].value()) {
        CHECK(v >= 0.0);
        channel_sum += v;
      }
      CHECK(std::fabs(channel_sum - 1.0) < 1e-9);
      marginal += gate[z] * channel_sum;
    }
    CHECK(std::fabs(marginal - 1.0) < 1e-9);
  }
}

TEST_CASE("parser loss gradients pass finite differences") {
  const Table t = demo_table();
  const std::vector<std::string> question = tokenize("how many name built above 1950");
  ParserModel model(tiny_parser_config(), vocab_for(t, {question}), 29);
  Instance inst;
  inst.table_id = t.id;
  inst.question = question;
  inst.query.agg_op = AggOp::Count;
  inst.query.agg_col = 0;
  inst.query.conds = {{1, CondOp::Eq, SqlValue(1950.0)}};
  TableSet tables;
  tables.add(t);
  auto f = [&]() {
    Rng frozen(3);
    return model.loss({inst}, tables, frozen, true);
  };
  const auto report = finite_diff_check(f, model.params(), 1e-5, 1e-4);
  CAPTURE(report.worst_param);
  CAPTURE(report.max_rel_error);
  CHECK(report.pass);
}

TEST_CASE("shuffled labels train visibly worse than matched labels") {
  FixtureSpec spec;
  spec.num_tables = 3;
  spec.instances_per_table = 6;
  spec.seed = 71;
  const FixtureData data = make_fixture(spec);
  std::vector<Instance> matched = data.train;
  matched.resize(std::min<size_t>(matched.size(), 14));

  // Mispair questions and queries within the same table's instances.
  std::vector<Instance> shuffled = matched;
  std::vector<size_t> by_table;
  for (size_t i = 0; i + 1 < shuffled.size(); i += 2) {
    if (shuffled[i].table_id == shuffled[i + 1].table_id)
      std::swap(shuffled[i].question, shuffled[i + 1].question);
  }
  (void)by_table;

  ParserConfig cfg = tiny_parser_config();
  cfg.hidden_size = 6;
  cfg.embed_size = 6;
  cfg.epochs = 60;
  cfg.batch_size = 4;
  ParserModel matched_model = train_parser(matched, data.tables, cfg, 5);
  ParserModel shuffled_model = train_parser(shuffled, data.tables, cfg, 5);
  const double matched_acc = parser_accuracy(matched_model, matched, data.tables);
  const double shuffled_acc = parser_accuracy(shuffled_model, shuffled, data.tables);
  CHECK(matched_acc >= shuffled_acc);
}

TEST_CASE("parser checkpoints round-trip") {
  const Table t = demo_table();
  const std::vector<std::string> question = tokenize("which name has built 1950");
  ParserModel model(tiny_parser_config(), vocab_for(t, {question}), 61);
  const auto path = (std::filesystem::temp_directory_path() / "sqlqg_parser_ckpt.bin").string();
  model.save(path);
  ParserModel loaded = ParserModel::load(path);
  const SqlQuery a = model.predict(question, t);
  const SqlQuery b = loaded.predict(question, t);
  CHECK(queries_equal(a, b, t));
  std::remove(path.c_str());
}
