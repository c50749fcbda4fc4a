#include "sqlqg/parser_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "sqlqg/text.hpp"

namespace sqlqg {

using nlohmann::json;

void ParserConfig::validate() const {
  if (hidden_size < 1 || embed_size < 1) throw ConfigError("parser: sizes must be >= 1");
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("parser: lambda must be in [0, 1]");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("parser: dropout must be in [0, 1)");
  if (batch_size < 1 || epochs < 1)
    throw ConfigError("parser: batch_size and epochs must be >= 1");
  if (min_count < 1) throw ConfigError("parser: min_count must be >= 1");
  if (max_decode_steps < 4) throw ConfigError("parser: max_decode_steps too small");
}

namespace {

SqlKeyword agg_to_keyword(AggOp op) {
  switch (op) {
    case AggOp::Count: return SqlKeyword::Count;
    case AggOp::Max: return SqlKeyword::Max;
    case AggOp::Min: return SqlKeyword::Min;
    case AggOp::None: break;
  }
  throw Error("agg_to_keyword: no keyword for empty aggregate");
}

SqlKeyword op_to_keyword(CondOp op) {
  switch (op) {
    case CondOp::Eq: return SqlKeyword::Eq;
    case CondOp::Gt: return SqlKeyword::Gt;
    case CondOp::Lt: return SqlKeyword::Lt;
  }
  throw Error("op_to_keyword: bad operator");
}

// Rows of col whose cell matches the literal: surface match for text,
// numeric-value match for numeric columns.
std::vector<int> matching_rows(const SqlValue& value, const Table& t, int col) {
  std::vector<int> rows;
  const size_t c = static_cast<size_t>(col);
  const bool numeric = t.column_types[c] == ColumnType::Numeric;
  for (size_t r = 0; r < t.num_rows(); ++r) {
    const Cell& cell = t.rows[r][c];
    if (cell.empty()) continue;
    const bool match = numeric ? (cell.num && value.num && *cell.num == *value.num)
                               : cell.text == value.text;
    if (match) rows.push_back(static_cast<int>(r));
  }
  return rows;
}

}  // namespace

std::vector<GoldStep> linearize_gold(const SqlQuery& q, const Table& t) {
  validate_query(q, t);
  std::vector<GoldStep> steps;
  steps.push_back({Channel::Sql, static_cast<int>(SqlKeyword::Select), {}});
  if (q.agg_op != AggOp::None)
    steps.push_back({Channel::Sql, static_cast<int>(agg_to_keyword(q.agg_op)), {}});
  steps.push_back({Channel::Col, q.agg_col, {}});
  for (size_t i = 0; i < q.conds.size(); ++i) {
    const Condition& c = q.conds[i];
    steps.push_back(
        {Channel::Sql, static_cast<int>(i == 0 ? SqlKeyword::Where : SqlKeyword::And), {}});
    steps.push_back({Channel::Col, c.col, {}});
    steps.push_back({Channel::Sql, static_cast<int>(op_to_keyword(c.op)), {}});
    const auto rows = matching_rows(c.value, t, c.col);
    if (rows.empty())
      throw DataError("condition value \"" + c.value.text + "\" is not a cell of column \"" +
                      t.column_name(static_cast<size_t>(c.col)) + "\" in table " + t.id);
    steps.push_back({Channel::Val, rows.front(), rows});
  }
  steps.push_back({Channel::Sql, static_cast<int>(SqlKeyword::Eos), {}});
  return steps;
}

bool parser_trainable(const SqlQuery& q, const Table& t) {
  for (const Condition& c : q.conds)
    if (matching_rows(c.value, t, c.col).empty()) return false;
  return true;
}

std::vector<double> cell_weights(const std::vector<std::string>& question,
                                 const std::vector<Cell>& column_cells) {
  if (column_cells.empty()) throw Error("cell_weights: empty column");
  const std::set<std::string> q_tokens(question.begin(), question.end());
  std::vector<double> scores;
  scores.reserve(column_cells.size());
  for (const Cell& cell : column_cells) {
    const auto cell_tokens = tokenize(cell.text);
    const std::set<std::string> distinct(cell_tokens.begin(), cell_tokens.end());
    double score = 0;
    for (const auto& tok : distinct)
      if (q_tokens.count(tok)) score += 1.0;
    scores.push_back(score);
  }
  double mx = *std::max_element(scores.begin(), scores.end());
  double sum = 0;
  for (double& s : scores) {
    s = std::exp(s - mx);
    sum += s;
  }
  for (double& s : scores) s /= sum;
  return scores;
}

// ---------------------------------------------------------------------------
// Grammar mask

std::vector<bool> GrammarState::channel_mask() const {
  std::vector<bool> mask(3, false);
  switch (phase_) {
    case Phase::ExpectSelect:
    case Phase::AfterSelCol:
    case Phase::ExpectOp:
    case Phase::AfterCond:
      mask[static_cast<int>(Channel::Sql)] = true;
      break;
    case Phase::ExpectAggOrCol:
      mask[static_cast<int>(Channel::Sql)] = true;
      mask[static_cast<int>(Channel::Col)] = true;
      break;
    case Phase::ExpectAggCol:
    case Phase::ExpectCondCol:
      mask[static_cast<int>(Channel::Col)] = true;
      break;
    case Phase::ExpectVal:
      mask[static_cast<int>(Channel::Val)] = true;
      break;
    case Phase::Done:
      break;
  }
  return mask;
}

std::vector<bool> GrammarState::keyword_mask() const {
  std::vector<bool> mask(kNumSqlKeywords, false);
  auto allow = [&](SqlKeyword kw) { mask[static_cast<size_t>(kw)] = true; };
  switch (phase_) {
    case Phase::ExpectSelect:
      allow(SqlKeyword::Select);
      break;
    case Phase::ExpectAggOrCol:
      allow(SqlKeyword::Count);
      allow(SqlKeyword::Max);
      allow(SqlKeyword::Min);
      break;
    case Phase::AfterSelCol:
    case Phase::AfterCond:
      allow(SqlKeyword::Eos);
      if (phase_ == Phase::AfterSelCol)
        allow(SqlKeyword::Where);
      else
        allow(SqlKeyword::And);
      break;
    case Phase::ExpectOp: {
      allow(SqlKeyword::Eq);
      const size_t col = static_cast<size_t>(pending_->col);
      if (table_->column_types[col] == ColumnType::Numeric) {
        allow(SqlKeyword::Gt);
        allow(SqlKeyword::Lt);
      }
      break;
    }
    default:
      break;
  }
  return mask;
}

std::vector<bool> GrammarState::column_mask() const {
  std::vector<bool> mask(table_->num_columns(), false);
  auto has_non_empty_cell = [&](size_t c) {
    for (size_t r = 0; r < table_->num_rows(); ++r)
      if (!table_->rows[r][c].empty()) return true;
    return false;
  };
  switch (phase_) {
    case Phase::ExpectAggOrCol:
      for (size_t c = 0; c < mask.size(); ++c) mask[c] = true;
      break;
    case Phase::ExpectAggCol:
      // MAX/MIN require a numeric aggregation column.
      for (size_t c = 0; c < mask.size(); ++c)
        mask[c] = table_->column_types[c] == ColumnType::Numeric;
      break;
    case Phase::ExpectCondCol:
      // Conditions need at least one non-empty cell to take a value from.
      for (size_t c = 0; c < mask.size(); ++c) mask[c] = has_non_empty_cell(c);
      break;
    default:
      break;
  }
  return mask;
}

std::vector<bool> GrammarState::value_mask() const {
  std::vector<bool> mask(table_->num_rows(), false);
  if (phase_ != Phase::ExpectVal) return mask;
  const size_t col = static_cast<size_t>(pending_->col);
  const bool numeric = table_->column_types[col] == ColumnType::Numeric;
  for (size_t r = 0; r < table_->num_rows(); ++r) {
    const Cell& cell = table_->rows[r][col];
    if (cell.empty()) continue;
    if (pending_->op != CondOp::Eq && numeric && !cell.num) continue;
    mask[r] = true;
  }
  return mask;
}

void GrammarState::advance_keyword(SqlKeyword kw) {
  if (!keyword_mask()[static_cast<size_t>(kw)]) throw Error("grammar: keyword not allowed here");
  switch (phase_) {
    case Phase::ExpectSelect:
      phase_ = Phase::ExpectAggOrCol;
      break;
    case Phase::ExpectAggOrCol:
      query_.agg_op = kw == SqlKeyword::Count ? AggOp::Count
                      : kw == SqlKeyword::Max ? AggOp::Max
                                              : AggOp::Min;
      phase_ = Phase::ExpectAggCol;
      break;
    case Phase::AfterSelCol:
    case Phase::AfterCond:
      if (kw == SqlKeyword::Eos)
        phase_ = Phase::Done;
      else
        phase_ = Phase::ExpectCondCol;
      break;
    case Phase::ExpectOp:
      pending_->op = kw == SqlKeyword::Eq ? CondOp::Eq : kw == SqlKeyword::Gt ? CondOp::Gt : CondOp::Lt;
      phase_ = Phase::ExpectVal;
      break;
    default:
      throw Error("grammar: unexpected keyword");
  }
}

void GrammarState::advance_column(int col) {
  if (!column_mask()[static_cast<size_t>(col)]) throw Error("grammar: column not allowed here");
  switch (phase_) {
    case Phase::ExpectAggOrCol:
    case Phase::ExpectAggCol:
      query_.agg_col = col;
      last_col_ = col;
      phase_ = Phase::AfterSelCol;
      break;
    case Phase::ExpectCondCol:
      pending_ = Condition{};
      pending_->col = col;
      last_col_ = col;
      phase_ = Phase::ExpectOp;
      break;
    default:
      throw Error("grammar: unexpected column");
  }
}

void GrammarState::advance_value(int rowi) {
  if (!value_mask()[static_cast<size_t>(rowi)]) throw Error("grammar: value not allowed here");
  const Cell& cell = table_->rows[static_cast<size_t>(rowi)][static_cast<size_t>(pending_->col)];
  pending_->value = SqlValue(cell.text);
  query_.conds.push_back(*pending_);
  pending_.reset();
  phase_ = Phase::AfterCond;
}

SqlQuery GrammarState::query() const { return query_; }

// ---------------------------------------------------------------------------
// Model

ParserModel::ParserModel(ParserConfig cfg, Vocabulary vocab, uint64_t init_seed)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  cfg_.validate();
  wire(init_seed);
}

void ParserModel::wire(uint64_t init_seed) {
  Rng rng(init_seed);
  const int h = cfg_.hidden_size;
  const int e = cfg_.embed_size;
  const int s = 2 * h;  // phrase/state width
  embed_ = params_.create("embed", vocab_.size(), e, rng);
  q_fwd_ = GruCell::create(params_, "q_fwd", e, h, rng);
  q_bwd_ = GruCell::create(params_, "q_bwd", e, h, rng);
  ph_fwd_ = GruCell::create(params_, "ph_fwd", e, h, rng);
  ph_bwd_ = GruCell::create(params_, "ph_bwd", e, h, rng);
  kw_embed_ = params_.create("kw_embed", kNumSqlKeywords, s, rng);
  dec_ = GruCell::create(params_, "dec", 2 * s, s, rng);
  att_w_ = params_.create("att.w", s, s, rng);
  gate_w_ = params_.create("gate.w", 2 * s, 3, rng);
  gate_b_ = params_.create("gate.b", 1, 3, rng);
  sql_w_ = params_.create("sql.w", 2 * s, 1, rng);
  col_w_ = params_.create("col.w", 3 * s, 1, rng);
  val_w_ = params_.create("val.w", 2 * s, 1, rng);
  bos_rep_ = params_.create("bos_rep", 1, s, rng);
}

Tensor ParserModel::encode_phrase(const std::vector<std::string>& tokens, Rng& rng,
                                  bool training) {
  std::vector<std::string> toks = tokens;
  if (toks.empty()) toks.push_back(vocab_.decode(Vocabulary::kUnk));
  const auto ids = vocab_.encode_all(toks);
  Tensor h = Tensor::zeros(1, cfg_.hidden_size);
  Tensor first_bwd, last_fwd;
  std::vector<Tensor> inputs(ids.size());
  for (size_t i = 0; i < ids.size(); ++i)
    inputs[i] = dropout(row(embed_, ids[i]), cfg_.dropout, rng, training);
  for (size_t i = 0; i < ids.size(); ++i) h = gru_step(ph_fwd_, inputs[i], h);
  last_fwd = h;
  h = Tensor::zeros(1, cfg_.hidden_size);
  for (size_t i = ids.size(); i-- > 0;) h = gru_step(ph_bwd_, inputs[i], h);
  first_bwd = h;
  return concat_cols({last_fwd, first_bwd});
}

ParserModel::EncoderOut ParserModel::encode_question(const std::vector<std::string>& question,
                                                     Rng& rng, bool training) {
  if (question.empty()) throw Error("encode_question: empty question");
  const auto ids = vocab_.encode_all(question);
  std::vector<Tensor> inputs(ids.size());
  for (size_t i = 0; i < ids.size(); ++i)
    inputs[i] = dropout(row(embed_, ids[i]), cfg_.dropout, rng, training);
  std::vector<Tensor> fwd(ids.size()), bwd(ids.size());
  Tensor h = Tensor::zeros(1, cfg_.hidden_size);
  for (size_t i = 0; i < ids.size(); ++i) {
    h = gru_step(q_fwd_, inputs[i], h);
    fwd[i] = h;
  }
  h = Tensor::zeros(1, cfg_.hidden_size);
  for (size_t i = ids.size(); i-- > 0;) {
    h = gru_step(q_bwd_, inputs[i], h);
    bwd[i] = h;
  }
  std::vector<Tensor> joined(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) joined[i] = concat_cols({fwd[i], bwd[i]});
  EncoderOut out;
  out.states = concat_rows(joined);
  out.summary = concat_cols({fwd[ids.size() - 1], bwd[0]});
  return out;
}

ParserModel::TableRep ParserModel::encode_table(const Table& t,
                                                const std::vector<std::string>& question,
                                                Rng& rng, bool training) {
  TableRep rep;
  const size_t ncols = t.num_columns();
  rep.col_reps.resize(ncols);
  rep.cell_reps.resize(ncols);
  rep.cell_alpha.resize(ncols);
  rep.cell_summaries.resize(ncols);
  for (size_t c = 0; c < ncols; ++c) {
    rep.col_reps[c] = encode_phrase(t.column_names[c], rng, training);
    std::vector<Cell> column_cells;
    for (size_t r = 0; r < t.num_rows(); ++r) column_cells.push_back(t.rows[r][c]);
    rep.cell_alpha[c] = cell_weights(question, column_cells);
    rep.cell_reps[c].resize(t.num_rows());
    std::vector<Tensor> weighted(t.num_rows());
    for (size_t r = 0; r < t.num_rows(); ++r) {
      rep.cell_reps[c][r] = encode_phrase(tokenize(t.rows[r][c].text), rng, training);
      weighted[r] = scale(rep.cell_reps[c][r], rep.cell_alpha[c][r]);
    }
    Tensor sum = weighted[0];
    for (size_t r = 1; r < weighted.size(); ++r) sum = add(sum, weighted[r]);
    rep.cell_summaries[c] = sum;
  }
  return rep;
}

ParserModel::StepOut ParserModel::advance(const Tensor& state, const Tensor& ctx,
                                          const Tensor& prev_rep, const EncoderOut& enc,
                                          Rng& rng, bool training) {
  Tensor x = dropout(concat_cols({prev_rep, ctx}), cfg_.dropout, rng, training);
  StepOut out;
  out.state = gru_step(dec_, x, state);
  Tensor gate_in = concat_cols({out.state, ctx});
  out.gate = softmax_rows(add(matmul(gate_in, gate_w_), gate_b_));
  out.next_ctx = attention_context(out.state, enc.states, att_w_).context;
  return out;
}

Tensor ParserModel::sql_channel(const Tensor& state) {
  std::vector<Tensor> feats(kNumSqlKeywords);
  for (int k = 0; k < kNumSqlKeywords; ++k)
    feats[static_cast<size_t>(k)] = concat_cols({state, row(kw_embed_, k)});
  Tensor scores = matmul(concat_rows(feats), sql_w_);  // [10,1]
  return softmax_rows(reshape(scores, 1, kNumSqlKeywords));
}

Tensor ParserModel::col_channel(const Tensor& state, const TableRep& rep) {
  const int ncols = static_cast<int>(rep.col_reps.size());
  std::vector<Tensor> feats(static_cast<size_t>(ncols));
  for (int c = 0; c < ncols; ++c)
    feats[static_cast<size_t>(c)] =
        concat_cols({state, rep.col_reps[static_cast<size_t>(c)],
                     rep.cell_summaries[static_cast<size_t>(c)]});
  Tensor scores = matmul(concat_rows(feats), col_w_);  // [C,1]
  return softmax_rows(reshape(scores, 1, ncols));
}

Tensor ParserModel::val_channel(const Tensor& state, const TableRep& rep, int col) {
  if (col < 0) throw Error("value channel requested before any column was predicted");
  const auto& cells = rep.cell_reps[static_cast<size_t>(col)];
  const int nrows = static_cast<int>(cells.size());
  std::vector<Tensor> feats(static_cast<size_t>(nrows));
  for (int r = 0; r < nrows; ++r)
    feats[static_cast<size_t>(r)] = concat_cols({state, cells[static_cast<size_t>(r)]});
  Tensor attn = softmax_rows(reshape(matmul(concat_rows(feats), val_w_), 1, nrows));
  Tensor alpha = Tensor::from(1, nrows, rep.cell_alpha[static_cast<size_t>(col)]);
  // Eq-style mixture: lambda on the learned distribution, the rest on the
  // co-occurrence weights.
  return add(scale(attn, cfg_.lambda), scale(alpha, 1.0 - cfg_.lambda));
}

Tensor ParserModel::loss(const std::vector<Instance>& batch, const TableSet& tables, Rng& rng,
                         bool training) {
  if (batch.empty()) throw Error("parser loss: empty batch");
  Tensor total = Tensor::zeros(1, 1);
  for (const Instance& inst : batch) {
    const Table& t = tables.at(inst.table_id);
    const auto steps = linearize_gold(inst.query, t);
    EncoderOut enc = encode_question(inst.question, rng, training);
    TableRep rep = encode_table(t, inst.question, rng, training);
    Tensor state = enc.summary;
    Tensor ctx = Tensor::zeros(1, 2 * cfg_.hidden_size);
    Tensor prev = bos_rep_;
    Tensor inst_loss = Tensor::zeros(1, 1);
    int last_col = -1;
    for (const GoldStep& gold : steps) {
      StepOut step = advance(state, ctx, prev, enc, rng, training);
      state = step.state;
      inst_loss =
          add(inst_loss,
              scale(log_t(gather_sum(step.gate, {static_cast<int>(gold.channel)})), -1.0));
      switch (gold.channel) {
        case Channel::Sql: {
          Tensor p = sql_channel(state);
          inst_loss = add(inst_loss, scale(log_t(gather_sum(p, {gold.token})), -1.0));
          prev = row(kw_embed_, gold.token);
          break;
        }
        case Channel::Col: {
          Tensor p = col_channel(state, rep);
          inst_loss = add(inst_loss, scale(log_t(gather_sum(p, {gold.token})), -1.0));
          prev = rep.col_reps[static_cast<size_t>(gold.token)];
          last_col = gold.token;
          break;
        }
        case Channel::Val: {
          Tensor p = val_channel(state, rep, last_col);
          inst_loss = add(inst_loss, scale(log_t(gather_sum(p, gold.value_rows)), -1.0));
          prev = rep.cell_reps[static_cast<size_t>(last_col)][static_cast<size_t>(gold.token)];
          break;
        }
      }
      ctx = step.next_ctx;
    }
    total = add(total, inst_loss);
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

SqlQuery ParserModel::predict(const std::vector<std::string>& question, const Table& t) {
  NoGradGuard guard;
  Rng rng(0);
  EncoderOut enc = encode_question(question, rng, false);
  TableRep rep = encode_table(t, question, rng, false);
  GrammarState grammar(t);
  Tensor state = enc.summary;
  Tensor ctx = Tensor::zeros(1, 2 * cfg_.hidden_size);
  Tensor prev = bos_rep_;

  for (int step_i = 0; step_i < cfg_.max_decode_steps && !grammar.done(); ++step_i) {
    StepOut step = advance(state, ctx, prev, enc, rng, false);
    state = step.state;
    const auto ch_mask = grammar.channel_mask();
    // Best (channel, token) pair by gate-weighted channel probability over
    // the grammar mask; renormalization never changes the argmax.
    double best_p = -1.0;
    Channel best_channel = Channel::Sql;
    int best_token = -1;
    auto consider = [&](Channel ch, const Tensor& dist, const std::vector<bool>& mask) {
      const double gate_p = step.gate.value()[static_cast<size_t>(ch)];
      for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const double p = gate_p * dist.value()[i];
        if (p > best_p) {
          best_p = p;
          best_channel = ch;
          best_token = static_cast<int>(i);
        }
      }
    };
    if (ch_mask[static_cast<int>(Channel::Sql)]) consider(Channel::Sql, sql_channel(state), grammar.keyword_mask());
    if (ch_mask[static_cast<int>(Channel::Col)]) consider(Channel::Col, col_channel(state, rep), grammar.column_mask());
    if (ch_mask[static_cast<int>(Channel::Val)])
      consider(Channel::Val, val_channel(state, rep, grammar.last_column()), grammar.value_mask());
    if (best_token < 0) break;  // no legal move; fall back to the prefix query

    switch (best_channel) {
      case Channel::Sql:
        grammar.advance_keyword(static_cast<SqlKeyword>(best_token));
        prev = row(kw_embed_, best_token);
        break;
      case Channel::Col:
        grammar.advance_column(best_token);
        prev = rep.col_reps[static_cast<size_t>(best_token)];
        break;
      case Channel::Val:
        grammar.advance_value(best_token);
        prev = rep.cell_reps[static_cast<size_t>(grammar.last_column())][static_cast<size_t>(best_token)];
        break;
    }
    ctx = step.next_ctx;
  }
  return grammar.query();
}

namespace {

json parser_config_to_json(const ParserConfig& cfg) {
  json j;
  j["hidden_size"] = cfg.hidden_size;
  j["embed_size"] = cfg.embed_size;
  j["lambda"] = cfg.lambda;
  j["dropout"] = cfg.dropout;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["lr"] = cfg.lr;
  j["min_count"] = cfg.min_count;
  j["max_decode_steps"] = cfg.max_decode_steps;
  return j;
}

ParserConfig parser_config_from_json(const json& j) {
  ParserConfig cfg;
  cfg.hidden_size = j.at("hidden_size").get<int>();
  cfg.embed_size = j.at("embed_size").get<int>();
  cfg.lambda = j.at("lambda").get<double>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.min_count = j.at("min_count").get<int>();
  cfg.max_decode_steps = j.at("max_decode_steps").get<int>();
  return cfg;
}

}  // namespace

void ParserModel::save(const std::string& path) const {
  json meta;
  meta["kind"] = "parser";
  meta["config"] = parser_config_to_json(cfg_);
  json vocab = json::array();
  for (int i = Vocabulary::kReserved; i < vocab_.size(); ++i) vocab.push_back(vocab_.decode(i));
  meta["vocab"] = std::move(vocab);
  save_checkpoint(path, params_, meta.dump());
}

ParserModel ParserModel::load(const std::string& path) {
  ParamStore loaded;
  const json meta = json::parse(load_checkpoint(path, loaded));
  if (meta.at("kind").get<std::string>() != "parser")
    throw Error("checkpoint " + path + " is not a parser model");
  Vocabulary vocab;
  for (const auto& tok : meta.at("vocab")) vocab.add(tok.get<std::string>());
  ParserModel model(parser_config_from_json(meta.at("config")), std::move(vocab), 0);
  for (const auto& name : model.params_.names()) {
    Tensor dst = model.params_.at(name);
    Tensor src = loaded.at(name);
    if (dst.rows() != src.rows() || dst.cols() != src.cols())
      throw Error("checkpoint " + path + ": shape mismatch for " + name);
    dst.mutable_value() = src.value();
  }
  return model;
}

ParserModel train_parser(const std::vector<Instance>& instances, const TableSet& tables,
                         const ParserConfig& cfg, uint64_t seed, ParserTrainLog* log,
                         std::ostream* progress) {
  cfg.validate();
  if (instances.empty()) throw Error("train_parser: no training instances");

  std::vector<std::vector<std::string>> corpus;
  std::set<std::string> seen_tables;
  for (const Instance& inst : instances) {
    corpus.push_back(inst.question);
    // Contract check up front: every value must be a cell of its column.
    linearize_gold(inst.query, tables.at(inst.table_id));
    seen_tables.insert(inst.table_id);
  }
  for (const auto& id : seen_tables) {
    const Table& t = tables.at(id);
    for (const auto& name : t.column_names) corpus.push_back(name);
    for (const auto& row_cells : t.rows)
      for (const Cell& cell : row_cells) corpus.push_back(tokenize(cell.text));
  }
  Vocabulary vocab = build_vocab(corpus, cfg.min_count);

  ParserModel model(cfg, std::move(vocab), Rng::mix(seed, 0xBEE));
  Rng rng(Rng::mix(seed, 0x5EED));
  std::vector<size_t> order(instances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.pick_index(i)]);
    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<Instance> batch;
      for (size_t i = start; i < std::min(order.size(), start + static_cast<size_t>(cfg.batch_size)); ++i)
        batch.push_back(instances[order[i]]);
      Tensor loss = model.loss(batch, tables, rng, /*training=*/true);
      epoch_loss += loss.item();
      ++batches;
      backward(loss);
      sgd_step(model.params(), cfg.lr);
    }
    if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    if (progress && (epoch % 10 == 9 || epoch + 1 == cfg.epochs))
      *progress << "parser epoch " << (epoch + 1) << "/" << cfg.epochs
                << " loss=" << epoch_loss / static_cast<double>(batches) << "\n";
  }
  return model;
}

double parser_accuracy(ParserModel& model, const std::vector<Instance>& instances,
                       const TableSet& tables) {
  if (instances.empty()) return 0.0;
  size_t hits = 0;
  for (const Instance& inst : instances) {
    const Table& t = tables.at(inst.table_id);
    const SqlQuery pred = model.predict(inst.question, t);
    if (queries_equal(pred, inst.query, t)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(instances.size());
}

}  // namespace sqlqg
