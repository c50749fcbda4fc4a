#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sqlqg/data.hpp"
#include "sqlqg/nn.hpp"
#include "sqlqg/rng.hpp"
#include "sqlqg/tensor.hpp"

namespace sqlqg {

struct ParserConfig {
  int hidden_size = 8;  // per-direction encoder state
  int embed_size = 8;
  double lambda = 0.5;  // cell-mixing weight of the value channel
  double dropout = 0.0;
  int batch_size = 16;
  int epochs = 30;
  double lr = 0.1;
  int min_count = 1;
  int max_decode_steps = 48;

  void validate() const;
};

// Decoder output alphabet of the SQL channel.
enum class SqlKeyword { Select = 0, Count, Max, Min, Where, And, Eq, Gt, Lt, Eos };
constexpr int kNumSqlKeywords = 10;

enum class Channel { Sql = 0, Col = 1, Val = 2 };

// One supervised decoding step: the gate tag plus the token within the
// channel. Value steps carry every row whose cell matches the gold literal.
struct GoldStep {
  Channel channel;
  int token = 0;                 // keyword id, column index, or first matching row
  std::vector<int> value_rows;   // Val only
};

// Channel-tagged linearization:
// [SQL SELECT] [SQL agg?] [COL sel] ([SQL WHERE|AND] [COL c] [SQL op] [VAL v])* [SQL EOS].
// Throws DataError when a condition value is not a cell of its column.
std::vector<GoldStep> linearize_gold(const SqlQuery& q, const Table& t);

// True when every condition value of the query appears as a cell of its
// condition column (the parser's value channel can only produce cells).
bool parser_trainable(const SqlQuery& q, const Table& t);

// Co-occurrence cell weights: per cell, the number of distinct question
// tokens appearing in the cell's token sequence, softmax-normalized.
std::vector<double> cell_weights(const std::vector<std::string>& question,
                                 const std::vector<Cell>& column_cells);

// Grammar mask state machine; predict_sql outputs always satisfy the query
// invariants because column-type constraints are part of the mask.
class GrammarState {
 public:
  enum class Phase {
    ExpectSelect,
    ExpectAggOrCol,
    ExpectAggCol,
    AfterSelCol,
    ExpectCondCol,
    ExpectOp,
    ExpectVal,
    AfterCond,
    Done
  };

  explicit GrammarState(const Table& t) : table_(&t) {}

  Phase phase() const { return phase_; }
  bool done() const { return phase_ == Phase::Done; }
  int last_column() const { return last_col_; }

  std::vector<bool> channel_mask() const;             // [3]
  std::vector<bool> keyword_mask() const;             // [10]
  std::vector<bool> column_mask() const;              // [num columns]
  std::vector<bool> value_mask() const;               // [num rows] of last column

  void advance_keyword(SqlKeyword kw);
  void advance_column(int col);
  void advance_value(int row);

  // Query built so far; incomplete trailing conditions are dropped.
  SqlQuery query() const;

 private:
  const Table* table_;
  Phase phase_ = Phase::ExpectSelect;
  SqlQuery query_;
  std::optional<Condition> pending_;
  int last_col_ = -1;
};

class ParserModel {
 public:
  ParserModel(ParserConfig cfg, Vocabulary vocab, uint64_t init_seed);

  const ParserConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParamStore& params() { return params_; }

  struct TableRep {
    std::vector<Tensor> col_reps;                    // [1,2H] per column
    std::vector<std::vector<Tensor>> cell_reps;      // per column, per row
    std::vector<std::vector<double>> cell_alpha;     // per column co-occurrence weights
    std::vector<Tensor> cell_summaries;              // [1,2H] per column
  };

  struct StepOut {
    Tensor state;
    Tensor gate;  // [1,3]
    Tensor next_ctx;
  };

  struct EncoderOut {
    Tensor states;
    Tensor summary;
  };

  // Mean teacher-forced loss over a batch of instances.
  Tensor loss(const std::vector<Instance>& batch, const TableSet& tables, Rng& rng,
              bool training);

  SqlQuery predict(const std::vector<std::string>& question, const Table& t);

  EncoderOut encode_question(const std::vector<std::string>& question, Rng& rng, bool training);
  TableRep encode_table(const Table& t, const std::vector<std::string>& question, Rng& rng,
                        bool training);

  StepOut advance(const Tensor& state, const Tensor& ctx, const Tensor& prev_rep,
                  const EncoderOut& enc, Rng& rng, bool training);
  Tensor sql_channel(const Tensor& state);                                // [1,10]
  Tensor col_channel(const Tensor& state, const TableRep& rep);           // [1,C]
  Tensor val_channel(const Tensor& state, const TableRep& rep, int col);  // [1,R]

  void save(const std::string& path) const;
  static ParserModel load(const std::string& path);

 private:
  void wire(uint64_t init_seed);
  Tensor encode_phrase(const std::vector<std::string>& tokens, Rng& rng, bool training);

  ParserConfig cfg_;
  Vocabulary vocab_;
  ParamStore params_;
  Tensor embed_;
  GruCell q_fwd_, q_bwd_;
  GruCell ph_fwd_, ph_bwd_;
  Tensor kw_embed_;
  GruCell dec_;
  Tensor att_w_;
  Tensor gate_w_, gate_b_;
  Tensor sql_w_, col_w_, val_w_;
  Tensor bos_rep_;
};

struct ParserTrainLog {
  std::vector<double> epoch_loss;
};

// Builds the vocabulary from questions plus the referenced tables' column
// names and cells, then trains with SGD. Instances whose condition values
// are not cells raise DataError; callers filter first.
ParserModel train_parser(const std::vector<Instance>& instances, const TableSet& tables,
                         const ParserConfig& cfg, uint64_t seed, ParserTrainLog* log = nullptr,
                         std::ostream* progress = nullptr);

// Training Acc_lf of the model on a set of instances.
double parser_accuracy(ParserModel& model, const std::vector<Instance>& instances,
                       const TableSet& tables);

}  // namespace sqlqg
