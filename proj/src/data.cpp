#include "sqlqg/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "json.hpp"
#include "sqlqg/text.hpp"

namespace sqlqg {

using nlohmann::json;

namespace {

const std::vector<std::string> kReservedTokens = {"<pad>", "<unk>", "<bos>", "<eos>"};

std::string cell_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return format_number(static_cast<double>(v.get<long long>()));
  if (v.is_number()) return format_number(v.get<double>());
  if (v.is_null()) return "";
  throw DataError("cell value must be a string or number");
}

ColumnType parse_type_tag(const std::string& tag) {
  const std::string t = to_lower(tag);
  if (t == "text") return ColumnType::Text;
  if (t == "real" || t == "numeric" || t == "number") return ColumnType::Numeric;
  throw DataError("unknown column type tag \"" + tag + "\"");
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& tok : kReservedTokens) {
    token_to_index_[tok] = static_cast<int>(index_to_token_.size());
    index_to_token_.push_back(tok);
  }
}

int Vocabulary::encode(const std::string& token) const {
  auto it = token_to_index_.find(token);
  return it == token_to_index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode_all(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(encode(t));
  return out;
}

const std::string& Vocabulary::decode(int index) const {
  if (index < 0 || index >= size())
    throw DataError("vocabulary index " + std::to_string(index) + " out of range");
  return index_to_token_[static_cast<size_t>(index)];
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_index_.count(token) > 0;
}

void Vocabulary::add(const std::string& token) {
  if (token_to_index_.count(token)) return;
  token_to_index_[token] = static_cast<int>(index_to_token_.size());
  index_to_token_.push_back(token);
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary file " + path);
  for (size_t i = kReserved; i < index_to_token_.size(); ++i) out << index_to_token_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read vocabulary file " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.add(line);
  }
  return v;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, int min_count) {
  if (min_count < 1) throw DataError("build_vocab: min_count must be >= 1");
  std::map<std::string, long long> counts;
  for (const auto& seq : corpus)
    for (const auto& tok : seq) ++counts[tok];
  std::vector<std::pair<std::string, long long>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, count] : ordered)
    if (count >= min_count) v.add(tok);
  return v;
}

TableSet load_tables(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read tables file " + path);
  TableSet set;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      Table t;
      t.id = rec.at("id").get<std::string>();
      for (const auto& h : rec.at("header")) {
        const auto tokens = tokenize(h.get<std::string>());
        if (tokens.empty()) throw DataError("empty column name");
        t.column_names.push_back(tokens);
        t.column_display.push_back(join_tokens(tokens));
      }
      for (const auto& tag : rec.at("types"))
        t.column_types.push_back(parse_type_tag(tag.get<std::string>()));
      if (t.column_types.size() != t.column_names.size())
        throw DataError("types/header arity mismatch");
      for (const auto& row : rec.at("rows")) {
        std::vector<Cell> cells;
        for (const auto& v : row) cells.push_back(Cell(cell_to_string(v)));
        t.rows.push_back(std::move(cells));
      }
      t.validate();
      set.add(std::move(t));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return set;
}

namespace {

SqlQuery query_from_json(const json& sql, const Table& t) {
  SqlQuery q;
  const int agg = sql.at("agg").get<int>();
  if (agg < 0 || agg > 3) throw DataError("agg code " + std::to_string(agg) + " out of range");
  q.agg_op = static_cast<AggOp>(agg);
  q.agg_col = sql.at("sel").get<int>();
  for (const auto& cond : sql.at("conds")) {
    if (!cond.is_array() || cond.size() != 3) throw DataError("condition must be [col, op, value]");
    Condition c;
    c.col = cond[0].get<int>();
    const int op = cond[1].get<int>();
    if (op < 0 || op > 2) throw DataError("cond op code " + std::to_string(op) + " out of range");
    c.op = static_cast<CondOp>(op);
    c.value = SqlValue(to_lower(cell_to_string(cond[2])));
    q.conds.push_back(std::move(c));
  }
  try {
    validate_query(q, t);
  } catch (const ExecError& e) {
    throw DataError(std::string("invalid sql: ") + e.what());
  }
  return q;
}

json query_to_json(const SqlQuery& q) {
  json sql;
  sql["sel"] = q.agg_col;
  sql["agg"] = static_cast<int>(q.agg_op);
  json conds = json::array();
  for (const Condition& c : q.conds)
    conds.push_back(json::array({c.col, static_cast<int>(c.op), c.value.text}));
  sql["conds"] = std::move(conds);
  return sql;
}

}  // namespace

Instance instance_from_json(const std::string& line, const TableSet& tables) {
  const json rec = json::parse(line);
  Instance inst;
  inst.table_id = rec.at("table_id").get<std::string>();
  if (!tables.contains(inst.table_id)) throw DataError("unknown table id: " + inst.table_id);
  inst.question = tokenize(rec.at("question").get<std::string>());
  inst.query = query_from_json(rec.at("sql"), tables.at(inst.table_id));
  if (rec.contains("origin") && rec.at("origin").get<std::string>() == "generated")
    inst.origin = Origin::Generated;
  return inst;
}

std::string instance_to_json(const Instance& inst, const TableSet& tables) {
  (void)tables;
  json rec;
  rec["question"] = join_tokens(inst.question);
  rec["table_id"] = inst.table_id;
  rec["sql"] = query_to_json(inst.query);
  rec["origin"] = inst.origin == Origin::Generated ? "generated" : "supervised";
  return rec.dump();
}

std::vector<Instance> load_instances(const std::string& path, const TableSet& tables) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read instances file " + path);
  std::vector<Instance> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("{\"_artifact\"", 0) == 0) continue;  // stage header record
    try {
      out.push_back(instance_from_json(line, tables));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_instances(const std::string& path, const std::vector<Instance>& instances,
                    const TableSet& tables, const std::string& header_line) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write instances file " + path);
  if (!header_line.empty()) out << header_line << '\n';
  for (const Instance& inst : instances) out << instance_to_json(inst, tables) << '\n';
}

}  // namespace sqlqg
