#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "sqlqg/sql.hpp"
#include "sqlqg/table.hpp"

namespace sqlqg {

enum class Origin { Supervised, Generated };

struct Instance {
  std::vector<std::string> question;
  SqlQuery query;
  std::string table_id;
  Origin origin = Origin::Supervised;
};

// Token/index bijection with four reserved slots at the front.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;

  Vocabulary();

  int encode(const std::string& token) const;  // OOV maps to kUnk
  std::vector<int> encode_all(const std::vector<std::string>& tokens) const;
  const std::string& decode(int index) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(index_to_token_.size()); }

  // Appends a corpus token; reserved names cannot collide because corpus
  // tokens are never angle-bracketed.
  void add(const std::string& token);

  const std::vector<std::string>& tokens() const { return index_to_token_; }

  // One corpus token per line; line number = index - 4.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::unordered_map<std::string, int> token_to_index_;
  std::vector<std::string> index_to_token_;
};

// Frequency >= min_count gets an index; order is frequency descending with
// lexicographic tie-break, so vocabularies are reproducible.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, int min_count);

// Line-delimited records: {"id":..., "header":[...], "types":[...], "rows":[[...]]}.
TableSet load_tables(const std::string& path);

// Line-delimited records: {"question":..., "table_id":..., "sql":{"sel","agg","conds"},
// "origin"?}. agg codes: 0 none, 1 COUNT, 2 MAX, 3 MIN; cond ops: 0 "=", 1 ">", 2 "<".
std::vector<Instance> load_instances(const std::string& path, const TableSet& tables);

void save_instances(const std::string& path, const std::vector<Instance>& instances,
                    const TableSet& tables, const std::string& header_line = "");

// JSON record form of one instance (the load_instances schema).
std::string instance_to_json(const Instance& inst, const TableSet& tables);
Instance instance_from_json(const std::string& line, const TableSet& tables);

}  // namespace sqlqg
