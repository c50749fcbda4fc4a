#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sqlqg/sql.hpp"
#include "sqlqg/table.hpp"

namespace sqlqg {

struct EvalPair {
  SqlQuery pred;
  SqlQuery gold;
  std::string table_id;
};

enum class WhereBucket { One, Two, ThreePlus };

std::string where_bucket_name(WhereBucket b);  // "=1", "=2", ">=3"

// Bucket for a condition count >= 1; zero-condition queries have no bucket.
std::optional<WhereBucket> where_bucket(size_t cond_count);

struct GroupedAccuracy {
  std::map<WhereBucket, double> acc_ex;   // per-bucket execution accuracy
  std::map<WhereBucket, size_t> counts;   // pairs per bucket
  size_t zero_cond = 0;                   // golds outside the buckets
};

struct MetricsReport {
  double acc_lf = 0.0;
  double acc_ex = 0.0;
  double acc_sel = 0.0;
  double acc_agg = 0.0;
  double acc_where = 0.0;
  GroupedAccuracy grouped;
  std::optional<double> bleu;  // present only for runs with QG references
  size_t n = 0;

  // Flat key=value lines, one metric per line, deterministic order.
  std::string to_text() const;
  std::string to_json() const;
};

// Exact-string-match accuracy over canonical serializations.
double acc_lf(const std::vector<EvalPair>& pairs, const TableSet& tables);

// Execution-result accuracy; predictions that fail to execute count wrong.
double acc_ex(const std::vector<EvalPair>& pairs, const TableSet& tables);

struct FineGrained {
  double acc_sel = 0.0;
  double acc_agg = 0.0;
  double acc_where = 0.0;
};

// Componentwise exact match: SELECT column, aggregator, WHERE clause string.
FineGrained fine_grained(const std::vector<EvalPair>& pairs, const TableSet& tables);

GroupedAccuracy grouped_by_where(const std::vector<EvalPair>& pairs, const TableSet& tables);

struct WhereDistribution {
  std::map<WhereBucket, double> fractions;
  double zero_cond_fraction = 0.0;
  size_t n = 0;
};

WhereDistribution where_distribution(const std::vector<SqlQuery>& queries);

// Corpus BLEU-4, one reference per hypothesis, add-one smoothing on zero
// n-gram matches, standard brevity penalty.
double bleu(const std::vector<std::vector<std::string>>& hypotheses,
            const std::vector<std::vector<std::string>>& references);

MetricsReport evaluate_pairs(const std::vector<EvalPair>& pairs, const TableSet& tables);

}  // namespace sqlqg
