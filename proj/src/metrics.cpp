#include "sqlqg/metrics.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "sqlqg/text.hpp"

namespace sqlqg {

using nlohmann::json;

std::string where_bucket_name(WhereBucket b) {
  switch (b) {
    case WhereBucket::One: return "=1";
    case WhereBucket::Two: return "=2";
    case WhereBucket::ThreePlus: return ">=3";
  }
  return "?";
}

std::optional<WhereBucket> where_bucket(size_t cond_count) {
  if (cond_count == 0) return std::nullopt;
  if (cond_count == 1) return WhereBucket::One;
  if (cond_count == 2) return WhereBucket::Two;
  return WhereBucket::ThreePlus;
}

namespace {

void require_pairs(const std::vector<EvalPair>& pairs, const char* what) {
  if (pairs.empty()) throw Error(std::string(what) + ": empty pair set");
}

bool execution_match(const EvalPair& p, const TableSet& tables) {
  const Table& t = tables.at(p.table_id);
  const ResultSet gold = execute(p.gold, t);  // gold failures propagate
  try {
    return execute(p.pred, t) == gold;
  } catch (const ExecError&) {
    return false;  // prediction errors count wrong
  }
}

// The WHERE clause substring of the canonical form ("" when no conditions).
std::string where_clause(const SqlQuery& q, const Table& t) {
  const std::string s = serialize_sql(q, t);
  const auto pos = s.find(" WHERE ");
  return pos == std::string::npos ? "" : s.substr(pos + 1);
}

}  // namespace

double acc_lf(const std::vector<EvalPair>& pairs, const TableSet& tables) {
  require_pairs(pairs, "acc_lf");
  size_t hits = 0;
  for (const auto& p : pairs)
    if (queries_equal(p.pred, p.gold, tables.at(p.table_id))) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

double acc_ex(const std::vector<EvalPair>& pairs, const TableSet& tables) {
  require_pairs(pairs, "acc_ex");
  size_t hits = 0;
  for (const auto& p : pairs)
    if (execution_match(p, tables)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

FineGrained fine_grained(const std::vector<EvalPair>& pairs, const TableSet& tables) {
  require_pairs(pairs, "fine_grained");
  size_t sel = 0, agg = 0, where = 0;
  for (const auto& p : pairs) {
    const Table& t = tables.at(p.table_id);
    if (p.pred.agg_col == p.gold.agg_col) ++sel;
    if (p.pred.agg_op == p.gold.agg_op) ++agg;
    if (where_clause(p.pred, t) == where_clause(p.gold, t)) ++where;
  }
  const double n = static_cast<double>(pairs.size());
  return {sel / n, agg / n, where / n};
}

GroupedAccuracy grouped_by_where(const std::vector<EvalPair>& pairs, const TableSet& tables) {
  GroupedAccuracy out;
  std::map<WhereBucket, size_t> hits;
  for (const auto& p : pairs) {
    const auto bucket = where_bucket(p.gold.conds.size());
    if (!bucket) {
      ++out.zero_cond;
      continue;
    }
    ++out.counts[*bucket];
    if (execution_match(p, tables)) ++hits[*bucket];
  }
  for (const auto& [bucket, count] : out.counts)
    out.acc_ex[bucket] = static_cast<double>(hits[bucket]) / static_cast<double>(count);
  return out;
}

WhereDistribution where_distribution(const std::vector<SqlQuery>& queries) {
  if (queries.empty()) throw Error("where_distribution: empty query set");
  WhereDistribution out;
  out.n = queries.size();
  std::map<WhereBucket, size_t> counts;
  size_t zero = 0;
  for (const auto& q : queries) {
    const auto bucket = where_bucket(q.conds.size());
    if (bucket)
      ++counts[*bucket];
    else
      ++zero;
  }
  for (WhereBucket b : {WhereBucket::One, WhereBucket::Two, WhereBucket::ThreePlus})
    out.fractions[b] = static_cast<double>(counts[b]) / static_cast<double>(out.n);
  out.zero_cond_fraction = static_cast<double>(zero) / static_cast<double>(out.n);
  return out;
}

namespace {

std::map<std::vector<std::string>, size_t> ngram_counts(const std::vector<std::string>& tokens,
                                                        size_t n) {
  std::map<std::vector<std::string>, size_t> counts;
  if (tokens.size() < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                      tokens.begin() + static_cast<long>(i + n))];
  return counts;
}

}  // namespace

double bleu(const std::vector<std::vector<std::string>>& hypotheses,
            const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.size() != references.size())
    throw Error("bleu: hypothesis/reference count mismatch");
  if (hypotheses.empty()) throw Error("bleu: empty corpus");

  double log_precision_sum = 0.0;
  for (size_t n = 1; n <= 4; ++n) {
    size_t matched = 0, total = 0;
    for (size_t i = 0; i < hypotheses.size(); ++i) {
      const auto hyp = ngram_counts(hypotheses[i], n);
      const auto ref = ngram_counts(references[i], n);
      for (const auto& [gram, count] : hyp) {
        total += count;
        auto it = ref.find(gram);
        if (it != ref.end()) matched += std::min(count, it->second);
      }
    }
    double precision;
    if (total == 0) {
      precision = 1.0;  // no n-grams of this order anywhere; neutral term
    } else if (matched == 0) {
      precision = (static_cast<double>(matched) + 1.0) / (static_cast<double>(total) + 1.0);
    } else {
      precision = static_cast<double>(matched) / static_cast<double>(total);
    }
    log_precision_sum += std::log(precision);
  }

  size_t hyp_len = 0, ref_len = 0;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += hypotheses[i].size();
    ref_len += references[i].size();
  }
  double brevity = 1.0;
  if (hyp_len == 0) return 0.0;
  if (hyp_len < ref_len)
    brevity = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return brevity * std::exp(log_precision_sum / 4.0);
}

MetricsReport evaluate_pairs(const std::vector<EvalPair>& pairs, const TableSet& tables) {
  MetricsReport report;
  report.n = pairs.size();
  report.acc_lf = acc_lf(pairs, tables);
  report.acc_ex = acc_ex(pairs, tables);
  const FineGrained fg = fine_grained(pairs, tables);
  report.acc_sel = fg.acc_sel;
  report.acc_agg = fg.acc_agg;
  report.acc_where = fg.acc_where;
  report.grouped = grouped_by_where(pairs, tables);
  return report;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

}  // namespace

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  os << "n=" << n << '\n';
  os << "acc_lf=" << fmt(acc_lf) << '\n';
  os << "acc_ex=" << fmt(acc_ex) << '\n';
  os << "acc_sel=" << fmt(acc_sel) << '\n';
  os << "acc_agg=" << fmt(acc_agg) << '\n';
  os << "acc_where=" << fmt(acc_where) << '\n';
  for (WhereBucket b : {WhereBucket::One, WhereBucket::Two, WhereBucket::ThreePlus}) {
    const auto count_it = grouped.counts.find(b);
    const size_t count = count_it == grouped.counts.end() ? 0 : count_it->second;
    os << "where" << where_bucket_name(b) << "_n=" << count << '\n';
    const auto acc_it = grouped.acc_ex.find(b);
    if (acc_it != grouped.acc_ex.end())
      os << "where" << where_bucket_name(b) << "_acc_ex=" << fmt(acc_it->second) << '\n';
  }
  os << "where_zero_cond_n=" << grouped.zero_cond << '\n';
  if (bleu) os << "bleu=" << fmt(*bleu) << '\n';
  return os.str();
}

std::string MetricsReport::to_json() const {
  json j;
  j["n"] = n;
  j["acc_lf"] = acc_lf;
  j["acc_ex"] = acc_ex;
  j["acc_sel"] = acc_sel;
  j["acc_agg"] = acc_agg;
  j["acc_where"] = acc_where;
  json grouped_json;
  for (WhereBucket b : {WhereBucket::One, WhereBucket::Two, WhereBucket::ThreePlus}) {
    json entry;
    const auto count_it = grouped.counts.find(b);
    entry["n"] = count_it == grouped.counts.end() ? 0 : count_it->second;
    const auto acc_it = grouped.acc_ex.find(b);
    if (acc_it != grouped.acc_ex.end()) entry["acc_ex"] = acc_it->second;
    grouped_json[where_bucket_name(b)] = std::move(entry);
  }
  grouped_json["zero_cond_n"] = grouped.zero_cond;
  j["grouped_by_where"] = std::move(grouped_json);
  if (bleu) j["bleu"] = *bleu;
  return j.dump();
}

}  // namespace sqlqg
