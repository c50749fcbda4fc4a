#pragma once

#include <string>
#include <vector>

#include "sqlqg/data.hpp"
#include "sqlqg/rng.hpp"
#include "sqlqg/table.hpp"

namespace sqlqg {

// Synthetic benchmark: small tables with controlled vocabulary and template
// questions, so every experiment runs without external datasets.
struct FixtureSpec {
  int num_tables = 20;
  int min_rows = 4;
  int max_rows = 7;
  int instances_per_table = 10;
  int max_conditions = 2;
  uint64_t seed = 7;
  double dev_fraction = 0.2;
  double test_fraction = 0.2;
};

struct FixtureData {
  TableSet tables;
  std::vector<Instance> train;
  std::vector<Instance> dev;
  std::vector<Instance> test;
};

FixtureData make_fixture(const FixtureSpec& spec);

struct FixturePaths {
  std::string tables;
  std::string train;
  std::string dev;
  std::string test;
};

// Writes tables.jsonl / train.jsonl / dev.jsonl / test.jsonl under dir.
FixturePaths write_fixture(const std::string& dir, const FixtureSpec& spec);

// Template question for a query; the template family is drawn from rng so
// one SQL shape maps to several surface forms across the corpus.
std::vector<std::string> template_question(const SqlQuery& q, const Table& t, Rng& rng);

}  // namespace sqlqg
