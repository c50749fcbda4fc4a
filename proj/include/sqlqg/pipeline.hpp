#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "sqlqg/parser_model.hpp"
#include "sqlqg/qg.hpp"
#include "sqlqg/sampler.hpp"

namespace sqlqg {

struct RunPaths {
  std::string tables;
  std::string train;
  std::string dev;
  std::string test;
  std::string out_dir = "out";
};

// Single run configuration; every stage derives its streams from `seed`, so
// identical configs produce byte-identical artifacts.
struct RunConfig {
  RunPaths paths;
  uint64_t seed = 13;
  double supervised_fraction = 1.0;
  int sampler_per_table = 5;
  int sampler_max_conditions = 4;
  int sampler_retry_cap = 100;
  QgConfig qg;
  ParserConfig parser;
  int questions_per_sql = 2;  // k generated questions per sampled SQL
  std::string eval_split = "dev";
  bool eval_bleu = true;
  std::vector<double> curve_fractions = {0.25, 0.5, 1.0};
  int generated_duplication = 1;  // weight knob for pseudo-labeled data

  static RunConfig from_file(const std::string& path);
  static RunConfig from_json_string(const std::string& text);
  std::string to_json_string() const;

  // FNV-1a over the canonical JSON form; stamped into every artifact.
  std::string config_hash() const;

  void validate() const;
  SamplerConfig sampler_config() const;
};

// Deterministic seeded subsample: indices of the ceil(fraction * n) smallest
// per-index priorities, in original order. Nested: smaller fractions select
// subsets of larger ones under the same seed.
std::vector<size_t> select_fraction(size_t n, double fraction, uint64_t seed);

struct StageResult {
  std::string artifact;
  size_t records = 0;
};

StageResult cmd_split(const RunConfig& cfg, std::ostream* log = nullptr);
StageResult cmd_sample(const RunConfig& cfg, std::ostream* log = nullptr);
StageResult cmd_train_qg(const RunConfig& cfg, std::ostream* log = nullptr);
StageResult cmd_generate(const RunConfig& cfg, std::ostream* log = nullptr);
StageResult cmd_augment(const RunConfig& cfg, std::ostream* log = nullptr);
StageResult cmd_train_parser(const RunConfig& cfg, std::ostream* log = nullptr);
StageResult cmd_evaluate(const RunConfig& cfg, std::ostream* log = nullptr);
StageResult cmd_curve(const RunConfig& cfg, std::ostream* log = nullptr);
StageResult cmd_qa_pairs(const RunConfig& cfg, std::ostream* log = nullptr);

// split -> sample -> train-qg -> generate -> augment -> train-parser -> evaluate.
StageResult cmd_pipeline(const RunConfig& cfg, std::ostream* log = nullptr);

// Artifact files start with one header record carrying the producing stage
// and config hash; downstream stages abort on a hash mismatch.
std::string artifact_header(const std::string& stage, const RunConfig& cfg);
std::vector<std::string> read_artifact_lines(const std::string& path,
                                             const std::string& expected_hash);

}  // namespace sqlqg
