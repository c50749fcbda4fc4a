// sqlqg: question-generation-driven text-to-SQL pipeline.
//
// Stages mirror the workflow: split -> sample -> train-qg -> generate ->
// augment -> train-parser -> evaluate, plus curve, qa-pairs, and a bundled
// synthetic fixture generator. See docs/FORMATS.md for file formats.

#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sqlqg/fixture.hpp"
#include "sqlqg/pipeline.hpp"

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> eval_split;
};

sqlqg::RunConfig load_config(const GlobalOpts& opts) {
  if (opts.config_path.empty())
    throw sqlqg::ConfigError("--config is required for this subcommand");
  sqlqg::RunConfig cfg = sqlqg::RunConfig::from_file(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out_dir) cfg.paths.out_dir = *opts.out_dir;
  if (opts.eval_split) cfg.eval_split = *opts.eval_split;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"question generation driven text-to-SQL pipeline"};
  app.require_subcommand(1);

  GlobalOpts opts;
  app.add_option("--config", opts.config_path, "run configuration file (JSON)");
  uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "override the config seed");
  std::string out_dir_value;
  auto* out_opt = app.add_option("--out-dir", out_dir_value, "override the output directory");

  using Stage = std::function<sqlqg::StageResult(const sqlqg::RunConfig&, std::ostream*)>;
  struct StageCmd {
    const char* name;
    const char* help;
    Stage run;
  };
  const std::vector<StageCmd> stages = {
      {"split", "select the supervised fraction of the training file", sqlqg::cmd_split},
      {"sample", "sample SQL queries for every training table", sqlqg::cmd_sample},
      {"train-qg", "train the question generation model", sqlqg::cmd_train_qg},
      {"generate", "generate questions for sampled SQL", sqlqg::cmd_generate},
      {"augment", "merge supervised and generated instances", sqlqg::cmd_augment},
      {"train-parser", "train the text-to-SQL parser", sqlqg::cmd_train_parser},
      {"evaluate", "evaluate the parser and emit a metrics report", sqlqg::cmd_evaluate},
      {"curve", "train at several supervised fractions and emit curve data", sqlqg::cmd_curve},
      {"qa-pairs", "emit question-answer pairs for sampled SQL", sqlqg::cmd_qa_pairs},
      {"pipeline", "run the full workflow end to end", sqlqg::cmd_pipeline},
  };

  std::string selected;
  for (const StageCmd& stage : stages) {
    CLI::App* sub = app.add_subcommand(stage.name, stage.help);
    if (std::string(stage.name) == "evaluate") {
      static std::string split_value;
      sub->add_option("--split", split_value, "evaluation split: dev or test")
          ->check(CLI::IsMember({"dev", "test"}));
      sub->callback([&, sub]() {
        selected = "evaluate";
        if (sub->count("--split")) opts.eval_split = split_value;
      });
    } else {
      sub->callback([&, name = std::string(stage.name)]() { selected = name; });
    }
  }

  // Fixture generator: self-contained synthetic benchmark files.
  auto* fixture_cmd = app.add_subcommand("fixture", "write the bundled synthetic benchmark");
  std::string fixture_dir = "fixture";
  sqlqg::FixtureSpec fixture_spec;
  fixture_cmd->add_option("--dir", fixture_dir, "output directory");
  fixture_cmd->add_option("--seed", fixture_spec.seed, "fixture seed");
  fixture_cmd->add_option("--tables", fixture_spec.num_tables, "number of tables");
  fixture_cmd->add_option("--instances-per-table", fixture_spec.instances_per_table,
                          "instances per table");
  fixture_cmd->callback([&]() { selected = "fixture"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (seed_opt->count()) opts.seed = seed_value;
    if (out_opt->count()) opts.out_dir = out_dir_value;

    if (selected == "fixture") {
      const auto paths = sqlqg::write_fixture(fixture_dir, fixture_spec);
      std::cout << "fixture: " << paths.tables << " " << paths.train << " " << paths.dev << " "
                << paths.test << "\n";
      return 0;
    }
    for (const StageCmd& stage : stages) {
      if (selected == stage.name) {
        stage.run(load_config(opts), &std::cout);
        return 0;
      }
    }
    std::cerr << "no subcommand selected\n";
    return 1;
  } catch (const sqlqg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "stage failed: " << e.what() << "\n";
    return 2;
  }
}
