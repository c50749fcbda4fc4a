// Python bindings for the core operations: data loading, the SQL subset,
// query sampling, both models, metrics, and pipeline stages.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "sqlqg/fixture.hpp"
#include "sqlqg/metrics.hpp"
#include "sqlqg/pipeline.hpp"
#include "sqlqg/text.hpp"

namespace py = pybind11;
using namespace sqlqg;

namespace {

py::object result_to_py(const ResultSet& r) {
  if (r.kind == ResultSet::Kind::Scalar) return py::float_(r.scalar);
  py::list cells;
  for (const auto& c : r.cells) cells.append(c);
  return cells;
}

py::dict report_to_py(const MetricsReport& report) {
  py::dict d;
  d["n"] = report.n;
  d["acc_lf"] = report.acc_lf;
  d["acc_ex"] = report.acc_ex;
  d["acc_sel"] = report.acc_sel;
  d["acc_agg"] = report.acc_agg;
  d["acc_where"] = report.acc_where;
  py::dict grouped;
  for (const auto& [bucket, acc] : report.grouped.acc_ex) {
    py::dict entry;
    entry["acc_ex"] = acc;
    entry["n"] = report.grouped.counts.at(bucket);
    grouped[py::str(where_bucket_name(bucket))] = entry;
  }
  grouped["zero_cond_n"] = report.grouped.zero_cond;
  d["grouped_by_where"] = grouped;
  if (report.bleu) d["bleu"] = *report.bleu;
  return d;
}

StageResult run_stage(const std::string& stage, const std::string& config_path,
                      std::optional<uint64_t> seed, std::optional<std::string> out_dir) {
  RunConfig cfg = RunConfig::from_file(config_path);
  if (seed) cfg.seed = *seed;
  if (out_dir) cfg.paths.out_dir = *out_dir;
  cfg.validate();
  static const std::map<std::string, StageResult (*)(const RunConfig&, std::ostream*)> stages = {
      {"split", cmd_split},       {"sample", cmd_sample},
      {"train-qg", cmd_train_qg}, {"generate", cmd_generate},
      {"augment", cmd_augment},   {"train-parser", cmd_train_parser},
      {"evaluate", cmd_evaluate}, {"curve", cmd_curve},
      {"qa-pairs", cmd_qa_pairs}, {"pipeline", cmd_pipeline},
  };
  const auto it = stages.find(stage);
  if (it == stages.end()) throw ConfigError("unknown stage: " + stage);
  return it->second(cfg, nullptr);
}

}  // namespace

PYBIND11_MODULE(_sqlqg, m) {
  m.doc() = "question-generation-driven text-to-SQL pipeline";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<Error>(m, "SqlqgError", PyExc_RuntimeError);

  m.def("tokenize", &tokenize, py::arg("text"));
  m.def("join_tokens", &join_tokens, py::arg("tokens"));

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_property_readonly("size", &Vocabulary::size)
      .def("encode", &Vocabulary::encode)
      .def("encode_all", &Vocabulary::encode_all)
      .def("decode", &Vocabulary::decode)
      .def("contains", &Vocabulary::contains)
      .def("save", &Vocabulary::save)
      .def_static("load", &Vocabulary::load);
  m.def("build_vocab", &build_vocab, py::arg("corpus"), py::arg("min_count") = 1);

  py::class_<Table>(m, "Table")
      .def_property_readonly("id", [](const Table& t) { return t.id; })
      .def_property_readonly("columns", [](const Table& t) { return t.column_display; })
      .def_property_readonly("types",
                             [](const Table& t) {
                               std::vector<std::string> out;
                               for (ColumnType ct : t.column_types)
                                 out.push_back(column_type_name(ct));
                               return out;
                             })
      .def_property_readonly("num_rows", &Table::num_rows)
      .def("cell",
           [](const Table& t, size_t row, size_t col) { return t.rows.at(row).at(col).text; })
      .def("__repr__", [](const Table& t) {
        return "<Table " + t.id + " " + std::to_string(t.num_columns()) + "x" +
               std::to_string(t.num_rows()) + ">";
      });

  py::class_<TableSet>(m, "TableSet")
      .def("__len__", &TableSet::size)
      .def("__contains__", &TableSet::contains)
      .def("table", &TableSet::at, py::return_value_policy::reference_internal)
      .def_property_readonly("ids", [](const TableSet& ts) {
        std::vector<std::string> out;
        for (const Table& t : ts.all()) out.push_back(t.id);
        return out;
      });
  m.def("load_tables", &load_tables, py::arg("path"));

  py::class_<SqlQuery>(m, "SqlQuery")
      .def_property_readonly("agg_op", [](const SqlQuery& q) { return static_cast<int>(q.agg_op); })
      .def_property_readonly("agg_col", [](const SqlQuery& q) { return q.agg_col; })
      .def_property_readonly("conds", [](const SqlQuery& q) {
        py::list out;
        for (const Condition& c : q.conds)
          out.append(py::make_tuple(c.col, static_cast<int>(c.op), c.value.text));
        return out;
      });

  m.def("parse_sql", &parse_sql, py::arg("sql"), py::arg("table"));
  m.def("serialize_sql", &serialize_sql, py::arg("query"), py::arg("table"));
  m.def("linearize_for_qg", &linearize_for_qg, py::arg("query"), py::arg("table"));
  m.def("queries_equal", &queries_equal, py::arg("a"), py::arg("b"), py::arg("table"));
  m.def(
      "execute",
      [](const SqlQuery& q, const Table& t) { return result_to_py(execute(q, t)); },
      py::arg("query"), py::arg("table"));
  m.def(
      "execute_sql",
      [](const std::string& sql, const Table& t) {
        return result_to_py(execute(parse_sql(sql, t), t));
      },
      py::arg("sql"), py::arg("table"));

  m.def(
      "minimize_conditions",
      [](const std::string& sql, const Table& t) {
        return serialize_sql(minimize_conditions(parse_sql(sql, t), t), t);
      },
      py::arg("sql"), py::arg("table"));

  m.def(
      "sample_queries",
      [](const TableSet& tables, int per_table, int max_conditions, uint64_t seed) {
        SamplerConfig cfg;
        cfg.per_table = per_table;
        cfg.max_conditions = max_conditions;
        cfg.rng_seed = seed;
        const SampleReport report = sample_dataset(tables, cfg);
        py::list out;
        for (const SampledQuery& sq : report.queries)
          out.append(py::make_tuple(sq.table_id,
                                    serialize_sql(sq.query, tables.at(sq.table_id))));
        return out;
      },
      py::arg("tables"), py::arg("per_table") = 5, py::arg("max_conditions") = 4,
      py::arg("seed") = 0);

  py::class_<Instance>(m, "Instance")
      .def_property_readonly("question", [](const Instance& i) { return i.question; })
      .def_property_readonly("table_id", [](const Instance& i) { return i.table_id; })
      .def_property_readonly("query", [](const Instance& i) { return i.query; })
      .def_property_readonly("origin", [](const Instance& i) {
        return i.origin == Origin::Generated ? "generated" : "supervised";
      });
  m.def("load_instances", &load_instances, py::arg("path"), py::arg("tables"));

  m.def(
      "evaluate_pairs",
      [](const std::vector<std::tuple<std::string, std::string, std::string>>& rows,
         const TableSet& tables) {
        std::vector<EvalPair> pairs;
        for (const auto& [pred, gold, table_id] : rows) {
          const Table& t = tables.at(table_id);
          pairs.push_back({parse_sql(pred, t), parse_sql(gold, t), table_id});
        }
        return report_to_py(evaluate_pairs(pairs, tables));
      },
      py::arg("pairs"), py::arg("tables"));
  m.def("bleu", &bleu, py::arg("hypotheses"), py::arg("references"));

  py::class_<QgConfig>(m, "QgConfig")
      .def(py::init<>())
      .def_readwrite("hidden_size", &QgConfig::hidden_size)
      .def_readwrite("latent_size", &QgConfig::latent_size)
      .def_readwrite("embed_size", &QgConfig::embed_size)
      .def_readwrite("dropout", &QgConfig::dropout)
      .def_readwrite("batch_size", &QgConfig::batch_size)
      .def_readwrite("epochs", &QgConfig::epochs)
      .def_readwrite("lr", &QgConfig::lr)
      .def_readwrite("beam_width", &QgConfig::beam_width)
      .def_readwrite("max_decode_len", &QgConfig::max_decode_len)
      .def_readwrite("use_copy", &QgConfig::use_copy)
      .def_readwrite("use_latent", &QgConfig::use_latent)
      .def_readwrite("min_count", &QgConfig::min_count);

  py::class_<QgModel>(m, "QgModel")
      .def("token_accuracy",
           [](QgModel& model,
              const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>&
                  raw) {
             std::vector<QgPair> pairs;
             for (const auto& [s, t] : raw) pairs.push_back({s, t});
             return model.token_accuracy(pairs);
           })
      .def(
          "generate",
          [](QgModel& model, const std::vector<std::string>& source, int k, uint64_t seed) {
            Rng rng(seed);
            return model.generate(source, k, rng);
          },
          py::arg("source"), py::arg("k") = 1, py::arg("seed") = 0)
      .def(
          "beam_search",
          [](QgModel& model, const std::vector<std::string>& source, int width) {
            return model.beam_search(source, {}, width);
          },
          py::arg("source"), py::arg("width") = 5)
      .def("save", &QgModel::save)
      .def_static("load", &QgModel::load);

  m.def(
      "train_qg",
      [](const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>& raw,
         const QgConfig& cfg, uint64_t seed) {
        std::vector<QgPair> pairs;
        for (const auto& [s, t] : raw) pairs.push_back({s, t});
        return train_qg(pairs, cfg, seed);
      },
      py::arg("pairs"), py::arg("config") = QgConfig{}, py::arg("seed") = 0);

  py::class_<ParserConfig>(m, "ParserConfig")
      .def(py::init<>())
      .def_readwrite("hidden_size", &ParserConfig::hidden_size)
      .def_readwrite("embed_size", &ParserConfig::embed_size)
      .def_readwrite("lambda_", &ParserConfig::lambda)
      .def_readwrite("dropout", &ParserConfig::dropout)
      .def_readwrite("batch_size", &ParserConfig::batch_size)
      .def_readwrite("epochs", &ParserConfig::epochs)
      .def_readwrite("lr", &ParserConfig::lr)
      .def_readwrite("min_count", &ParserConfig::min_count);

  py::class_<ParserModel>(m, "ParserModel")
      .def(
          "predict",
          [](ParserModel& model, const std::vector<std::string>& question, const Table& t) {
            return model.predict(question, t);
          },
          py::arg("question"), py::arg("table"))
      .def(
          "predict_sql",
          [](ParserModel& model, const std::string& question, const Table& t) {
            return serialize_sql(model.predict(tokenize(question), t), t);
          },
          py::arg("question"), py::arg("table"))
      .def("save", &ParserModel::save)
      .def_static("load", &ParserModel::load);

  m.def(
      "train_parser",
      [](const std::vector<Instance>& instances, const TableSet& tables, const ParserConfig& cfg,
         uint64_t seed) { return train_parser(instances, tables, cfg, seed); },
      py::arg("instances"), py::arg("tables"), py::arg("config") = ParserConfig{},
      py::arg("seed") = 0);
  m.def(
      "parser_trainable",
      [](const SqlQuery& q, const Table& t) { return parser_trainable(q, t); },
      py::arg("query"), py::arg("table"));

  m.def(
      "write_fixture",
      [](const std::string& dir, uint64_t seed, int tables, int instances_per_table) {
        FixtureSpec spec;
        spec.seed = seed;
        spec.num_tables = tables;
        spec.instances_per_table = instances_per_table;
        const FixturePaths paths = write_fixture(dir, spec);
        py::dict out;
        out["tables"] = paths.tables;
        out["train"] = paths.train;
        out["dev"] = paths.dev;
        out["test"] = paths.test;
        return out;
      },
      py::arg("dir"), py::arg("seed") = 7, py::arg("tables") = 20,
      py::arg("instances_per_table") = 10);

  m.def("run_stage", &run_stage, py::arg("stage"), py::arg("config_path"),
        py::arg("seed") = py::none(), py::arg("out_dir") = py::none(),
        "Run one pipeline stage from a config file; returns (artifact, records).");
  py::class_<StageResult>(m, "StageResult")
      .def_readonly("artifact", &StageResult::artifact)
      .def_readonly("records", &StageResult::records);
}
