#include "sqlqg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sqlqg/metrics.hpp"
#include "sqlqg/text.hpp"

namespace sqlqg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Per-stage stream labels mixed into the run seed.
enum : uint64_t {
  kSeedSplit = 0x5311,
  kSeedSample = 0x5a17,
  kSeedTrainQg = 0x96aa,
  kSeedGenerate = 0x9e4e,
  kSeedAugment = 0xa062,
  kSeedTrainParser = 0xbead,
  kSeedQaPairs = 0xc0de,
};

json paths_to_json(const RunPaths& p) {
  json j;
  j["tables"] = p.tables;
  j["train"] = p.train;
  j["dev"] = p.dev;
  j["test"] = p.test;
  j["out_dir"] = p.out_dir;
  return j;
}

json qg_to_json(const QgConfig& cfg) {
  json j;
  j["hidden_size"] = cfg.hidden_size;
  j["latent_size"] = cfg.latent_size;
  j["embed_size"] = cfg.embed_size;
  j["dropout"] = cfg.dropout;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["lr"] = cfg.lr;
  j["beam_width"] = cfg.beam_width;
  j["max_decode_len"] = cfg.max_decode_len;
  j["use_copy"] = cfg.use_copy;
  j["use_latent"] = cfg.use_latent;
  j["min_count"] = cfg.min_count;
  json sched = json::array();
  for (const auto& [epoch, weight] : cfg.kl_schedule) sched.push_back({epoch, weight});
  j["kl_schedule"] = std::move(sched);
  return j;
}

json parser_to_json(const ParserConfig& cfg) {
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

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void qg_from_json(const json& j, QgConfig& cfg) {
  maybe(j, "hidden_size", cfg.hidden_size);
  maybe(j, "latent_size", cfg.latent_size);
  maybe(j, "embed_size", cfg.embed_size);
  maybe(j, "dropout", cfg.dropout);
  maybe(j, "batch_size", cfg.batch_size);
  maybe(j, "epochs", cfg.epochs);
  maybe(j, "lr", cfg.lr);
  maybe(j, "beam_width", cfg.beam_width);
  maybe(j, "max_decode_len", cfg.max_decode_len);
  maybe(j, "use_copy", cfg.use_copy);
  maybe(j, "use_latent", cfg.use_latent);
  maybe(j, "min_count", cfg.min_count);
  if (j.contains("kl_schedule")) {
    cfg.kl_schedule.clear();
    for (const auto& entry : j.at("kl_schedule"))
      cfg.kl_schedule.emplace_back(entry[0].get<int>(), entry[1].get<double>());
  }
}

void parser_from_json(const json& j, ParserConfig& cfg) {
  maybe(j, "hidden_size", cfg.hidden_size);
  maybe(j, "embed_size", cfg.embed_size);
  maybe(j, "lambda", cfg.lambda);
  maybe(j, "dropout", cfg.dropout);
  maybe(j, "batch_size", cfg.batch_size);
  maybe(j, "epochs", cfg.epochs);
  maybe(j, "lr", cfg.lr);
  maybe(j, "min_count", cfg.min_count);
  maybe(j, "max_decode_steps", cfg.max_decode_steps);
}

uint64_t fnv1a64(const std::string& data) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.paths.out_dir);
  return cfg.paths.out_dir + "/" + name;
}

void log_line(std::ostream* log, const std::string& line) {
  if (log) *log << line << '\n';
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

// The supervised training file: the split artifact when present, else the
// configured training path.
std::string supervised_file(const RunConfig& cfg) {
  const std::string split_path = cfg.paths.out_dir + "/split.jsonl";
  if (fs::exists(split_path)) return split_path;
  return cfg.paths.train;
}

std::string preview_result(const ResultSet& result) {
  if (result.kind == ResultSet::Kind::Scalar) return format_number(result.scalar);
  std::string preview;
  const size_t shown = std::min<size_t>(result.cells.size(), 3);
  for (size_t i = 0; i < shown; ++i) {
    if (i) preview += "|";
    preview += result.cells[i];
  }
  if (result.cells.size() > shown) preview += "|...";
  return preview;
}

}  // namespace

RunConfig RunConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    maybe(p, "tables", cfg.paths.tables);
    maybe(p, "train", cfg.paths.train);
    maybe(p, "dev", cfg.paths.dev);
    maybe(p, "test", cfg.paths.test);
    maybe(p, "out_dir", cfg.paths.out_dir);
  }
  maybe(j, "seed", cfg.seed);
  maybe(j, "supervised_fraction", cfg.supervised_fraction);
  if (j.contains("sampler")) {
    const json& s = j.at("sampler");
    maybe(s, "per_table", cfg.sampler_per_table);
    maybe(s, "max_conditions", cfg.sampler_max_conditions);
    maybe(s, "retry_cap", cfg.sampler_retry_cap);
  }
  if (j.contains("qg")) qg_from_json(j.at("qg"), cfg.qg);
  if (j.contains("parser")) parser_from_json(j.at("parser"), cfg.parser);
  maybe(j, "questions_per_sql", cfg.questions_per_sql);
  maybe(j, "eval_split", cfg.eval_split);
  maybe(j, "eval_bleu", cfg.eval_bleu);
  if (j.contains("curve_fractions"))
    cfg.curve_fractions = j.at("curve_fractions").get<std::vector<double>>();
  maybe(j, "generated_duplication", cfg.generated_duplication);
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json_string(buffer.str());
}

std::string RunConfig::to_json_string() const {
  json j;
  j["paths"] = paths_to_json(paths);
  j["seed"] = seed;
  j["supervised_fraction"] = supervised_fraction;
  json sampler;
  sampler["per_table"] = sampler_per_table;
  sampler["max_conditions"] = sampler_max_conditions;
  sampler["retry_cap"] = sampler_retry_cap;
  j["sampler"] = std::move(sampler);
  j["qg"] = qg_to_json(qg);
  j["parser"] = parser_to_json(parser);
  j["questions_per_sql"] = questions_per_sql;
  j["eval_split"] = eval_split;
  j["eval_bleu"] = eval_bleu;
  j["curve_fractions"] = curve_fractions;
  j["generated_duplication"] = generated_duplication;
  return j.dump();
}

std::string RunConfig::config_hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json_string())));
  return buf;
}

void RunConfig::validate() const {
  if (supervised_fraction <= 0.0 || supervised_fraction > 1.0)
    throw ConfigError("supervised_fraction must be in (0, 1]");
  if (questions_per_sql < 1) throw ConfigError("questions_per_sql must be >= 1");
  if (eval_split != "dev" && eval_split != "test")
    throw ConfigError("eval_split must be \"dev\" or \"test\"");
  if (generated_duplication < 1) throw ConfigError("generated_duplication must be >= 1");
  for (double f : curve_fractions)
    if (f <= 0.0 || f > 1.0) throw ConfigError("curve fractions must be in (0, 1]");
  sampler_config().validate();
  qg.validate();
  parser.validate();
}

SamplerConfig RunConfig::sampler_config() const {
  SamplerConfig s;
  s.per_table = sampler_per_table;
  s.max_conditions = sampler_max_conditions;
  s.retry_cap = sampler_retry_cap;
  s.rng_seed = Rng::mix(seed, kSeedSample);
  return s;
}

std::vector<size_t> select_fraction(size_t n, double fraction, uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("fraction must be in (0, 1]");
  const size_t want = std::min<size_t>(
      n, static_cast<size_t>(std::ceil(fraction * static_cast<double>(n))));
  std::vector<size_t> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  std::vector<uint64_t> priority(n);
  for (size_t i = 0; i < n; ++i) priority[i] = Rng::mix(seed, i);
  std::sort(indices.begin(), indices.end(),
            [&](size_t a, size_t b) { return priority[a] < priority[b]; });
  indices.resize(want);
  std::sort(indices.begin(), indices.end());
  return indices;
}

std::string artifact_header(const std::string& stage, const RunConfig& cfg) {
  json j;
  json inner;
  inner["stage"] = stage;
  inner["config_hash"] = cfg.config_hash();
  inner["version"] = 1;
  j["_artifact"] = std::move(inner);
  return j.dump();
}

std::vector<std::string> read_artifact_lines(const std::string& path,
                                             const std::string& expected_hash) {
  std::vector<std::string> lines = read_lines(path);
  if (!lines.empty() && lines.front().rfind("{\"_artifact\"", 0) == 0) {
    const json header = json::parse(lines.front());
    const std::string found = header.at("_artifact").at("config_hash").get<std::string>();
    if (!expected_hash.empty() && found != expected_hash)
      throw Error("artifact " + path + " was produced by config " + found +
                  ", current config is " + expected_hash + "; re-run upstream stages");
    lines.erase(lines.begin());
  }
  return lines;
}

StageResult cmd_split(const RunConfig& cfg, std::ostream* log) {
  const TableSet tables = load_tables(cfg.paths.tables);
  const std::vector<std::string> lines = read_artifact_lines(cfg.paths.train, "");
  // Validate records before selecting.
  for (const auto& line : lines) instance_from_json(line, tables);
  const auto selected =
      select_fraction(lines.size(), cfg.supervised_fraction, Rng::mix(cfg.seed, kSeedSplit));

  const std::string path = out_path(cfg, "split.jsonl");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << artifact_header("split", cfg) << '\n';
  for (size_t idx : selected) out << lines[idx] << '\n';
  log_line(log, "split: " + std::to_string(selected.size()) + "/" +
                    std::to_string(lines.size()) + " records -> " + path);
  return {path, selected.size()};
}

StageResult cmd_sample(const RunConfig& cfg, std::ostream* log) {
  const TableSet tables = load_tables(cfg.paths.tables);
  const auto instances = load_instances(supervised_file(cfg), tables);
  std::set<std::string> referenced;
  for (const Instance& inst : instances) referenced.insert(inst.table_id);

  TableSet training_tables;
  for (const Table& t : tables.all())
    if (referenced.count(t.id)) training_tables.add(t);

  const SampleReport report = sample_dataset(training_tables, cfg.sampler_config());
  const std::string path = out_path(cfg, "sampled.jsonl");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << artifact_header("sample", cfg) << '\n';
  for (const SampledQuery& sq : report.queries) {
    const Table& t = tables.at(sq.table_id);
    json rec;
    rec["table_id"] = sq.table_id;
    rec["sql"] = serialize_sql(sq.query, t);
    rec["result_preview"] = preview_result(execute(sq.query, t));
    out << rec.dump() << '\n';
  }
  std::string note;
  if (!report.skipped_tables.empty())
    note = " (skipped " + std::to_string(report.skipped_tables.size()) + " tables)";
  log_line(log, "sample: " + std::to_string(report.queries.size()) + " queries over " +
                    std::to_string(training_tables.size()) + " tables" + note + " -> " + path);
  return {path, report.queries.size()};
}

StageResult cmd_train_qg(const RunConfig& cfg, std::ostream* log) {
  const TableSet tables = load_tables(cfg.paths.tables);
  const auto instances = load_instances(supervised_file(cfg), tables);
  const auto pairs = make_qg_pairs(instances, tables);
  QgTrainLog train_log;
  QgModel model = train_qg(pairs, cfg.qg, Rng::mix(cfg.seed, kSeedTrainQg), &train_log, log);
  const std::string path = out_path(cfg, "qg.ckpt");
  model.save(path);
  model.source_vocab().save(out_path(cfg, "qg_sql.vocab.txt"));
  model.target_vocab().save(out_path(cfg, "qg_question.vocab.txt"));
  log_line(log, "train-qg: " + std::to_string(pairs.size()) + " pairs, teacher-forced accuracy " +
                    std::to_string(train_log.final_token_accuracy) + " -> " + path);
  return {path, pairs.size()};
}

StageResult cmd_generate(const RunConfig& cfg, std::ostream* log) {
  const TableSet tables = load_tables(cfg.paths.tables);
  const std::string ckpt = cfg.paths.out_dir + "/qg.ckpt";
  if (!fs::exists(ckpt)) throw Error("missing checkpoint " + ckpt + "; run train-qg first");
  QgModel model = QgModel::load(ckpt);
  const auto lines =
      read_artifact_lines(cfg.paths.out_dir + "/sampled.jsonl", cfg.config_hash());

  const std::string path = out_path(cfg, "generated.jsonl");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << artifact_header("generate", cfg) << '\n';
  size_t count = 0;
  for (size_t i = 0; i < lines.size(); ++i) {
    const json rec = json::parse(lines[i]);
    const std::string table_id = rec.at("table_id").get<std::string>();
    const std::string sql = rec.at("sql").get<std::string>();
    const auto source = tokenize(sql);
    Rng rng(Rng::mix(Rng::mix(cfg.seed, kSeedGenerate), i));
    const auto questions = model.generate(source, cfg.questions_per_sql, rng);
    for (size_t k = 0; k < questions.size(); ++k) {
      json qrec;
      qrec["table_id"] = table_id;
      qrec["sql"] = sql;
      qrec["question"] = join_tokens(questions[k]);
      qrec["sample_index"] = k;
      out << qrec.dump() << '\n';
      ++count;
    }
  }
  log_line(log, "generate: " + std::to_string(count) + " questions for " +
                    std::to_string(lines.size()) + " queries -> " + path);
  return {path, count};
}

StageResult cmd_augment(const RunConfig& cfg, std::ostream* log) {
  const TableSet tables = load_tables(cfg.paths.tables);
  std::vector<Instance> merged = load_instances(supervised_file(cfg), tables);
  const size_t supervised_count = merged.size();

  const auto lines =
      read_artifact_lines(cfg.paths.out_dir + "/generated.jsonl", cfg.config_hash());
  size_t generated_count = 0;
  for (const auto& line : lines) {
    const json rec = json::parse(line);
    Instance inst;
    inst.table_id = rec.at("table_id").get<std::string>();
    const Table& t = tables.at(inst.table_id);
    inst.query = parse_sql(rec.at("sql").get<std::string>(), t);
    inst.question = tokenize(rec.at("question").get<std::string>());
    inst.origin = Origin::Generated;
    if (inst.question.empty()) continue;  // decoder produced nothing usable
    // Sampler guarantee, re-checked at merge time.
    if (empty_result(inst.query, t))
      throw Error("generated query executes to an empty result: " +
                  rec.at("sql").get<std::string>());
    for (int d = 0; d < cfg.generated_duplication; ++d) merged.push_back(inst);
    ++generated_count;
  }

  Rng rng(Rng::mix(cfg.seed, kSeedAugment));
  for (size_t i = merged.size(); i > 1; --i)
    std::swap(merged[i - 1], merged[rng.pick_index(i)]);

  const std::string path = out_path(cfg, "merged.jsonl");
  save_instances(path, merged, tables, artifact_header("augment", cfg));
  log_line(log, "augment: " + std::to_string(supervised_count) + " supervised + " +
                    std::to_string(generated_count) + " generated -> " + path);
  return {path, merged.size()};
}

StageResult cmd_train_parser(const RunConfig& cfg, std::ostream* log) {
  const TableSet tables = load_tables(cfg.paths.tables);
  const std::string merged_path = cfg.paths.out_dir + "/merged.jsonl";
  const std::string train_path = fs::exists(merged_path) ? merged_path : supervised_file(cfg);
  if (train_path == merged_path)
    read_artifact_lines(merged_path, cfg.config_hash());  // hash check
  const auto instances = load_instances(train_path, tables);

  // The value channel can only produce cells; instances whose condition
  // values are not cells of their column are unlearnable and get dropped.
  std::vector<Instance> kept;
  size_t dropped = 0, supervised = 0, generated = 0;
  for (const Instance& inst : instances) {
    if (parser_trainable(inst.query, tables.at(inst.table_id))) {
      kept.push_back(inst);
      (inst.origin == Origin::Generated ? generated : supervised) += 1;
    } else {
      ++dropped;
    }
  }
  log_line(log, "train-parser: " + std::to_string(supervised) + " supervised + " +
                    std::to_string(generated) + " generated instances from " + train_path +
                    (dropped ? " (dropped " + std::to_string(dropped) + " with non-cell values)"
                             : ""));
  ParserTrainLog train_log;
  ParserModel model =
      train_parser(kept, tables, cfg.parser, Rng::mix(cfg.seed, kSeedTrainParser), &train_log, log);
  const std::string path = out_path(cfg, "parser.ckpt");
  model.save(path);
  log_line(log, "train-parser: model -> " + path);
  return {path, kept.size()};
}

StageResult cmd_evaluate(const RunConfig& cfg, std::ostream* log) {
  const TableSet tables = load_tables(cfg.paths.tables);
  const std::string ckpt = cfg.paths.out_dir + "/parser.ckpt";
  if (!fs::exists(ckpt)) throw Error("missing checkpoint " + ckpt + "; run train-parser first");
  ParserModel model = ParserModel::load(ckpt);
  const std::string eval_path = cfg.eval_split == "dev" ? cfg.paths.dev : cfg.paths.test;
  const auto instances = load_instances(eval_path, tables);
  if (instances.empty()) throw Error("no evaluation instances in " + eval_path);

  std::vector<EvalPair> pairs;
  const std::string pred_path = out_path(cfg, "predictions.jsonl");
  std::ofstream pred_out(pred_path);
  if (!pred_out) throw DataError("cannot write " + pred_path);
  pred_out << artifact_header("evaluate", cfg) << '\n';
  for (const Instance& inst : instances) {
    const Table& t = tables.at(inst.table_id);
    EvalPair pair;
    pair.gold = inst.query;
    pair.pred = model.predict(inst.question, t);
    pair.table_id = inst.table_id;
    json rec;
    rec["question"] = join_tokens(inst.question);
    rec["gold_sql"] = serialize_sql(pair.gold, t);
    rec["pred_sql"] = serialize_sql(pair.pred, t);
    bool match = false;
    try {
      match = execute(pair.pred, t) == execute(pair.gold, t);
    } catch (const ExecError&) {
      match = false;
    }
    rec["execution_match"] = match;
    pred_out << rec.dump() << '\n';
    pairs.push_back(std::move(pair));
  }

  MetricsReport report = evaluate_pairs(pairs, tables);
  const std::string qg_ckpt = cfg.paths.out_dir + "/qg.ckpt";
  if (cfg.eval_bleu && fs::exists(qg_ckpt)) {
    QgModel qg_model = QgModel::load(qg_ckpt);
    std::vector<std::vector<std::string>> hyps, refs;
    for (const Instance& inst : instances) {
      const Table& t = tables.at(inst.table_id);
      hyps.push_back(qg_model.beam_search(linearize_for_qg(inst.query, t), {},
                                          qg_model.config().beam_width));
      refs.push_back(inst.question);
    }
    report.bleu = bleu(hyps, refs);
  }

  const std::string txt_path = out_path(cfg, "metrics.txt");
  {
    std::ofstream out(txt_path);
    out << "config_hash=" << cfg.config_hash() << '\n' << report.to_text();
  }
  const std::string json_path = out_path(cfg, "metrics.json");
  {
    json j = json::parse(report.to_json());
    j["config_hash"] = cfg.config_hash();
    j["split"] = cfg.eval_split;
    std::ofstream out(json_path);
    out << j.dump(2) << '\n';
  }
  log_line(log, "evaluate[" + cfg.eval_split + "]: n=" + std::to_string(report.n) +
                    " acc_lf=" + std::to_string(report.acc_lf) +
                    " acc_ex=" + std::to_string(report.acc_ex) + " -> " + txt_path);
  return {txt_path, report.n};
}

StageResult cmd_curve(const RunConfig& cfg, std::ostream* log) {
  const TableSet tables = load_tables(cfg.paths.tables);
  if (cfg.curve_fractions.empty()) throw ConfigError("curve: no fractions configured");
  const std::vector<std::string> lines = read_artifact_lines(cfg.paths.train, "");
  const auto dev_instances = load_instances(cfg.paths.dev, tables);

  struct Point {
    double fraction;
    size_t train_size;
    double acc_lf_v;
    double acc_ex_v;
  };
  std::vector<Point> points;
  std::vector<double> fractions = cfg.curve_fractions;
  std::sort(fractions.begin(), fractions.end());
  for (double fraction : fractions) {
    const auto selected =
        select_fraction(lines.size(), fraction, Rng::mix(cfg.seed, kSeedSplit));
    std::vector<Instance> subset;
    for (size_t idx : selected) subset.push_back(instance_from_json(lines[idx], tables));
    std::vector<Instance> kept;
    for (const Instance& inst : subset)
      if (parser_trainable(inst.query, tables.at(inst.table_id))) kept.push_back(inst);
    ParserModel model =
        train_parser(kept, tables, cfg.parser, Rng::mix(cfg.seed, kSeedTrainParser), nullptr, nullptr);
    std::vector<EvalPair> pairs;
    for (const Instance& inst : dev_instances)
      pairs.push_back({model.predict(inst.question, tables.at(inst.table_id)), inst.query,
                       inst.table_id});
    Point p;
    p.fraction = fraction;
    p.train_size = kept.size();
    p.acc_lf_v = acc_lf(pairs, tables);
    p.acc_ex_v = acc_ex(pairs, tables);
    points.push_back(p);
    log_line(log, "curve: fraction " + std::to_string(fraction) + " -> acc_lf " +
                      std::to_string(p.acc_lf_v));
  }

  // Least-squares fit of acc_lf against ln(train_size), reported not asserted.
  double r2 = 1.0;
  if (points.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(points.size());
    for (const Point& p : points) {
      const double x = std::log(static_cast<double>(std::max<size_t>(p.train_size, 1)));
      sx += x;
      sy += p.acc_lf_v;
      sxx += x * x;
      sxy += x * p.acc_lf_v;
    }
    const double denom = n * sxx - sx * sx;
    const double slope = denom == 0.0 ? 0.0 : (n * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    const double mean_y = sy / n;
    for (const Point& p : points) {
      const double x = std::log(static_cast<double>(std::max<size_t>(p.train_size, 1)));
      const double pred = slope * x + intercept;
      ss_res += (p.acc_lf_v - pred) * (p.acc_lf_v - pred);
      ss_tot += (p.acc_lf_v - mean_y) * (p.acc_lf_v - mean_y);
    }
    r2 = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  }

  const std::string path = out_path(cfg, "curve.tsv");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "# stage=curve config_hash=" << cfg.config_hash() << '\n';
  out << "train_size\tfraction\tacc_lf\tacc_ex\n";
  for (const Point& p : points)
    out << p.train_size << '\t' << p.fraction << '\t' << p.acc_lf_v << '\t' << p.acc_ex_v << '\n';
  out << "# log_linear_fit_r2=" << r2 << '\n';
  log_line(log, "curve: " + std::to_string(points.size()) + " points, log-linear R2=" +
                    std::to_string(r2) + " -> " + path);
  return {path, points.size()};
}

StageResult cmd_qa_pairs(const RunConfig& cfg, std::ostream* log) {
  const TableSet tables = load_tables(cfg.paths.tables);
  const std::string ckpt = cfg.paths.out_dir + "/qg.ckpt";
  if (!fs::exists(ckpt)) throw Error("missing checkpoint " + ckpt + "; run train-qg first");
  QgModel model = QgModel::load(ckpt);
  const auto lines =
      read_artifact_lines(cfg.paths.out_dir + "/sampled.jsonl", cfg.config_hash());

  const std::string path = out_path(cfg, "qa_pairs.jsonl");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << artifact_header("qa-pairs", cfg) << '\n';
  size_t count = 0, skipped = 0;
  for (size_t i = 0; i < lines.size(); ++i) {
    const json rec = json::parse(lines[i]);
    const std::string table_id = rec.at("table_id").get<std::string>();
    const Table& t = tables.at(table_id);
    const std::string sql = rec.at("sql").get<std::string>();
    ResultSet result;
    try {
      result = execute(parse_sql(sql, t), t);
    } catch (const ExecError&) {
      ++skipped;
      continue;
    }
    Rng rng(Rng::mix(Rng::mix(cfg.seed, kSeedQaPairs), i));
    const auto questions = model.generate(tokenize(sql), 1, rng);
    json qrec;
    qrec["question"] = join_tokens(questions.front());
    if (result.kind == ResultSet::Kind::Scalar)
      qrec["answer"] = result.scalar;
    else
      qrec["answer"] = result.cells;
    qrec["table_id"] = table_id;
    out << qrec.dump() << '\n';
    ++count;
  }
  log_line(log, "qa-pairs: " + std::to_string(count) + " pairs (" + std::to_string(skipped) +
                    " skipped) -> " + path);
  return {path, count};
}

StageResult cmd_pipeline(const RunConfig& cfg, std::ostream* log) {
  cmd_split(cfg, log);
  cmd_sample(cfg, log);
  cmd_train_qg(cfg, log);
  cmd_generate(cfg, log);
  cmd_augment(cfg, log);
  cmd_train_parser(cfg, log);
  return cmd_evaluate(cfg, log);
}

}  // namespace sqlqg
