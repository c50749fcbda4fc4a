#include "sqlqg/qg.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace sqlqg {

using nlohmann::json;

void QgConfig::validate() const {
  if (hidden_size < 1 || latent_size < 1 || embed_size < 1)
    throw ConfigError("qg: sizes must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("qg: dropout must be in [0, 1)");
  if (batch_size < 1 || epochs < 1) throw ConfigError("qg: batch_size and epochs must be >= 1");
  if (beam_width < 1) throw ConfigError("qg: beam_width must be >= 1");
  if (max_decode_len < 1) throw ConfigError("qg: max_decode_len must be >= 1");
  if (min_count < 1) throw ConfigError("qg: min_count must be >= 1");
  double prev = 0.0;
  for (const auto& [epoch, weight] : kl_schedule) {
    if (weight < 0.0 || weight > 1.0) throw ConfigError("qg: kl weights must be in [0, 1]");
    if (weight < prev) throw ConfigError("qg: kl weights must be non-decreasing");
    (void)epoch;
    prev = weight;
  }
}

double QgConfig::kl_weight_at(int epoch) const {
  if (!use_latent) return 0.0;
  if (!kl_schedule.empty()) {
    double w = 0.0;
    for (const auto& [start, weight] : kl_schedule)
      if (epoch >= start) w = weight;
    return w;
  }
  const int half = std::max(1, epochs / 2);
  return std::min(1.0, static_cast<double>(epoch + 1) / static_cast<double>(half));
}

Tensor kl_divergence(const LatentPosterior& post) {
  for (double v : post.mean.value())
    if (!std::isfinite(v)) throw Error("kl_divergence: non-finite mean");
  for (double v : post.logvar.value())
    if (!std::isfinite(v)) throw Error("kl_divergence: non-finite logvar");
  Tensor mu2 = mul(post.mean, post.mean);
  Tensor sig2 = exp_t(post.logvar);
  Tensor inner = sub(sub(add_const(post.logvar, 1.0), mu2), sig2);
  return scale(sum_all(inner), -0.5);
}

Tensor sample_latent(const LatentPosterior& post, Rng& rng) {
  const int n = post.mean.cols();
  std::vector<double> eps(static_cast<size_t>(n));
  for (double& e : eps) e = rng.normal();
  Tensor eps_t = Tensor::from(1, n, std::move(eps));
  Tensor sigma = exp_t(scale(post.logvar, 0.5));
  return add(post.mean, mul(sigma, eps_t));
}

std::vector<int> copy_target_indices(const std::string& token, const Vocabulary& tgt_vocab,
                                     const std::vector<std::string>& source, bool use_copy) {
  std::vector<int> indices;
  if (tgt_vocab.contains(token)) indices.push_back(tgt_vocab.encode(token));
  if (use_copy) {
    const int base = tgt_vocab.size();
    for (size_t i = 0; i < source.size(); ++i)
      if (source[i] == token) indices.push_back(base + static_cast<int>(i));
  }
  if (indices.empty()) indices.push_back(Vocabulary::kUnk);
  return indices;
}

std::map<std::string, double> aggregate_token_probs(const std::vector<double>& probs,
                                                    const Vocabulary& tgt_vocab,
                                                    const std::vector<std::string>& source) {
  std::map<std::string, double> agg;
  const int vt = tgt_vocab.size();
  for (int i = 0; i < vt && i < static_cast<int>(probs.size()); ++i) {
    if (i == Vocabulary::kPad || i == Vocabulary::kBos) continue;
    agg[tgt_vocab.decode(i)] += probs[static_cast<size_t>(i)];
  }
  for (size_t i = vt; i < probs.size(); ++i) agg[source[i - vt]] += probs[i];
  return agg;
}

QgModel::QgModel(QgConfig cfg, Vocabulary src_vocab, Vocabulary tgt_vocab, uint64_t init_seed)
    : cfg_(std::move(cfg)), src_vocab_(std::move(src_vocab)), tgt_vocab_(std::move(tgt_vocab)) {
  cfg_.validate();
  wire(init_seed);
}

int QgModel::decoder_width() const {
  return 2 * cfg_.hidden_size + (cfg_.use_latent ? cfg_.latent_size : 0);
}

void QgModel::wire(uint64_t init_seed) {
  Rng rng(init_seed);
  const int h = cfg_.hidden_size;
  const int e = cfg_.embed_size;
  const int d = decoder_width();
  src_embed_ = params_.create("src_embed", src_vocab_.size(), e, rng);
  tgt_embed_ = params_.create("tgt_embed", tgt_vocab_.size(), e, rng);
  enc_fwd_ = GruCell::create(params_, "enc_fwd", e, h, rng);
  enc_bwd_ = GruCell::create(params_, "enc_bwd", e, h, rng);
  if (cfg_.use_latent) {
    tgt_fwd_ = GruCell::create(params_, "tgt_fwd", e, h, rng);
    tgt_bwd_ = GruCell::create(params_, "tgt_bwd", e, h, rng);
    post_w_mu_ = params_.create("post.w_mu", 4 * h, cfg_.latent_size, rng);
    post_b_mu_ = params_.create("post.b_mu", 1, cfg_.latent_size, rng);
    post_w_logvar_ = params_.create("post.w_logvar", 4 * h, cfg_.latent_size, rng);
    post_b_logvar_ = params_.create("post.b_logvar", 1, cfg_.latent_size, rng);
  }
  dec_ = GruCell::create(params_, "dec", e + 2 * h, d, rng);
  att_w_ = params_.create("att.w", d, 2 * h, rng);
  out_w_gen_ = params_.create("out.w_gen", tgt_vocab_.size(), d, rng);
  if (cfg_.use_copy) copy_w_ = params_.create("copy.w", 2 * h, d, rng);
}

EncoderOutput QgModel::encode_with(const GruCell& fwd, const GruCell& bwd, const Tensor& embed,
                                   const std::vector<int>& ids, bool training, Rng& rng) {
  const size_t t_len = ids.size();
  std::vector<Tensor> inputs(t_len);
  for (size_t i = 0; i < t_len; ++i)
    inputs[i] = dropout(row(embed, ids[i]), cfg_.dropout, rng, training);

  std::vector<Tensor> fwd_states(t_len), bwd_states(t_len);
  Tensor h = Tensor::zeros(1, cfg_.hidden_size);
  for (size_t i = 0; i < t_len; ++i) {
    h = gru_step(fwd, inputs[i], h);
    fwd_states[i] = h;
  }
  h = Tensor::zeros(1, cfg_.hidden_size);
  for (size_t i = t_len; i-- > 0;) {
    h = gru_step(bwd, inputs[i], h);
    bwd_states[i] = h;
  }
  std::vector<Tensor> joined(t_len);
  for (size_t i = 0; i < t_len; ++i) joined[i] = concat_cols({fwd_states[i], bwd_states[i]});
  EncoderOutput out;
  out.states = concat_rows(joined);
  out.summary = concat_cols({fwd_states[t_len - 1], bwd_states[0]});
  return out;
}

EncoderOutput QgModel::encode_source(const std::vector<std::string>& tokens, bool training,
                                     Rng& rng) {
  if (tokens.empty()) throw Error("encode_source: empty input");
  return encode_with(enc_fwd_, enc_bwd_, src_embed_, src_vocab_.encode_all(tokens), training, rng);
}

EncoderOutput QgModel::encode_target(const std::vector<std::string>& tokens, bool training,
                                     Rng& rng) {
  if (tokens.empty()) throw Error("encode_target: empty input");
  if (!cfg_.use_latent) throw Error("encode_target: latent variable disabled");
  return encode_with(tgt_fwd_, tgt_bwd_, tgt_embed_, tgt_vocab_.encode_all(tokens), training, rng);
}

LatentPosterior QgModel::posterior_params(const Tensor& h_x, const Tensor& h_y) {
  Tensor joint = concat_cols({h_x, h_y});
  LatentPosterior post;
  post.mean = add(matmul(joint, post_w_mu_), post_b_mu_);
  post.logvar = clamp_t(add(matmul(joint, post_w_logvar_), post_b_logvar_), -10.0, 10.0);
  return post;
}

Tensor QgModel::decode_distribution(const Tensor& state, const EncoderOutput& enc) {
  Tensor gen_scores = matmul_nt(state, out_w_gen_);  // [1, Vt]
  if (!cfg_.use_copy) return softmax_rows(gen_scores);
  Tensor copy_scores = matmul_nt(state, tanh_t(matmul(enc.states, copy_w_)));  // [1, T]
  return softmax_rows(concat_cols({gen_scores, copy_scores}));
}

QgModel::StepOut QgModel::decode_step(const Tensor& state, const Tensor& ctx, int prev_index,
                                      const EncoderOutput& enc, Rng& rng, bool training) {
  Tensor x = concat_cols({row(tgt_embed_, prev_index), ctx});
  x = dropout(x, cfg_.dropout, rng, training);
  StepOut out;
  out.state = gru_step(dec_, x, state);
  out.dist = decode_distribution(out.state, enc);
  out.next_ctx = attention_context(out.state, enc.states, att_w_).context;
  return out;
}

Tensor QgModel::elbo_loss(const std::vector<QgPair>& batch, double kl_weight, Rng& rng,
                          bool training) {
  if (batch.empty()) throw Error("elbo_loss: empty batch");
  if (kl_weight < 0.0 || kl_weight > 1.0) throw Error("elbo_loss: kl_weight must be in [0, 1]");
  Tensor total = Tensor::zeros(1, 1);
  for (const QgPair& pair : batch) {
    EncoderOutput enc = encode_source(pair.source, training, rng);
    Tensor state = enc.summary;
    Tensor kl;
    if (cfg_.use_latent) {
      EncoderOutput tgt_enc = encode_target(pair.target, training, rng);
      LatentPosterior post = posterior_params(enc.summary, tgt_enc.summary);
      Tensor z = sample_latent(post, rng);
      state = concat_cols({enc.summary, z});
      kl = kl_divergence(post);
    }
    Tensor ce = Tensor::zeros(1, 1);
    Tensor ctx = Tensor::zeros(1, 2 * cfg_.hidden_size);
    int prev = Vocabulary::kBos;
    std::vector<std::string> targets = pair.target;
    targets.push_back(tgt_vocab_.decode(Vocabulary::kEos));
    for (const std::string& gold : targets) {
      StepOut step = decode_step(state, ctx, prev, enc, rng, training);
      state = step.state;
      ctx = step.next_ctx;
      const auto indices = copy_target_indices(gold, tgt_vocab_, pair.source, cfg_.use_copy);
      ce = add(ce, scale(log_t(gather_sum(step.dist, indices)), -1.0));
      prev = tgt_vocab_.encode(gold);
    }
    Tensor pair_loss = ce;
    if (cfg_.use_latent && kl_weight > 0.0) pair_loss = add(ce, scale(kl, kl_weight));
    total = add(total, pair_loss);
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

double QgModel::token_accuracy(const std::vector<QgPair>& pairs) {
  NoGradGuard guard;
  Rng rng(0);
  size_t hits = 0, total = 0;
  for (const QgPair& pair : pairs) {
    EncoderOutput enc = encode_source(pair.source, false, rng);
    Tensor state = enc.summary;
    if (cfg_.use_latent) {
      EncoderOutput tgt_enc = encode_target(pair.target, false, rng);
      LatentPosterior post = posterior_params(enc.summary, tgt_enc.summary);
      // Deterministic evaluation: z at the posterior mean.
      state = concat_cols({enc.summary, post.mean});
    }
    Tensor ctx = Tensor::zeros(1, 2 * cfg_.hidden_size);
    int prev = Vocabulary::kBos;
    std::vector<std::string> targets = pair.target;
    targets.push_back(tgt_vocab_.decode(Vocabulary::kEos));
    for (const std::string& gold : targets) {
      StepOut step = decode_step(state, ctx, prev, enc, rng, false);
      state = step.state;
      ctx = step.next_ctx;
      const auto agg = aggregate_token_probs(step.dist.value(), tgt_vocab_, pair.source);
      std::string best;
      double best_p = -1.0;
      for (const auto& [token, p] : agg)
        if (p > best_p) {
          best_p = p;
          best = token;
        }
      if (best == gold) ++hits;
      ++total;
      prev = tgt_vocab_.encode(gold);
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

namespace {

struct Hypothesis {
  std::vector<std::string> tokens;
  double logp = 0.0;
  Tensor state;
  Tensor ctx;
  int prev = Vocabulary::kBos;
  bool done = false;

  double normalized() const {
    return logp / static_cast<double>(tokens.size() + 1);  // +1 for EOS
  }
};

}  // namespace

std::vector<std::string> QgModel::beam_search(const std::vector<std::string>& source,
                                              const std::vector<double>& z, int width) {
  if (width < 1) throw Error("beam_search: width must be >= 1");
  NoGradGuard guard;
  Rng rng(0);
  EncoderOutput enc = encode_source(source, false, rng);
  Tensor init = enc.summary;
  if (cfg_.use_latent) {
    std::vector<double> zv = z;
    if (zv.empty()) zv.assign(static_cast<size_t>(cfg_.latent_size), 0.0);
    if (static_cast<int>(zv.size()) != cfg_.latent_size)
      throw Error("beam_search: latent draw has wrong dimension");
    init = concat_cols({enc.summary, Tensor::from(1, cfg_.latent_size, std::move(zv))});
  }

  const std::string eos = tgt_vocab_.decode(Vocabulary::kEos);
  std::vector<Hypothesis> live(1);
  live[0].state = init;
  live[0].ctx = Tensor::zeros(1, 2 * cfg_.hidden_size);
  std::vector<Hypothesis> completed;

  for (int step_i = 0; step_i < cfg_.max_decode_len && !live.empty(); ++step_i) {
    std::vector<Hypothesis> candidates;
    for (Hypothesis& hyp : live) {
      StepOut step = decode_step(hyp.state, hyp.ctx, hyp.prev, enc, rng, false);
      const auto agg = aggregate_token_probs(step.dist.value(), tgt_vocab_, source);
      for (const auto& [token, p] : agg) {
        if (p <= 0.0) continue;
        if (token == tgt_vocab_.decode(Vocabulary::kUnk)) continue;
        Hypothesis next = hyp;
        next.logp += std::log(p);
        next.state = step.state;
        next.ctx = step.next_ctx;
        if (token == eos) {
          next.done = true;
        } else {
          next.tokens.push_back(token);
          next.prev = tgt_vocab_.encode(token);
        }
        candidates.push_back(std::move(next));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.logp > b.logp; });
    if (static_cast<int>(candidates.size()) > width) candidates.resize(static_cast<size_t>(width));
    live.clear();
    for (Hypothesis& c : candidates) {
      if (c.done)
        completed.push_back(std::move(c));
      else
        live.push_back(std::move(c));
    }
  }
  for (Hypothesis& h : live) completed.push_back(std::move(h));  // ran out of length
  if (completed.empty()) return {};
  auto best = std::max_element(completed.begin(), completed.end(),
                               [](const Hypothesis& a, const Hypothesis& b) {
                                 return a.normalized() < b.normalized();
                               });
  return best->tokens;
}

double QgModel::sequence_score(const std::vector<std::string>& source,
                               const std::vector<double>& z,
                               const std::vector<std::string>& tokens) {
  NoGradGuard guard;
  Rng rng(0);
  EncoderOutput enc = encode_source(source, false, rng);
  Tensor state = enc.summary;
  if (cfg_.use_latent) {
    std::vector<double> zv = z;
    if (zv.empty()) zv.assign(static_cast<size_t>(cfg_.latent_size), 0.0);
    state = concat_cols({enc.summary, Tensor::from(1, cfg_.latent_size, std::move(zv))});
  }
  Tensor ctx = Tensor::zeros(1, 2 * cfg_.hidden_size);
  int prev = Vocabulary::kBos;
  std::vector<std::string> targets = tokens;
  targets.push_back(tgt_vocab_.decode(Vocabulary::kEos));
  double logp = 0.0;
  for (const std::string& gold : targets) {
    StepOut step = decode_step(state, ctx, prev, enc, rng, false);
    state = step.state;
    ctx = step.next_ctx;
    const auto agg = aggregate_token_probs(step.dist.value(), tgt_vocab_, source);
    const auto it = agg.find(gold);
    logp += std::log(it == agg.end() ? 1e-300 : it->second);
    prev = tgt_vocab_.encode(gold);
  }
  return logp / static_cast<double>(targets.size());
}

std::vector<std::vector<std::string>> QgModel::generate(const std::vector<std::string>& source,
                                                        int k, Rng& rng) {
  if (k < 1) throw Error("generate: k must be >= 1");
  std::vector<std::vector<std::string>> out;
  out.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    std::vector<double> z(static_cast<size_t>(cfg_.latent_size), 0.0);
    if (cfg_.use_latent)
      for (double& v : z) v = rng.normal();
    out.push_back(beam_search(source, z, cfg_.beam_width));
  }
  return out;
}

namespace {

json qg_config_to_json(const QgConfig& cfg) {
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

QgConfig qg_config_from_json(const json& j) {
  QgConfig cfg;
  cfg.hidden_size = j.at("hidden_size").get<int>();
  cfg.latent_size = j.at("latent_size").get<int>();
  cfg.embed_size = j.at("embed_size").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.beam_width = j.at("beam_width").get<int>();
  cfg.max_decode_len = j.at("max_decode_len").get<int>();
  cfg.use_copy = j.at("use_copy").get<bool>();
  cfg.use_latent = j.at("use_latent").get<bool>();
  cfg.min_count = j.at("min_count").get<int>();
  for (const auto& entry : j.at("kl_schedule"))
    cfg.kl_schedule.emplace_back(entry[0].get<int>(), entry[1].get<double>());
  return cfg;
}

json vocab_to_json(const Vocabulary& v) {
  json arr = json::array();
  for (int i = Vocabulary::kReserved; i < v.size(); ++i) arr.push_back(v.decode(i));
  return arr;
}

Vocabulary vocab_from_json(const json& arr) {
  Vocabulary v;
  for (const auto& tok : arr) v.add(tok.get<std::string>());
  return v;
}

}  // namespace

void QgModel::save(const std::string& path) const {
  json meta;
  meta["kind"] = "qg";
  meta["config"] = qg_config_to_json(cfg_);
  meta["src_vocab"] = vocab_to_json(src_vocab_);
  meta["tgt_vocab"] = vocab_to_json(tgt_vocab_);
  save_checkpoint(path, params_, meta.dump());
}

QgModel QgModel::load(const std::string& path) {
  ParamStore loaded;
  const json meta = json::parse(load_checkpoint(path, loaded));
  if (meta.at("kind").get<std::string>() != "qg")
    throw Error("checkpoint " + path + " is not a question-generation model");
  QgModel model(qg_config_from_json(meta.at("config")), vocab_from_json(meta.at("src_vocab")),
                vocab_from_json(meta.at("tgt_vocab")), /*init_seed=*/0);
  // Replace freshly initialized values with the stored ones.
  for (const auto& name : model.params_.names()) {
    Tensor dst = model.params_.at(name);
    Tensor src = loaded.at(name);
    if (dst.rows() != src.rows() || dst.cols() != src.cols())
      throw Error("checkpoint " + path + ": shape mismatch for " + name);
    dst.mutable_value() = src.value();
  }
  return model;
}

std::vector<QgPair> make_qg_pairs(const std::vector<Instance>& instances,
                                  const TableSet& tables) {
  std::vector<QgPair> pairs;
  pairs.reserve(instances.size());
  for (const Instance& inst : instances) {
    QgPair p;
    p.source = linearize_for_qg(inst.query, tables.at(inst.table_id));
    p.target = inst.question;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

QgModel train_qg(const std::vector<QgPair>& pairs, const QgConfig& cfg, uint64_t seed,
                 QgTrainLog* log, std::ostream* progress) {
  cfg.validate();
  if (pairs.empty()) throw Error("train_qg: no training pairs");

  std::vector<std::vector<std::string>> src_corpus, tgt_corpus;
  for (const QgPair& p : pairs) {
    src_corpus.push_back(p.source);
    tgt_corpus.push_back(p.target);
  }
  Vocabulary src_vocab = build_vocab(src_corpus, cfg.min_count);
  Vocabulary tgt_vocab = build_vocab(tgt_corpus, cfg.min_count);

  QgModel model(cfg, std::move(src_vocab), std::move(tgt_vocab), Rng::mix(seed, 0xA11CE));
  Rng rng(Rng::mix(seed, 0x7EA1));

  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the shared stream keeps epochs reproducible.
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.pick_index(i)]);
    const double kl_weight = cfg.kl_weight_at(epoch);
    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<QgPair> batch;
      for (size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(pairs[order[i]]);
      Tensor loss = model.elbo_loss(batch, kl_weight, rng, /*training=*/true);
      epoch_loss += loss.item();
      ++batches;
      backward(loss);
      sgd_step(model.params(), cfg.lr);
    }
    if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    if (progress && (epoch % 10 == 9 || epoch + 1 == cfg.epochs))
      *progress << "qg epoch " << (epoch + 1) << "/" << cfg.epochs
                << " loss=" << epoch_loss / static_cast<double>(batches) << "\n";
  }
  if (log) log->final_token_accuracy = model.token_accuracy(pairs);
  return model;
}

}  // namespace sqlqg
