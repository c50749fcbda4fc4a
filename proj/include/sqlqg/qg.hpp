#pragma once

#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sqlqg/data.hpp"
#include "sqlqg/nn.hpp"
#include "sqlqg/rng.hpp"
#include "sqlqg/tensor.hpp"

namespace sqlqg {

struct QgConfig {
  int hidden_size = 8;   // per-direction encoder state
  int latent_size = 4;
  int embed_size = 8;
  double dropout = 0.5;
  int batch_size = 32;
  int epochs = 30;
  double lr = 0.1;
  int beam_width = 5;
  int max_decode_len = 40;
  bool use_copy = true;
  bool use_latent = true;
  int min_count = 1;
  // Step schedule of (epoch, weight); empty means a linear ramp from 0 to 1
  // over the first half of training.
  std::vector<std::pair<int, double>> kl_schedule;

  void validate() const;
  double kl_weight_at(int epoch) const;
};

struct QgPair {
  std::vector<std::string> source;  // linearized SQL tokens
  std::vector<std::string> target;  // question tokens
};

struct EncoderOutput {
  Tensor states;   // [T, 2H]
  Tensor summary;  // [1, 2H] = [fwd_T ; bwd_1]
};

struct LatentPosterior {
  Tensor mean;    // [1, n]
  Tensor logvar;  // [1, n], clamped to [-10, 10]
};

// -1/2 sum(1 + log s^2 - mu^2 - s^2); KL from the posterior to N(0, I).
Tensor kl_divergence(const LatentPosterior& post);

// z = mu + sigma * eps with eps ~ N(0, I); gradient flows through mu, sigma.
Tensor sample_latent(const LatentPosterior& post, Rng& rng);

// Positions/indices a gold token can be produced from: its vocabulary slot
// plus every matching source position (offset by vocab size). Falls back to
// UNK when the token is out-of-vocabulary and absent from the source.
std::vector<int> copy_target_indices(const std::string& token, const Vocabulary& tgt_vocab,
                                     const std::vector<std::string>& source, bool use_copy);

// Surface-form probabilities from a mixed vocabulary+copy distribution;
// vocabulary and copied slots of the same surface token pool together.
std::map<std::string, double> aggregate_token_probs(const std::vector<double>& probs,
                                                    const Vocabulary& tgt_vocab,
                                                    const std::vector<std::string>& source);

class QgModel {
 public:
  QgModel(QgConfig cfg, Vocabulary src_vocab, Vocabulary tgt_vocab, uint64_t init_seed);

  const QgConfig& config() const { return cfg_; }
  const Vocabulary& source_vocab() const { return src_vocab_; }
  const Vocabulary& target_vocab() const { return tgt_vocab_; }
  ParamStore& params() { return params_; }

  int decoder_width() const;  // 2H (+ latent when enabled)

  EncoderOutput encode_source(const std::vector<std::string>& tokens, bool training, Rng& rng);
  EncoderOutput encode_target(const std::vector<std::string>& tokens, bool training, Rng& rng);

  LatentPosterior posterior_params(const Tensor& h_x, const Tensor& h_y);

  // Normalized output distribution for one decoder state: [1, Vt + T] with
  // the copy mechanism, [1, Vt] without.
  Tensor decode_distribution(const Tensor& state, const EncoderOutput& enc);

  // Mean over the batch of teacher-forced cross-entropy plus kl_weight times
  // the posterior KL (latent variants only).
  Tensor elbo_loss(const std::vector<QgPair>& batch, double kl_weight, Rng& rng, bool training);

  // Teacher-forced argmax accuracy over target tokens (EOS included).
  double token_accuracy(const std::vector<QgPair>& pairs);

  // Length-normalized beam decode under a fixed latent draw (ignored when
  // the latent variable is disabled; pass {} for none).
  std::vector<std::string> beam_search(const std::vector<std::string>& source,
                                       const std::vector<double>& z, int width);

  // k questions from k prior draws of z (k beam copies when latent is off).
  std::vector<std::vector<std::string>> generate(const std::vector<std::string>& source, int k,
                                                 Rng& rng);

  // Length-normalized log probability of a full token sequence plus EOS
  // under a fixed latent draw; the quantity the beam ranks by.
  double sequence_score(const std::vector<std::string>& source,
                        const std::vector<double>& z,
                        const std::vector<std::string>& tokens);

  struct StepOut {
    Tensor state;
    Tensor dist;
    Tensor next_ctx;
  };
  // One teacher-forced decoder step; exposed for decoding and analysis.
  StepOut decode_step(const Tensor& state, const Tensor& ctx, int prev_index,
                      const EncoderOutput& enc, Rng& rng, bool training);

  void save(const std::string& path) const;
  static QgModel load(const std::string& path);

 private:
  QgConfig cfg_;
  Vocabulary src_vocab_;
  Vocabulary tgt_vocab_;
  ParamStore params_;
  Tensor src_embed_, tgt_embed_;
  GruCell enc_fwd_, enc_bwd_;
  GruCell tgt_fwd_, tgt_bwd_;  // posterior encoder (latent only)
  Tensor post_w_mu_, post_b_mu_, post_w_logvar_, post_b_logvar_;
  GruCell dec_;
  Tensor att_w_;
  Tensor out_w_gen_;
  Tensor copy_w_;

  void wire(uint64_t init_seed);
  EncoderOutput encode_with(const GruCell& fwd, const GruCell& bwd, const Tensor& embed,
                            const std::vector<int>& ids, bool training, Rng& rng);
};

struct QgTrainLog {
  std::vector<double> epoch_loss;
  double final_token_accuracy = 0.0;
};

QgModel train_qg(const std::vector<QgPair>& pairs, const QgConfig& cfg, uint64_t seed,
                 QgTrainLog* log = nullptr, std::ostream* progress = nullptr);

// (linearized SQL, question) pairs from supervised instances.
std::vector<QgPair> make_qg_pairs(const std::vector<Instance>& instances, const TableSet& tables);

}  // namespace sqlqg
