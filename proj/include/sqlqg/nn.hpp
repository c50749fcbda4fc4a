#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sqlqg/rng.hpp"
#include "sqlqg/tensor.hpp"

namespace sqlqg {

// Named parameter registry with deterministic iteration order.
class ParamStore {
 public:
  // New parameter initialized uniformly in [-init_range, init_range].
  Tensor create(const std::string& name, int rows, int cols, Rng& rng, double init_range = 0.08);

  bool has(const std::string& name) const { return params_.count(name) > 0; }
  Tensor at(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }

  void zero_grads();

  // Total number of scalar parameters.
  size_t num_values() const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> params_;
};

// w <- w - lr * grad for every parameter, then grads are zeroed.
// Throws when no parameter has an accumulated gradient.
void sgd_step(ParamStore& params, double lr);

struct GruCell {
  Tensor wxz, whz, bz;  // update gate
  Tensor wxr, whr, br;  // reset gate
  Tensor wxn, whn, bn;  // candidate
  int input_size = 0;
  int hidden_size = 0;

  static GruCell create(ParamStore& params, const std::string& prefix, int input_size,
                        int hidden_size, Rng& rng);
};

// Standard GRU recurrence. Gate convention: h' = (1-z) * h_prev + z * cand,
// with the reset gate applied to h_prev before the recurrent candidate
// product: cand = tanh(x Wxn + (r * h) Whn + bn).
Tensor gru_step(const GruCell& cell, const Tensor& input, const Tensor& h_prev);

struct AttentionResult {
  Tensor context;
  Tensor weights;
};

// Multiplicative attention: scores_j = query . W . state_j^T, weights are a
// softmax over positions, context the weighted sum of states (rows).
AttentionResult attention_context(const Tensor& query, const Tensor& encoder_states,
                                  const Tensor& w_att);

// Inverted-scaling dropout on RNN inputs. Identity when training is false
// or rate is zero.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  int worst_index = -1;
  size_t coords_checked = 0;
  bool pass = false;
};

// Central finite differences per coordinate against analytic gradients.
// f must be deterministic given the parameter values (freeze any noise).
// Relative error uses a small denominator floor so zero-gradient coordinates
// compare absolutely. Grads are zeroed afterwards.
FiniteDiffReport finite_diff_check(const std::function<Tensor()>& f, ParamStore& params,
                                   double eps = 1e-5, double tol = 1e-4);

// Checkpoint: versioned header, the producing config as a JSON string, then
// named tensors with shapes and raw little-endian f64 values.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_json);

// Loads tensors into a fresh store; returns the stored config JSON.
std::string load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace sqlqg
