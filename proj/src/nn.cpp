#include "sqlqg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace sqlqg {

Tensor ParamStore::create(const std::string& name, int rows, int cols, Rng& rng,
                          double init_range) {
  if (params_.count(name)) throw Error("ParamStore: duplicate parameter \"" + name + "\"");
  std::vector<double> values(static_cast<size_t>(rows) * cols);
  for (double& v : values) v = rng.uniform(-init_range, init_range);
  Tensor t = Tensor::from(rows, cols, std::move(values), /*requires_grad=*/true);
  order_.push_back(name);
  params_.emplace(name, t);
  return t;
}

Tensor ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("ParamStore: unknown parameter \"" + name + "\"");
  return it->second;
}

void ParamStore::zero_grads() {
  for (const auto& name : order_) params_.at(name).zero_grad();
}

size_t ParamStore::num_values() const {
  size_t n = 0;
  for (const auto& name : order_) n += params_.at(name).size();
  return n;
}

void sgd_step(ParamStore& params, double lr) {
  bool any = false;
  for (const auto& name : params.names())
    if (params.at(name).has_grad()) any = true;
  if (!any) throw Error("sgd_step: no gradients accumulated; run backward first");
  for (const auto& name : params.names()) {
    Tensor t = params.at(name);
    if (!t.has_grad()) continue;
    auto& v = t.mutable_value();
    const auto& g = t.node()->grad;
    for (size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    t.zero_grad();
  }
}

GruCell GruCell::create(ParamStore& params, const std::string& prefix, int input_size,
                        int hidden_size, Rng& rng) {
  GruCell c;
  c.input_size = input_size;
  c.hidden_size = hidden_size;
  c.wxz = params.create(prefix + ".wxz", input_size, hidden_size, rng);
  c.whz = params.create(prefix + ".whz", hidden_size, hidden_size, rng);
  c.bz = params.create(prefix + ".bz", 1, hidden_size, rng);
  c.wxr = params.create(prefix + ".wxr", input_size, hidden_size, rng);
  c.whr = params.create(prefix + ".whr", hidden_size, hidden_size, rng);
  c.br = params.create(prefix + ".br", 1, hidden_size, rng);
  c.wxn = params.create(prefix + ".wxn", input_size, hidden_size, rng);
  c.whn = params.create(prefix + ".whn", hidden_size, hidden_size, rng);
  c.bn = params.create(prefix + ".bn", 1, hidden_size, rng);
  return c;
}

Tensor gru_step(const GruCell& cell, const Tensor& input, const Tensor& h_prev) {
  if (input.cols() != cell.input_size || h_prev.cols() != cell.hidden_size)
    throw Error("gru_step: width mismatch (input " + std::to_string(input.cols()) + ", hidden " +
                std::to_string(h_prev.cols()) + ")");
  Tensor z = sigmoid_t(add(add(matmul(input, cell.wxz), matmul(h_prev, cell.whz)), cell.bz));
  Tensor r = sigmoid_t(add(add(matmul(input, cell.wxr), matmul(h_prev, cell.whr)), cell.br));
  Tensor cand =
      tanh_t(add(add(matmul(input, cell.wxn), matmul(mul(r, h_prev), cell.whn)), cell.bn));
  Tensor keep = mul(sub(add_const(Tensor::zeros(1, cell.hidden_size), 1.0), z), h_prev);
  return add(keep, mul(z, cand));
}

AttentionResult attention_context(const Tensor& query, const Tensor& encoder_states,
                                  const Tensor& w_att) {
  if (encoder_states.rows() == 0) throw Error("attention_context: empty encoder sequence");
  Tensor projected = matmul(query, w_att);             // [1, S]
  Tensor scores = matmul_nt(projected, encoder_states);  // [1, T]
  Tensor weights = softmax_rows(scores);
  Tensor context = matmul(weights, encoder_states);  // [1, S]
  return {context, weights};
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw Error("dropout: rate must be < 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mul(x, Tensor::from(x.rows(), x.cols(), std::move(mask)));
}

FiniteDiffReport finite_diff_check(const std::function<Tensor()>& f, ParamStore& params,
                                   double eps, double tol) {
  params.zero_grads();
  Tensor loss = f();
  backward(loss);

  std::unordered_map<std::string, std::vector<double>> analytic;
  for (const auto& name : params.names()) analytic[name] = params.at(name).grad();

  FiniteDiffReport report;
  for (const auto& name : params.names()) {
    Tensor t = params.at(name);
    auto& values = t.mutable_value();
    for (size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = f().item();
      values[i] = saved - eps;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[name][i];
      // Coordinates with tiny gradients are compared absolutely.
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-4});
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = static_cast<int>(i);
      }
    }
  }
  report.pass = report.max_rel_error < tol;
  params.zero_grads();
  return report;
}

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'G', 'C'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path);
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<uint64_t>(config_json.size()));
  out.write(config_json.data(), static_cast<long>(config_json.size()));
  write_pod(out, static_cast<uint64_t>(params.size()));
  for (const auto& name : params.names()) {
    Tensor t = params.at(name);
    write_pod(out, static_cast<uint64_t>(name.size()));
    out.write(name.data(), static_cast<long>(name.size()));
    write_pod(out, static_cast<uint32_t>(t.rows()));
    write_pod(out, static_cast<uint32_t>(t.cols()));
    out.write(reinterpret_cast<const char*>(t.value().data()),
              static_cast<long>(t.size() * sizeof(double)));
  }
  if (!out) throw Error("checkpoint write failed for " + path);
}

std::string load_checkpoint(const std::string& path, ParamStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw Error("checkpoint " + path + ": bad magic");
  const uint32_t version = read_pod<uint32_t>(in);
  if (version != kVersion)
    throw Error("checkpoint " + path + ": unsupported version " + std::to_string(version));
  const uint64_t config_len = read_pod<uint64_t>(in);
  std::string config(config_len, '\0');
  in.read(config.data(), static_cast<long>(config_len));
  const uint64_t n_tensors = read_pod<uint64_t>(in);
  Rng dummy(0);
  for (uint64_t k = 0; k < n_tensors; ++k) {
    const uint64_t name_len = read_pod<uint64_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<long>(name_len));
    const uint32_t rows = read_pod<uint32_t>(in);
    const uint32_t cols = read_pod<uint32_t>(in);
    Tensor t = params.create(name, static_cast<int>(rows), static_cast<int>(cols), dummy, 0.0);
    in.read(reinterpret_cast<char*>(t.mutable_value().data()),
            static_cast<long>(t.size() * sizeof(double)));
    if (!in) throw Error("checkpoint " + path + ": truncated tensor data");
  }
  return config;
}

}  // namespace sqlqg
