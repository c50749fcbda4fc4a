#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sqlqg/error.hpp"

namespace sqlqg {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One node of the recording graph. Dense 2-D, row-major, f64 throughout;
// vectors are [1, n] rows and scalars are [1, 1].
struct TensorNode {
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first write
  bool requires_grad = false;
  bool needs_grad = false;  // gradient flows through this node
  bool consumed = false;    // backward already ran and cleared the graph
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;

  size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Value-semantic handle over a graph node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor from(int rows, int cols, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  size_t size() const { return node_->size(); }
  std::vector<int> shape() const { return {rows(), cols()}; }

  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& mutable_value() { return node_->value; }
  double at(int r, int c) const { return node_->value[static_cast<size_t>(r) * cols() + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Zeros when backward never reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();

  NodePtr node() const { return node_; }
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

// Disables graph recording in scope (inference, decoding loops).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_recording_enabled();

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);
Tensor add_const(const Tensor& a, double k);

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T -> [m,n]

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

Tensor tanh_t(const Tensor& a);
Tensor sigmoid_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor clamp_t(const Tensor& a, double lo, double hi);

// Numerically stable row-wise softmax.
Tensor softmax_rows(const Tensor& a);

Tensor sum_all(const Tensor& a);

// Row i as [1, cols]; the embedding-lookup primitive.
Tensor row(const Tensor& a, int i);

// Sum of entries of a [1, n] tensor at the given indices (duplicates add).
Tensor gather_sum(const Tensor& a, const std::vector<int>& indices);

Tensor reshape(const Tensor& a, int rows, int cols);

// Reverse pass from a scalar loss; accumulates into grads of every
// requires_grad tensor on the path, then clears the recorded graph.
void backward(const Tensor& loss);

}  // namespace sqlqg
