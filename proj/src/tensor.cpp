#include "sqlqg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace sqlqg {

namespace {

thread_local bool g_no_grad = false;

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw Error(std::string(op) + ": undefined tensor");
}

NodePtr make_node(int rows, int cols) {
  auto n = std::make_shared<TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(static_cast<size_t>(rows) * cols, 0.0);
  return n;
}

// Attach parents and a backward closure when gradients flow.
Tensor record(NodePtr out, std::vector<NodePtr> parents, std::function<void(TensorNode&)> fn) {
  bool needs = false;
  if (!g_no_grad)
    for (const auto& p : parents)
      if (p->needs_grad) needs = true;
  if (needs) {
    out->needs_grad = true;
    out->parents = std::move(parents);
    out->backward_fn = std::move(fn);
  }
  return Tensor(std::move(out));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(std::string(op) + ": shape mismatch [" + std::to_string(a.rows()) + "," +
                std::to_string(a.cols()) + "] vs [" + std::to_string(b.rows()) + "," +
                std::to_string(b.cols()) + "]");
}

}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = prev_; }

bool grad_recording_enabled() { return !g_no_grad; }

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  auto n = make_node(rows, cols);
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad && !g_no_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(int rows, int cols, std::vector<double> values, bool requires_grad) {
  if (values.size() != static_cast<size_t>(rows) * cols)
    throw Error("Tensor::from: value count does not match shape");
  auto n = make_node(rows, cols);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad && !g_no_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from(1, 1, {v}); }

double Tensor::item() const {
  if (size() != 1) throw Error("item(): tensor is not a scalar");
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined(a, "add");
  check_defined(b, "add");
  check_same_shape(a, b, "add");
  auto out = make_node(a.rows(), a.cols());
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.value()[i] + b.value()[i];
  NodePtr pa = a.node(), pb = b.node();
  return record(std::move(out), {pa, pb}, [pa, pb](TensorNode& self) {
    if (pa->needs_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto out = make_node(a.rows(), a.cols());
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.value()[i] - b.value()[i];
  NodePtr pa = a.node(), pb = b.node();
  return record(std::move(out), {pa, pb}, [pa, pb](TensorNode& self) {
    if (pa->needs_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto out = make_node(a.rows(), a.cols());
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.value()[i] * b.value()[i];
  NodePtr pa = a.node(), pb = b.node();
  return record(std::move(out), {pa, pb}, [pa, pb](TensorNode& self) {
    if (pa->needs_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->value[i];
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double k) {
  check_defined(a, "scale");
  auto out = make_node(a.rows(), a.cols());
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.value()[i] * k;
  NodePtr pa = a.node();
  return record(std::move(out), {pa}, [pa, k](TensorNode& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * k;
  });
}

Tensor add_const(const Tensor& a, double k) {
  auto out = make_node(a.rows(), a.cols());
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.value()[i] + k;
  NodePtr pa = a.node();
  return record(std::move(out), {pa}, [pa](TensorNode& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.cols() != b.rows())
    throw Error("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                std::to_string(b.rows()));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  auto out = make_node(m, n);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (int i = 0; i < m; ++i)
    for (int t = 0; t < k; ++t) {
      const double aij = av[static_cast<size_t>(i) * k + t];
      if (aij == 0.0) continue;
      for (int j = 0; j < n; ++j)
        out->value[static_cast<size_t>(i) * n + j] += aij * bv[static_cast<size_t>(t) * n + j];
    }
  NodePtr pa = a.node(), pb = b.node();
  return record(std::move(out), {pa, pb}, [pa, pb, m, k, n](TensorNode& self) {
    if (pa->needs_grad) {
      pa->ensure_grad();
      // dA = g . B^T
      for (int i = 0; i < m; ++i)
        for (int t = 0; t < k; ++t) {
          double acc = 0;
          for (int j = 0; j < n; ++j)
            acc += self.grad[static_cast<size_t>(i) * n + j] * pb->value[static_cast<size_t>(t) * n + j];
          pa->grad[static_cast<size_t>(i) * k + t] += acc;
        }
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      // dB = A^T . g
      for (int t = 0; t < k; ++t)
        for (int j = 0; j < n; ++j) {
          double acc = 0;
          for (int i = 0; i < m; ++i)
            acc += pa->value[static_cast<size_t>(i) * k + t] * self.grad[static_cast<size_t>(i) * n + j];
          pb->grad[static_cast<size_t>(t) * n + j] += acc;
        }
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul_nt");
  check_defined(b, "matmul_nt");
  if (a.cols() != b.cols())
    throw Error("matmul_nt: inner dimensions " + std::to_string(a.cols()) + " vs " +
                std::to_string(b.cols()));
  const int m = a.rows(), k = a.cols(), n = b.rows();
  auto out = make_node(m, n);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0;
      for (int t = 0; t < k; ++t)
        acc += av[static_cast<size_t>(i) * k + t] * bv[static_cast<size_t>(j) * k + t];
      out->value[static_cast<size_t>(i) * n + j] = acc;
    }
  NodePtr pa = a.node(), pb = b.node();
  return record(std::move(out), {pa, pb}, [pa, pb, m, k, n](TensorNode& self) {
    if (pa->needs_grad) {
      pa->ensure_grad();
      // dA = g . B
      for (int i = 0; i < m; ++i)
        for (int t = 0; t < k; ++t) {
          double acc = 0;
          for (int j = 0; j < n; ++j)
            acc += self.grad[static_cast<size_t>(i) * n + j] * pb->value[static_cast<size_t>(j) * k + t];
          pa->grad[static_cast<size_t>(i) * k + t] += acc;
        }
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      // dB = g^T . A
      for (int j = 0; j < n; ++j)
        for (int t = 0; t < k; ++t) {
          double acc = 0;
          for (int i = 0; i < m; ++i)
            acc += self.grad[static_cast<size_t>(i) * n + j] * pa->value[static_cast<size_t>(i) * k + t];
          pb->grad[static_cast<size_t>(j) * k + t] += acc;
        }
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("concat_cols: empty input");
  const int r = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw Error("concat_cols: row mismatch");
    total += p.cols();
  }
  auto out = make_node(r, total);
  int offset = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < p.cols(); ++j)
        out->value[static_cast<size_t>(i) * total + offset + j] = p.at(i, j);
    offset += p.cols();
  }
  std::vector<NodePtr> parents;
  for (const auto& p : parts) parents.push_back(p.node());
  return record(std::move(out), parents, [parents, r, total](TensorNode& self) {
    int off = 0;
    for (const auto& p : parents) {
      if (p->needs_grad) {
        p->ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < p->cols; ++j)
            p->grad[static_cast<size_t>(i) * p->cols + j] +=
                self.grad[static_cast<size_t>(i) * total + off + j];
      }
      off += p->cols;
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("concat_rows: empty input");
  const int c = parts[0].cols();
  int total = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw Error("concat_rows: column mismatch");
    total += p.rows();
  }
  auto out = make_node(total, c);
  size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().begin(), p.value().end(), out->value.begin() + static_cast<long>(offset));
    offset += p.size();
  }
  std::vector<NodePtr> parents;
  for (const auto& p : parts) parents.push_back(p.node());
  return record(std::move(out), parents, [parents](TensorNode& self) {
    size_t off = 0;
    for (const auto& p : parents) {
      if (p->needs_grad) {
        p->ensure_grad();
        for (size_t i = 0; i < p->value.size(); ++i) p->grad[i] += self.grad[off + i];
      }
      off += p->value.size();
    }
  });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd, const char* name) {
  check_defined(a, name);
  auto out = make_node(a.rows(), a.cols());
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = fwd(a.value()[i]);
  NodePtr pa = a.node();
  return record(std::move(out), {pa}, [pa, bwd](TensorNode& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] * bwd(pa->value[i], self.value[i]);
  });
}

}  // namespace

Tensor tanh_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Tensor sigmoid_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor exp_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

Tensor log_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

Tensor clamp_t(const Tensor& a, double lo, double hi) {
  return unary_op(
      a, [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; }, "clamp");
}

Tensor softmax_rows(const Tensor& a) {
  check_defined(a, "softmax_rows");
  const int r = a.rows(), c = a.cols();
  if (c == 0) throw Error("softmax_rows: empty row");
  auto out = make_node(r, c);
  for (int i = 0; i < r; ++i) {
    const size_t base = static_cast<size_t>(i) * c;
    double mx = a.value()[base];
    for (int j = 1; j < c; ++j) mx = std::max(mx, a.value()[base + j]);
    double sum = 0;
    for (int j = 0; j < c; ++j) {
      const double e = std::exp(a.value()[base + j] - mx);
      out->value[base + j] = e;
      sum += e;
    }
    for (int j = 0; j < c; ++j) out->value[base + j] /= sum;
  }
  NodePtr pa = a.node();
  return record(std::move(out), {pa}, [pa, r, c](TensorNode& self) {
    pa->ensure_grad();
    for (int i = 0; i < r; ++i) {
      const size_t base = static_cast<size_t>(i) * c;
      double dot = 0;
      for (int j = 0; j < c; ++j) dot += self.grad[base + j] * self.value[base + j];
      for (int j = 0; j < c; ++j)
        pa->grad[base + j] += self.value[base + j] * (self.grad[base + j] - dot);
    }
  });
}

Tensor sum_all(const Tensor& a) {
  check_defined(a, "sum_all");
  auto out = make_node(1, 1);
  double acc = 0;
  for (double v : a.value()) acc += v;
  out->value[0] = acc;
  NodePtr pa = a.node();
  return record(std::move(out), {pa}, [pa](TensorNode& self) {
    pa->ensure_grad();
    for (double& g : pa->grad) g += self.grad[0];
  });
}

Tensor row(const Tensor& a, int i) {
  check_defined(a, "row");
  if (i < 0 || i >= a.rows()) throw Error("row: index out of range");
  const int c = a.cols();
  auto out = make_node(1, c);
  std::copy(a.value().begin() + static_cast<long>(i) * c,
            a.value().begin() + static_cast<long>(i + 1) * c, out->value.begin());
  NodePtr pa = a.node();
  return record(std::move(out), {pa}, [pa, i, c](TensorNode& self) {
    pa->ensure_grad();
    for (int j = 0; j < c; ++j) pa->grad[static_cast<size_t>(i) * c + j] += self.grad[j];
  });
}

Tensor gather_sum(const Tensor& a, const std::vector<int>& indices) {
  check_defined(a, "gather_sum");
  if (a.rows() != 1) throw Error("gather_sum: expects a [1, n] tensor");
  if (indices.empty()) throw Error("gather_sum: empty index set");
  auto out = make_node(1, 1);
  for (int idx : indices) {
    if (idx < 0 || idx >= a.cols()) throw Error("gather_sum: index out of range");
    out->value[0] += a.value()[static_cast<size_t>(idx)];
  }
  NodePtr pa = a.node();
  auto idxs = indices;
  return record(std::move(out), {pa}, [pa, idxs](TensorNode& self) {
    pa->ensure_grad();
    for (int idx : idxs) pa->grad[static_cast<size_t>(idx)] += self.grad[0];
  });
}

Tensor reshape(const Tensor& a, int rows, int cols) {
  check_defined(a, "reshape");
  if (static_cast<size_t>(rows) * cols != a.size()) throw Error("reshape: size mismatch");
  auto out = make_node(rows, cols);
  out->value = a.value();
  NodePtr pa = a.node();
  return record(std::move(out), {pa}, [pa](TensorNode& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

void backward(const Tensor& loss) {
  check_defined(loss, "backward");
  if (loss.size() != 1) throw Error("backward: loss must be scalar");
  NodePtr root = loss.node();
  if (root->consumed) throw Error("backward: graph already cleared; re-run the forward pass");

  // Post-order over parents; reverse gives consumers before producers.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next].get();
      ++next;
      if (p->needs_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }
  // Clear the tape; parameter grads persist until explicitly zeroed.
  for (TensorNode* node : order) {
    node->parents.clear();
    node->backward_fn = nullptr;
    node->consumed = true;
  }
}

}  // namespace sqlqg
