// Copyright 2026 The mobpriv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mobpriv/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mobpriv/errors.h"

namespace mobpriv {

using internal::Node;

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  for (std::size_t d : shape) {
    if (d == 0) {
      throw ShapeError("tensor dimensions must be positive, got " +
                       shape_string(shape));
    }
  }
}

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> values,
                               bool requires_grad) {
  check_shape(shape);
  if (shape_size(shape) != values.size()) {
    throw ShapeError("shape " + shape_string(shape) + " holds " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->needs_grad = requires_grad;
  return node;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + " expects a rank-2 tensor, got " +
                     shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// c[m×n] += a[m×k]·b[k×n]. Zero entries of `a` are skipped, which makes
// one-hot inputs cheap.
void gemm_nn(const double* __restrict a, const double* __restrict b,
             double* __restrict c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* __restrict bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// da[m×k] += dc[m×n]·bᵀ for b[k×n]. Runs as gemm_nn against an explicit
// transpose so the inner loop is an axpy rather than a reduction.
void gemm_nt(const double* __restrict dc, const double* __restrict b,
             double* __restrict da, std::size_t m, std::size_t k,
             std::size_t n) {
  std::vector<double> bt(n * k);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  }
  gemm_nn(dc, bt.data(), da, m, n, k);
}

// db[k×n] += aᵀ·dc for a[m×k], dc[m×n].
void gemm_tn(const double* __restrict a, const double* __restrict dc,
             double* __restrict db, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* __restrict gi = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* __restrict dp = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dp[j] += av * gi[j];
    }
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0),
                         requires_grad));
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value),
                         requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
  return rank() == 1 ? 1 : node_->shape[rank() - 2];
}

std::size_t Tensor::cols() const { return node_->shape.back(); }

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on non-scalar tensor " + shape_string(shape()));
  }
  return node_->values[0];
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  node_->needs_grad = on;
}

std::span<const double> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

Tensor Tensor::clone() const {
  return from(shape(), node_->values, requires_grad());
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::make_output(Shape shape, std::vector<double> values,
                         std::initializer_list<const Tensor*> inputs) {
  Tensor out(new_node(std::move(shape), std::move(values), false));
  if (recording()) {
    for (const Tensor* t : inputs) {
      if (t->needs_grad()) out.node_->needs_grad = true;
    }
  }
  return out;
}

Tensor Tape::make_output(Shape shape, std::vector<double> values,
                         std::span<const Tensor> inputs) {
  Tensor out(new_node(std::move(shape), std::move(values), false));
  if (recording()) {
    for (const Tensor& t : inputs) {
      if (t.needs_grad()) out.node_->needs_grad = true;
    }
  }
  return out;
}

void Tape::record(const Tensor& out, std::function<void()> backward_fn) {
  if (!recording() || !out.needs_grad()) return;
  entries_.push_back({out.shared_node(), std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? shape_string(loss.shape())
                                        : std::string("undefined tensor")));
  }
  if (replayed_) {
    throw ContractError(
        "tape was already replayed; clear() it before calling backward() "
        "again");
  }
  replayed_ = true;
  if (!loss.needs_grad()) return;
  Node* root = loss.node();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // no path to the loss
    it->backward_fn();
  }
}

void Tape::clear() {
  entries_.clear();
  replayed_ = false;
}

// ---------------------------------------------------------------------------
// Primitives

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ for " +
                     shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  std::vector<double> c(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), c.data(), m, k, n);
  Tensor out = tape.make_output({m, n}, std::move(c), {&a, &b});
  auto an = a.shared_node(), bn = b.shared_node(), on = out.shared_node();
  tape.record(out, [an, bn, on, m, k, n] {
    if (an->needs_grad) {
      an->ensure_grad();
      gemm_nt(on->grad.data(), bn->values.data(), an->grad.data(), m, k, n);
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      gemm_tn(an->values.data(), on->grad.data(), bn->grad.data(), m, k, n);
    }
  });
  return out;
}

Tensor affine(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank2(x, "affine");
  require_rank2(w, "affine");
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  if (w.rows() != k) {
    throw ShapeError("affine: inner dimensions differ for " +
                     shape_string(x.shape()) + " x " +
                     shape_string(w.shape()));
  }
  if (b.size() != n || b.rows() != 1) {
    throw ShapeError("affine: bias " + shape_string(b.shape()) +
                     " does not match output width " + std::to_string(n));
  }
  std::vector<double> c(m * n);
  const auto bias = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(bias.begin(), bias.end(), c.begin() + i * n);
  }
  gemm_nn(x.values().data(), w.values().data(), c.data(), m, k, n);
  Tensor out = tape.make_output({m, n}, std::move(c), {&x, &w, &b});
  auto xn = x.shared_node(), wn = w.shared_node(), bn = b.shared_node(),
       on = out.shared_node();
  tape.record(out, [xn, wn, bn, on, m, k, n] {
    const double* g = on->grad.data();
    if (xn->needs_grad) {
      xn->ensure_grad();
      gemm_nt(g, wn->values.data(), xn->grad.data(), m, k, n);
    }
    if (wn->needs_grad) {
      wn->ensure_grad();
      gemm_tn(xn->values.data(), g, wn->grad.data(), m, k, n);
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) bn->grad[j] += g[i * n + j];
      }
    }
  });
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a[i] + b[i];
  Tensor out = tape.make_output(a.shape(), std::move(c), {&a, &b});
  auto an = a.shared_node(), bn = b.shared_node(), on = out.shared_node();
  tape.record(out, [an, bn, on] {
    for (Node* in : {an.get(), bn.get()}) {
      if (!in->needs_grad) continue;
      in->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        in->grad[i] += on->grad[i];
      }
    }
  });
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a[i] * b[i];
  Tensor out = tape.make_output(a.shape(), std::move(c), {&a, &b});
  auto an = a.shared_node(), bn = b.shared_node(), on = out.shared_node();
  tape.record(out, [an, bn, on] {
    const auto& g = on->grad;
    if (an->needs_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        an->grad[i] += g[i] * bn->values[i];
      }
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        bn->grad[i] += g[i] * an->values[i];
      }
    }
  });
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  std::vector<double> c(x.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = factor * x[i];
  Tensor out = tape.make_output(x.shape(), std::move(c), {&x});
  auto xn = x.shared_node(), on = out.shared_node();
  tape.record(out, [xn, on, factor] {
    xn->ensure_grad();
    for (std::size_t i = 0; i < on->grad.size(); ++i) {
      xn->grad[i] += factor * on->grad[i];
    }
  });
  return out;
}

Tensor activation(Tape& tape, const Tensor& x, Activation kind) {
  const std::size_t n = x.size();
  std::vector<double> y(n);
  const auto v = x.values();
  switch (kind) {
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) y[i] = sigmoid_scalar(v[i]);
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(v[i]);
      break;
    case Activation::kSoftmax: {
      const std::size_t width = x.cols();
      for (std::size_t r = 0; r < n / width; ++r) {
        const double* in = v.data() + r * width;
        double* o = y.data() + r * width;
        const double mx = *std::max_element(in, in + width);
        double total = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          o[j] = std::exp(in[j] - mx);
          total += o[j];
        }
        for (std::size_t j = 0; j < width; ++j) o[j] /= total;
      }
      break;
    }
  }
  Tensor out = tape.make_output(x.shape(), std::move(y), {&x});
  auto xn = x.shared_node(), on = out.shared_node();
  tape.record(out, [xn, on, kind] {
    xn->ensure_grad();
    const auto& g = on->grad;
    const auto& y = on->values;
    auto& dx = xn->grad;
    switch (kind) {
      case Activation::kSigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) {
          dx[i] += g[i] * y[i] * (1.0 - y[i]);
        }
        break;
      case Activation::kTanh:
        for (std::size_t i = 0; i < g.size(); ++i) {
          dx[i] += g[i] * (1.0 - y[i] * y[i]);
        }
        break;
      case Activation::kSoftmax: {
        const std::size_t width = on->shape.back();
        for (std::size_t r = 0; r < g.size() / width; ++r) {
          const std::size_t base = r * width;
          double dot = 0.0;
          for (std::size_t j = 0; j < width; ++j) {
            dot += g[base + j] * y[base + j];
          }
          for (std::size_t j = 0; j < width; ++j) {
            dx[base + j] += y[base + j] * (g[base + j] - dot);
          }
        }
        break;
      }
    }
  });
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin,
                  std::size_t end) {
  require_rank2(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > n) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for " +
                     shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> y(m * w);
  const auto v = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(v.begin() + i * n + begin, v.begin() + i * n + end,
              y.begin() + i * w);
  }
  Tensor out = tape.make_output({m, w}, std::move(y), {&x});
  auto xn = x.shared_node(), on = out.shared_node();
  tape.record(out, [xn, on, m, n, w, begin] {
    xn->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        xn->grad[i * n + begin + j] += on->grad[i * w + j];
      }
    }
  });
  return out;
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("stack_rows: no tensors given");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "stack_rows");
    if (p.cols() != n) {
      throw ShapeError("stack_rows: width mismatch " +
                       shape_string(parts[0].shape()) + " vs " +
                       shape_string(p.shape()));
    }
    m += p.rows();
  }
  std::vector<double> y;
  y.reserve(m * n);
  for (const Tensor& p : parts) {
    y.insert(y.end(), p.values().begin(), p.values().end());
  }
  Tensor out = tape.make_output({m, n}, std::move(y), parts);
  std::vector<std::shared_ptr<Node>> nodes;
  for (const Tensor& p : parts) nodes.push_back(p.shared_node());
  auto on = out.shared_node();
  tape.record(out, [nodes, on] {
    std::size_t offset = 0;
    for (const auto& in : nodes) {
      const std::size_t len = in->values.size();
      if (in->needs_grad) {
        in->ensure_grad();
        for (std::size_t i = 0; i < len; ++i) {
          in->grad[i] += on->grad[offset + i];
        }
      }
      offset += len;
    }
  });
  return out;
}

Tensor mean_of(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("mean_of: no tensors given");
  const double inv = 1.0 / static_cast<double>(parts.size());
  std::vector<double> y(parts[0].size(), 0.0);
  for (const Tensor& p : parts) {
    require_same_shape(parts[0], p, "mean_of");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += p[i] * inv;
  }
  Tensor out = tape.make_output(parts[0].shape(), std::move(y), parts);
  std::vector<std::shared_ptr<Node>> nodes;
  for (const Tensor& p : parts) nodes.push_back(p.shared_node());
  auto on = out.shared_node();
  tape.record(out, [nodes, on, inv] {
    for (const auto& in : nodes) {
      if (!in->needs_grad) continue;
      in->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        in->grad[i] += inv * on->grad[i];
      }
    }
  });
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& probs,
                     std::span<const int> targets) {
  require_rank2(probs, "cross_entropy");
  const std::size_t batch = probs.rows(), classes = probs.cols();
  if (targets.size() != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(batch) + " rows");
  }
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw IndexError("cross_entropy: target " + std::to_string(t) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
    total -= std::log(std::max(probs.at(r, t), kLogClamp));
  }
  Tensor out =
      tape.make_output({1}, {total / static_cast<double>(batch)}, {&probs});
  auto pn = probs.shared_node(), on = out.shared_node();
  std::vector<int> labels(targets.begin(), targets.end());
  tape.record(out, [pn, on, labels = std::move(labels), batch, classes] {
    pn->ensure_grad();
    const double g = on->grad[0] / static_cast<double>(batch);
    for (std::size_t r = 0; r < batch; ++r) {
      const std::size_t idx = r * classes + labels[r];
      const double p = pn->values[idx];
      if (p > kLogClamp) pn->grad[idx] -= g / p;
    }
  });
  return out;
}

Tensor mse(Tape& tape, const Tensor& x, const Tensor& x_hat) {
  require_same_shape(x, x_hat, "mse");
  const std::size_t n = x.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - x_hat[i];
    total += d * d;
  }
  Tensor out =
      tape.make_output({1}, {total / static_cast<double>(n)}, {&x, &x_hat});
  auto xn = x.shared_node(), hn = x_hat.shared_node(), on = out.shared_node();
  tape.record(out, [xn, hn, on, n] {
    const double g = 2.0 * on->grad[0] / static_cast<double>(n);
    if (xn->needs_grad) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        xn->grad[i] += g * (xn->values[i] - hn->values[i]);
      }
    }
    if (hn->needs_grad) {
      hn->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        hn->grad[i] -= g * (xn->values[i] - hn->values[i]);
      }
    }
  });
  return out;
}

Tensor weighted_sum(Tape& tape, std::span<const Tensor> scalars,
                    std::span<const double> coeffs) {
  if (scalars.size() != coeffs.size() || scalars.empty()) {
    throw ShapeError("weighted_sum: " + std::to_string(scalars.size()) +
                     " terms with " + std::to_string(coeffs.size()) +
                     " coefficients");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    total += coeffs[i] * scalars[i].item();
  }
  Tensor out = tape.make_output({1}, {total}, scalars);
  std::vector<std::shared_ptr<Node>> nodes;
  for (const Tensor& s : scalars) nodes.push_back(s.shared_node());
  std::vector<double> c(coeffs.begin(), coeffs.end());
  auto on = out.shared_node();
  tape.record(out, [nodes, c = std::move(c), on] {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!nodes[i]->needs_grad) continue;
      nodes[i]->ensure_grad();
      nodes[i]->grad[0] += c[i] * on->grad[0];
    }
  });
  return out;
}

}  // namespace mobpriv
