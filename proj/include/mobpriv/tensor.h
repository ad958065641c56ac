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

#ifndef MOBPRIV_TENSOR_H_
#define MOBPRIV_TENSOR_H_

// Dense row-major tensors with a reverse-mode tape over coarse primitives
// (matmul, affine, elementwise activations, losses). 64-bit throughout.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mobpriv {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace internal {
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a gradient reaches the node
  bool requires_grad = false;  // leaf flag set by the caller
  bool needs_grad = false;     // requires_grad, or computed from one that does

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};
}  // namespace internal

// Shared handle to a tensor node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->values.size(); }
  // Leading extent for rank-2 tensors; 1 for rank-1.
  std::size_t rows() const;
  // Trailing extent.
  std::size_t cols() const;

  std::span<const double> values() const { return node_->values; }
  std::span<double> mutable_values() { return node_->values; }
  double operator[](std::size_t i) const { return node_->values[i]; }
  double at(std::size_t row, std::size_t col) const {
    return node_->values[row * cols() + col];
  }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool needs_grad() const { return node_->needs_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient storage; zeros if none has been accumulated.
  std::span<const double> grad() const;
  void zero_grad() { node_->grad.clear(); }

  // Deep copy of values, detached from any tape.
  Tensor clone() const;

  internal::Node* node() const { return node_.get(); }
  const std::shared_ptr<internal::Node>& shared_node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<internal::Node> node)
      : node_(std::move(node)) {}
  std::shared_ptr<internal::Node> node_;

  friend class Tape;
};

// Ordered record of primitive operations. Operations are appended as they
// execute, so the order is topological. backward() may run once per
// recording; call clear() before reusing the tape.
class Tape {
 public:
  enum class Mode { kRecord, kNoGrad };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::kRecord; }
  std::size_t size() const { return entries_.size(); }

  // Creates the output node of an operation. The node needs a gradient when
  // recording and any input needs one.
  Tensor make_output(Shape shape, std::vector<double> values,
                     std::initializer_list<const Tensor*> inputs);
  Tensor make_output(Shape shape, std::vector<double> values,
                     std::span<const Tensor> inputs);

  // Registers the local gradient rule of an operation whose output is `out`.
  // Skipped when `out` needs no gradient.
  void record(const Tensor& out, std::function<void()> backward_fn);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Gradients
  // accumulate into every tensor that needs one.
  void backward(const Tensor& loss);

  void clear();

 private:
  struct Entry {
    std::shared_ptr<internal::Node> output;
    std::function<void()> backward_fn;
  };
  Mode mode_;
  std::vector<Entry> entries_;
  bool replayed_ = false;
};

enum class Activation { kSigmoid, kTanh, kSoftmax };

// C = A·B for A[m×k], B[k×n].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// x·W + b with b of shape [n] or [1×n] broadcast over rows.
Tensor affine(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
// Elementwise sigmoid/tanh, or softmax along the last axis.
Tensor activation(Tape& tape, const Tensor& x, Activation kind);
inline Tensor sigmoid(Tape& tape, const Tensor& x) {
  return activation(tape, x, Activation::kSigmoid);
}
inline Tensor tanh(Tape& tape, const Tensor& x) {
  return activation(tape, x, Activation::kTanh);
}
inline Tensor softmax(Tape& tape, const Tensor& x) {
  return activation(tape, x, Activation::kSoftmax);
}
// Columns [begin, end) of a rank-2 tensor.
Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin,
                  std::size_t end);
// Vertical concatenation of equally wide rank-2 tensors.
Tensor stack_rows(Tape& tape, std::span<const Tensor> parts);
// Elementwise mean of equally shaped tensors.
Tensor mean_of(Tape& tape, std::span<const Tensor> parts);

// Mean over rows of -log(max(probs[row, target], 1e-12)).
Tensor cross_entropy(Tape& tape, const Tensor& probs,
                     std::span<const int> targets);
// Mean of elementwise squared differences.
Tensor mse(Tape& tape, const Tensor& x, const Tensor& x_hat);
// Σ coeffs[i]·scalars[i].
Tensor weighted_sum(Tape& tape, std::span<const Tensor> scalars,
                    std::span<const double> coeffs);

inline constexpr double kLogClamp = 1e-12;

}  // namespace mobpriv

#endif  // MOBPRIV_TENSOR_H_
