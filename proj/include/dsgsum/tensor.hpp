#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "dsgsum/common.hpp"

// Dense double-precision tensors with reverse-mode differentiation.
// Ops executed while a Tape is active record their backward closures; no
// active tape means plain inference arithmetic. Tensors are cheap handles
// sharing an impl, so closures capture them by value.
namespace dsgsum {

using Shape = std::vector<int64_t>;

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first accumulation, zero-filled
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double v) { return from({1, 1}, {v}); }
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);
  static Tensor normal(Shape shape, double stddev, Rng& rng);
  // Glorot/fan-based uniform init for weight matrices [in, out]
  static Tensor xavier(Shape shape, Rng& rng);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t numel() const { return static_cast<int64_t>(impl_->value.size()); }
  int64_t rows() const { return impl_->shape.empty() ? 1 : impl_->shape[0]; }
  int64_t cols() const { return impl_->shape.size() < 2 ? 1 : impl_->shape[1]; }

  double* data() { return impl_->value.data(); }
  const double* data() const { return impl_->value.data(); }
  std::vector<double>& values() { return impl_->value; }
  const std::vector<double>& values() const { return impl_->value; }
  double at(int64_t r, int64_t c) const { return impl_->value[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    return *this;
  }

  // zero-filled on first touch; persists across tapes so gradients
  // accumulate between optimizer updates
  double* grad_data();
  const std::vector<double>& grad();
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad();

  std::shared_ptr<TensorImpl> impl() const { return impl_; }
  bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// One logical execution stream. Construction installs the tape as the
// thread's current one; destruction restores the previous.
class Tape {
 public:
  explicit Tape(uint64_t seed = 0);
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Populates grads of every recorded tensor reachable from loss.
  // loss must be scalar (numel == 1).
  void backward(const Tensor& loss);

  void push(std::function<void()> op) { ops_.push_back(std::move(op)); }
  size_t size() const { return ops_.size(); }

  uint64_t seed() const { return seed_; }
  // dropout stream ids: advance once per dropout op so masks differ across
  // ops but replay identically for identical op sequences
  uint64_t next_stream() { return stream_counter_++; }

  static Tape* current();

 private:
  std::vector<std::function<void()>> ops_;
  uint64_t seed_;
  uint64_t stream_counter_ = 0;
  Tape* prev_;
};

// ---- primitives ----

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T -> [m,n]

// add/sub/mul support b of equal shape, [1,n] (broadcast over rows) or
// [m,1] (broadcast over cols)
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int64_t lo, int64_t hi);
Tensor slice_cols(const Tensor& x, int64_t lo, int64_t hi);
Tensor transpose(const Tensor& x);

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
// out[r, ids[c]] += x[r, c]; inverse gather over columns (copy scatter)
Tensor scatter_cols(const Tensor& x, const std::vector<int>& ids, int64_t out_cols);

// row-wise softmax with max subtraction; a fully masked row (all -inf)
// throws "fully masked row"
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

// inverted dropout; active only under a tape and p > 0; mask derived from
// (tape seed, op stream, index) so runs replay bit-identically
Tensor dropout(const Tensor& x, double p);

// where mask[i] != 0 the output is `fill` and no gradient flows
Tensor masked_fill(const Tensor& x, const std::vector<uint8_t>& mask, double fill);

Tensor rowmax(const Tensor& x);  // [m,n] -> [m,1]; grad routes to first argmax
Tensor sum(const Tensor& x);     // -> [1,1]

// mean negative log-likelihood of targets over rows with valid[t] != 0.
// label_smoothing spreads eps mass uniformly over non-target classes,
// skipping exclude_id (the padding row of the vocabulary).
Tensor nll(const Tensor& probs, const std::vector<int>& targets,
           const std::vector<uint8_t>& valid, double label_smoothing = 0.0,
           int exclude_id = -1);

// max relative error of analytic vs central-difference gradients for a
// scalar-valued, deterministic f over the given leaves
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  const std::vector<Tensor>& leaves, double step = 1e-4);

}  // namespace dsgsum
