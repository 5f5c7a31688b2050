#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cabin/errors.hpp"

namespace cabin::num {

// Row-major 2-D tensor of doubles. Values and grads live in shared buffers so
// copies of a Tensor alias the same storage; ops that need fresh storage
// allocate it explicitly. 1-D data is represented as [1 x n] or [n x 1].
class Tensor {
 public:
  Tensor() : rows_(0), cols_(0) {}

  Tensor(std::size_t rows, std::size_t cols, bool requires_grad = false)
      : rows_(rows),
        cols_(cols),
        values_(std::make_shared<std::vector<double>>(rows * cols, 0.0)),
        requires_grad_(requires_grad) {
    if (requires_grad_) grad_ = std::make_shared<std::vector<double>>(rows * cols, 0.0);
  }

  static Tensor from_values(std::size_t rows, std::size_t cols,
                            std::vector<double> vals, bool requires_grad = false) {
    if (vals.size() != rows * cols)
      throw SizeError("tensor init: " + std::to_string(vals.size()) +
                      " values for " + std::to_string(rows) + "x" +
                      std::to_string(cols));
    Tensor t(rows, cols, requires_grad);
    *t.values_ = std::move(vals);
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }
  bool empty() const { return size() == 0; }
  bool requires_grad() const { return requires_grad_; }

  double& at(std::size_t r, std::size_t c) { return (*values_)[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return (*values_)[r * cols_ + c]; }

  double* data() { return values_->data(); }
  const double* data() const { return values_->data(); }

  double* grad_data() { return grad_ ? grad_->data() : nullptr; }
  const double* grad_data() const { return grad_ ? grad_->data() : nullptr; }

  double& grad_at(std::size_t r, std::size_t c) {
    if (!grad_) throw InternalError("grad access on tensor without grad buffer");
    return (*grad_)[r * cols_ + c];
  }
  double grad_at(std::size_t r, std::size_t c) const {
    if (!grad_) throw InternalError("grad access on tensor without grad buffer");
    return (*grad_)[r * cols_ + c];
  }

  // Scalar convenience for loss values ([1 x 1] tensors).
  double item() const {
    if (size() != 1)
      throw SizeError("item() on " + std::to_string(rows_) + "x" +
                      std::to_string(cols_) + " tensor");
    return (*values_)[0];
  }

  void ensure_grad() {
    requires_grad_ = true;
    if (!grad_) grad_ = std::make_shared<std::vector<double>>(rows_ * cols_, 0.0);
  }

  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
  }

  // Identity of the underlying buffer, used by the tape to match nodes.
  const void* id() const { return values_.get(); }

 private:
  std::size_t rows_, cols_;
  std::shared_ptr<std::vector<double>> values_;
  std::shared_ptr<std::vector<double>> grad_;
  bool requires_grad_ = false;
};

// One recorded op. backward() reads the output grad and accumulates into the
// input grads; captured tensors alias the live buffers, so no indices needed.
struct TapeOp {
  std::string name;
  std::function<void()> backward;
};

// Linear tape of recorded ops. At most one tape is active per thread; ops
// record onto it only when at least one input requires grad. backward() walks
// the records once, newest first.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string name, std::function<void()> backward) {
    ops_.push_back(TapeOp{std::move(name), std::move(backward)});
  }

  std::size_t size() const { return ops_.size(); }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward in reverse.
  void backward(Tensor& loss);

  static Tape* active();

 private:
  std::vector<TapeOp> ops_;
  friend class TapeScope;
};

// RAII activation. Construction installs the tape as the thread's recorder,
// destruction restores the previous one (scopes may nest, e.g. grad checks
// that evaluate a loss builder with recording off use a null scope).
class TapeScope {
 public:
  explicit TapeScope(Tape* tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Named parameter registry. Iteration order is registration order and every
// loop over parameters (init, step, serialization) uses it, so artifacts do
// not depend on any hash ordering.
class ParamStore {
 public:
  // Registers a fresh [rows x cols] tensor. trainable=false keeps the tensor
  // in checkpoints but out of optimizer updates (frozen encoders).
  Tensor& add(const std::string& name, std::size_t rows, std::size_t cols,
              bool trainable = true) {
    if (index_.count(name)) throw InternalError("duplicate parameter: " + name);
    index_[name] = params_.size();
    params_.push_back(Entry{name, Tensor(rows, cols, true), trainable});
    return params_.back().tensor;
  }

  Tensor& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw InternalError("unknown parameter: " + name);
    return params_[it->second].tensor;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable;
  };

  std::vector<Entry>& entries() { return params_; }
  const std::vector<Entry>& entries() const { return params_; }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& e : params_) n += e.tensor.size();
    return n;
  }

  void zero_grads() {
    for (auto& e : params_) e.tensor.zero_grad();
  }

 private:
  std::vector<Entry> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace cabin::num
