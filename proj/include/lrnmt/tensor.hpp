#pragma once

#include <algorithm>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <span>

#include "lrnmt/common.hpp"

namespace lrnmt {

// Dense row-major n-dimensional array. Copies are shallow: they share the
// underlying buffer (and the gradient buffer, when one is attached), so a
// parameter held by a layer and the same parameter seen by the optimizer
// are one storage. Use clone() for a deep copy.
//
// Scalars are represented as shape {1}.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(numel(shape_), T(0))) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
  }

  static Tensor scalar(T value) { return full({1}, value); }

  static Tensor from_vector(Shape shape, std::vector<T> values) {
    if (numel(shape) != static_cast<std::int64_t>(values.size()))
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }

  static Tensor uniform(Shape shape, Rng& rng, T lo, T hi) {
    Tensor t(std::move(shape));
    for (auto& v : *t.data_) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  std::vector<T>& vec() { return *data_; }
  const std::vector<T>& vec() const { return *data_; }
  std::span<const T> values() const { return {data_->data(), data_->size()}; }

  T& operator()(std::int64_t i) { return (*data_)[static_cast<std::size_t>(i)]; }
  const T& operator()(std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }
  T& operator()(std::int64_t i, std::int64_t j) {
    return (*data_)[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  const T& operator()(std::int64_t i, std::int64_t j) const {
    return (*data_)[static_cast<std::size_t>(i * shape_[1] + j)];
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    if (data_) t.data_ = std::make_shared<std::vector<T>>(*data_);
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_->size());
    for (std::size_t i = 0; i < data_->size(); ++i)
      out[i] = static_cast<U>((*data_)[i]);
    return Tensor<U>::from_vector(shape_, std::move(out));
  }

  bool same_values(const Tensor& other) const {
    return shape_ == other.shape_ && *data_ == *other.data_;
  }

  // --- gradient buffer (attached to watched parameters) ---

  bool has_grad() const { return static_cast<bool>(grad_); }

  std::vector<T>& grad() { return *grad_; }
  const std::vector<T>& grad() const { return *grad_; }

  // Attaches a zeroed gradient buffer if absent; existing contents are kept
  // so gradients can accumulate across mini-batches.
  void ensure_grad() {
    if (!grad_) grad_ = std::make_shared<std::vector<T>>(data_->size(), T(0));
  }

  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), T(0));
  }

  // --- tape linkage (set by Tape::watch and by recorded ops) ---

  int node() const { return node_; }
  std::uint64_t tape_id() const { return tape_id_; }
  void bind_node(std::uint64_t tape_id, int node) {
    tape_id_ = tape_id;
    node_ = node;
  }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  std::shared_ptr<std::vector<T>> grad_;
  int node_ = -1;
  std::uint64_t tape_id_ = 0;
};

}  // namespace lrnmt
