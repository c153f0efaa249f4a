#pragma once

#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "edcflow/common.hpp"

namespace edcflow::ad {

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> v;
  std::vector<T> g;  // allocated on first use
  bool requires_grad = false;
};

// Shared handle to a value buffer plus an optional gradient buffer. Copying a
// Tensor copies the handle, not the data.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = std::move(s);
    t.impl_->v.assign(static_cast<size_t>(edcflow::numel(t.impl_->shape)), T(0));
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor full(Shape s, T value) {
    Tensor t = zeros(std::move(s));
    for (auto& x : t.impl_->v) x = value;
    return t;
  }

  static Tensor from(Shape s, std::vector<T> data, bool requires_grad = false) {
    check(edcflow::numel(s) == static_cast<int64_t>(data.size()), ErrorKind::ShapeError,
          "tensor data length does not match shape " + shape_str(s));
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = std::move(s);
    t.impl_->v = std::move(data);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->v.size()); }

  std::span<T> data() { return {impl_->v.data(), impl_->v.size()}; }
  std::span<const T> data() const { return {impl_->v.data(), impl_->v.size()}; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    impl_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !impl_->g.empty(); }

  // Gradient buffer, zero-initialized on first access.
  std::span<T> grad() {
    if (impl_->g.empty()) impl_->g.assign(impl_->v.size(), T(0));
    return {impl_->g.data(), impl_->g.size()};
  }
  std::span<const T> grad_view() const { return {impl_->g.data(), impl_->g.size()}; }

  void zero_grad() {
    if (!impl_->g.empty()) std::fill(impl_->g.begin(), impl_->g.end(), T(0));
  }

  // Value copy that is cut off from gradient propagation.
  Tensor detach() const {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = impl_->shape;
    t.impl_->v = impl_->v;
    return t;
  }

  Tensor clone() const {
    Tensor t = detach();
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
  }

  T item() const {
    check(numel() == 1, ErrorKind::ShapeError, "item() requires a scalar tensor");
    return impl_->v[0];
  }

  bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

// Records backward closures during eager forward execution; backward() runs
// them in reverse recording order, which is a reverse topological order.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> back) { nodes_.push_back(std::move(back)); }

  void backward(Tensor<T>& root, T seed = T(1)) {
    check(root.numel() == 1, ErrorKind::GradError, "backward root must be scalar");
    root.grad()[0] += seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

// True when the op should record a backward closure.
template <typename T, typename... Ts>
inline bool tracked(Tape<T>* tape, const Ts&... ins) {
  return tape != nullptr && (ins.requires_grad() || ...);
}

}  // namespace edcflow::ad
