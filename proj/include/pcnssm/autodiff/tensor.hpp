#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pcnssm::ad {

using Shape = std::vector<std::size_t>;

// 64-byte aligned storage. Matrix kernels pick code paths by alignment, so a
// fixed alignment is required for run-to-run bit reproducibility.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{64}));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t{64});
  }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

// Shared handle to a row-major double array. Copies of a Tensor alias the
// same storage; the graph keeps handles alive until it is cleared.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t size() const { return impl_->values.size(); }

  std::span<const double> values() const { return impl_->values; }
  std::span<double> mutable_values() { return impl_->values; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  // Gradient storage of the same shape, zero-filled on first access.
  std::span<double> grad_buffer() const;
  void zero_grad() const { impl_->grad.clear(); }

  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    Buffer values;
    Buffer grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Tape of operation records in creation order, which is a topological order
// of the computation. With recording disabled the ops still compute values
// but nothing is stored, which is the inference path.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // True when an op with these inputs must produce a differentiable output.
  bool tracks(std::initializer_list<const Tensor*> inputs) const;
  bool tracks(std::span<const Tensor> inputs) const;

  void record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and replays every node once in reverse order.
  // Returns the number of nodes visited.
  std::size_t backward(Tensor& loss);

  void clear() { nodes_.clear(); }

  const std::string& op_name(std::size_t i) const { return nodes_.at(i).op; }

 private:
  struct Node {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };
  bool recording_;
  std::vector<Node> nodes_;
};

}  // namespace pcnssm::ad
