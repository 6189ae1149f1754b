#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace vivit {

// 32-bit is the training precision; 64-bit is used for gradient checks.
enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

const char* dtype_name(DType dtype);

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

using Buffer = std::variant<std::vector<float>, std::vector<double>>;

namespace detail {

struct TensorImpl {
  Shape shape;
  DType dtype = DType::kFloat32;
  Buffer data;
  std::optional<Buffer> grad;
  bool requires_grad = false;
  bool leaf = true;
};

}  // namespace detail

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::kFloat32; }
template <>
constexpr DType dtype_of<double>() { return DType::kFloat64; }

// Calls fn(T{}) with T = float or double according to dtype.
template <typename F>
decltype(auto) dispatch(DType dtype, F&& fn) {
  if (dtype == DType::kFloat64) return fn(double{});
  return fn(float{});
}

/// Dense row-major n-dimensional array with an optional gradient.
///
/// Tensor is a shared handle: copies alias the same storage. Operations in
/// ops.hpp never mutate their inputs; they allocate a fresh result and,
/// when a Tape is active and any input requires a gradient, record how to
/// propagate gradients back to the inputs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, DType dtype = DType::kFloat32);
  static Tensor full(Shape shape, double value, DType dtype = DType::kFloat32);
  static Tensor from_values(Shape shape, const std::vector<double>& values,
                            DType dtype = DType::kFloat32);
  static Tensor from_floats(Shape shape, std::vector<float> values);
  static Tensor scalar(double value, DType dtype = DType::kFloat32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t dim(std::size_t axis) const;
  std::int64_t numel() const;
  DType dtype() const;

  template <typename T>
  std::span<T> data() {
    return std::span<T>(std::get<std::vector<T>>(impl_->data));
  }
  template <typename T>
  std::span<const T> data() const {
    return std::span<const T>(std::get<std::vector<T>>(impl_->data));
  }

  double item() const;
  double value(std::int64_t flat_index) const;
  void set_value(std::int64_t flat_index, double v);
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  // Only leaves may toggle requires_grad.
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  // Snapshot of the accumulated gradient (a detached tensor).
  Tensor grad() const;
  template <typename T>
  std::span<T> grad_data() {
    return std::span<T>(std::get<std::vector<T>>(*impl_->grad));
  }
  void zero_grad();

  // Copy of the values, cut from any tape history.
  Tensor detach() const;
  Tensor to(DType dtype) const;
  // Converts storage in place; all handles observe the new dtype. Drops grad.
  void cast_(DType dtype);
  // Overwrites values from another tensor of the same shape (any dtype).
  void copy_from(const Tensor& other);

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of executed differentiable operations.
///
/// Constructing a Tape makes it the active tape for the current thread
/// (tapes nest); destruction restores the previous one. backward() walks the
/// recorded nodes in exact reverse execution order. Leaf gradients
/// accumulate across tapes until zero_grad(), which is how gradient
/// accumulation over several studies works.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void backward(const Tensor& loss);
  // Drops recorded history so the tape can be reused.
  void reset();

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  static Tape* active();

  void record(std::string_view op, std::vector<Tensor> inputs, const Tensor& output,
              std::function<void()> backward_fn);

 private:
  struct Node {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

// Suspends recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

// Runs backward on the active tape.
void backward(const Tensor& loss);

namespace detail {

Tensor make_result(Shape shape, DType dtype);

// Records a node when a tape is active and any input requires a gradient.
// Marks `output` as a non-leaf that requires grad in that case.
bool record_op(std::string_view op, std::vector<Tensor> inputs, const Tensor& output,
               std::function<void()> backward_fn);

// Gradient buffer of a tensor, zero-allocated on first access.
template <typename T>
std::span<T> grad_buffer(const Tensor& t);

// Throws NumericError when `t` holds NaN or Inf.
void check_finite(const Tensor& t, std::string_view op);

}  // namespace detail

}  // namespace vivit
