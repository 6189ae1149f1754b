#include "vivit/tensor.hpp"

#include <cmath>
#include <sstream>

#include "vivit/errors.hpp"

namespace vivit {

namespace {

thread_local Tape* g_active_tape = nullptr;

Buffer make_buffer(DType dtype, std::size_t n) {
  if (dtype == DType::kFloat64) return std::vector<double>(n, 0.0);
  return std::vector<float>(n, 0.0f);
}

}  // namespace

const char* dtype_name(DType dtype) { return dtype == DType::kFloat64 ? "f64" : "f32"; }

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, DType dtype) {
  return detail::make_result(std::move(shape), dtype);
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = zeros(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : t.data<T>()) v = static_cast<T>(value);
  });
  return t;
}

Tensor Tensor::from_values(Shape shape, const std::vector<double>& values, DType dtype) {
  Tensor t = zeros(std::move(shape), dtype);
  if (static_cast<std::int64_t>(values.size()) != t.numel()) {
    throw ShapeError("from_values: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(t.shape()));
  }
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) d[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::from_floats(Shape shape, std::vector<float> values) {
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
    throw ShapeError("from_floats: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->dtype = DType::kFloat32;
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::int64_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::int64_t Tensor::numel() const { return shape_numel(impl_->shape); }

DType Tensor::dtype() const { return impl_->dtype; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return value(0);
}

double Tensor::value(std::int64_t i) const {
  return dispatch(dtype(), [&](auto tag) -> double {
    using T = decltype(tag);
    return static_cast<double>(data<T>()[static_cast<std::size_t>(i)]);
  });
}

void Tensor::set_value(std::int64_t i, double v) {
  dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    data<T>()[static_cast<std::size_t>(i)] = static_cast<T>(v);
  });
}

std::vector<double> Tensor::to_vector() const {
  return dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = data<T>();
    return std::vector<double>(d.begin(), d.end());
  });
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!impl_->leaf) throw AutodiffError("set_requires_grad on a non-leaf tensor");
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return impl_->leaf; }

bool Tensor::has_grad() const { return impl_ && impl_->grad.has_value(); }

Tensor Tensor::grad() const {
  if (!has_grad()) return Tensor::zeros(shape(), dtype());
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->data = *impl_->grad;
  return Tensor(std::move(impl));
}

void Tensor::zero_grad() { impl_->grad.reset(); }

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::to(DType target) const {
  Tensor out = detach();
  out.cast_(target);
  return out;
}

void Tensor::cast_(DType target) {
  if (impl_->dtype == target) return;
  Buffer converted = make_buffer(target, static_cast<std::size_t>(numel()));
  dispatch(impl_->dtype, [&](auto src_tag) {
    using S = decltype(src_tag);
    auto& src = std::get<std::vector<S>>(impl_->data);
    dispatch(target, [&](auto dst_tag) {
      using D = decltype(dst_tag);
      auto& dst = std::get<std::vector<D>>(converted);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<D>(src[i]);
    });
  });
  impl_->data = std::move(converted);
  impl_->dtype = target;
  impl_->grad.reset();
}

void Tensor::copy_from(const Tensor& other) {
  if (other.shape() != shape()) {
    throw ShapeError("copy_from: shape " + shape_str(other.shape()) + " into " +
                     shape_str(shape()));
  }
  dispatch(other.dtype(), [&](auto src_tag) {
    using S = decltype(src_tag);
    auto src = other.data<S>();
    dispatch(dtype(), [&](auto dst_tag) {
      using D = decltype(dst_tag);
      auto dst = data<D>();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<D>(src[i]);
    });
  });
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::string_view op, std::vector<Tensor> inputs, const Tensor& output,
                  std::function<void()> backward_fn) {
  if (consumed_) throw AutodiffError("recording onto a consumed tape; call reset() first");
  nodes_.push_back(Node{op, std::move(inputs), output, std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw AutodiffError("backward called twice on the same tape without reset()");
  if (!loss.defined() || loss.numel() != 1) {
    throw AutodiffError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (nodes_.empty()) throw AutodiffError("backward on an empty tape");
  if (!loss.requires_grad()) throw AutodiffError("loss does not depend on any tensor requiring grad");
  consumed_ = true;
  dispatch(loss.dtype(), [&](auto tag) {
    using T = decltype(tag);
    detail::grad_buffer<T>(loss)[0] += T(1);
  });
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.impl()->grad.has_value()) continue;
    it->backward_fn();
  }
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }

NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw AutodiffError("backward without an active tape");
  tape->backward(loss);
}

namespace detail {

Tensor make_result(Shape shape, DType dtype) {
  auto impl = std::make_shared<TensorImpl>();
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->data = make_buffer(dtype, n);
  return Tensor(std::move(impl));
}

bool record_op(std::string_view op, std::vector<Tensor> inputs, const Tensor& output,
               std::function<void()> backward_fn) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return false;
  bool needed = false;
  for (const auto& in : inputs) needed = needed || in.requires_grad();
  if (!needed) return false;
  output.impl()->requires_grad = true;
  output.impl()->leaf = false;
  tape->record(op, std::move(inputs), output, std::move(backward_fn));
  return true;
}

template <typename T>
std::span<T> grad_buffer(const Tensor& t) {
  auto* impl = t.impl();
  if (!impl->grad.has_value()) {
    impl->grad = make_buffer(impl->dtype, static_cast<std::size_t>(shape_numel(impl->shape)));
  }
  return std::span<T>(std::get<std::vector<T>>(*impl->grad));
}

template std::span<float> grad_buffer<float>(const Tensor&);
template std::span<double> grad_buffer<double>(const Tensor&);

void check_finite(const Tensor& t, std::string_view op) {
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (T v : t.data<T>()) {
      if (!std::isfinite(v)) {
        throw NumericError(std::string(op) + ": non-finite value in output of shape " +
                           shape_str(t.shape()));
      }
    }
  });
}

}  // namespace detail

}  // namespace vivit
