#include "fgted/numerics/tensor.hpp"

#include <cmath>
#include <sstream>

#include "fgted/numerics/errors.hpp"

namespace fgted::numerics {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (std::size_t d : shape) {
    if (d == 0) {
      throw DimensionError("tensor dimensions must be positive, got " +
                           shape_to_string(shape));
    }
  }
}

void validate_finite(const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("tensor value is not finite");
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
  validate_shape(shape);
  auto impl = std::make_shared<Impl>();
  impl->values.assign(shape_size(shape), 0.0);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
  validate_shape(shape);
  if (values.size() != shape_size(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_to_string(shape));
  }
  validate_finite(values);
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from_values(std::move(shape), std::move(values));
  t.impl_->tracked = true;
  t.impl_->leaf = true;
  return t;
}

Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw UsageError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }
std::size_t Tensor::size() const { return impl().values.size(); }
std::size_t Tensor::cols() const { return impl().shape.back(); }
std::size_t Tensor::rows() const { return size() / cols(); }

std::span<const double> Tensor::values() const { return impl().values; }

std::span<double> Tensor::mutable_values() {
  Impl& i = impl();
  if (i.tracked && !i.leaf) {
    throw UsageError("cannot write into a taped intermediate tensor");
  }
  return i.values;
}

double Tensor::item() const {
  if (size() != 1) throw UsageError("item() requires a single-element tensor");
  return impl().values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (row >= rows() || col >= cols()) throw DimensionError("index out of range");
  return impl().values[row * cols() + col];
}

bool Tensor::tracked() const { return impl().tracked; }
bool Tensor::is_leaf() const { return impl().leaf; }
bool Tensor::has_grad() const { return !impl().grad.empty(); }
std::span<const double> Tensor::grad() const { return impl().grad; }
void Tensor::zero_grad() { impl().grad.clear(); }

Tensor Tensor::clone() const {
  auto copy = std::make_shared<Impl>(impl());
  return Tensor(std::move(copy));
}

Tensor detach(const Tensor& t) {
  auto impl = std::make_shared<Tensor::Impl>();
  impl->shape = t.shape();
  impl->values.assign(t.values().begin(), t.values().end());
  return Tensor(std::move(impl));
}

}  // namespace fgted::numerics
