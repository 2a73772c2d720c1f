#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fgted::numerics {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Row-major array of doubles with an optional gradient buffer.
//
// Tensor is a handle: copies share storage, the way parameters are shared
// between a model and the tapes that read it. Use clone() for a deep copy.
// Tensors of rank > 1 are viewed as matrices of rows() x cols(), where
// cols() is the last dimension.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor from_values(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  // Tracked leaf: receives gradients from Tape::backward.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  // Direct write access; only legal on untracked tensors and leaves.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool tracked() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  Tensor clone() const;
  // Same handle identity (not value equality).
  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Tape;
  friend Tensor detach(const Tensor& t);

  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool tracked = false;
    bool leaf = false;
  };

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& impl() const;

  std::shared_ptr<Impl> impl_;
};

// Gradient barrier: identical values, never tracked.
Tensor detach(const Tensor& t);

}  // namespace fgted::numerics
