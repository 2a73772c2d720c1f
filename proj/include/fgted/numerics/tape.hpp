#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "fgted/numerics/tensor.hpp"

namespace fgted::numerics {

enum class Primitive {
  kAdd,
  kSub,
  kMul,
  kScale,
  kMatmul,
  kTranspose,
  kConcatRows,
  kSliceRows,
  kGatherRows,
  kLayerNorm,
  kGelu,
  kTanh,
  kDropout,
  kSum,
  kMean,
  kLog,
  kExp,
  kRowSoftmax,
  kKlDivRows,
  kClampProbs,
  kAttention,
  kGradReverse,
  kL2NormalizeRows,
};

std::string_view primitive_name(Primitive p);
Primitive primitive_from_name(std::string_view name);

// Half-open range of key rows a query row may attend to.
struct KeyRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Non-tensor arguments for Tape::apply. Each primitive reads only the
// fields it needs.
struct PrimitiveArgs {
  double scalar = 1.0;  // kScale factor, kGradReverse strength, kLayerNorm eps
  double rate = 0.0;    // kDropout
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<std::size_t> indices;  // kGatherRows
  std::size_t heads = 1;             // kAttention
  std::vector<KeyRange> key_ranges;  // kAttention, one per query row
};

inline constexpr double kProbabilityFloor = 1e-9;

// Records executed primitives so that vector-Jacobian products can be
// replayed in reverse. A tape in inference mode records nothing and its
// outputs are never tracked.
//
// Single owner; not thread-safe. Leaves may be read by several tapes at
// once only if none of them runs backward concurrently.
class Tape {
 public:
  enum class Mode { kRecord, kInference };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape inference() { return Tape(Mode::kInference); }

  bool recording() const { return mode_ == Mode::kRecord; }
  std::size_t size() const { return entries_.size(); }

  Tensor apply(Primitive p, std::span<const Tensor> inputs,
               const PrimitiveArgs& args = {});

  // b may be a row vector (size == a.cols()) broadcast over the rows of a.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double factor);
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  Tensor concat_rows(std::span<const Tensor> parts);
  Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
  Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps = 1e-5);
  Tensor gelu(const Tensor& x);
  Tensor tanh(const Tensor& x);
  // mask holds 0/1 entries; kept entries are scaled by 1 / (1 - rate).
  Tensor dropout(const Tensor& x, const Tensor& mask, double rate);
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor exp(const Tensor& a);

  Tensor row_softmax(const Tensor& logits);
  // Row i: sum_c q_ic ln(q_ic / p_ic), with 0 ln(0 / p) = 0. Shape rows x 1.
  Tensor kl_div_rows(const Tensor& q, const Tensor& p);
  // Clamp to [floor, 1 - floor] and renormalise each row.
  Tensor clamp_probs(const Tensor& p, double floor = kProbabilityFloor);
  // Multi-head scaled dot-product attention over per-query key ranges.
  Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                   std::size_t heads, std::span<const KeyRange> key_ranges);
  // Identity forward; backward multiplies the incoming gradient by -strength.
  Tensor grad_reverse(const Tensor& x, double strength);
  Tensor l2_normalize_rows(const Tensor& x);

  // Accumulates d(loss)/d(leaf) into every tracked leaf reachable from loss.
  // A tape can be replayed once; call reset() before recording again.
  void backward(const Tensor& loss);
  void reset();

 private:
  using ImplPtr = std::shared_ptr<Tensor::Impl>;
  using Vjp = std::function<void(const Tensor::Impl& out)>;

  struct Entry {
    ImplPtr output;
    Vjp vjp;
  };

  static std::vector<double>& grad_of(Tensor::Impl& impl);
  bool any_tracked(std::initializer_list<const Tensor*> inputs) const;
  Tensor make_output(Shape shape, std::vector<double> values, bool tracked);
  void record(const Tensor& out, Vjp vjp);

  Mode mode_;
  bool consumed_ = false;
  std::vector<Entry> entries_;
};

}  // namespace fgted::numerics
