#include "fgted/numerics/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include "fgted/numerics/errors.hpp"

namespace fgted::numerics {

namespace {

constexpr std::array<std::string_view, 23> kPrimitiveNames = {
    "add",         "sub",          "mul",          "scalar-mul",
    "matmul",      "transpose",    "concat-rows",  "slice-rows",
    "embedding-gather", "layer-norm", "gelu",      "tanh",
    "dropout-mask-apply", "sum",   "mean",         "log",
    "exp",         "row-softmax",  "kl-div-rows",  "clamp-probs",
    "attention",   "grad-reverse", "l2-normalize-rows",
};

void require_finite(std::span<const double> values, std::string_view op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_matrix(const Tensor& a, std::string_view op) {
  if (a.shape().size() > 2) {
    throw DimensionError(std::string(op) + " expects a tensor of rank <= 2, got " +
                         shape_to_string(a.shape()));
  }
}

}  // namespace

std::string_view primitive_name(Primitive p) {
  return kPrimitiveNames[static_cast<std::size_t>(p)];
}

Primitive primitive_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kPrimitiveNames.size(); ++i) {
    if (kPrimitiveNames[i] == name) return static_cast<Primitive>(i);
  }
  throw UsageError("unknown primitive '" + std::string(name) + "'");
}

// Gradient buffer of a tracked tensor, allocated on first use.
std::vector<double>& Tape::grad_of(Tensor::Impl& impl) {
  if (impl.grad.empty()) impl.grad.assign(impl.values.size(), 0.0);
  return impl.grad;
}

bool Tape::any_tracked(std::initializer_list<const Tensor*> inputs) const {
  if (!recording()) return false;
  for (const Tensor* t : inputs) {
    if (t->tracked()) return true;
  }
  return false;
}

Tensor Tape::make_output(Shape shape, std::vector<double> values, bool tracked) {
  auto impl = std::make_shared<Tensor::Impl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->tracked = tracked;
  return Tensor(std::move(impl));
}

void Tape::record(const Tensor& out, Vjp vjp) {
  if (consumed_) throw StateError("tape already replayed; call reset()");
  entries_.push_back({out.impl_, std::move(vjp)});
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const bool broadcast = a.shape() != b.shape();
  if (broadcast && !(b.rows() == 1 && b.cols() == a.cols())) {
    throw DimensionError("add: shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
  const std::size_t cols = a.cols();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = av[i] + bv[broadcast ? i % cols : i];
  }
  require_finite(out, "add");
  const bool tracked = any_tracked({&a, &b});
  Tensor y = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [ai = a.impl_, bi = b.impl_, broadcast, cols](const Tensor::Impl& o) {
      if (ai->tracked) {
        auto& g = grad_of(*ai);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
      }
      if (bi->tracked) {
        auto& g = grad_of(*bi);
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
          g[broadcast ? i % cols : i] += o.grad[i];
        }
      }
    });
  }
  return y;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  require_finite(out, "sub");
  const bool tracked = any_tracked({&a, &b});
  Tensor y = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [ai = a.impl_, bi = b.impl_](const Tensor::Impl& o) {
      if (ai->tracked) {
        auto& g = grad_of(*ai);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
      }
      if (bi->tracked) {
        auto& g = grad_of(*bi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
      }
    });
  }
  return y;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  require_finite(out, "mul");
  const bool tracked = any_tracked({&a, &b});
  Tensor y = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [ai = a.impl_, bi = b.impl_](const Tensor::Impl& o) {
      if (ai->tracked) {
        auto& g = grad_of(*ai);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bi->values[i];
      }
      if (bi->tracked) {
        auto& g = grad_of(*bi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ai->values[i];
      }
    });
  }
  return y;
}

Tensor Tape::scale(const Tensor& a, double factor) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  require_finite(out, "scalar-mul");
  const bool tracked = any_tracked({&a});
  Tensor y = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [ai = a.impl_, factor](const Tensor::Impl& o) {
      auto& g = grad_of(*ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
    });
  }
  return y;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t n = a.rows();
  const std::size_t k = a.cols();
  const std::size_t m = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ " +
                         shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  const double* A = a.values().data();
  const double* B = b.values().data();
  std::vector<double> out(n * m, 0.0);
  // Each output entry accumulates over k in order, so a row's result never
  // depends on how many other rows are in the batch.
  for (std::size_t i = 0; i < n; ++i) {
    double* C = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* Bp = B + p * m;
      for (std::size_t j = 0; j < m; ++j) C[j] += aip * Bp[j];
    }
  }
  require_finite(out, "matmul");
  const bool tracked = any_tracked({&a, &b});
  Tensor y = make_output({n, m}, std::move(out), tracked);
  if (tracked) {
    record(y, [ai = a.impl_, bi = b.impl_, n, k, m](const Tensor::Impl& o) {
      const double* G = o.grad.data();
      if (ai->tracked) {
        auto& ga = grad_of(*ai);
        const double* Bv = bi->values.data();
        for (std::size_t i = 0; i < n; ++i) {
          const double* Gi = G + i * m;
          for (std::size_t p = 0; p < k; ++p) {
            const double* Bp = Bv + p * m;
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += Gi[j] * Bp[j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (bi->tracked) {
        auto& gb = grad_of(*bi);
        const double* Av = ai->values.data();
        for (std::size_t i = 0; i < n; ++i) {
          const double* Gi = G + i * m;
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = Av[i * k + p];
            double* gbp = gb.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) gbp[j] += aip * Gi[j];
          }
        }
      }
    });
  }
  return y;
}

Tensor Tape::transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  auto av = a.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  const bool tracked = any_tracked({&a});
  Tensor y = make_output({c, r}, std::move(out), tracked);
  if (tracked) {
    record(y, [ai = a.impl_, r, c](const Tensor::Impl& o) {
      auto& g = grad_of(*ai);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
      }
    });
  }
  return y;
}

Tensor Tape::concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat-rows needs at least one input");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  bool tracked = false;
  for (const Tensor& t : parts) {
    require_matrix(t, "concat-rows");
    if (t.cols() != cols) throw DimensionError("concat-rows: column count differs");
    rows += t.rows();
    tracked = tracked || (recording() && t.tracked());
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  std::vector<ImplPtr> inputs;
  for (const Tensor& t : parts) {
    out.insert(out.end(), t.values().begin(), t.values().end());
    inputs.push_back(t.impl_);
  }
  Tensor y = make_output({rows, cols}, std::move(out), tracked);
  if (tracked) {
    record(y, [inputs = std::move(inputs)](const Tensor::Impl& o) {
      std::size_t offset = 0;
      for (const auto& in : inputs) {
        const std::size_t n = in->values.size();
        if (in->tracked) {
          auto& g = grad_of(*in);
          for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[offset + i];
        }
        offset += n;
      }
    });
  }
  return y;
}

Tensor Tape::slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice-rows");
  if (begin >= end || end > a.rows()) {
    throw DimensionError("slice-rows: invalid range [" + std::to_string(begin) +
                         ", " + std::to_string(end) + ") for " +
                         std::to_string(a.rows()) + " rows");
  }
  const std::size_t cols = a.cols();
  auto av = a.values();
  std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                          av.begin() + static_cast<std::ptrdiff_t>(end * cols));
  const bool tracked = any_tracked({&a});
  Tensor y = make_output({end - begin, cols}, std::move(out), tracked);
  if (tracked) {
    record(y, [ai = a.impl_, offset = begin * cols](const Tensor::Impl& o) {
      auto& g = grad_of(*ai);
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[offset + i] += o.grad[i];
    });
  }
  return y;
}

Tensor Tape::gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_matrix(table, "embedding-gather");
  if (ids.empty()) throw DimensionError("embedding-gather: empty index list");
  const std::size_t cols = table.cols();
  const std::size_t rows = table.rows();
  auto tv = table.values();
  std::vector<double> out(ids.size() * cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw DimensionError("embedding-gather: index " + std::to_string(ids[i]) +
                           " out of range for " + std::to_string(rows) + " rows");
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * cols), cols,
                out.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  const bool tracked = any_tracked({&table});
  Tensor y = make_output({ids.size(), cols}, std::move(out), tracked);
  if (tracked) {
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    record(y, [ti = table.impl_, idx = std::move(idx), cols](const Tensor::Impl& o) {
      auto& g = grad_of(*ti);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < cols; ++j) g[idx[i] * cols + j] += o.grad[i * cols + j];
      }
    });
  }
  return y;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                        double eps) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  if (gain.size() != cols || bias.size() != cols) {
    throw DimensionError("layer-norm: gain/bias size must equal column count");
  }
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += xr[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(cols);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      const double h = (xr[j] - mu) * rstd[r];
      xhat[r * cols + j] = h;
      out[r * cols + j] = h * gv[j] + bv[j];
    }
  }
  require_finite(out, "layer-norm");
  const bool tracked = any_tracked({&x, &gain, &bias});
  Tensor y = make_output(x.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [xi = x.impl_, gi = gain.impl_, bi = bias.impl_, xhat = std::move(xhat),
               rstd = std::move(rstd), rows, cols](const Tensor::Impl& o) {
      const double* G = o.grad.data();
      if (gi->tracked) {
        auto& gg = grad_of(*gi);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cols; ++j) gg[j] += G[r * cols + j] * xhat[r * cols + j];
        }
      }
      if (bi->tracked) {
        auto& gb = grad_of(*bi);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cols; ++j) gb[j] += G[r * cols + j];
        }
      }
      if (xi->tracked) {
        auto& gx = grad_of(*xi);
        const double n = static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_g = 0.0;
          double mean_gh = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            const double g = G[r * cols + j] * gi->values[j];
            mean_g += g;
            mean_gh += g * xhat[r * cols + j];
          }
          mean_g /= n;
          mean_gh /= n;
          for (std::size_t j = 0; j < cols; ++j) {
            const double g = G[r * cols + j] * gi->values[j];
            gx[r * cols + j] += rstd[r] * (g - mean_g - xhat[r * cols + j] * mean_gh);
          }
        }
      }
    });
  }
  return y;
}

Tensor Tape::gelu(const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
  }
  require_finite(out, "gelu");
  const bool tracked = any_tracked({&x});
  Tensor y = make_output(x.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [xi = x.impl_](const Tensor::Impl& o) {
      auto& g = grad_of(*xi);
      const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xi->values[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        g[i] += o.grad[i] * (cdf + v * pdf);
      }
    });
  }
  return y;
}

Tensor Tape::tanh(const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::tanh(xv[i]);
  const bool tracked = any_tracked({&x});
  Tensor y = make_output(x.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [xi = x.impl_](const Tensor::Impl& o) {
      auto& g = grad_of(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double t = o.values[i];
        g[i] += o.grad[i] * (1.0 - t * t);
      }
    });
  }
  return y;
}

Tensor Tape::dropout(const Tensor& x, const Tensor& mask, double rate) {
  require_same_shape(x, mask, "dropout-mask-apply");
  if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("dropout rate must be in [0, 1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  auto xv = x.values();
  auto mv = mask.values();
  std::vector<double> factor(xv.size());
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (mv[i] != 0.0 && mv[i] != 1.0) throw UsageError("dropout mask must be binary");
    factor[i] = mv[i] * keep_scale;
    out[i] = xv[i] * factor[i];
  }
  const bool tracked = any_tracked({&x});
  Tensor y = make_output(x.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [xi = x.impl_, factor = std::move(factor)](const Tensor::Impl& o) {
      auto& g = grad_of(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor[i];
    });
  }
  return y;
}

Tensor Tape::sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  require_finite(std::span<const double>(&s, 1), "sum");
  const bool tracked = any_tracked({&a});
  Tensor y = make_output({1}, {s}, tracked);
  if (tracked) {
    record(y, [ai = a.impl_](const Tensor::Impl& o) {
      auto& g = grad_of(*ai);
      for (double& gi : g) gi += o.grad[0];
    });
  }
  return y;
}

Tensor Tape::mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.values()) s += v;
  s /= n;
  require_finite(std::span<const double>(&s, 1), "mean");
  const bool tracked = any_tracked({&a});
  Tensor y = make_output({1}, {s}, tracked);
  if (tracked) {
    record(y, [ai = a.impl_, n](const Tensor::Impl& o) {
      auto& g = grad_of(*ai);
      for (double& gi : g) gi += o.grad[0] / n;
    });
  }
  return y;
}

Tensor Tape::log(const Tensor& a) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (!(av[i] > 0.0)) throw NumericError("log of a non-positive value");
    out[i] = std::log(av[i]);
  }
  require_finite(out, "log");
  const bool tracked = any_tracked({&a});
  Tensor y = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [ai = a.impl_](const Tensor::Impl& o) {
      auto& g = grad_of(*ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / ai->values[i];
    });
  }
  return y;
}

Tensor Tape::exp(const Tensor& a) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
  require_finite(out, "exp");
  const bool tracked = any_tracked({&a});
  Tensor y = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [ai = a.impl_](const Tensor::Impl& o) {
      auto& g = grad_of(*ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * o.values[i];
    });
  }
  return y;
}

Tensor Tape::row_softmax(const Tensor& logits) {
  require_matrix(logits, "row-softmax");
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  if (cols < 2) throw DimensionError("row-softmax needs at least two columns");
  auto lv = logits.values();
  require_finite(lv, "row-softmax input");
  std::vector<double> out(lv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = lv.data() + r * cols;
    double* y = out.data() + r * cols;
    double mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[j] /= z;
  }
  const bool tracked = any_tracked({&logits});
  Tensor y = make_output(logits.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [li = logits.impl_, rows, cols](const Tensor::Impl& o) {
      auto& g = grad_of(*li);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = o.values.data() + r * cols;
        const double* gr = o.grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
        for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += yr[j] * (gr[j] - dot);
      }
    });
  }
  return y;
}

Tensor Tape::kl_div_rows(const Tensor& q, const Tensor& p) {
  require_same_shape(q, p, "kl-div-rows");
  require_matrix(q, "kl-div-rows");
  const std::size_t rows = q.rows();
  const std::size_t cols = q.cols();
  auto qv = q.values();
  auto pv = p.values();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double qi = qv[r * cols + j];
      const double pi = pv[r * cols + j];
      if (qi < 0.0 || pi < 0.0) throw NumericError("kl-div-rows: negative probability");
      if (qi == 0.0) continue;
      if (pi == 0.0) {
        throw NumericError("kl-div-rows: p is zero where q is positive; clamp first");
      }
      acc += qi * std::log(qi / pi);
    }
    out[r] = acc;
  }
  require_finite(out, "kl-div-rows");
  const bool tracked = any_tracked({&q, &p});
  Tensor y = make_output({rows, 1}, std::move(out), tracked);
  if (tracked) {
    // Where q == 0 the term is identically zero and contributes no gradient.
    record(y, [qi = q.impl_, pi = p.impl_, rows, cols](const Tensor::Impl& o) {
      if (qi->tracked) {
        auto& g = grad_of(*qi);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t idx = r * cols + j;
            const double qq = qi->values[idx];
            if (qq == 0.0) continue;
            g[idx] += o.grad[r] * (std::log(qq / pi->values[idx]) + 1.0);
          }
        }
      }
      if (pi->tracked) {
        auto& g = grad_of(*pi);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t idx = r * cols + j;
            g[idx] -= o.grad[r] * qi->values[idx] / pi->values[idx];
          }
        }
      }
    });
  }
  return y;
}

Tensor Tape::clamp_probs(const Tensor& p, double floor) {
  require_matrix(p, "clamp-probs");
  if (!(floor > 0.0 && floor < 0.5)) throw UsageError("clamp floor must be in (0, 0.5)");
  const std::size_t rows = p.rows();
  const std::size_t cols = p.cols();
  const double ceil = 1.0 - floor;
  auto pv = p.values();
  std::vector<double> out(pv.size());
  std::vector<double> row_sum(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double c = std::clamp(pv[r * cols + j], floor, ceil);
      out[r * cols + j] = c;
      s += c;
    }
    row_sum[r] = s;
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] /= s;
  }
  require_finite(out, "clamp-probs");
  const bool tracked = any_tracked({&p});
  Tensor y = make_output(p.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [pi = p.impl_, row_sum = std::move(row_sum), rows, cols, floor,
               ceil](const Tensor::Impl& o) {
      auto& g = grad_of(*pi);
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          dot += o.grad[r * cols + j] * o.values[r * cols + j];
        }
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t idx = r * cols + j;
          const double v = pi->values[idx];
          if (v < floor || v > ceil) continue;
          g[idx] += (o.grad[idx] - dot) / row_sum[r];
        }
      }
    });
  }
  return y;
}

Tensor Tape::attention(const Tensor& q, const Tensor& k, const Tensor& v,
                       std::size_t heads, std::span<const KeyRange> key_ranges) {
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  require_matrix(q, "attention");
  const std::size_t t = q.rows();
  const std::size_t d = q.cols();
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: width must be divisible by head count");
  }
  if (key_ranges.size() != t) {
    throw DimensionError("attention: need one key range per query row");
  }
  for (const KeyRange& kr : key_ranges) {
    if (kr.begin >= kr.end || kr.end > t) {
      throw DimensionError("attention: empty or out-of-range key range");
    }
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* Q = q.values().data();
  const double* K = k.values().data();
  const double* V = v.values().data();
  std::vector<double> out(t * d, 0.0);
  // probs[(h * t + i) * t + j]; entries outside the key range stay zero.
  std::vector<double> probs(heads * t * t, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < t; ++i) {
      const KeyRange kr = key_ranges[i];
      double* pr = probs.data() + (h * t + i) * t;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = kr.begin; j < kr.end; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += Q[i * d + off + c] * K[j * d + off + c];
        pr[j] = s * scale;
        mx = std::max(mx, pr[j]);
      }
      double z = 0.0;
      for (std::size_t j = kr.begin; j < kr.end; ++j) {
        pr[j] = std::exp(pr[j] - mx);
        z += pr[j];
      }
      for (std::size_t j = kr.begin; j < kr.end; ++j) pr[j] /= z;
      double* o = out.data() + i * d + off;
      for (std::size_t j = kr.begin; j < kr.end; ++j) {
        const double w = pr[j];
        const double* vj = V + j * d + off;
        for (std::size_t c = 0; c < dh; ++c) o[c] += w * vj[c];
      }
    }
  }
  require_finite(out, "attention");
  const bool tracked = any_tracked({&q, &k, &v});
  Tensor y = make_output({t, d}, std::move(out), tracked);
  if (tracked) {
    std::vector<KeyRange> ranges(key_ranges.begin(), key_ranges.end());
    record(y, [qi = q.impl_, ki = k.impl_, vi = v.impl_, probs = std::move(probs),
               ranges = std::move(ranges), t, d, heads, dh,
               scale](const Tensor::Impl& o) {
      const double* G = o.grad.data();
      const double* Qv = qi->values.data();
      const double* Kv = ki->values.data();
      const double* Vv = vi->values.data();
      std::vector<double> gq(t * d, 0.0), gk(t * d, 0.0), gv(t * d, 0.0);
      std::vector<double> dp(t);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < t; ++i) {
          const KeyRange kr = ranges[i];
          const double* pr = probs.data() + (h * t + i) * t;
          const double* gi = G + i * d + off;
          double dot = 0.0;
          for (std::size_t j = kr.begin; j < kr.end; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < dh; ++c) s += gi[c] * Vv[j * d + off + c];
            dp[j] = s;
            dot += pr[j] * s;
            for (std::size_t c = 0; c < dh; ++c) gv[j * d + off + c] += pr[j] * gi[c];
          }
          for (std::size_t j = kr.begin; j < kr.end; ++j) {
            const double ds = pr[j] * (dp[j] - dot) * scale;
            for (std::size_t c = 0; c < dh; ++c) {
              gq[i * d + off + c] += ds * Kv[j * d + off + c];
              gk[j * d + off + c] += ds * Qv[i * d + off + c];
            }
          }
        }
      }
      auto accumulate = [](Tensor::Impl& impl, const std::vector<double>& src) {
        if (!impl.tracked) return;
        auto& g = grad_of(impl);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
      };
      accumulate(*qi, gq);
      accumulate(*ki, gk);
      accumulate(*vi, gv);
    });
  }
  return y;
}

Tensor Tape::grad_reverse(const Tensor& x, double strength) {
  if (strength < 0.0) throw UsageError("grad-reverse strength must be >= 0");
  const bool tracked = any_tracked({&x});
  std::vector<double> out(x.values().begin(), x.values().end());
  Tensor y = make_output(x.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [xi = x.impl_, strength](const Tensor::Impl& o) {
      auto& g = grad_of(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= strength * o.grad[i];
    });
  }
  return y;
}

Tensor Tape::l2_normalize_rows(const Tensor& x) {
  require_matrix(x, "l2-normalize-rows");
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  auto xv = x.values();
  std::vector<double> out(xv.size());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += xv[r * cols + j] * xv[r * cols + j];
    const double n = std::sqrt(s);
    if (!(n > 0.0)) throw NumericError("l2-normalize-rows: zero-norm row");
    norms[r] = n;
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = xv[r * cols + j] / n;
  }
  const bool tracked = any_tracked({&x});
  Tensor y = make_output(x.shape(), std::move(out), tracked);
  if (tracked) {
    record(y, [xi = x.impl_, norms = std::move(norms), rows, cols](const Tensor::Impl& o) {
      auto& g = grad_of(*xi);
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          dot += o.grad[r * cols + j] * o.values[r * cols + j];
        }
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t idx = r * cols + j;
          g[idx] += (o.grad[idx] - o.values[idx] * dot) / norms[r];
        }
      }
    });
  }
  return y;
}

Tensor Tape::apply(Primitive p, std::span<const Tensor> in, const PrimitiveArgs& args) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw UsageError(std::string(primitive_name(p)) + " takes " + std::to_string(n) +
                       " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (p) {
    case Primitive::kAdd: need(2); return add(in[0], in[1]);
    case Primitive::kSub: need(2); return sub(in[0], in[1]);
    case Primitive::kMul: need(2); return mul(in[0], in[1]);
    case Primitive::kScale: need(1); return scale(in[0], args.scalar);
    case Primitive::kMatmul: need(2); return matmul(in[0], in[1]);
    case Primitive::kTranspose: need(1); return transpose(in[0]);
    case Primitive::kConcatRows: return concat_rows(in);
    case Primitive::kSliceRows: need(1); return slice_rows(in[0], args.begin, args.end);
    case Primitive::kGatherRows: need(1); return gather_rows(in[0], args.indices);
    case Primitive::kLayerNorm: need(3); return layer_norm(in[0], in[1], in[2], args.scalar == 1.0 ? 1e-5 : args.scalar);
    case Primitive::kGelu: need(1); return gelu(in[0]);
    case Primitive::kTanh: need(1); return tanh(in[0]);
    case Primitive::kDropout: need(2); return dropout(in[0], in[1], args.rate);
    case Primitive::kSum: need(1); return sum(in[0]);
    case Primitive::kMean: need(1); return mean(in[0]);
    case Primitive::kLog: need(1); return log(in[0]);
    case Primitive::kExp: need(1); return exp(in[0]);
    case Primitive::kRowSoftmax: need(1); return row_softmax(in[0]);
    case Primitive::kKlDivRows: need(2); return kl_div_rows(in[0], in[1]);
    case Primitive::kClampProbs: need(1); return clamp_probs(in[0]);
    case Primitive::kAttention: need(3); return attention(in[0], in[1], in[2], args.heads, args.key_ranges);
    case Primitive::kGradReverse: need(1); return grad_reverse(in[0], args.scalar);
    case Primitive::kL2NormalizeRows: need(1); return l2_normalize_rows(in[0]);
  }
  throw UsageError("unhandled primitive");
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw StateError("backward already ran on this tape; call reset()");
  if (!loss.defined() || !loss.tracked()) {
    throw UsageError("backward requires a tracked loss");
  }
  if (loss.size() != 1) throw UsageError("backward requires a scalar loss");
  consumed_ = true;
  grad_of(*loss.impl_)[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    const Tensor::Impl& out = *it->output;
    if (out.grad.empty()) continue;
    require_finite(out.grad, "backward");
    it->vjp(out);
  }
  for (const Entry& e : entries_) {
    // Free intermediate buffers; leaves keep their accumulated gradients.
    e.output->grad.clear();
    e.output->grad.shrink_to_fit();
  }
  entries_.clear();
}

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
}

}  // namespace fgted::numerics
