#include "soonet/numerics/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

namespace soonet::num {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MMap = Eigen::Map<RowMat<T>>;

template <typename T>
CMap<T> as_matrix(const Tensor<T>& t) {
  return CMap<T>(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                 static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
void require_same_shape(Var<T> a, Var<T> b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

template <typename T>
void require_same_tape(Var<T> a, Var<T> b, const char* op) {
  if (&a.tape() != &b.tape()) throw UsageError(std::string(op) + ": operands on different tapes");
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// Elementwise op helper: forward maps x -> y, derivative maps (x, y) -> dy/dx.
template <typename T, typename Fwd, typename Deriv>
Var<T> unary(Var<T> x, const char* op, Fwd fwd, Deriv deriv) {
  const auto xs = x.value().data();
  Tensor<T> out(x.shape());
  auto ys = out.mutable_data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = fwd(xs[i]);
  return x.tape().record(op, std::move(out), {x}, [x, deriv](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    const auto xv = t.value(x.id()).data();
    const auto yv = t.value(self).data();
    auto acc = t.accumulator(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

template <typename T>
void require_finite(std::span<const T> values, const char* where) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(where) + ": non-finite input at element " + std::to_string(i));
    }
  }
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  }
  Tensor<T> out = Tensor<T>::matrix(m, n);
  MMap<T>(out.mutable_data().data(), m, n).noalias() = as_matrix(a.value()) * as_matrix(b.value());
  return a.tape().record("matmul", std::move(out), {a, b},
                         [a, b, m, k, n](Tape<T>& t, std::size_t self) {
    CMap<T> g(t.grad_span(self).data(), m, n);
    if (t.requires_grad(a.id())) {
      MMap<T>(t.accumulator(a.id()).data(), m, k).noalias() +=
          g * as_matrix(t.value(b.id())).transpose();
    }
    if (t.requires_grad(b.id())) {
      MMap<T>(t.accumulator(b.id()).data(), k, n).noalias() +=
          as_matrix(t.value(a.id())).transpose() * g;
    }
  });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner extents differ, " + shape_string(a.shape()) +
                         " · " + shape_string(b.shape()) + "ᵀ");
  }
  Tensor<T> out = Tensor<T>::matrix(m, n);
  MMap<T>(out.mutable_data().data(), m, n).noalias() =
      as_matrix(a.value()) * as_matrix(b.value()).transpose();
  return a.tape().record("matmul_nt", std::move(out), {a, b},
                         [a, b, m, k, n](Tape<T>& t, std::size_t self) {
    CMap<T> g(t.grad_span(self).data(), m, n);
    if (t.requires_grad(a.id())) {
      MMap<T>(t.accumulator(a.id()).data(), m, k).noalias() += g * as_matrix(t.value(b.id()));
    }
    if (t.requires_grad(b.id())) {
      MMap<T>(t.accumulator(b.id()).data(), n, k).noalias() +=
          g.transpose() * as_matrix(t.value(a.id()));
    }
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out = Tensor<T>::matrix(n, m);
  MMap<T>(out.mutable_data().data(), n, m) = as_matrix(a.value()).transpose();
  return a.tape().record("transpose", std::move(out), {a}, [a, m, n](Tape<T>& t, std::size_t self) {
    CMap<T> g(t.grad_span(self).data(), n, m);
    MMap<T>(t.accumulator(a.id()).data(), m, n) += g.transpose();
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "add");
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto av = a.value().data(), bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    for (auto id : {a.id(), b.id()}) {
      if (!t.requires_grad(id)) continue;
      auto acc = t.accumulator(id);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto av = a.value().data(), bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    if (t.requires_grad(a.id())) {
      auto acc = t.accumulator(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
    if (t.requires_grad(b.id())) {
      auto acc = t.accumulator(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "mul");
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto av = a.value().data(), bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    const auto av = t.value(a.id()).data(), bv = t.value(b.id()).data();
    if (t.requires_grad(a.id())) {
      auto acc = t.accumulator(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b.id())) {
      auto acc = t.accumulator(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  return unary(x, "scale", [factor](T v) { return v * factor; },
               [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T offset) {
  return unary(x, "add_scalar", [offset](T v) { return v + offset; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  require_finite(x.value().data(), "sigmoid");
  return unary(x, "sigmoid", [](T v) { return stable_sigmoid(v); },
               [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> exp(Var<T> x) {
  require_finite(x.value().data(), "exp");
  return unary(x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(Var<T> x) {
  require_finite(x.value().data(), "log");
  for (T v : x.value().data()) {
    if (!(v > T{0})) throw NumericError("log: non-positive input");
  }
  return unary(x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  constexpr T inv_sqrt2pi = T(0.39894228040143267794);
  return unary(
      x, "gelu", [](T v) { return T(0.5) * v * (T{1} + std::erf(v * inv_sqrt2)); },
      [](T v, T) {
        return T(0.5) * (T{1} + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      });
}

template <typename T>
Var<T> add_row(Var<T> x, Var<T> bias) {
  require_same_tape(x, bias, "add_row");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (bias.size() != cols) {
    throw DimensionError("add_row: bias has " + std::to_string(bias.size()) +
                         " elements, rows have " + std::to_string(cols));
  }
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto xv = x.value().data(), bv = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] = xv[r * cols + c] + bv[c];
  }
  return x.tape().record("add_row", std::move(out), {x, bias},
                         [x, bias, rows, cols](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    if (t.requires_grad(x.id())) {
      auto acc = t.accumulator(x.id());
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
    if (t.requires_grad(bias.id())) {
      auto acc = t.accumulator(bias.id());
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) acc[c] += g[r * cols + c];
      }
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  if (!(eps > T{0})) throw ParameterError("layer_norm: eps must be positive");
  require_same_tape(x, gain, "layer_norm");
  require_same_tape(x, bias, "layer_norm");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.size() != cols || bias.size() != cols) {
    throw DimensionError("layer_norm: gain/bias must match trailing extent " + std::to_string(cols));
  }
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto xv = x.value().data(), gv = gain.value().data(), bv = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * cols;
    T mu{0};
    for (std::size_t c = 0; c < cols; ++c) mu += row[c];
    mu /= T(cols);
    T var{0};
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= T(cols);
    const T inv = T{1} / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (row[c] - mu) * inv;
      (*xhat)[r * cols + c] = h;
      o[r * cols + c] = h * gv[c] + bv[c];
    }
  }
  return x.tape().record(
      "layer_norm", std::move(out), {x, gain, bias},
      [x, gain, bias, rows, cols, xhat, inv_std](Tape<T>& t, std::size_t self) {
        const auto g = t.grad_span(self);
        const auto gv = t.value(gain.id()).data();
        if (t.requires_grad(gain.id())) {
          auto acc = t.accumulator(gain.id());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) acc[c] += g[r * cols + c] * (*xhat)[r * cols + c];
        }
        if (t.requires_grad(bias.id())) {
          auto acc = t.accumulator(bias.id());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) acc[c] += g[r * cols + c];
        }
        if (!t.requires_grad(x.id())) return;
        auto acc = t.accumulator(x.id());
        std::vector<T> dh(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          T sum_dh{0}, sum_dh_h{0};
          for (std::size_t c = 0; c < cols; ++c) {
            dh[c] = g[r * cols + c] * gv[c];
            sum_dh += dh[c];
            sum_dh_h += dh[c] * (*xhat)[r * cols + c];
          }
          const T k = (*inv_std)[r] / T(cols);
          for (std::size_t c = 0; c < cols; ++c) {
            acc[r * cols + c] +=
                k * (T(cols) * dh[c] - sum_dh - (*xhat)[r * cols + c] * sum_dh_h);
          }
        }
      });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T s{0};
  for (T v : x.value().data()) s += v;
  return x.tape().record("sum", Tensor<T>::scalar(s), {x}, [x](Tape<T>& t, std::size_t self) {
    const T g = t.grad_span(self)[0];
    for (auto& a : t.accumulator(x.id())) a += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  if (x.size() == 0) throw UsageError("mean of empty tensor");
  const T n = T(x.size());
  T s{0};
  for (T v : x.value().data()) s += v;
  return x.tape().record("mean", Tensor<T>::scalar(s / n), {x}, [x, n](Tape<T>& t, std::size_t self) {
    const T g = t.grad_span(self)[0] / n;
    for (auto& a : t.accumulator(x.id())) a += g;
  });
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  require_finite(x.value().data(), "softmax");
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * cols;
    const T mx = *std::max_element(row, row + cols);
    T z{0};
    for (std::size_t c = 0; c < cols; ++c) z += (o[r * cols + c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] /= z;
  }
  return x.tape().record("softmax_rows", std::move(out), {x},
                         [x, rows, cols](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    const auto y = t.value(self).data();
    auto acc = t.accumulator(x.id());
    for (std::size_t r = 0; r < rows; ++r) {
      T dot{0};
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) acc[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (element_count(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  return x.tape().record("reshape", x.value().reshaped(std::move(shape)), {x},
                         [x](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    auto acc = t.accumulator(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  });
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw UsageError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    require_same_tape(parts[0], p, "concat_rows");
    rows += p.rows();
  }
  Tensor<T> out = Tensor<T>::matrix(rows, cols);
  auto o = out.mutable_data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto v = p.value().data();
    std::copy(v.begin(), v.end(), o.begin() + offset);
    offset += v.size();
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts[0].tape().record("concat_rows", std::move(out), parts,
                                [inputs](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    std::size_t offset = 0;
    for (const auto& p : inputs) {
      const std::size_t n = t.value(p.id()).size();
      if (t.requires_grad(p.id())) {
        auto acc = t.accumulator(p.id());
        for (std::size_t i = 0; i < n; ++i) acc[i] += g[offset + i];
      }
      offset += n;
    }
  });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "concat_cols");
  const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
  if (b.rows() != rows) throw DimensionError("concat_cols: row counts differ");
  Tensor<T> out = Tensor<T>::matrix(rows, ca + cb);
  auto o = out.mutable_data();
  const auto av = a.value().data(), bv = b.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.begin() + r * ca, ca, o.begin() + r * (ca + cb));
    std::copy_n(bv.begin() + r * cb, cb, o.begin() + r * (ca + cb) + ca);
  }
  return a.tape().record("concat_cols", std::move(out), {a, b},
                         [a, b, rows, ca, cb](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    if (t.requires_grad(a.id())) {
      auto acc = t.accumulator(a.id());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) acc[r * ca + c] += g[r * (ca + cb) + c];
    }
    if (t.requires_grad(b.id())) {
      auto acc = t.accumulator(b.id());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) acc[r * cb + c] += g[r * (ca + cb) + ca + c];
    }
  });
}

template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") outside " + std::to_string(x.rows()) + " rows");
  }
  const std::size_t cols = x.cols();
  const auto v = x.value().data();
  Tensor<T> out(Shape{end - begin, cols},
                std::vector<T>(v.begin() + begin * cols, v.begin() + end * cols));
  return x.tape().record("slice_rows", std::move(out), {x},
                         [x, begin, cols](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    auto acc = t.accumulator(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) acc[begin * cols + i] += g[i];
  });
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const std::size_t> index) {
  const std::size_t cols = x.cols(), rows = x.rows();
  Tensor<T> out = Tensor<T>::matrix(index.size(), cols);
  auto o = out.mutable_data();
  const auto v = x.value().data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) throw DimensionError("gather_rows: index out of range");
    std::copy_n(v.begin() + index[i] * cols, cols, o.begin() + i * cols);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return x.tape().record("gather_rows", std::move(out), {x},
                         [x, cols, idx = std::move(idx)](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    auto acc = t.accumulator(x.id());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) acc[idx[i] * cols + c] += g[i * cols + c];
  });
}

template <typename T>
Var<T> pad_rows(Var<T> x, std::size_t rows) {
  if (rows < x.rows()) throw DimensionError("pad_rows: target smaller than input");
  const std::size_t cols = x.cols();
  Tensor<T> out = Tensor<T>::matrix(rows, cols);
  const auto v = x.value().data();
  std::copy(v.begin(), v.end(), out.mutable_data().begin());
  return x.tape().record("pad_rows", std::move(out), {x}, [x](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    auto acc = t.accumulator(x.id());
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
  });
}

template <typename T>
Var<T> row_normalize(Var<T> x, T eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  auto norms = std::make_shared<std::vector<T>>(rows);
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto v = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T s{0};
    for (std::size_t c = 0; c < cols; ++c) s += v[r * cols + c] * v[r * cols + c];
    const T n = std::sqrt(s);
    (*norms)[r] = n;
    for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] = v[r * cols + c] / (n + eps);
  }
  return x.tape().record("row_normalize", std::move(out), {x},
                         [x, rows, cols, eps, norms](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    const auto v = t.value(x.id()).data();
    auto acc = t.accumulator(x.id());
    for (std::size_t r = 0; r < rows; ++r) {
      const T n = (*norms)[r];
      const T d = n + eps;
      T dot{0};
      for (std::size_t c = 0; c < cols; ++c) dot += v[r * cols + c] * g[r * cols + c];
      const T k = n > T{0} ? dot / (n * d * d) : T{0};
      for (std::size_t c = 0; c < cols; ++c) acc[r * cols + c] += g[r * cols + c] / d - v[r * cols + c] * k;
    }
  });
}

template <typename T>
Var<T> pool_rows(Var<T> x, std::size_t factor, std::size_t valid_rows, PoolKind kind) {
  if (factor == 0) throw ParameterError("pool_rows: factor must be >= 1");
  if (valid_rows > x.rows()) throw DimensionError("pool_rows: valid_rows exceeds rows");
  const std::size_t cols = x.cols();
  const std::size_t out_rows = (valid_rows + factor - 1) / factor;
  Tensor<T> out = Tensor<T>::matrix(out_rows, cols);
  auto o = out.mutable_data();
  const auto v = x.value().data();
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  if (kind == PoolKind::kMax) argmax->resize(out_rows * cols);
  for (std::size_t p = 0; p < out_rows; ++p) {
    const std::size_t lo = p * factor, hi = std::min(lo + factor, valid_rows);
    for (std::size_t c = 0; c < cols; ++c) {
      if (kind == PoolKind::kMax) {
        std::size_t best = lo;
        for (std::size_t r = lo + 1; r < hi; ++r)
          if (v[r * cols + c] > v[best * cols + c]) best = r;
        (*argmax)[p * cols + c] = best;
        o[p * cols + c] = v[best * cols + c];
      } else {
        T s{0};
        for (std::size_t r = lo; r < hi; ++r) s += v[r * cols + c];
        o[p * cols + c] = s / T(hi - lo);
      }
    }
  }
  return x.tape().record(
      "pool_rows", std::move(out), {x},
      [x, factor, valid_rows, kind, cols, out_rows, argmax](Tape<T>& t, std::size_t self) {
        const auto g = t.grad_span(self);
        auto acc = t.accumulator(x.id());
        for (std::size_t p = 0; p < out_rows; ++p) {
          const std::size_t lo = p * factor, hi = std::min(lo + factor, valid_rows);
          for (std::size_t c = 0; c < cols; ++c) {
            if (kind == PoolKind::kMax) {
              acc[(*argmax)[p * cols + c] * cols + c] += g[p * cols + c];
            } else {
              const T share = g[p * cols + c] / T(hi - lo);
              for (std::size_t r = lo; r < hi; ++r) acc[r * cols + c] += share;
            }
          }
        }
      });
}

template <typename T>
Var<T> segment_mean_rows(Var<T> x, const SegmentOffsets& segments) {
  if (segments.empty() || segments.back() > x.rows()) {
    throw DimensionError("segment_mean_rows: segments exceed input rows");
  }
  const std::size_t cols = x.cols(), n = segments.size() - 1;
  Tensor<T> out = Tensor<T>::matrix(n, cols);
  auto o = out.mutable_data();
  const auto v = x.value().data();
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t lo = segments[s], hi = segments[s + 1];
    if (hi <= lo) throw UsageError("segment_mean_rows: empty segment");
    for (std::size_t r = lo; r < hi; ++r)
      for (std::size_t c = 0; c < cols; ++c) o[s * cols + c] += v[r * cols + c];
    for (std::size_t c = 0; c < cols; ++c) o[s * cols + c] /= T(hi - lo);
  }
  return x.tape().record("segment_mean_rows", std::move(out), {x},
                         [x, segments, cols, n](Tape<T>& t, std::size_t self) {
    const auto g = t.grad_span(self);
    auto acc = t.accumulator(x.id());
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t lo = segments[s], hi = segments[s + 1];
      const T inv = T{1} / T(hi - lo);
      for (std::size_t r = lo; r < hi; ++r)
        for (std::size_t c = 0; c < cols; ++c) acc[r * cols + c] += g[s * cols + c] * inv;
    }
  });
}

template <typename T>
Var<T> segment_softmax_pool(Var<T> values, Var<T> logits, const SegmentOffsets& segments) {
  require_same_tape(values, logits, "segment_softmax_pool");
  if (logits.size() != values.rows()) {
    throw DimensionError("segment_softmax_pool: one logit per value row required");
  }
  if (segments.empty() || segments.back() > values.rows()) {
    throw DimensionError("segment_softmax_pool: segments exceed input rows");
  }
  require_finite(logits.value().data(), "segment_softmax_pool");
  const std::size_t cols = values.cols(), n = segments.size() - 1;
  auto weights = std::make_shared<std::vector<T>>(values.rows(), T{0});
  Tensor<T> out = Tensor<T>::matrix(n, cols);
  auto o = out.mutable_data();
  const auto v = values.value().data(), lg = logits.value().data();
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t lo = segments[s], hi = segments[s + 1];
    if (hi <= lo) throw UsageError("segment_softmax_pool: segment has no valid frames");
    const T mx = *std::max_element(lg.begin() + lo, lg.begin() + hi);
    T z{0};
    for (std::size_t r = lo; r < hi; ++r) z += ((*weights)[r] = std::exp(lg[r] - mx));
    for (std::size_t r = lo; r < hi; ++r) {
      (*weights)[r] /= z;
      for (std::size_t c = 0; c < cols; ++c) o[s * cols + c] += (*weights)[r] * v[r * cols + c];
    }
  }
  return values.tape().record(
      "segment_softmax_pool", std::move(out), {values, logits},
      [values, logits, segments, cols, n, weights](Tape<T>& t, std::size_t self) {
        const auto g = t.grad_span(self);
        const auto v = t.value(values.id()).data();
        const bool want_v = t.requires_grad(values.id());
        const bool want_l = t.requires_grad(logits.id());
        std::span<T> acc_v, acc_l;
        if (want_v) acc_v = t.accumulator(values.id());
        if (want_l) acc_l = t.accumulator(logits.id());
        for (std::size_t s = 0; s < n; ++s) {
          const std::size_t lo = segments[s], hi = segments[s + 1];
          const T* gs = g.data() + s * cols;
          // d out / d logit_r = a_r (v_r - out) · g
          T weighted{0};
          std::vector<T> proj(hi - lo);
          for (std::size_t r = lo; r < hi; ++r) {
            T d{0};
            for (std::size_t c = 0; c < cols; ++c) d += gs[c] * v[r * cols + c];
            proj[r - lo] = d;
            weighted += (*weights)[r] * d;
          }
          for (std::size_t r = lo; r < hi; ++r) {
            const T a = (*weights)[r];
            if (want_l) acc_l[r] += a * (proj[r - lo] - weighted);
            if (want_v)
              for (std::size_t c = 0; c < cols; ++c) acc_v[r * cols + c] += a * gs[c];
          }
        }
      });
}

template <typename T>
Var<T> multihead_attention(Var<T> qkv, std::size_t heads, const AttentionLayout& layout) {
  const std::size_t rows = qkv.rows();
  if (qkv.cols() % 3 != 0) throw DimensionError("attention: qkv width must be 3·D");
  const std::size_t dim = qkv.cols() / 3;
  if (heads == 0 || dim % heads != 0) {
    throw ParameterError("attention: " + std::to_string(heads) + " heads do not divide D=" +
                         std::to_string(dim));
  }
  if (layout.rows != rows) throw DimensionError("attention: layout built for a different length");
  if (layout.segments.empty() || layout.segments.back() != layout.order.size()) {
    throw DimensionError("attention: malformed layout segments");
  }
  const std::size_t dh = dim / heads;
  const T scale = T{1} / std::sqrt(T(dh));
  const std::size_t width = 3 * dim;
  const std::size_t nseg = layout.segments.size() - 1;

  // Probabilities per (segment, head) are kept for the backward pass.
  auto prob_offset = std::make_shared<std::vector<std::size_t>>(nseg + 1, 0);
  for (std::size_t s = 0; s < nseg; ++s) {
    const std::size_t len = layout.segments[s + 1] - layout.segments[s];
    (*prob_offset)[s + 1] = (*prob_offset)[s] + len * len * heads;
  }
  auto probs = std::make_shared<std::vector<T>>(prob_offset->back());

  Tensor<T> out = Tensor<T>::matrix(rows, dim);
  auto o = out.mutable_data();
  const auto x = qkv.value().data();
  RowMat<T> q, k, v, p;
  for (std::size_t s = 0; s < nseg; ++s) {
    const std::size_t lo = layout.segments[s], len = layout.segments[s + 1] - lo;
    if (len == 0) continue;
    q.resize(len, dh);
    k.resize(len, dh);
    v.resize(len, dh);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < len; ++i) {
        const T* src = x.data() + layout.order[lo + i] * width + h * dh;
        for (std::size_t c = 0; c < dh; ++c) {
          q(i, c) = src[c];
          k(i, c) = src[dim + c];
          v(i, c) = src[2 * dim + c];
        }
      }
      p.noalias() = (q * k.transpose()) * scale;
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const T mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
      }
      std::copy_n(p.data(), len * len, probs->data() + (*prob_offset)[s] + h * len * len);
      const RowMat<T> y = p * v;
      for (std::size_t i = 0; i < len; ++i) {
        T* dst = o.data() + layout.order[lo + i] * dim + h * dh;
        for (std::size_t c = 0; c < dh; ++c) dst[c] = y(i, c);
      }
    }
  }

  return qkv.tape().record(
      "multihead_attention", std::move(out), {qkv},
      [qkv, layout, heads, dim, dh, scale, width, nseg, probs, prob_offset](Tape<T>& t,
                                                                          std::size_t self) {
        const auto g = t.grad_span(self);
        const auto x = t.value(qkv.id()).data();
        auto acc = t.accumulator(qkv.id());
        RowMat<T> q, k, v, dy, dp, ds;
        for (std::size_t s = 0; s < nseg; ++s) {
          const std::size_t lo = layout.segments[s], len = layout.segments[s + 1] - lo;
          if (len == 0) continue;
          q.resize(len, dh);
          k.resize(len, dh);
          v.resize(len, dh);
          dy.resize(len, dh);
          for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < len; ++i) {
              const std::size_t row = layout.order[lo + i];
              const T* src = x.data() + row * width + h * dh;
              const T* gsrc = g.data() + row * dim + h * dh;
              for (std::size_t c = 0; c < dh; ++c) {
                q(i, c) = src[c];
                k(i, c) = src[dim + c];
                v(i, c) = src[2 * dim + c];
                dy(i, c) = gsrc[c];
              }
            }
            CMap<T> p(probs->data() + (*prob_offset)[s] + h * len * len, len, len);
            const RowMat<T> dv = p.transpose() * dy;
            dp.noalias() = dy * v.transpose();
            ds.resize(len, len);
            for (std::size_t i = 0; i < len; ++i) {
              const T dot = p.row(i).dot(dp.row(i));
              ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
            }
            const RowMat<T> dq = (ds * k) * scale;
            const RowMat<T> dk = (ds.transpose() * q) * scale;
            for (std::size_t i = 0; i < len; ++i) {
              T* dst = acc.data() + layout.order[lo + i] * width + h * dh;
              for (std::size_t c = 0; c < dh; ++c) {
                dst[c] += dq(i, c);
                dst[dim + c] += dk(i, c);
                dst[2 * dim + c] += dv(i, c);
              }
            }
          }
        }
      });
}

#define SOONET_INSTANTIATE_OPS(T)                                                          \
  template void require_finite<T>(std::span<const T>, const char*);                        \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                               \
  template Var<T> matmul_nt<T>(Var<T>, Var<T>);                                            \
  template Var<T> transpose<T>(Var<T>);                                                    \
  template Var<T> add<T>(Var<T>, Var<T>);                                                  \
  template Var<T> sub<T>(Var<T>, Var<T>);                                                  \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                  \
  template Var<T> scale<T>(Var<T>, T);                                                     \
  template Var<T> add_scalar<T>(Var<T>, T);                                                \
  template Var<T> sigmoid<T>(Var<T>);                                                      \
  template Var<T> exp<T>(Var<T>);                                                          \
  template Var<T> log<T>(Var<T>);                                                          \
  template Var<T> gelu<T>(Var<T>);                                                         \
  template Var<T> add_row<T>(Var<T>, Var<T>);                                              \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                \
  template Var<T> sum<T>(Var<T>);                                                          \
  template Var<T> mean<T>(Var<T>);                                                         \
  template Var<T> softmax_rows<T>(Var<T>);                                                 \
  template Var<T> reshape<T>(Var<T>, Shape);                                               \
  template Var<T> concat_rows<T>(std::span<const Var<T>>);                                 \
  template Var<T> concat_cols<T>(Var<T>, Var<T>);                                          \
  template Var<T> slice_rows<T>(Var<T>, std::size_t, std::size_t);                         \
  template Var<T> gather_rows<T>(Var<T>, std::span<const std::size_t>);                    \
  template Var<T> pad_rows<T>(Var<T>, std::size_t);                                        \
  template Var<T> row_normalize<T>(Var<T>, T);                                             \
  template Var<T> pool_rows<T>(Var<T>, std::size_t, std::size_t, PoolKind);                \
  template Var<T> segment_mean_rows<T>(Var<T>, const SegmentOffsets&);                     \
  template Var<T> segment_softmax_pool<T>(Var<T>, Var<T>, const SegmentOffsets&);          \
  template Var<T> multihead_attention<T>(Var<T>, std::size_t, const AttentionLayout&);

SOONET_INSTANTIATE_OPS(float)
SOONET_INSTANTIATE_OPS(double)

}  // namespace soonet::num
