#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "autogel/random.hpp"
#include "autogel/tensor.hpp"

// Differentiable operations over Tensor. Every op computes its forward value
// eagerly and, when recording, registers a closure that pulls the output
// gradient back into its inputs.

namespace autogel {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMat> as_mat(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
inline Eigen::Map<RowMat> as_mat(std::vector<double>& v, std::size_t r, std::size_t c) {
  return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

inline void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

inline Node& input(Node& n, std::size_t i) { return *n.inputs[i]; }

template <class F>
Tensor unary(OpKind kind, const Tensor& x, F&& f, std::function<void(Node&)> bw) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result(kind, x.shape(), std::move(out), {x}, std::move(bw));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const auto n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(n * m);
  detail::as_mat(out, n, m).noalias() =
      detail::as_mat(a.node()->data, n, k) * detail::as_mat(b.node()->data, k, m);
  return make_result(OpKind::MatMul, {n, m}, std::move(out), {a, b}, [n, k, m](detail::Node& self) {
    auto& A = detail::input(self, 0);
    auto& B = detail::input(self, 1);
    auto G = detail::as_mat(self.grad, n, m);
    if (A.requires_grad) {
      A.ensure_grad();
      detail::as_mat(A.grad, n, k).noalias() += G * detail::as_mat(B.data, k, m).transpose();
    }
    if (B.requires_grad) {
      B.ensure_grad();
      detail::as_mat(B.grad, k, m).noalias() += detail::as_mat(A.data, n, k).transpose() * G;
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const auto r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  auto in = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return make_result(OpKind::Transpose, {c, r}, std::move(out), {a}, [r, c](detail::Node& self) {
    auto& A = detail::input(self, 0);
    if (!A.requires_grad) return;
    A.ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) A.grad[i * c + j] += self.grad[j * r + i];
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(OpKind::Reshape, std::move(shape), std::move(out), {a}, [](detail::Node& self) {
    auto& A = detail::input(self, 0);
    if (!A.requires_grad) return;
    A.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise binary

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(OpKind::Add, a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& X = detail::input(self, k);
      if (!X.requires_grad) continue;
      X.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "subtract");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(OpKind::Subtract, a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& A = detail::input(self, 0);
    auto& B = detail::input(self, 1);
    if (A.requires_grad) {
      A.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
    }
    if (B.requires_grad) {
      B.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) B.grad[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "multiply");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(OpKind::Multiply, a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& A = detail::input(self, 0);
    auto& B = detail::input(self, 1);
    if (A.requires_grad) {
      A.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * B.data[i];
    }
    if (B.requires_grad) {
      B.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) B.grad[i] += self.grad[i] * A.data[i];
    }
  });
}

/// x scaled by a one-element tensor s; the mixing primitive sum_o theta_o * o(x).
inline Tensor scale(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("scale: factor must have one element, got " + shape_str(s.shape()));
  const double f = s[0];
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * f;
  return make_result(OpKind::Scale, x.shape(), std::move(out), {x, s}, [](detail::Node& self) {
    auto& X = detail::input(self, 0);
    auto& S = detail::input(self, 1);
    if (X.requires_grad) {
      X.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i] * S.data[0];
    }
    if (S.requires_grad) {
      S.ensure_grad();
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * X.data[i];
      S.grad[0] += acc;
    }
  });
}

inline Tensor mul_constant(const Tensor& x, double c) {
  return detail::unary(OpKind::MulConstant, x, [c](double v) { return v * c; }, [c](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i] * c;
  });
}

inline Tensor add_constant(const Tensor& x, double c) {
  return detail::unary(OpKind::AddConstant, x, [c](double v) { return v + c; }, [](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i];
  });
}

/// Adds a bias row (shape [d] or [1,d]) to every row of x.
inline Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  const auto d = x.cols();
  if (b.numel() != d) {
    throw DimensionError("add_row_bias: bias " + shape_str(b.shape()) + " vs rows of width " + std::to_string(d));
  }
  const auto r = x.row_count();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] + b[j];
  return make_result(OpKind::AddRowBias, x.shape(), std::move(out), {x, b}, [r, d](detail::Node& self) {
    auto& X = detail::input(self, 0);
    auto& B = detail::input(self, 1);
    if (X.requires_grad) {
      X.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i];
    }
    if (B.requires_grad) {
      B.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < d; ++j) B.grad[j] += self.grad[i * d + j];
    }
  });
}

/// Row-wise circular correlation: out_k = sum_i a_i * b_{(i+k) mod d}.
/// Direct O(d^2) evaluation.
inline Tensor circular_correlation(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "circular_correlation");
  const auto d = a.cols(), r = a.row_count();
  std::vector<double> out(a.numel(), 0.0);
  for (std::size_t row = 0; row < r; ++row) {
    const double* pa = a.data().data() + row * d;
    const double* pb = b.data().data() + row * d;
    double* po = out.data() + row * d;
    for (std::size_t k = 0; k < d; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += pa[i] * pb[(i + k) % d];
      po[k] = acc;
    }
  }
  return make_result(OpKind::CircularCorrelation, a.shape(), std::move(out), {a, b}, [r, d](detail::Node& self) {
    auto& A = detail::input(self, 0);
    auto& B = detail::input(self, 1);
    if (A.requires_grad) A.ensure_grad();
    if (B.requires_grad) B.ensure_grad();
    for (std::size_t row = 0; row < r; ++row) {
      const double* g = self.grad.data() + row * d;
      const double* pa = A.data.data() + row * d;
      const double* pb = B.data.data() + row * d;
      for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t i = 0; i < d; ++i) {
          const std::size_t j = (i + k) % d;
          if (A.requires_grad) A.grad[row * d + i] += g[k] * pb[j];
          if (B.requires_grad) B.grad[row * d + j] += g[k] * pa[i];
        }
      }
    }
  });
}

/// Column-wise concatenation of tensors sharing the row count.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const auto r = parts[0].row_count();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.row_count() != r || p.rank() != parts[0].rank()) {
      throw DimensionError("concat: row mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto w = widths[k];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * total + off + j] = parts[k][i * w + j];
    off += w;
  }
  Shape shape = parts[0].rank() == 1 ? Shape{total} : Shape{r, total};
  return make_result(OpKind::Concat, std::move(shape), std::move(out), parts, [r, total, widths](detail::Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto& X = detail::input(self, k);
      const auto w = widths[k];
      if (X.requires_grad) {
        X.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) X.grad[i * w + j] += self.grad[i * total + off + j];
      }
      off += w;
    }
  });
}

/// Row-wise stacking of matrices sharing the column count.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const auto d = parts[0].cols();
  std::vector<std::size_t> offsets;
  std::vector<double> out;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_rows");
    if (p.cols() != d) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  const auto rows = out.size() / d;
  return make_result(OpKind::ConcatRows, {rows, d}, std::move(out), parts, [offsets](detail::Node& self) {
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      auto& X = detail::input(self, k);
      if (!X.requires_grad) continue;
      X.ensure_grad();
      for (std::size_t i = 0; i < X.data.size(); ++i) X.grad[i] += self.grad[offsets[k] + i];
    }
  });
}

/// Elementwise maximum; ties route the gradient to the first operand.
inline Tensor maximum(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "maximum");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] >= b[i] ? a[i] : b[i];
  return make_result(OpKind::Maximum, a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& A = detail::input(self, 0);
    auto& B = detail::input(self, 1);
    if (A.requires_grad) A.ensure_grad();
    if (B.requires_grad) B.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const bool first = A.data[i] >= B.data[i];
      if (first && A.requires_grad) A.grad[i] += self.grad[i];
      if (!first && B.requires_grad) B.grad[i] += self.grad[i];
    }
  });
}

inline Tensor abs(const Tensor& x) {
  return detail::unary(OpKind::Abs, x, [](double v) { return std::fabs(v); }, [](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = X.data[i] > 0 ? 1.0 : (X.data[i] < 0 ? -1.0 : 0.0);
      X.grad[i] += self.grad[i] * s;
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions. Summation is strictly left to right.

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result(OpKind::Sum, {1}, {acc}, {x}, [](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (auto& g : X.grad) g += self.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double n = static_cast<double>(x.numel());
  return make_result(OpKind::Mean, {1}, {acc / n}, {x}, [n](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (auto& g : X.grad) g += self.grad[0] / n;
  });
}

enum class Reduce { Sum, Mean, Max };

/// Reduction of a matrix over axis 0 (result [1,c]) or axis 1 (result [r,1]).
inline Tensor reduce_axis(const Tensor& x, std::size_t axis, Reduce how) {
  detail::require_matrix(x, "reduce_axis");
  if (axis > 1) throw DimensionError("reduce_axis: axis must be 0 or 1");
  const auto r = x.rows(), c = x.cols();
  const auto outer = axis == 0 ? c : r;
  const auto inner = axis == 0 ? r : c;
  auto idx = [&](std::size_t o, std::size_t i) { return axis == 0 ? i * c + o : o * c + i; };
  std::vector<double> out(outer);
  std::vector<std::size_t> arg(how == Reduce::Max ? outer : 0);
  for (std::size_t o = 0; o < outer; ++o) {
    if (how == Reduce::Max) {
      std::size_t best = idx(o, 0);
      for (std::size_t i = 1; i < inner; ++i)
        if (x[idx(o, i)] > x[best]) best = idx(o, i);
      out[o] = x[best];
      arg[o] = best;
    } else {
      double acc = 0.0;
      for (std::size_t i = 0; i < inner; ++i) acc += x[idx(o, i)];
      out[o] = how == Reduce::Mean ? acc / static_cast<double>(inner) : acc;
    }
  }
  Shape shape = axis == 0 ? Shape{1, c} : Shape{r, 1};
  const OpKind kind = how == Reduce::Sum ? OpKind::SumAxis : (how == Reduce::Mean ? OpKind::MeanAxis : OpKind::MaxAxis);
  return make_result(kind, std::move(shape), std::move(out), {x}, [=](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      if (how == Reduce::Max) {
        X.grad[arg[o]] += self.grad[o];
        continue;
      }
      const double g = how == Reduce::Mean ? self.grad[o] / static_cast<double>(inner) : self.grad[o];
      for (std::size_t i = 0; i < inner; ++i) {
        X.grad[axis == 0 ? i * c + o : o * c + i] += g;
      }
    }
  });
}

/// Rows of x selected by index (duplicates allowed).
inline Tensor gather_rows(const Tensor& x, std::vector<std::uint32_t> index) {
  detail::require_matrix(x, "gather_rows");
  if (index.empty()) throw DimensionError("gather_rows: empty index");
  const auto d = x.cols(), n = x.rows();
  std::vector<double> out(index.size() * d);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) throw DimensionError("gather_rows: index " + std::to_string(index[i]) + " out of range");
    std::copy_n(x.data().data() + index[i] * d, d, out.data() + i * d);
  }
  const auto rows = index.size();
  return make_result(OpKind::GatherRows, {rows, d}, std::move(out), {x}, [d, index = std::move(index)](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) X.grad[index[i] * d + j] += self.grad[i * d + j];
  });
}

/// Segment reduction: row e of the (optionally gathered) source is routed to
/// output row segment[e]. Empty segments produce zero rows. With `source`
/// non-empty, row e reads x[source[e]], which avoids materializing messages.
/// Entries are visited in the given order, so callers fix the summation order.
inline Tensor segment_reduce(const Tensor& x, const std::vector<std::uint32_t>& source,
                             const std::vector<std::uint32_t>& segment, std::size_t segments, Reduce how) {
  detail::require_matrix(x, "segment_reduce");
  const auto d = x.cols();
  const auto entries = segment.size();
  if (source.empty() && entries != x.rows()) {
    throw DimensionError("segment_reduce: " + std::to_string(entries) + " segment ids for " +
                         std::to_string(x.rows()) + " rows");
  }
  if (!source.empty() && source.size() != entries) {
    throw DimensionError("segment_reduce: source and segment index lengths differ");
  }
  if (segments == 0) throw DimensionError("segment_reduce: zero segments");
  auto src_row = [&](std::size_t e) -> std::size_t { return source.empty() ? e : source[e]; };
  std::vector<double> out(segments * d, 0.0);
  std::vector<double> count(segments, 0.0);
  std::vector<std::int64_t> arg(how == Reduce::Max ? segments * d : 0, -1);
  for (std::size_t e = 0; e < entries; ++e) {
    const auto s = segment[e];
    if (s >= segments) throw DimensionError("segment_reduce: segment id out of range");
    const auto r = src_row(e);
    if (r >= x.rows()) throw DimensionError("segment_reduce: source row out of range");
    count[s] += 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = x[r * d + j];
      if (how == Reduce::Max) {
        auto& a = arg[s * d + j];
        if (a < 0 || v > out[s * d + j]) {
          out[s * d + j] = v;
          a = static_cast<std::int64_t>(r * d + j);
        }
      } else {
        out[s * d + j] += v;
      }
    }
  }
  if (how == Reduce::Mean) {
    for (std::size_t s = 0; s < segments; ++s)
      if (count[s] > 0)
        for (std::size_t j = 0; j < d; ++j) out[s * d + j] /= count[s];
  }
  const OpKind kind = how == Reduce::Sum ? OpKind::SegmentSum : (how == Reduce::Mean ? OpKind::SegmentMean : OpKind::SegmentMax);
  return make_result(kind, {segments, d}, std::move(out), {x},
                     [d, how, source, segment, count = std::move(count), arg = std::move(arg)](detail::Node& self) {
                       auto& X = detail::input(self, 0);
                       if (!X.requires_grad) return;
                       X.ensure_grad();
                       if (how == Reduce::Max) {
                         for (std::size_t i = 0; i < arg.size(); ++i)
                           if (arg[i] >= 0) X.grad[static_cast<std::size_t>(arg[i])] += self.grad[i];
                         return;
                       }
                       for (std::size_t e = 0; e < segment.size(); ++e) {
                         const auto s = segment[e];
                         const auto r = source.empty() ? e : source[e];
                         const double f = how == Reduce::Mean ? 1.0 / count[s] : 1.0;
                         for (std::size_t j = 0; j < d; ++j) X.grad[r * d + j] += self.grad[s * d + j] * f;
                       }
                     });
}

// ---------------------------------------------------------------------------
// Nonlinearities

/// Softmax over the trailing axis (each row independently).
inline Tensor softmax(const Tensor& x) {
  const auto d = x.cols(), r = x.row_count();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < r; ++i) {
    double m = x[i * d];
    for (std::size_t j = 1; j < d; ++j) m = std::max(m, x[i * d + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      out[i * d + j] = std::exp(x[i * d + j] - m);
      z += out[i * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] /= z;
  }
  return make_result(OpKind::Softmax, x.shape(), std::move(out), {x}, [r, d](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += self.grad[i * d + j] * self.data[i * d + j];
      for (std::size_t j = 0; j < d; ++j)
        X.grad[i * d + j] += self.data[i * d + j] * (self.grad[i * d + j] - dot);
    }
  });
}

inline Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value " + std::to_string(v));
  }
  return detail::unary(OpKind::Log, x, [](double v) { return std::log(v); }, [](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i] / X.data[i];
  });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(OpKind::Exp, x, [](double v) { return std::exp(v); }, [](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i] * self.data[i];
  });
}

inline double sigmoid_value(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(OpKind::Sigmoid, x, sigmoid_value, [](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      X.grad[i] += self.grad[i] * self.data[i] * (1.0 - self.data[i]);
  });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(OpKind::Tanh, x, [](double v) { return std::tanh(v); }, [](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      X.grad[i] += self.grad[i] * (1.0 - self.data[i] * self.data[i]);
  });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(OpKind::Relu, x, [](double v) { return v > 0 ? v : 0.0; }, [](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (X.data[i] > 0) X.grad[i] += self.grad[i];
  });
}

/// PReLU with a single learnable slope shared across all entries.
inline Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (slope.numel() != 1) throw DimensionError("prelu: slope must have one element");
  const double a = slope[0];
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0 ? x[i] : a * x[i];
  return make_result(OpKind::Prelu, x.shape(), std::move(out), {x, slope}, [](detail::Node& self) {
    auto& X = detail::input(self, 0);
    auto& A = detail::input(self, 1);
    if (X.requires_grad) {
      X.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        X.grad[i] += self.grad[i] * (X.data[i] > 0 ? 1.0 : A.data[0]);
    }
    if (A.requires_grad) {
      A.ensure_grad();
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (X.data[i] <= 0) acc += self.grad[i] * X.data[i];
      A.grad[0] += acc;
    }
  });
}

/// Inverted-dropout mask: entries are 0 or 1/(1-p).
inline std::vector<double> dropout_mask(std::size_t n, double p, Rng& rng) {
  std::vector<double> mask(n, 1.0);
  if (p <= 0.0) return mask;
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep;
  return mask;
}

/// Applies an explicit dropout mask, so the forward pass is replayable.
inline Tensor dropout(const Tensor& x, std::vector<double> mask) {
  if (mask.size() != x.numel()) throw DimensionError("dropout: mask size differs from input");
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return make_result(OpKind::Dropout, x.shape(), std::move(out), {x}, [mask = std::move(mask)](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Losses

/// Mean binary cross-entropy on logits against targets in [0,1].
inline Tensor binary_cross_entropy(const Tensor& logits, std::vector<double> targets) {
  if (targets.size() != logits.numel()) throw DimensionError("binary_cross_entropy: target count differs");
  const double n = static_cast<double>(targets.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double z = logits[i];
    acc += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::fabs(z)));
  }
  return make_result(OpKind::BinaryCrossEntropy, {1}, {acc / n}, {logits},
                     [n, targets = std::move(targets)](detail::Node& self) {
                       auto& Z = detail::input(self, 0);
                       if (!Z.requires_grad) return;
                       Z.ensure_grad();
                       for (std::size_t i = 0; i < targets.size(); ++i)
                         Z.grad[i] += self.grad[0] * (sigmoid_value(Z.data[i]) - targets[i]) / n;
                     });
}

/// Mean softmax cross-entropy of logits [n,c] against integer labels.
inline Tensor cross_entropy(const Tensor& logits, std::vector<int> labels) {
  detail::require_matrix(logits, "cross_entropy");
  const auto r = logits.rows(), c = logits.cols();
  if (labels.size() != r) throw DimensionError("cross_entropy: label count differs from rows");
  std::vector<double> prob(r * c);
  double acc = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw DimensionError("cross_entropy: label out of range");
    }
    double m = logits[i * c];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, logits[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(logits[i * c + j] - m);
    const double lse = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) prob[i * c + j] = std::exp(logits[i * c + j] - lse);
    acc += lse - logits[i * c + static_cast<std::size_t>(labels[i])];
  }
  const double n = static_cast<double>(r);
  return make_result(OpKind::CrossEntropy, {1}, {acc / n}, {logits},
                     [r, c, n, labels = std::move(labels), prob = std::move(prob)](detail::Node& self) {
                       auto& Z = detail::input(self, 0);
                       if (!Z.requires_grad) return;
                       Z.ensure_grad();
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) {
                           const double y = static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0;
                           Z.grad[i * c + j] += self.grad[0] * (prob[i * c + j] - y) / n;
                         }
                     });
}

/// Element i of x as a one-element tensor.
inline Tensor element(const Tensor& x, std::size_t i) {
  if (i >= x.numel()) throw DimensionError("element: index out of range");
  return make_result(OpKind::Element, {1}, {x[i]}, {x}, [i](detail::Node& self) {
    auto& X = detail::input(self, 0);
    if (!X.requires_grad) return;
    X.ensure_grad();
    X.grad[i] += self.grad[0];
  });
}

// ---------------------------------------------------------------------------

/// Uniform dispatch over the kinds whose only inputs are tensors.
inline Tensor forward_op(OpKind kind, std::span<const Tensor> in) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw ContractError(std::string(op_name(kind)) + " expects " + std::to_string(n) + " inputs");
    }
  };
  if (in.empty()) throw ContractError("forward_op: at least one input required");
  switch (kind) {
    case OpKind::MatMul: need(2); return matmul(in[0], in[1]);
    case OpKind::Transpose: need(1); return transpose(in[0]);
    case OpKind::Add: need(2); return add(in[0], in[1]);
    case OpKind::Subtract: need(2); return sub(in[0], in[1]);
    case OpKind::Multiply: need(2); return mul(in[0], in[1]);
    case OpKind::Scale: need(2); return scale(in[0], in[1]);
    case OpKind::AddRowBias: need(2); return add_row_bias(in[0], in[1]);
    case OpKind::CircularCorrelation: need(2); return circular_correlation(in[0], in[1]);
    case OpKind::Concat: return concat(std::vector<Tensor>(in.begin(), in.end()));
    case OpKind::ConcatRows: return concat_rows(std::vector<Tensor>(in.begin(), in.end()));
    case OpKind::Maximum: need(2); return maximum(in[0], in[1]);
    case OpKind::Abs: need(1); return abs(in[0]);
    case OpKind::Sum: need(1); return sum(in[0]);
    case OpKind::Mean: need(1); return mean(in[0]);
    case OpKind::Softmax: need(1); return softmax(in[0]);
    case OpKind::Log: need(1); return log(in[0]);
    case OpKind::Exp: need(1); return exp(in[0]);
    case OpKind::Sigmoid: need(1); return sigmoid(in[0]);
    case OpKind::Tanh: need(1); return tanh(in[0]);
    case OpKind::Relu: need(1); return relu(in[0]);
    case OpKind::Prelu: need(2); return prelu(in[0], in[1]);
    default:
      throw ContractError(std::string("forward_op: ") + op_name(kind) + " needs non-tensor arguments; call it directly");
  }
}

/// Glorot-uniform matrix in +-sqrt(6/(fan_in+fan_out)).
inline Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng, bool requires_grad = true) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::matrix(fan_in, fan_out, std::move(v), requires_grad);
}

}  // namespace autogel
