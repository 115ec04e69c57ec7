#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mlap/error.hpp"
#include "mlap/rng.hpp"

namespace mlap {

enum class Mode { train, eval };

// Dense row-major matrix of doubles with a gradient buffer of the same
// shape. Rank <= 2 everywhere: scalars are 1x1, row vectors 1xN.
// Tensor is a cheap shared handle; copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  Tensor(int rows, int cols, bool requires_grad = false) : d_(std::make_shared<Data>()) {
    if (rows < 0 || cols < 0) throw ConfigError("tensor: negative shape");
    d_->rows = rows;
    d_->cols = cols;
    d_->values.assign(static_cast<size_t>(rows) * cols, 0.0);
    d_->grad.assign(static_cast<size_t>(rows) * cols, 0.0);
    d_->requires_grad = requires_grad;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    Tensor t(1, 1, requires_grad);
    t.data()[0] = v;
    return t;
  }

  static Tensor row(std::initializer_list<double> vs, bool requires_grad = false) {
    Tensor t(1, static_cast<int>(vs.size()), requires_grad);
    std::copy(vs.begin(), vs.end(), t.data());
    return t;
  }

  static Tensor matrix(int rows, int cols, std::initializer_list<double> vs,
                       bool requires_grad = false) {
    Tensor t(rows, cols, requires_grad);
    if (vs.size() != t.size()) throw ConfigError("tensor: initializer size mismatch");
    std::copy(vs.begin(), vs.end(), t.data());
    return t;
  }

  // Copies of a Tensor alias the same storage, so constness of the handle
  // follows pointer semantics: accessors are const and return mutable views.
  bool defined() const { return static_cast<bool>(d_); }
  int rows() const { return d_->rows; }
  int cols() const { return d_->cols; }
  size_t size() const { return d_->values.size(); }

  double* data() const { return d_->values.data(); }
  double* grad() const { return d_->grad.data(); }

  std::span<double> values() const { return d_->values; }
  std::span<double> grads() const { return d_->grad; }

  double& at(int r, int c) const { return d_->values[static_cast<size_t>(r) * d_->cols + c]; }
  double& grad_at(int r, int c) const { return d_->grad[static_cast<size_t>(r) * d_->cols + c]; }

  double item() const {
    if (size() != 1) throw UsageError("item: tensor is not a scalar");
    return d_->values[0];
  }
  double grad_item() const {
    if (size() != 1) throw UsageError("grad_item: tensor is not a scalar");
    return d_->grad[0];
  }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool b) { d_->requires_grad = b; }

  void fill(double v) const { std::fill(d_->values.begin(), d_->values.end(), v); }
  void zero_grad() const { std::fill(d_->grad.begin(), d_->grad.end(), 0.0); }

  bool same_storage(const Tensor& o) const { return d_ == o.d_; }

 private:
  struct Data {
    int rows = 0, cols = 0;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
};

namespace detail {

inline std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << t.rows() << "x" << t.cols();
  return os.str();
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                      shape_str(b));
  }
}

// C += A * B with A [m x k], B [k x n]. ikj order keeps the inner loop
// contiguous in both B and C.
inline void matmul_accum(const double* a, int m, int k, const double* b, int n, double* c) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T with A [m x k], B [n x k]. Row-dot form.
inline void matmul_nt_accum(const double* a, int m, int k, const double* b, int n, double* c) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] += acc;
    }
  }
}

// C += A^T * B with A [m x k], B [m x n], C [k x n].
inline void matmul_tn_accum(const double* a, int m, int k, const double* b, int n, double* c) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    const double* brow = b + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      double* crow = c + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

// Records every primitive applied to tensors and replays the corresponding
// backward rules in reverse order. One tape per forward/backward pass;
// never shared across threads.
class Tape {
 public:
  // ---- elementwise and linear-algebra primitives ----

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
      throw ConfigError("matmul: shape mismatch " + detail::shape_str(a) + " * " +
                        detail::shape_str(b));
    Tensor out(a.rows(), b.cols());
    detail::matmul_accum(a.data(), a.rows(), a.cols(), b.data(), b.cols(), out.data());
    record([a, b, out]() mutable {
      // dA += dOut * B^T ; dB += A^T * dOut
      detail::matmul_nt_accum(out.grad(), out.rows(), out.cols(), b.data(), b.rows(), a.grad());
      detail::matmul_tn_accum(a.data(), a.rows(), a.cols(), out.grad(), out.cols(), b.grad());
    });
    return out;
  }

  // a * b^T with b stored row-major [n x k]; used for heads whose class
  // matrix is stored one class per row.
  Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols())
      throw ConfigError("matmul_nt: shape mismatch " + detail::shape_str(a) + " *t " +
                        detail::shape_str(b));
    Tensor out(a.rows(), b.rows());
    detail::matmul_nt_accum(a.data(), a.rows(), a.cols(), b.data(), b.rows(), out.data());
    record([a, b, out]() mutable {
      // dA += dOut * B ; dB += dOut^T * A
      detail::matmul_accum(out.grad(), out.rows(), out.cols(), b.data(), b.cols(), a.grad());
      detail::matmul_tn_accum(out.grad(), out.rows(), out.cols(), a.data(), a.cols(), b.grad());
    });
    return out;
  }

  Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("add", a, b);
    Tensor out(a.rows(), a.cols());
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    record([a, b, out]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i) {
        a.grad()[i] += out.grad()[i];
        b.grad()[i] += out.grad()[i];
      }
    });
    return out;
  }

  Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("sub", a, b);
    Tensor out(a.rows(), a.cols());
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    record([a, b, out]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i) {
        a.grad()[i] += out.grad()[i];
        b.grad()[i] -= out.grad()[i];
      }
    });
    return out;
  }

  Tensor hadamard(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("hadamard", a, b);
    Tensor out(a.rows(), a.cols());
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    record([a, b, out]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i) {
        a.grad()[i] += out.grad()[i] * b.data()[i];
        b.grad()[i] += out.grad()[i] * a.data()[i];
      }
    });
    return out;
  }

  // x [m x n] + row [1 x n], added to every row.
  Tensor broadcast_add_row(const Tensor& x, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != x.cols())
      throw ConfigError("broadcast_add_row: shape mismatch " + detail::shape_str(x) + " + " +
                        detail::shape_str(row));
    Tensor out(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j) + row.at(0, j);
    record([x, row, out]() mutable {
      for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) {
          x.grad_at(i, j) += out.grad_at(i, j);
          row.grad_at(0, j) += out.grad_at(i, j);
        }
    });
    return out;
  }

  // row [1 x n] replicated m times.
  Tensor broadcast_rows(const Tensor& row, int m) {
    if (row.rows() != 1) throw ConfigError("broadcast_rows: input must be a row vector");
    Tensor out(m, row.cols());
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < row.cols(); ++j) out.at(i, j) = row.at(0, j);
    record([row, out]() mutable {
      for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) row.grad_at(0, j) += out.grad_at(i, j);
    });
    return out;
  }

  // x [m x n] scaled per column by row [1 x n].
  Tensor mul_row(const Tensor& x, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != x.cols())
      throw ConfigError("mul_row: shape mismatch " + detail::shape_str(x) + " * " +
                        detail::shape_str(row));
    Tensor out(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j) * row.at(0, j);
    record([x, row, out]() mutable {
      for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) {
          x.grad_at(i, j) += out.grad_at(i, j) * row.at(0, j);
          row.grad_at(0, j) += out.grad_at(i, j) * x.at(i, j);
        }
    });
    return out;
  }

  Tensor relu(const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    record([x, out]() mutable {
      // subgradient 0 at 0
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i)
        if (x.data()[i] > 0.0) x.grad()[i] += out.grad()[i];
    });
    return out;
  }

  Tensor exp(const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = std::exp(x.data()[i]);
    record([x, out]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i) x.grad()[i] += out.grad()[i] * out.data()[i];
    });
    return out;
  }

  Tensor log(const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = std::log(x.data()[i]);
    record([x, out]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i) x.grad()[i] += out.grad()[i] / x.data()[i];
    });
    return out;
  }

  Tensor sigmoid(const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) {
      const double v = x.data()[i];
      out.data()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    record([x, out]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i) {
        const double s = out.data()[i];
        x.grad()[i] += out.grad()[i] * s * (1.0 - s);
      }
    });
    return out;
  }

  // 1 / sqrt(x + shift), elementwise.
  Tensor rsqrt_shifted(const Tensor& x, double shift) {
    Tensor out(x.rows(), x.cols());
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = 1.0 / std::sqrt(x.data()[i] + shift);
    record([x, out]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i) {
        const double r = out.data()[i];
        x.grad()[i] += out.grad()[i] * (-0.5) * r * r * r;
      }
    });
    return out;
  }

  // Softmax across each row, stabilised by subtracting the row max.
  Tensor row_softmax(const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
      double mx = x.at(i, 0);
      for (int j = 1; j < x.cols(); ++j) mx = std::max(mx, x.at(i, j));
      double sum = 0.0;
      for (int j = 0; j < x.cols(); ++j) {
        const double e = std::exp(x.at(i, j) - mx);
        out.at(i, j) = e;
        sum += e;
      }
      for (int j = 0; j < x.cols(); ++j) out.at(i, j) /= sum;
    }
    record([x, out]() mutable {
      for (int i = 0; i < out.rows(); ++i) {
        double dot = 0.0;
        for (int j = 0; j < out.cols(); ++j) dot += out.grad_at(i, j) * out.at(i, j);
        for (int j = 0; j < out.cols(); ++j)
          x.grad_at(i, j) += out.at(i, j) * (out.grad_at(i, j) - dot);
      }
    });
    return out;
  }

  // Scalar sum of all entries.
  Tensor sum(const Tensor& x) {
    Tensor out(1, 1);
    double acc = 0.0;
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) acc += x.data()[i];
    out.data()[0] = acc;
    record([x, out]() mutable {
      const double g = out.grad()[0];
      const size_t n = x.size();
      for (size_t i = 0; i < n; ++i) x.grad()[i] += g;
    });
    return out;
  }

  // Mean of the rows: [m x n] -> [1 x n].
  Tensor mean_rows(const Tensor& x) {
    if (x.rows() == 0) throw ConfigError("mean_rows: empty input");
    Tensor out(1, x.cols());
    for (int j = 0; j < x.cols(); ++j) {
      double acc = 0.0;
      for (int i = 0; i < x.rows(); ++i) acc += x.at(i, j);
      out.at(0, j) = acc / x.rows();
    }
    record([x, out]() mutable {
      const double inv = 1.0 / x.rows();
      for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) x.grad_at(i, j) += out.grad_at(0, j) * inv;
    });
    return out;
  }

  Tensor concat_cols(std::span<const Tensor> xs) {
    if (xs.empty()) throw ConfigError("concat_cols: empty input list");
    const int m = xs[0].rows();
    int total = 0;
    for (const Tensor& t : xs) {
      if (t.rows() != m)
        throw ConfigError("concat_cols: row mismatch " + detail::shape_str(xs[0]) + " vs " +
                          detail::shape_str(t));
      total += t.cols();
    }
    Tensor out(m, total);
    int off = 0;
    for (const Tensor& t : xs) {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < t.cols(); ++j) out.at(i, off + j) = t.at(i, j);
      off += t.cols();
    }
    std::vector<Tensor> xs_copy(xs.begin(), xs.end());
    record([xs_copy, out]() mutable {
      int off = 0;
      for (Tensor& t : xs_copy) {
        for (int i = 0; i < t.rows(); ++i)
          for (int j = 0; j < t.cols(); ++j) t.grad_at(i, j) += out.grad_at(i, off + j);
        off += t.cols();
      }
    });
    return out;
  }

  // Elementwise max over a set of same-shape tensors. Ties route the
  // gradient to the earliest tensor attaining the max.
  Tensor rowwise_max_over_set(std::span<const Tensor> xs) {
    if (xs.empty()) throw ConfigError("rowwise_max_over_set: empty input list");
    for (const Tensor& t : xs) detail::require_same_shape("rowwise_max_over_set", xs[0], t);
    Tensor out(xs[0].rows(), xs[0].cols());
    std::vector<int> argmax(out.size(), 0);
    const size_t n = out.size();
    for (size_t i = 0; i < n; ++i) {
      double best = xs[0].data()[i];
      int arg = 0;
      for (size_t k = 1; k < xs.size(); ++k) {
        if (xs[k].data()[i] > best) {
          best = xs[k].data()[i];
          arg = static_cast<int>(k);
        }
      }
      out.data()[i] = best;
      argmax[i] = arg;
    }
    std::vector<Tensor> xs_copy(xs.begin(), xs.end());
    record([xs_copy, out, argmax = std::move(argmax)]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i) xs_copy[argmax[i]].grad()[i] += out.grad()[i];
    });
    return out;
  }

  // x scaled by a single entry of s (flat index). The gradient of the
  // scale accumulates into that entry only.
  Tensor scalar_mul(const Tensor& x, const Tensor& s, int index = 0) {
    if (index < 0 || static_cast<size_t>(index) >= s.size())
      throw ConfigError("scalar_mul: index out of range");
    Tensor out(x.rows(), x.cols());
    const double sv = s.data()[index];
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * sv;
    record([x, s, out, index]() mutable {
      const double sv = s.data()[index];
      double acc = 0.0;
      const size_t n = x.size();
      for (size_t i = 0; i < n; ++i) {
        x.grad()[i] += out.grad()[i] * sv;
        acc += out.grad()[i] * x.data()[i];
      }
      s.grad()[index] += acc;
    });
    return out;
  }

  // ---- gather / segment primitives ----

  // Rows of x selected by index, duplicates allowed; the backward pass
  // scatter-adds, so a row listed twice receives twice the gradient.
  Tensor gather_rows(const Tensor& x, std::span<const int> index) {
    Tensor out(static_cast<int>(index.size()), x.cols());
    for (size_t i = 0; i < index.size(); ++i) {
      const int r = index[i];
      if (r < 0 || r >= x.rows()) throw ConfigError("gather_rows: index out of range");
      for (int j = 0; j < x.cols(); ++j) out.at(static_cast<int>(i), j) = x.at(r, j);
    }
    std::vector<int> idx(index.begin(), index.end());
    record([x, out, idx = std::move(idx)]() mutable {
      for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < x.cols(); ++j)
          x.grad_at(idx[i], j) += out.grad_at(static_cast<int>(i), j);
    });
    return out;
  }

  // Per-segment row sums: rows of x whose segment id is g accumulate into
  // output row g. Segments may appear in any order; absent segments yield
  // zero rows (isolated nodes in message passing).
  Tensor segment_sum(const Tensor& x, std::span<const int> segments, int num_segments) {
    check_segments("segment_sum", x, segments, num_segments);
    Tensor out(num_segments, x.cols());
    for (size_t i = 0; i < segments.size(); ++i)
      for (int j = 0; j < x.cols(); ++j) out.at(segments[i], j) += x.at(static_cast<int>(i), j);
    std::vector<int> seg(segments.begin(), segments.end());
    record([x, out, seg = std::move(seg)]() mutable {
      for (size_t i = 0; i < seg.size(); ++i)
        for (int j = 0; j < x.cols(); ++j)
          x.grad_at(static_cast<int>(i), j) += out.grad_at(seg[i], j);
    });
    return out;
  }

  // Per-segment row means. Every segment id must occur at least once.
  Tensor segment_mean(const Tensor& x, std::span<const int> segments, int num_segments) {
    check_segments("segment_mean", x, segments, num_segments);
    std::vector<int> counts(num_segments, 0);
    for (int s : segments) counts[s]++;
    for (int g = 0; g < num_segments; ++g)
      if (counts[g] == 0) throw DataError("segment_mean: empty segment " + std::to_string(g));
    Tensor out(num_segments, x.cols());
    for (size_t i = 0; i < segments.size(); ++i)
      for (int j = 0; j < x.cols(); ++j) out.at(segments[i], j) += x.at(static_cast<int>(i), j);
    for (int g = 0; g < num_segments; ++g)
      for (int j = 0; j < x.cols(); ++j) out.at(g, j) /= counts[g];
    std::vector<int> seg(segments.begin(), segments.end());
    record([x, out, seg = std::move(seg), counts = std::move(counts)]() mutable {
      for (size_t i = 0; i < seg.size(); ++i) {
        const double inv = 1.0 / counts[seg[i]];
        for (int j = 0; j < x.cols(); ++j)
          x.grad_at(static_cast<int>(i), j) += out.grad_at(seg[i], j) * inv;
      }
    });
    return out;
  }

  // Softmax-weighted row sum within each segment: attention pooling over a
  // batch. scores is [N x 1]; the softmax is taken within each segment and
  // stabilised by the per-segment max. Differentiable in h and scores.
  Tensor segment_softmax_weighted_sum(const Tensor& h, const Tensor& scores,
                                      std::span<const int> segments, int num_segments) {
    check_segments("segment_softmax_weighted_sum", h, segments, num_segments);
    if (scores.rows() != h.rows() || scores.cols() != 1)
      throw ConfigError("segment_softmax_weighted_sum: scores must be " +
                        std::to_string(h.rows()) + "x1, got " + detail::shape_str(scores));
    const int n = h.rows();
    std::vector<int> counts(num_segments, 0);
    for (int s : segments) counts[s]++;
    for (int g = 0; g < num_segments; ++g)
      if (counts[g] == 0)
        throw DataError("segment_softmax_weighted_sum: empty segment " + std::to_string(g));

    std::vector<double> seg_max(num_segments, -std::numeric_limits<double>::infinity());
    for (int i = 0; i < n; ++i) seg_max[segments[i]] = std::max(seg_max[segments[i]], scores.at(i, 0));
    std::vector<double> weights(n, 0.0), seg_norm(num_segments, 0.0);
    for (int i = 0; i < n; ++i) {
      weights[i] = std::exp(scores.at(i, 0) - seg_max[segments[i]]);
      seg_norm[segments[i]] += weights[i];
    }
    for (int i = 0; i < n; ++i) weights[i] /= seg_norm[segments[i]];

    Tensor out(num_segments, h.cols());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < h.cols(); ++j) out.at(segments[i], j) += weights[i] * h.at(i, j);

    std::vector<int> seg(segments.begin(), segments.end());
    record([h, scores, out, seg = std::move(seg), weights = std::move(weights),
            num_segments]() mutable {
      const int n = h.rows();
      // u_i = dOut_g . h_i ; ubar_g = sum_i a_i u_i
      std::vector<double> u(n, 0.0), ubar(num_segments, 0.0);
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < h.cols(); ++j) acc += out.grad_at(seg[i], j) * h.at(i, j);
        u[i] = acc;
        ubar[seg[i]] += weights[i] * acc;
      }
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < h.cols(); ++j)
          h.grad_at(i, j) += weights[i] * out.grad_at(seg[i], j);
        scores.grad_at(i, 0) += weights[i] * (u[i] - ubar[seg[i]]);
      }
    });
    return out;
  }

  // ---- regularisation ----

  // Inverted dropout: in train mode each entry is zeroed with probability p
  // and survivors are scaled by 1/(1-p); eval mode is the identity.
  Tensor dropout(const Tensor& x, double p, Mode mode, RngStream& rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must be in [0, 1)");
    if (mode == Mode::eval || p == 0.0) {
      Tensor out(x.rows(), x.cols());
      std::copy(x.data(), x.data() + x.size(), out.data());
      record([x, out]() mutable {
        const size_t n = out.size();
        for (size_t i = 0; i < n; ++i) x.grad()[i] += out.grad()[i];
      });
      return out;
    }
    const double scale = 1.0 / (1.0 - p);
    Tensor out(x.rows(), x.cols());
    std::vector<unsigned char> keep(x.size());
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) {
      keep[i] = rng.next_double() >= p ? 1 : 0;
      out.data()[i] = keep[i] ? x.data()[i] * scale : 0.0;
    }
    record([x, out, keep = std::move(keep), scale]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i)
        if (keep[i]) x.grad()[i] += out.grad()[i] * scale;
    });
    return out;
  }

  // ---- fused losses (log-sum-exp form, no probability clamping) ----

  // Mean over rows of -log softmax(logits)[label].
  Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (static_cast<int>(labels.size()) != logits.rows())
      throw ConfigError("softmax_cross_entropy: label count mismatch");
    const int g = logits.rows(), c = logits.cols();
    for (int i = 0; i < g; ++i)
      if (labels[i] < 0 || labels[i] >= c)
        throw DataError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                        " out of range for " + std::to_string(c) + " classes");
    Tensor out(1, 1);
    Tensor probs(g, c);  // softmax cached for backward
    double loss = 0.0;
    for (int i = 0; i < g; ++i) {
      double mx = logits.at(i, 0);
      for (int j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
      double sum = 0.0;
      for (int j = 0; j < c; ++j) {
        const double e = std::exp(logits.at(i, j) - mx);
        probs.at(i, j) = e;
        sum += e;
      }
      for (int j = 0; j < c; ++j) probs.at(i, j) /= sum;
      loss += (mx + std::log(sum)) - logits.at(i, labels[i]);
    }
    out.data()[0] = loss / g;
    std::vector<int> y(labels.begin(), labels.end());
    record([logits, probs, out, y = std::move(y)]() mutable {
      const double gl = out.grad()[0] / logits.rows();
      for (int i = 0; i < logits.rows(); ++i)
        for (int j = 0; j < logits.cols(); ++j)
          logits.grad_at(i, j) += gl * (probs.at(i, j) - (y[i] == j ? 1.0 : 0.0));
    });
    return out;
  }

  // Mean binary cross-entropy on logits [G x 1] with labels in {0, 1}.
  Tensor binary_cross_entropy_logits(const Tensor& logits, std::span<const int> labels) {
    if (logits.cols() != 1 || static_cast<int>(labels.size()) != logits.rows())
      throw ConfigError("binary_cross_entropy_logits: shape mismatch");
    const int g = logits.rows();
    for (int i = 0; i < g; ++i)
      if (labels[i] != 0 && labels[i] != 1)
        throw DataError("binary_cross_entropy_logits: label must be 0 or 1");
    Tensor out(1, 1);
    double loss = 0.0;
    for (int i = 0; i < g; ++i) {
      const double t = logits.at(i, 0);
      loss += std::max(t, 0.0) - t * labels[i] + std::log1p(std::exp(-std::abs(t)));
    }
    out.data()[0] = loss / g;
    std::vector<int> y(labels.begin(), labels.end());
    record([logits, out, y = std::move(y)]() mutable {
      const double gl = out.grad()[0] / logits.rows();
      for (int i = 0; i < logits.rows(); ++i) {
        const double t = logits.at(i, 0);
        const double s = t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
        logits.grad_at(i, 0) += gl * (s - y[i]);
      }
    });
    return out;
  }

  // ---- reverse pass ----

  // Seeds d(loss)/d(loss) = 1 and replays the recorded backward rules in
  // reverse. Gradients accumulate; callers zero parameter grads between
  // steps (adam_step does this).
  void backward(const Tensor& loss) {
    if (loss.size() != 1) throw UsageError("backward: loss must be a scalar");
    loss.grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  void clear() { nodes_.clear(); }
  size_t num_nodes() const { return nodes_.size(); }

 private:
  void check_segments(const char* op, const Tensor& x, std::span<const int> segments,
                      int num_segments) {
    if (static_cast<int>(segments.size()) != x.rows())
      throw ConfigError(std::string(op) + ": segment count " + std::to_string(segments.size()) +
                        " != row count " + std::to_string(x.rows()));
    for (int s : segments)
      if (s < 0 || s >= num_segments)
        throw ConfigError(std::string(op) + ": segment id " + std::to_string(s) +
                          " out of range [0, " + std::to_string(num_segments) + ")");
  }

  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  std::vector<std::function<void()>> nodes_;
};

}  // namespace mlap
