#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include <cblas.h>

#include "gase/common.hpp"
#include "gase/rng.hpp"

namespace gase {

// Logit sentinel used for masked positions before exponentiation; the
// normalization step then forces exact zeros so no NaN can leak out.
inline constexpr double kMaskSentinel = -1e30;
inline constexpr double kBnEps = 1e-5;

namespace detail {

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

}  // namespace detail

// A dense row-major matrix node in a reverse-mode tape. Vectors are 1×n or
// n×1 matrices; scalars are 1×1. Handles are shared_ptr-backed so graphs
// stay alive for backward() and die when the last result goes out of scope.
template <typename T>
class Tensor {
 public:
  struct Node {
    int rows = 0, cols = 0;
    std::vector<T> val;
    std::vector<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> back;

    std::vector<T>& g() {
      if (grad.empty()) grad.assign(val.size(), T(0));
      return grad;
    }
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->val.assign(static_cast<std::size_t>(rows) * cols, T(0));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(int rows, int cols, std::vector<T> data,
                     bool requires_grad = false) {
    if (static_cast<std::size_t>(rows) * cols != data.size())
      throw DimensionError("tensor data size does not match shape");
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->val = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from(1, 1, {v}, requires_grad);
  }

  bool valid() const { return n_ != nullptr; }
  int rows() const { return n_->rows; }
  int cols() const { return n_->cols; }
  std::size_t size() const { return n_->val.size(); }
  bool requires_grad() const { return n_->requires_grad; }
  const std::vector<T>& data() const { return n_->val; }
  std::vector<T>& mutable_data() { return n_->val; }
  const std::vector<T>& grad() const { return n_->grad; }
  std::vector<T>& mutable_grad() { return n_->grad; }
  T at(int r, int c) const { return n_->val[static_cast<std::size_t>(r) * n_->cols + c]; }
  T item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor");
    return n_->val[0];
  }

  void zero_grad() { n_->grad.clear(); }

  // Value-copying detach; the result is a fresh leaf.
  Tensor detach(bool requires_grad = false) const {
    auto n = std::make_shared<Node>();
    n->rows = rows();
    n->cols = cols();
    n->val = n_->val;
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  std::shared_ptr<Node> node() const { return n_; }

 private:
  std::shared_ptr<Node> n_;
};

namespace detail {

template <typename T>
Tensor<T> make_result(int rows, int cols,
                      std::vector<std::shared_ptr<typename Tensor<T>::Node>> parents) {
  auto n = std::make_shared<typename Tensor<T>::Node>();
  n->rows = rows;
  n->cols = cols;
  n->val.assign(static_cast<std::size_t>(rows) * cols, T(0));
  for (auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->parents = std::move(parents);
  return Tensor<T>(std::move(n));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Core ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions disagree: " +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
  int m = a.rows(), k = a.cols(), n = b.cols();
  auto out = detail::make_result<T>(m, n, {a.node(), b.node()});
  detail::gemm(false, false, m, n, k, T(1), a.data().data(), k,
               b.data().data(), n, T(0), out.mutable_data().data(), n);
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->back = [an, bn, m, n, k](typename Tensor<T>::Node& self) {
      if (an->requires_grad)
        detail::gemm(false, true, m, k, n, T(1), self.grad.data(), n,
                     bn->val.data(), n, T(1), an->g().data(), k);
      if (bn->requires_grad)
        detail::gemm(true, false, k, n, m, T(1), an->val.data(), k,
                     self.grad.data(), n, T(1), bn->g().data(), n);
    };
  }
  return out;
}

// a · bᵀ — the natural layout for row-major X·Wᵀ projections.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: inner dimensions disagree: " +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()));
  int m = a.rows(), k = a.cols(), n = b.rows();
  auto out = detail::make_result<T>(m, n, {a.node(), b.node()});
  detail::gemm(false, true, m, n, k, T(1), a.data().data(), k,
               b.data().data(), k, T(0), out.mutable_data().data(), n);
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->back = [an, bn, m, n, k](typename Tensor<T>::Node& self) {
      if (an->requires_grad)
        detail::gemm(false, false, m, k, n, T(1), self.grad.data(), n,
                     bn->val.data(), k, T(1), an->g().data(), k);
      if (bn->requires_grad)
        detail::gemm(true, false, n, k, m, T(1), self.grad.data(), n,
                     an->val.data(), k, T(1), bn->g().data(), k);
    };
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  int m = a.rows(), n = a.cols();
  auto out = detail::make_result<T>(n, m, {a.node()});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.mutable_data()[static_cast<std::size_t>(j) * m + i] = a.at(i, j);
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->back = [an, m, n](typename Tensor<T>::Node& self) {
      auto& g = an->g();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          g[static_cast<std::size_t>(i) * n + j] +=
              self.grad[static_cast<std::size_t>(j) * m + i];
    };
  }
  return out;
}

namespace detail {

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> binary_elementwise(const Tensor<T>& a, const Tensor<T>& b,
                             const char* name, FwdFn fwd, BwdFn bwd) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(name) + ": shape mismatch");
  auto out = make_result<T>(a.rows(), a.cols(), {a.node(), b.node()});
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.mutable_data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->back = [an, bn, bwd](typename Tensor<T>::Node& self) {
      for (std::size_t i = 0; i < self.val.size(); ++i)
        bwd(self.grad[i], an->val[i], bn->val[i],
            an->requires_grad ? &an->g()[i] : nullptr,
            bn->requires_grad ? &bn->g()[i] : nullptr);
    };
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      a, b, "add", [](T x, T y) { return x + y; },
      [](T g, T, T, T* ga, T* gb) {
        if (ga) *ga += g;
        if (gb) *gb += g;
      });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      a, b, "sub", [](T x, T y) { return x - y; },
      [](T g, T, T, T* ga, T* gb) {
        if (ga) *ga += g;
        if (gb) *gb -= g;
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      a, b, "mul", [](T x, T y) { return x * y; },
      [](T g, T x, T y, T* ga, T* gb) {
        if (ga) *ga += g * y;
        if (gb) *gb += g * x;
      });
}

template <typename T>
Tensor<T> cdiv(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      a, b, "cdiv", [](T x, T y) { return x / y; },
      [](T g, T x, T y, T* ga, T* gb) {
        if (ga) *ga += g / y;
        if (gb) *gb -= g * x / (y * y);
      });
}

namespace detail {

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary_elementwise(const Tensor<T>& a, FwdFn fwd, BwdFn bwd) {
  auto out = make_result<T>(a.rows(), a.cols(), {a.node()});
  const auto& av = a.data();
  auto& ov = out.mutable_data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i]);
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->back = [an, bwd](typename Tensor<T>::Node& self) {
      auto& g = an->g();
      for (std::size_t i = 0; i < self.val.size(); ++i)
        g[i] += bwd(self.grad[i], an->val[i], self.val[i]);
    };
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  return detail::unary_elementwise(
      a, [c](T x) { return x * c; }, [c](T g, T, T) { return g * c; });
}

template <typename T>
Tensor<T> add_const(const Tensor<T>& a, T c) {
  return detail::unary_elementwise(
      a, [c](T x) { return x + c; }, [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary_elementwise(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T g, T x, T) { return x > T(0) ? g : T(0); });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& a) {
  return detail::unary_elementwise(
      a, [](T x) { return std::tanh(x); },
      [](T g, T, T y) { return g * (T(1) - y * y); });
}

template <typename T>
Tensor<T> log_op(const Tensor<T>& a) {
  return detail::unary_elementwise(
      a, [](T x) { return std::log(x); }, [](T g, T x, T) { return g / x; });
}

template <typename T>
Tensor<T> csqrt(const Tensor<T>& a) {
  return detail::unary_elementwise(
      a, [](T x) { return std::sqrt(x); },
      [](T g, T, T y) { return g / (T(2) * y); });
}

// Multiply every entry of a by the 1×1 tensor s (gradient flows to both).
template <typename T>
Tensor<T> mul_scalar_t(const Tensor<T>& a, const Tensor<T>& s) {
  if (s.size() != 1) throw DimensionError("mul_scalar_t: s must be 1x1");
  auto out = detail::make_result<T>(a.rows(), a.cols(), {a.node(), s.node()});
  T sv = s.data()[0];
  const auto& av = a.data();
  auto& ov = out.mutable_data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * sv;
  if (out.requires_grad()) {
    auto an = a.node(), sn = s.node();
    out.node()->back = [an, sn, sv](typename Tensor<T>::Node& self) {
      if (an->requires_grad) {
        auto& g = an->g();
        for (std::size_t i = 0; i < self.val.size(); ++i)
          g[i] += self.grad[i] * sv;
      }
      if (sn->requires_grad) {
        T acc = T(0);
        for (std::size_t i = 0; i < self.val.size(); ++i)
          acc += self.grad[i] * an->val[i];
        sn->g()[0] += acc;
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty list");
  int rows = parts[0].rows();
  int cols = 0;
  std::vector<std::shared_ptr<typename Tensor<T>::Node>> parents;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row mismatch");
    cols += p.cols();
    parents.push_back(p.node());
  }
  auto out = detail::make_result<T>(rows, cols, parents);
  auto& ov = out.mutable_data();
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < rows; ++i)
      std::copy_n(p.data().data() + static_cast<std::size_t>(i) * p.cols(),
                  p.cols(), ov.data() + static_cast<std::size_t>(i) * cols + off);
    off += p.cols();
  }
  if (out.requires_grad()) {
    auto ps = parents;
    out.node()->back = [ps, rows, cols](typename Tensor<T>::Node& self) {
      int off = 0;
      for (auto& p : ps) {
        if (p->requires_grad) {
          auto& g = p->g();
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < p->cols; ++j)
              g[static_cast<std::size_t>(i) * p->cols + j] +=
                  self.grad[static_cast<std::size_t>(i) * cols + off + j];
        }
        off += p->cols;
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: empty list");
  int cols = parts[0].cols();
  int rows = 0;
  std::vector<std::shared_ptr<typename Tensor<T>::Node>> parents;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: col mismatch");
    rows += p.rows();
    parents.push_back(p.node());
  }
  auto out = detail::make_result<T>(rows, cols, parents);
  auto& ov = out.mutable_data();
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), ov.begin() + off);
    off += p.data().size();
  }
  if (out.requires_grad()) {
    auto ps = parents;
    out.node()->back = [ps](typename Tensor<T>::Node& self) {
      std::size_t off = 0;
      for (auto& p : ps) {
        if (p->requires_grad) {
          auto& g = p->g();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
        }
        off += p->val.size();
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, int c0, int c1) {
  if (c0 < 0 || c1 > a.cols() || c0 >= c1)
    throw DimensionError("slice_cols: bad range");
  int rows = a.rows(), w = c1 - c0;
  auto out = detail::make_result<T>(rows, w, {a.node()});
  for (int i = 0; i < rows; ++i)
    std::copy_n(a.data().data() + static_cast<std::size_t>(i) * a.cols() + c0,
                w, out.mutable_data().data() + static_cast<std::size_t>(i) * w);
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->back = [an, c0, w](typename Tensor<T>::Node& self) {
      auto& g = an->g();
      for (int i = 0; i < self.rows; ++i)
        for (int j = 0; j < w; ++j)
          g[static_cast<std::size_t>(i) * an->cols + c0 + j] +=
              self.grad[static_cast<std::size_t>(i) * w + j];
    };
  }
  return out;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, int r0, int r1) {
  if (r0 < 0 || r1 > a.rows() || r0 >= r1)
    throw DimensionError("slice_rows: bad range");
  int cols = a.cols(), h = r1 - r0;
  auto out = detail::make_result<T>(h, cols, {a.node()});
  std::copy_n(a.data().data() + static_cast<std::size_t>(r0) * cols,
              static_cast<std::size_t>(h) * cols, out.mutable_data().data());
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->back = [an, r0](typename Tensor<T>::Node& self) {
      auto& g = an->g();
      std::size_t base = static_cast<std::size_t>(r0) * self.cols;
      for (std::size_t i = 0; i < self.val.size(); ++i)
        g[base + i] += self.grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> row(const Tensor<T>& a, int r) {
  return slice_rows(a, r, r + 1);
}

template <typename T>
Tensor<T> pick(const Tensor<T>& a, int r, int c) {
  if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols())
    throw DimensionError("pick: index out of range");
  auto out = detail::make_result<T>(1, 1, {a.node()});
  out.mutable_data()[0] = a.at(r, c);
  if (out.requires_grad()) {
    auto an = a.node();
    std::size_t idx = static_cast<std::size_t>(r) * a.cols() + c;
    out.node()->back = [an, idx](typename Tensor<T>::Node& self) {
      an->g()[idx] += self.grad[0];
    };
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  auto out = detail::make_result<T>(1, 1, {a.node()});
  T acc = T(0);
  for (T v : a.data()) acc += v;
  out.mutable_data()[0] = acc;
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->back = [an](typename Tensor<T>::Node& self) {
      auto& g = an->g();
      for (auto& v : g) v += self.grad[0];
    };
  }
  return out;
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  int m = a.rows(), n = a.cols();
  auto out = detail::make_result<T>(1, n, {a.node()});
  auto& ov = out.mutable_data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) ov[j] += a.at(i, j);
  for (int j = 0; j < n; ++j) ov[j] /= static_cast<T>(m);
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->back = [an, m, n](typename Tensor<T>::Node& self) {
      auto& g = an->g();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          g[static_cast<std::size_t>(i) * n + j] +=
              self.grad[j] / static_cast<T>(m);
    };
  }
  return out;
}

template <typename T>
Tensor<T> row_sums(const Tensor<T>& a) {
  int m = a.rows(), n = a.cols();
  auto out = detail::make_result<T>(m, 1, {a.node()});
  auto& ov = out.mutable_data();
  for (int i = 0; i < m; ++i) {
    T acc = T(0);
    for (int j = 0; j < n; ++j) acc += a.at(i, j);
    ov[i] = acc;
  }
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->back = [an, m, n](typename Tensor<T>::Node& self) {
      auto& g = an->g();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          g[static_cast<std::size_t>(i) * n + j] += self.grad[i];
    };
  }
  return out;
}

// out_ij = a_ij + v_j, v is 1×cols.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
  if (v.rows() != 1 || v.cols() != a.cols())
    throw DimensionError("add_rowvec: v must be 1 x cols(a)");
  auto out = detail::make_result<T>(a.rows(), a.cols(), {a.node(), v.node()});
  auto& ov = out.mutable_data();
  int m = a.rows(), n = a.cols();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      ov[static_cast<std::size_t>(i) * n + j] = a.at(i, j) + v.at(0, j);
  if (out.requires_grad()) {
    auto an = a.node(), vn = v.node();
    out.node()->back = [an, vn, m, n](typename Tensor<T>::Node& self) {
      if (an->requires_grad) {
        auto& g = an->g();
        for (std::size_t i = 0; i < self.val.size(); ++i) g[i] += self.grad[i];
      }
      if (vn->requires_grad) {
        auto& g = vn->g();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            g[j] += self.grad[static_cast<std::size_t>(i) * n + j];
      }
    };
  }
  return out;
}

// out_ij = a_ij + u_i, u is rows×1.
template <typename T>
Tensor<T> add_colvec(const Tensor<T>& a, const Tensor<T>& u) {
  if (u.cols() != 1 || u.rows() != a.rows())
    throw DimensionError("add_colvec: u must be rows(a) x 1");
  auto out = detail::make_result<T>(a.rows(), a.cols(), {a.node(), u.node()});
  auto& ov = out.mutable_data();
  int m = a.rows(), n = a.cols();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      ov[static_cast<std::size_t>(i) * n + j] = a.at(i, j) + u.at(i, 0);
  if (out.requires_grad()) {
    auto an = a.node(), un = u.node();
    out.node()->back = [an, un, m, n](typename Tensor<T>::Node& self) {
      if (an->requires_grad) {
        auto& g = an->g();
        for (std::size_t i = 0; i < self.val.size(); ++i) g[i] += self.grad[i];
      }
      if (un->requires_grad) {
        auto& g = un->g();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            g[i] += self.grad[static_cast<std::size_t>(i) * n + j];
      }
    };
  }
  return out;
}

// out_ij = u_i (u rows×1 broadcast to rows×cols).
template <typename T>
Tensor<T> bcast_col(const Tensor<T>& u, int cols) {
  if (u.cols() != 1) throw DimensionError("bcast_col: u must be rows x 1");
  int m = u.rows();
  auto out = detail::make_result<T>(m, cols, {u.node()});
  auto& ov = out.mutable_data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < cols; ++j)
      ov[static_cast<std::size_t>(i) * cols + j] = u.at(i, 0);
  if (out.requires_grad()) {
    auto un = u.node();
    out.node()->back = [un, m, cols](typename Tensor<T>::Node& self) {
      auto& g = un->g();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < cols; ++j)
          g[i] += self.grad[static_cast<std::size_t>(i) * cols + j];
    };
  }
  return out;
}

// Row-wise masked softmax. mask has one byte per entry, nonzero = keep.
// Masked entries get probability exactly 0; a fully masked row throws.
// Pass nullptr for an unmasked softmax.
template <typename T>
Tensor<T> softmax_rows_masked(const Tensor<T>& a,
                              const std::vector<std::uint8_t>* mask) {
  int m = a.rows(), n = a.cols();
  if (mask && mask->size() != a.size())
    throw DimensionError("softmax_rows_masked: mask shape mismatch");
  auto out = detail::make_result<T>(m, n, {a.node()});
  auto& ov = out.mutable_data();
  for (int i = 0; i < m; ++i) {
    const T* src = a.data().data() + static_cast<std::size_t>(i) * n;
    T* dst = ov.data() + static_cast<std::size_t>(i) * n;
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < n; ++j) {
      bool keep = !mask || (*mask)[static_cast<std::size_t>(i) * n + j];
      if (keep && src[j] > mx) mx = src[j];
    }
    if (mx == -std::numeric_limits<T>::infinity())
      throw InfeasibleStateError("softmax: all positions masked in row " +
                                 std::to_string(i));
    T denom = T(0);
    for (int j = 0; j < n; ++j) {
      bool keep = !mask || (*mask)[static_cast<std::size_t>(i) * n + j];
      dst[j] = keep ? std::exp(src[j] - mx) : T(0);
      denom += dst[j];
    }
    for (int j = 0; j < n; ++j) dst[j] /= denom;
  }
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->back = [an, m, n](typename Tensor<T>::Node& self) {
      auto& g = an->g();
      for (int i = 0; i < m; ++i) {
        const T* p = self.val.data() + static_cast<std::size_t>(i) * n;
        const T* dy = self.grad.data() + static_cast<std::size_t>(i) * n;
        T dot = T(0);
        for (int j = 0; j < n; ++j) dot += p[j] * dy[j];
        for (int j = 0; j < n; ++j)
          g[static_cast<std::size_t>(i) * n + j] += p[j] * (dy[j] - dot);
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

enum class BnMode { Train, Eval };

// Running statistics plus per-step staging buffers. Forward passes in train
// mode stage their batch moments; the trainer merges staged sums across
// parallel workers in a fixed order and commits one EMA update per step, so
// results do not depend on scheduling.
template <typename T>
struct BnStats {
  std::vector<T> running_mean, running_var;
  std::vector<T> staged_mean_sum, staged_var_sum;
  long staged_count = 0;
  T momentum = T(0.1);

  explicit BnStats(int features = 0) { reset(features); }

  void reset(int features) {
    running_mean.assign(features, T(0));
    running_var.assign(features, T(1));
    staged_mean_sum.assign(features, T(0));
    staged_var_sum.assign(features, T(0));
    staged_count = 0;
  }

  void stage(const std::vector<T>& mean, const std::vector<T>& var) {
    for (std::size_t j = 0; j < mean.size(); ++j) {
      staged_mean_sum[j] += mean[j];
      staged_var_sum[j] += var[j];
    }
    ++staged_count;
  }

  void merge_staged(const BnStats& other) {
    for (std::size_t j = 0; j < staged_mean_sum.size(); ++j) {
      staged_mean_sum[j] += other.staged_mean_sum[j];
      staged_var_sum[j] += other.staged_var_sum[j];
    }
    staged_count += other.staged_count;
  }

  void commit() {
    if (staged_count == 0) return;
    for (std::size_t j = 0; j < running_mean.size(); ++j) {
      running_mean[j] = (T(1) - momentum) * running_mean[j] +
                        momentum * staged_mean_sum[j] / static_cast<T>(staged_count);
      running_var[j] = (T(1) - momentum) * running_var[j] +
                       momentum * staged_var_sum[j] / static_cast<T>(staged_count);
      staged_mean_sum[j] = T(0);
      staged_var_sum[j] = T(0);
    }
    staged_count = 0;
  }
};

// Per-feature (column) normalization over rows, then affine transform.
// Train mode normalizes with this batch's moments and stages them into
// `stats` (when given); eval mode requires `stats` and uses running moments.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, BnStats<T>* stats, BnMode mode) {
  int m = x.rows(), n = x.cols();
  if (gamma.size() != static_cast<std::size_t>(n) ||
      beta.size() != static_cast<std::size_t>(n))
    throw DimensionError("batchnorm: feature dimension mismatch");
  if (mode == BnMode::Eval && !stats)
    throw ContractError("batchnorm: eval mode requires running statistics");

  std::vector<T> mean(n, T(0)), var(n, T(0));
  if (mode == BnMode::Train) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) mean[j] += x.at(i, j);
    for (int j = 0; j < n; ++j) mean[j] /= static_cast<T>(m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        T d = x.at(i, j) - mean[j];
        var[j] += d * d;
      }
    for (int j = 0; j < n; ++j) var[j] /= static_cast<T>(m);
    if (stats) stats->stage(mean, var);
  } else {
    mean = stats->running_mean;
    var = stats->running_var;
  }

  auto inv_std = std::make_shared<std::vector<T>>(n);
  for (int j = 0; j < n; ++j)
    (*inv_std)[j] = T(1) / std::sqrt(var[j] + static_cast<T>(kBnEps));

  auto out = detail::make_result<T>(m, n, {x.node(), gamma.node(), beta.node()});
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto& ov = out.mutable_data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      std::size_t idx = static_cast<std::size_t>(i) * n + j;
      (*xhat)[idx] = (x.at(i, j) - mean[j]) * (*inv_std)[j];
      ov[idx] = gamma.at(0, j) * (*xhat)[idx] + beta.at(0, j);
    }

  if (out.requires_grad()) {
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    bool train = mode == BnMode::Train;
    out.node()->back = [xn, gn, bn, xhat, inv_std, m, n,
                        train](typename Tensor<T>::Node& self) {
      // Per-column reductions shared by all input grads.
      std::vector<T> sum_dy(n, T(0)), sum_dy_xhat(n, T(0));
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          std::size_t idx = static_cast<std::size_t>(i) * n + j;
          sum_dy[j] += self.grad[idx];
          sum_dy_xhat[j] += self.grad[idx] * (*xhat)[idx];
        }
      if (gn->requires_grad) {
        auto& g = gn->g();
        for (int j = 0; j < n; ++j) g[j] += sum_dy_xhat[j];
      }
      if (bn->requires_grad) {
        auto& g = bn->g();
        for (int j = 0; j < n; ++j) g[j] += sum_dy[j];
      }
      if (xn->requires_grad) {
        auto& g = xn->g();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            std::size_t idx = static_cast<std::size_t>(i) * n + j;
            T gamma_j = gn->val[j];
            if (train) {
              g[idx] += gamma_j * (*inv_std)[j] *
                        (self.grad[idx] - sum_dy[j] / static_cast<T>(m) -
                         (*xhat)[idx] * sum_dy_xhat[j] / static_cast<T>(m));
            } else {
              g[idx] += gamma_j * (*inv_std)[j] * self.grad[idx];
            }
          }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

// Populates grads of every reachable requires_grad tensor with d loss / d t.
// Grads accumulate across calls; clearing is the caller's responsibility.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1)
    throw ContractError("backward: loss must be a scalar tensor");
  if (!loss.requires_grad()) return;

  using Node = typename Tensor<T>::Node;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  std::vector<std::shared_ptr<Node>> keepalive{loss.node()};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->g()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->back && !node->grad.empty()) node->back(*node);
  }
}

}  // namespace gase
