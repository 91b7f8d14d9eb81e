#pragma once
// Row-major 2-D tensor and the handful of matrix kernels the models need.
// Templated on the scalar:训练 paths instantiate float, gradient checks run
// the same code in double. All kernels accumulate each output element in a
// fixed sequential order, so results are bit-identical for any thread count.

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "scve/common.hpp"

namespace scve {

template <class T>
struct Tensor2 {
  int rows = 0;
  int cols = 0;
  std::vector<T> v;

  Tensor2() = default;
  Tensor2(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, T(0)) {}

  static Tensor2 zeros(int r, int c) { return Tensor2(r, c); }

  void resize(int r, int c) {
    rows = r;
    cols = c;
    v.assign(static_cast<std::size_t>(r) * c, T(0));
  }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }
  void zero() { fill(T(0)); }

  T* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const T* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }

  T& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  T at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  std::size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
};

template <class T>
void check_finite(const Tensor2<T>& t, const char* what) {
  if (!t.all_finite())
    throw_numeric(std::string("non-finite values in ") + what);
}

template <class T>
void init_normal(Tensor2<T>& t, Rng& rng, double stddev) {
  for (auto& x : t.v) x = static_cast<T>(rng.normal(0.0, stddev));
}

// C = A * B. A: M x K, B: K x N, C: M x N. ikj order; vectorizes well and the
// contraction order per output element never depends on the partition.
template <class T>
void matmul(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c) {
  if (a.cols != b.rows) throw_data("matmul: inner dimensions differ");
  c.resize(a.rows, b.cols);
  const int K = a.cols, N = b.cols;
  parallel_for(static_cast<std::size_t>(a.rows), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      T* ci = c.v.data() + i * N;
      const T* ai = a.v.data() + i * K;
      for (int k = 0; k < K; ++k) {
        const T aik = ai[k];
        const T* bk = b.v.data() + static_cast<std::size_t>(k) * N;
        for (int j = 0; j < N; ++j) ci[j] += aik * bk[j];
      }
    }
  });
}

// C = A * B^T. A: M x K, B: N x K, C: M x N.
template <class T>
void matmul_nt(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c) {
  if (a.cols != b.cols) throw_data("matmul_nt: inner dimensions differ");
  c.resize(a.rows, b.rows);
  const int K = a.cols, N = b.rows;
  parallel_for(static_cast<std::size_t>(a.rows), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const T* ai = a.v.data() + i * K;
      T* ci = c.v.data() + i * N;
      for (int j = 0; j < N; ++j) {
        const T* bj = b.v.data() + static_cast<std::size_t>(j) * K;
        T acc = T(0);
        for (int k = 0; k < K; ++k) acc += ai[k] * bj[k];
        ci[j] = acc;
      }
    }
  });
}

// C += A^T * B. A: L x M, B: L x N, C: M x N. Used for weight gradients.
template <class T>
void matmul_tn_acc(const Tensor2<T>& a, const Tensor2<T>& b, Tensor2<T>& c) {
  if (a.rows != b.rows) throw_data("matmul_tn_acc: outer dimensions differ");
  if (c.rows != a.cols || c.cols != b.cols)
    throw_data("matmul_tn_acc: output shape mismatch");
  const int L = a.rows, M = a.cols, N = b.cols;
  parallel_for(static_cast<std::size_t>(M), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      T* ci = c.v.data() + i * N;
      for (int l = 0; l < L; ++l) {
        const T ali = a.v[static_cast<std::size_t>(l) * M + i];
        const T* bl = b.v.data() + static_cast<std::size_t>(l) * N;
        for (int j = 0; j < N; ++j) ci[j] += ali * bl[j];
      }
    }
  });
}

template <class T>
void add_inplace(Tensor2<T>& a, const Tensor2<T>& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw_data("add: shape mismatch");
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

template <class T>
void add_row_broadcast(Tensor2<T>& a, const std::vector<T>& bias) {
  if (static_cast<std::size_t>(a.cols) != bias.size())
    throw_data("bias: length mismatch");
  for (int r = 0; r < a.rows; ++r) {
    T* ar = a.row(r);
    for (int c = 0; c < a.cols; ++c) ar[c] += bias[c];
  }
}

}  // namespace scve
