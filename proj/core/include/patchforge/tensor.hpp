#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace patchforge {

// Dense row-major matrix.
template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// Portable deterministic generator: mt19937_64 is fully specified, and the
// conversions below avoid implementation-defined distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t below(std::size_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  template <class V>
  void shuffle(V& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// Row kernels. Every row is computed independently with a fixed summation
// order, so a row's result does not depend on how many rows are processed
// together. Incremental decoding relies on this for bit-identical outputs.
namespace kernels {

// y = x W + b for one row; W is [in x out].
template <class T>
void linear_row(const T* x, const Matrix<T>& w, const T* b, T* y) {
  const std::size_t in = w.rows();
  const std::size_t out = w.cols();
  for (std::size_t j = 0; j < out; ++j) y[j] = b[j];
  for (std::size_t k = 0; k < in; ++k) {
    const T xk = x[k];
    const T* wk = w.data() + k * out;
    for (std::size_t j = 0; j < out; ++j) y[j] += xk * wk[j];
  }
}

template <class T>
void layer_norm_row(const T* x, const T* gain, const T* bias, std::size_t n, T* y,
                    T eps = T(1e-5)) {
  T mean = 0;
  for (std::size_t j = 0; j < n; ++j) mean += x[j];
  mean /= static_cast<T>(n);
  T var = 0;
  for (std::size_t j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
  var /= static_cast<T>(n);
  const T rstd = T(1) / std::sqrt(var + eps);
  for (std::size_t j = 0; j < n; ++j) y[j] = (x[j] - mean) * rstd * gain[j] + bias[j];
}

// Multi-head scaled dot-product attention for one query row against the
// first `n_keys` rows of K and V (row stride `d`). `probs`, if given,
// receives heads x n_keys attention weights.
template <class T>
void attention_row(const T* q, const T* keys, const T* values, std::size_t n_keys,
                   std::size_t d, std::size_t heads, T* out, T* probs,
                   std::vector<T>& scratch) {
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  scratch.resize(n_keys);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    T max_score = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n_keys; ++j) {
      const T* kj = keys + j * d + c0;
      T s = 0;
      for (std::size_t c = 0; c < dh; ++c) s += q[c0 + c] * kj[c];
      s *= scale;
      scratch[j] = s;
      max_score = std::max(max_score, s);
    }
    T total = 0;
    for (std::size_t j = 0; j < n_keys; ++j) {
      scratch[j] = std::exp(scratch[j] - max_score);
      total += scratch[j];
    }
    for (std::size_t j = 0; j < n_keys; ++j) scratch[j] /= total;
    T* o = out + c0;
    for (std::size_t c = 0; c < dh; ++c) o[c] = 0;
    for (std::size_t j = 0; j < n_keys; ++j) {
      const T p = scratch[j];
      const T* vj = values + j * d + c0;
      for (std::size_t c = 0; c < dh; ++c) o[c] += p * vj[c];
    }
    if (probs) std::copy(scratch.begin(), scratch.end(), probs + h * n_keys);
  }
}

template <class T>
void log_softmax_row(const T* x, std::size_t n, T* y) {
  T m = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < n; ++j) m = std::max(m, x[j]);
  T total = 0;
  for (std::size_t j = 0; j < n; ++j) total += std::exp(x[j] - m);
  const T lse = m + std::log(total);
  for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lse;
}

template <class T>
void softmax_row(const T* x, std::size_t n, T* y) {
  T m = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < n; ++j) m = std::max(m, x[j]);
  T total = 0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - m);
    total += y[j];
  }
  for (std::size_t j = 0; j < n; ++j) y[j] /= total;
}

template <class T>
void embed_row(const Matrix<T>& table, int id, T scale, const T* positional, T* y) {
  const std::size_t d = table.cols();
  const T* e = table.data() + static_cast<std::size_t>(id) * d;
  for (std::size_t j = 0; j < d; ++j) y[j] = e[j] * scale + positional[j];
}

template <class T>
void relu_row(const T* x, std::size_t n, T* y) {
  for (std::size_t j = 0; j < n; ++j) y[j] = x[j] > T(0) ? x[j] : T(0);
}

template <class T>
void add_row(const T* a, const T* b, std::size_t n, T* y) {
  for (std::size_t j = 0; j < n; ++j) y[j] = a[j] + b[j];
}

template <class T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

}  // namespace kernels

// Sinusoidal position table [positions x d].
template <class T>
Matrix<T> sinusoidal_positions(std::size_t positions, std::size_t d) {
  Matrix<T> pe(positions, d);
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) /
                                                static_cast<double>(d));
      const double angle = static_cast<double>(p) * rate;
      pe(p, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

}  // namespace patchforge
