#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace pdsbss {

using Complex = std::complex<double>;

/// Raised for contract violations and unrecoverable numerical failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense three-way array laid out as [channel][frame][bin] with the bin index
/// contiguous, so every (channel, frame) frequency vector is a span.
template <typename T>
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t frames, std::size_t bins, T fill = T{})
      : channels_(channels), frames_(frames), bins_(bins), data_(channels * frames * bins, fill) {}

  std::size_t channels() const { return channels_; }
  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t n, std::size_t t, std::size_t f) {
    return data_[(n * frames_ + t) * bins_ + f];
  }
  const T& operator()(std::size_t n, std::size_t t, std::size_t f) const {
    return data_[(n * frames_ + t) * bins_ + f];
  }

  std::span<T> row(std::size_t n, std::size_t t) {
    return {data_.data() + (n * frames_ + t) * bins_, bins_};
  }
  std::span<const T> row(std::size_t n, std::size_t t) const {
    return {data_.data() + (n * frames_ + t) * bins_, bins_};
  }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }

  bool same_shape(const Tensor3& other) const {
    return channels_ == other.channels_ && frames_ == other.frames_ && bins_ == other.bins_;
  }

  template <typename U>
  bool same_shape(const Tensor3<U>& other) const {
    return channels_ == other.channels() && frames_ == other.frames() && bins_ == other.bins();
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::vector<T> data_;
};

using ComplexTensor = Tensor3<Complex>;
using RealTensor = Tensor3<double>;

/// Real [N x T x F] array with every entry in [0, 1].
using MaskTensor = RealTensor;

namespace detail {

template <typename A, typename B>
void require_same_shape(const Tensor3<A>& a, const Tensor3<B>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(std::string(what) + ": tensor shape mismatch");
  }
}

template <typename T>
bool all_finite(std::span<const T> values) {
  for (const auto& v : values) {
    if constexpr (std::is_same_v<T, Complex>) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    } else {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace detail

inline double squared_norm(const ComplexTensor& x) {
  double acc = 0.0;
  for (const auto& v : x.flat()) acc += std::norm(v);
  return acc;
}

/// <a, b> = sum conj(a) b
inline Complex inner(const ComplexTensor& a, const ComplexTensor& b) {
  detail::require_same_shape(a, b, "inner");
  Complex acc{};
  auto fa = a.flat();
  auto fb = b.flat();
  for (std::size_t i = 0; i < fa.size(); ++i) acc += std::conj(fa[i]) * fb[i];
  return acc;
}

}  // namespace pdsbss
