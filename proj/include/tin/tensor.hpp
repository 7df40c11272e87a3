#pragma once

// Dense row-major tensor, seeded RNG and the binary tensor file format.

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tin {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or argument mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by (or fed into) a public operation.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Bad user configuration (CLI flags, config files, checkpoints).
class ConfigError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

inline std::size_t checked_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e != 0 && n > std::numeric_limits<std::size_t>::max() / e)
      throw ShapeError("element count overflows for shape " + shape_string(shape));
    n *= e;
  }
  return n;
}

/// SplitMix64 counter generator. The stream is a pure function of the seed
/// and the number of draws, so it is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    double x = lo + (hi - lo) * uniform();
    return x < hi ? x : std::nextafter(hi, lo);
  }

  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ShapeError("Rng::below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Independent child stream, e.g. one per trial or per run.
  Rng split(std::uint64_t stream) const {
    Rng mix(seed_ ^ (0xD1B54A32D192ED03ull * (stream + 1)));
    return Rng(mix.next_u64());
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

template <class T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
}

template <std::floating_point T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : shape_{0} {}
  explicit BasicTensor(Shape shape) : shape_(std::move(shape)), data_(checked_numel(shape_), T(0)) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_numel(shape_) != data_.size())
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
  }

  static BasicTensor full(Shape shape, T value) {
    BasicTensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const {
    if (axis >= shape_.size()) throw ShapeError("axis out of range for " + shape_string(shape_));
    return shape_[axis];
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) throw ShapeError("index rank mismatch");
    std::size_t off = 0;
    for (std::size_t a = 0; a < shape_.size(); ++a) {
      if (index[a] >= shape_[a]) throw ShapeError("index out of range");
      off = off * shape_[a] + index[a];
    }
    return off;
  }

  std::vector<std::size_t> unravel(std::size_t flat) const {
    if (flat >= data_.size()) throw ShapeError("flat index out of range");
    std::vector<std::size_t> index(shape_.size());
    for (std::size_t a = shape_.size(); a-- > 0;) {
      index[a] = flat % shape_[a];
      flat /= shape_[a];
    }
    return index;
  }

  template <std::integral... I>
  T& operator()(I... idx) {
    const std::size_t index[] = {static_cast<std::size_t>(idx)...};
    return data_[offset(index)];
  }
  template <std::integral... I>
  const T& operator()(I... idx) const {
    const std::size_t index[] = {static_cast<std::size_t>(idx)...};
    return data_[offset(index)];
  }

  BasicTensor reshape(Shape shape) const {
    if (checked_numel(shape) != data_.size())
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return BasicTensor(std::move(shape), data_);
  }

  template <std::floating_point U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  const BasicTensor& ensure_finite(std::string_view what) const {
    if (!all_finite()) throw NonFiniteError(std::string(what) + ": non-finite value");
    return *this;
  }

  T sum() const {
    long double acc = 0;
    for (T v : data_) acc += v;
    return static_cast<T>(acc);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  BasicTensor& operator+=(const BasicTensor& other) {
    require_same_shape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return ensure_finite_self("+=");
  }
  BasicTensor& operator-=(const BasicTensor& other) {
    require_same_shape(other, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return ensure_finite_self("-=");
  }
  BasicTensor& operator*=(T scale) {
    for (T& v : data_) v *= scale;
    return ensure_finite_self("*=");
  }

  friend BasicTensor operator+(BasicTensor a, const BasicTensor& b) { return a += b; }
  friend BasicTensor operator-(BasicTensor a, const BasicTensor& b) { return a -= b; }
  friend BasicTensor operator*(BasicTensor a, T s) { return a *= s; }
  friend BasicTensor operator*(T s, BasicTensor a) { return a *= s; }

  /// Adds `scale * other` in place.
  BasicTensor& axpy(T scale, const BasicTensor& other) {
    require_same_shape(other, "axpy");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
    return *this;
  }

  bool operator==(const BasicTensor& other) const = default;

  void require_same_shape(const BasicTensor& other, std::string_view what) const {
    if (shape_ != other.shape_)
      throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(shape_) + " vs " +
                       shape_string(other.shape_));
  }

 private:
  BasicTensor& ensure_finite_self(std::string_view what) {
    ensure_finite(what);
    return *this;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

inline Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

template <std::floating_point T = double>
BasicTensor<T> rand_uniform(Shape shape, Rng& rng, double lo, double hi) {
  if (!(lo < hi)) throw ShapeError("rand_uniform requires lo < hi");
  BasicTensor<T> t(std::move(shape));
  for (T& v : t.data()) {
    v = static_cast<T>(rng.uniform(lo, hi));
    if constexpr (!std::same_as<T, double>) {
      if (v >= static_cast<T>(hi)) v = std::nextafter(static_cast<T>(hi), static_cast<T>(lo));
    }
  }
  return t;
}

inline Tensor rand_normal(Shape shape, Rng& rng, double stddev = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = stddev * rng.normal();
  return t;
}

/// Arithmetic mean over `axes`; the reduced axes are dropped from the shape.
template <std::floating_point T>
BasicTensor<T> mean_over(const BasicTensor<T>& t, std::vector<std::size_t> axes) {
  const Shape& in = t.shape();
  std::vector<bool> reduced(in.size(), false);
  for (std::size_t a : axes) {
    if (a >= in.size()) throw ShapeError("mean_over: axis out of range for " + shape_string(in));
    if (reduced[a]) throw ShapeError("mean_over: repeated axis");
    if (in[a] == 0) throw ShapeError("mean_over: cannot reduce a zero-extent axis");
    reduced[a] = true;
  }
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t a = 0; a < in.size(); ++a) {
    if (reduced[a]) count *= in[a];
    else out_shape.push_back(in[a]);
  }
  std::vector<long double> acc(checked_numel(out_shape), 0.0L);
  std::vector<std::size_t> index(in.size(), 0);
  for (std::size_t flat = 0; flat < t.numel(); ++flat) {
    std::size_t out = 0;
    for (std::size_t a = 0; a < in.size(); ++a)
      if (!reduced[a]) out = out * in[a] + index[a];
    acc[out] += t[flat];
    for (std::size_t a = in.size(); a-- > 0;) {
      if (++index[a] < in[a]) break;
      index[a] = 0;
    }
  }
  BasicTensor<T> result(out_shape);
  for (std::size_t i = 0; i < acc.size(); ++i) result[i] = static_cast<T>(acc[i] / count);
  result.ensure_finite("mean_over");
  return result;
}

template <std::floating_point T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  a.require_same_shape(b, "max_abs_diff");
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
  return m;
}

// Binary format: little-endian u64 rank, u64 extents, then float64 values.
namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw ConfigError("truncated tensor file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

template <std::floating_point T>
void write_tensor(std::ostream& os, const BasicTensor<T>& t) {
  detail::put_u64(os, t.rank());
  for (std::size_t e : t.shape()) detail::put_u64(os, e);
  for (T v : t.data()) detail::put_u64(os, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
}

inline Tensor read_tensor(std::istream& is) {
  const std::uint64_t rank = detail::get_u64(is);
  if (rank > 16) throw ConfigError("tensor file rank " + std::to_string(rank) + " is implausible");
  Shape shape(rank);
  for (auto& e : shape) e = detail::get_u64(is);
  Tensor t(shape);
  for (double& v : t.data()) v = std::bit_cast<double>(detail::get_u64(is));
  t.ensure_finite("read_tensor");
  return t;
}

template <std::floating_point T>
void save_tensor(const std::filesystem::path& path, const BasicTensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  write_tensor(os, t);
}

inline Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read " + path.string());
  return read_tensor(is);
}

}  // namespace tin
