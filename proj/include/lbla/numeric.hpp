#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lbla {

// A T x d block of activations, one row per time step.
template <typename Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Tensord = Tensor<double>;
using Vectord = Vector<double>;
using Tensorf = Tensor<float>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename A, typename B>
void require_same_shape(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b,
                        const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.rows(), a.cols()) +
                     " vs " + shape_string(b.rows(), b.cols()));
  }
}

template <typename A, typename B>
Tensor<typename A::Scalar> matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + shape_string(a.rows(), a.cols()) + " by " +
                     shape_string(b.rows(), b.cols()));
  }
  return a * b;
}

// Row-wise softmax with per-row max subtraction.
template <typename Scalar>
void softmax_rows_inplace(Tensor<Scalar>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = m.row(i).array();
    row = (row - row.maxCoeff()).exp();
    row /= row.sum();
  }
}

template <typename Derived>
Tensor<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& m) {
  Tensor<typename Derived::Scalar> out = m;
  softmax_rows_inplace(out);
  return out;
}

inline constexpr double kLayerNormEps = 1e-5;

template <typename Derived>
Tensor<typename Derived::Scalar> layernorm(const Eigen::MatrixBase<Derived>& x,
                                           const Vector<typename Derived::Scalar>& gamma,
                                           const Vector<typename Derived::Scalar>& beta,
                                           typename Derived::Scalar eps = kLayerNormEps) {
  using Scalar = typename Derived::Scalar;
  if (gamma.size() != x.cols() || beta.size() != x.cols()) {
    throw ShapeError("layernorm: gamma/beta length " + std::to_string(gamma.size()) + "/" +
                     std::to_string(beta.size()) + " does not match width " +
                     std::to_string(x.cols()));
  }
  if (!(eps > Scalar(0))) throw ConfigError("layernorm: eps must be positive");
  Tensor<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar mean = x.row(i).mean();
    auto centered = (x.row(i).array() - mean).eval();
    const Scalar var = centered.square().mean();
    out.row(i) = (centered / std::sqrt(var + eps)) * gamma.transpose().array() +
                 beta.transpose().array();
  }
  return out;
}

// Per-channel 1-D convolution along time with symmetric zero padding.
// kernels is channels x kernel_size; out[t, c] = sum_k x[t + k - half, c] * kernels(c, k).
template <typename Derived>
Tensor<typename Derived::Scalar> depthwise_conv1d(const Eigen::MatrixBase<Derived>& x,
                                                  const Tensor<typename Derived::Scalar>& kernels) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index width = kernels.cols();
  if (width % 2 == 0) {
    throw ConfigError("depthwise_conv1d: kernel size must be odd, got " + std::to_string(width));
  }
  if (kernels.rows() != x.cols()) {
    throw ShapeError("depthwise_conv1d: " + std::to_string(kernels.rows()) +
                     " kernels for " + std::to_string(x.cols()) + " channels");
  }
  const Eigen::Index half = width / 2;
  const Eigen::Index steps = x.rows();
  Tensor<Scalar> out = Tensor<Scalar>::Zero(steps, x.cols());
  for (Eigen::Index k = 0; k < width; ++k) {
    const Eigen::Index shift = k - half;
    const Eigen::Index begin = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index end = std::min<Eigen::Index>(steps, steps - shift);
    if (end <= begin) continue;
    out.middleRows(begin, end - begin).array() +=
        x.middleRows(begin + shift, end - begin).array().rowwise() *
        kernels.col(k).transpose().array();
  }
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

// SplitMix64 used as a counter-based generator: draw n is mix(seed + (n + 1) * golden_gamma).
// Fully specified by 64-bit integer arithmetic, so streams are identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double next_unit();
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }
  std::uint64_t below(std::uint64_t bound);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// Uniform values in [-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensord seeded_init(Rng& rng, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in);

Tensord uniform_tensor(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi);

}  // namespace lbla
