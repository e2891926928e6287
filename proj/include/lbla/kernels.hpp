#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "lbla/numeric.hpp"

namespace lbla {

// Elementwise feature map applied to queries and keys. Identity is the
// "no kernel" ablation and carries no non-negativity guarantee.
enum class KernelKind { kRelu, kExponential, kSigmoid, kIdentity };

std::string_view kernel_name(KernelKind kind);
std::optional<KernelKind> parse_kernel(std::string_view name);

inline bool kernel_is_nonnegative(KernelKind kind) { return kind != KernelKind::kIdentity; }

// Exponential is documented for inputs in [-20, 20].
template <typename Derived>
Tensor<typename Derived::Scalar> apply_kernel(const Eigen::MatrixBase<Derived>& x,
                                              KernelKind kind) {
  using Scalar = typename Derived::Scalar;
  switch (kind) {
    case KernelKind::kRelu:
      return x.array().max(Scalar(0)).matrix();
    case KernelKind::kExponential:
      return x.array().exp().matrix();
    case KernelKind::kSigmoid:
      return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
    case KernelKind::kIdentity:
      return x;
  }
  return x;
}

// d psi / dx evaluated at x. ReLU uses 0 at the kink.
template <typename Derived>
Tensor<typename Derived::Scalar> kernel_derivative(const Eigen::MatrixBase<Derived>& x,
                                                   KernelKind kind) {
  using Scalar = typename Derived::Scalar;
  switch (kind) {
    case KernelKind::kRelu:
      return (x.array() > Scalar(0)).template cast<Scalar>().matrix();
    case KernelKind::kExponential:
      return x.array().exp().matrix();
    case KernelKind::kSigmoid: {
      auto s = (Scalar(1) / (Scalar(1) + (-x.array()).exp())).eval();
      return (s * (Scalar(1) - s)).matrix();
    }
    case KernelKind::kIdentity:
      return Tensor<Scalar>::Ones(x.rows(), x.cols());
  }
  return Tensor<Scalar>::Ones(x.rows(), x.cols());
}

// omega(i - j) = cos(pi (i - j) / (2 m)), the locality weight between positions i and j.
inline double cosine_weight(Eigen::Index i, Eigen::Index j, Eigen::Index horizon) {
  return std::cos(std::numbers::pi * static_cast<double>(i - j) /
                  (2.0 * static_cast<double>(horizon)));
}

// Two rank-one factors realizing omega by the angle-difference identity:
// omega(i - j) = cos_i cos_j + sin_i sin_j.
struct CosineReweight {
  Eigen::Index length = 0;
  Eigen::Index horizon = 0;
  Vectord cos_factors;
  Vectord sin_factors;

  double weight(Eigen::Index i, Eigen::Index j) const {
    return cos_factors[i] * cos_factors[j] + sin_factors[i] * sin_factors[j];
  }
};

CosineReweight build_reweight(Eigen::Index length, Eigen::Index horizon);

// Convenience for the common horizon == length case.
inline CosineReweight build_reweight(Eigen::Index length) { return build_reweight(length, length); }

}  // namespace lbla
