#include "lbla/kernels.hpp"

namespace lbla {

std::string_view kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::kRelu:
      return "relu";
    case KernelKind::kExponential:
      return "exp";
    case KernelKind::kSigmoid:
      return "sigmoid";
    case KernelKind::kIdentity:
      return "identity";
  }
  return "unknown";
}

std::optional<KernelKind> parse_kernel(std::string_view name) {
  if (name == "relu") return KernelKind::kRelu;
  if (name == "exp" || name == "exponential") return KernelKind::kExponential;
  if (name == "sigmoid") return KernelKind::kSigmoid;
  if (name == "identity") return KernelKind::kIdentity;
  return std::nullopt;
}

CosineReweight build_reweight(Eigen::Index length, Eigen::Index horizon) {
  if (length < 1) throw ConfigError("build_reweight: length must be >= 1");
  if (horizon < length) {
    throw ConfigError("build_reweight: horizon " + std::to_string(horizon) +
                      " is shorter than the sequence length " + std::to_string(length));
  }
  CosineReweight rw;
  rw.length = length;
  rw.horizon = horizon;
  rw.cos_factors.resize(length);
  rw.sin_factors.resize(length);
  const double step = std::numbers::pi / (2.0 * static_cast<double>(horizon));
  for (Eigen::Index i = 0; i < length; ++i) {
    const double angle = step * static_cast<double>(i);
    rw.cos_factors[i] = std::cos(angle);
    rw.sin_factors[i] = std::sin(angle);
  }
  return rw;
}

}  // namespace lbla
