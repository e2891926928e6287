#pragma once

#include <cstddef>
#include <stdexcept>

#include "lbla/attention.hpp"
#include "lbla/kernels.hpp"
#include "lbla/numeric.hpp"

namespace lbla {

struct LblaDiagnostics {
  // Rows whose denominator was exactly zero before the epsilon was added.
  std::size_t zero_denominator_rows = 0;
};

class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Kernel-mapped queries and keys, each row scaled by its position's cos / sin factor.
template <typename Scalar>
struct LblaDecomposition {
  Tensor<Scalar> q_cos, q_sin, k_cos, k_sin;
};

template <typename Scalar>
LblaDecomposition<Scalar> decompose(const Tensor<Scalar>& q, const Tensor<Scalar>& k,
                                    KernelKind kernel, const CosineReweight& rw) {
  if (rw.length != q.rows() || rw.length != k.rows()) {
    throw ShapeError("decompose: reweight length " + std::to_string(rw.length) +
                     " does not match q/k rows " + std::to_string(q.rows()) + "/" +
                     std::to_string(k.rows()));
  }
  const Vector<Scalar> c = rw.cos_factors.template cast<Scalar>();
  const Vector<Scalar> s = rw.sin_factors.template cast<Scalar>();
  const Tensor<Scalar> qf = apply_kernel(q, kernel);
  const Tensor<Scalar> kf = apply_kernel(k, kernel);
  return {c.asDiagonal() * qf, s.asDiagonal() * qf, c.asDiagonal() * kf, s.asDiagonal() * kf};
}

namespace detail {

// Accumulates keys^T [values | 1] over ascending j. Only d_k x (d_v + 1) storage.
template <typename Scalar>
void accumulate_key_summary(const Tensor<Scalar>& keys, const Tensor<Scalar>& v,
                            Tensor<Scalar>& kv, Vector<Scalar>& ksum) {
  kv.setZero(keys.cols(), v.cols());
  ksum.setZero(keys.cols());
  for (Eigen::Index j = 0; j < keys.rows(); ++j) {
    kv.noalias() += keys.row(j).transpose() * v.row(j);
    ksum += keys.row(j).transpose();
  }
}

template <typename Scalar>
Tensor<Scalar> normalize_rows(Tensor<Scalar> num, const Vector<Scalar>& den, bool normalize,
                              LblaDiagnostics* diag) {
  if (!normalize) return num;
  for (Eigen::Index i = 0; i < num.rows(); ++i) {
    if (den[i] == Scalar(0) && diag != nullptr) ++diag->zero_denominator_rows;
    num.row(i) /= den[i] + static_cast<Scalar>(kNormEps);
  }
  return num;
}

}  // namespace detail

// Linearized locality-biased attention. Keys and values are folded into d_k x d_v summaries
// first, so no T x T intermediate exists and the cost is O(T d_k d_v).
template <typename Scalar>
Tensor<Scalar> lbla_forward(const Tensor<Scalar>& q, const Tensor<Scalar>& k,
                            const Tensor<Scalar>& v, const LblaOptions& opts,
                            LblaDiagnostics* diag = nullptr) {
  check_qkv(q, k, v, "lbla_forward");
  check_reweight_length(opts.reweight, q.rows(), "lbla_forward");
  Tensor<Scalar> kv;
  Vector<Scalar> ksum;
  if (!opts.reweight) {
    const Tensor<Scalar> qf = apply_kernel(q, opts.kernel);
    detail::accumulate_key_summary(Tensor<Scalar>(apply_kernel(k, opts.kernel)), v, kv, ksum);
    Tensor<Scalar> num = qf * kv;
    const Vector<Scalar> den = qf * ksum;
    return detail::normalize_rows(std::move(num), den, opts.normalize, diag);
  }

  const LblaDecomposition<Scalar> parts = decompose(q, k, opts.kernel, *opts.reweight);
  Tensor<Scalar> kv_sin;
  Vector<Scalar> ksum_sin;
  detail::accumulate_key_summary(parts.k_cos, v, kv, ksum);
  detail::accumulate_key_summary(parts.k_sin, v, kv_sin, ksum_sin);
  Tensor<Scalar> num = parts.q_cos * kv;
  num.noalias() += parts.q_sin * kv_sin;
  Vector<Scalar> den = parts.q_cos * ksum;
  den.noalias() += parts.q_sin * ksum_sin;
  return detail::normalize_rows(std::move(num), den, opts.normalize, diag);
}

template <typename Scalar>
struct LblaGradients {
  Tensor<Scalar> q, k, v;
};

// Gradients of <upstream, lbla_forward(q, k, v)> with respect to q, k and v.
template <typename Scalar>
LblaGradients<Scalar> lbla_backward(const Tensor<Scalar>& q, const Tensor<Scalar>& k,
                                    const Tensor<Scalar>& v, const LblaOptions& opts,
                                    const Tensor<Scalar>& upstream) {
  check_qkv(q, k, v, "lbla_backward");
  check_reweight_length(opts.reweight, q.rows(), "lbla_backward");
  if (upstream.rows() != q.rows() || upstream.cols() != v.cols()) {
    throw ShapeError("lbla_backward: upstream gradient " +
                     shape_string(upstream.rows(), upstream.cols()) + ", output is " +
                     shape_string(q.rows(), v.cols()));
  }
  const Eigen::Index steps = q.rows();
  Vector<Scalar> c = Vector<Scalar>::Ones(steps);
  Vector<Scalar> s = Vector<Scalar>::Zero(steps);
  if (opts.reweight) {
    c = opts.reweight->cos_factors.template cast<Scalar>();
    s = opts.reweight->sin_factors.template cast<Scalar>();
  }
  const Tensor<Scalar> qf = apply_kernel(q, opts.kernel);
  const Tensor<Scalar> kf = apply_kernel(k, opts.kernel);
  const Tensor<Scalar> q_cos = c.asDiagonal() * qf;
  const Tensor<Scalar> q_sin = s.asDiagonal() * qf;
  const Tensor<Scalar> k_cos = c.asDiagonal() * kf;
  const Tensor<Scalar> k_sin = s.asDiagonal() * kf;

  const Tensor<Scalar> kv_cos = k_cos.transpose() * v;
  const Tensor<Scalar> kv_sin = k_sin.transpose() * v;
  const Vector<Scalar> ksum_cos = k_cos.colwise().sum().transpose();
  const Vector<Scalar> ksum_sin = k_sin.colwise().sum().transpose();

  const Tensor<Scalar> num = q_cos * kv_cos + q_sin * kv_sin;
  Tensor<Scalar> grad_num = upstream;
  Vector<Scalar> grad_den = Vector<Scalar>::Zero(steps);
  if (opts.normalize) {
    const Vector<Scalar> den_raw = q_cos * ksum_cos + q_sin * ksum_sin;
    if (opts.kernel == KernelKind::kIdentity && (den_raw.array() == Scalar(0)).any()) {
      throw DegenerateInput("lbla_backward: zero denominator with the identity kernel");
    }
    const Vector<Scalar> den = den_raw.array() + static_cast<Scalar>(kNormEps);
    for (Eigen::Index i = 0; i < steps; ++i) {
      grad_num.row(i) /= den[i];
      grad_den[i] = -upstream.row(i).dot(num.row(i)) / (den[i] * den[i]);
    }
  }

  const Tensor<Scalar> grad_q_cos =
      grad_num * kv_cos.transpose() + grad_den * ksum_cos.transpose();
  const Tensor<Scalar> grad_q_sin =
      grad_num * kv_sin.transpose() + grad_den * ksum_sin.transpose();
  const Tensor<Scalar> grad_kv_cos = q_cos.transpose() * grad_num;
  const Tensor<Scalar> grad_kv_sin = q_sin.transpose() * grad_num;
  const Vector<Scalar> grad_ksum_cos = q_cos.transpose() * grad_den;
  const Vector<Scalar> grad_ksum_sin = q_sin.transpose() * grad_den;

  Tensor<Scalar> grad_k_cos = v * grad_kv_cos.transpose();
  grad_k_cos.rowwise() += grad_ksum_cos.transpose();
  Tensor<Scalar> grad_k_sin = v * grad_kv_sin.transpose();
  grad_k_sin.rowwise() += grad_ksum_sin.transpose();

  LblaGradients<Scalar> grads;
  grads.v = k_cos * grad_kv_cos + k_sin * grad_kv_sin;
  const Tensor<Scalar> grad_qf = c.asDiagonal() * grad_q_cos + s.asDiagonal() * grad_q_sin;
  const Tensor<Scalar> grad_kf = c.asDiagonal() * grad_k_cos + s.asDiagonal() * grad_k_sin;
  grads.q = grad_qf.cwiseProduct(kernel_derivative(q, opts.kernel));
  grads.k = grad_kf.cwiseProduct(kernel_derivative(k, opts.kernel));
  return grads;
}

}  // namespace lbla
