#pragma once

#include <optional>
#include <string>

#include "lbla/kernels.hpp"
#include "lbla/numeric.hpp"

namespace lbla {

// Added to every row-sum denominator, identically in the oracle and the linearized path.
inline constexpr double kNormEps = 1e-9;

struct LblaOptions {
  KernelKind kernel = KernelKind::kSigmoid;
  std::optional<CosineReweight> reweight;
  // false is the "no normalization" ablation: output = P V.
  bool normalize = true;
};

template <typename Scalar>
struct AttentionParams {
  Tensor<Scalar> w_q, w_k, w_v, w_o;
  Eigen::Index heads = 1;

  Eigen::Index model_dim() const { return w_q.rows(); }
  Eigen::Index head_dim() const { return model_dim() / heads; }

  void validate() const {
    const Eigen::Index d = w_q.rows();
    for (const Tensor<Scalar>* w : {&w_q, &w_k, &w_v, &w_o}) {
      if (w->rows() != d || w->cols() != d) {
        throw ShapeError("attention weights must all be " + shape_string(d, d) + ", got " +
                         shape_string(w->rows(), w->cols()));
      }
    }
    if (heads < 1 || d % heads != 0) {
      throw ConfigError("model dim " + std::to_string(d) + " not divisible by " +
                        std::to_string(heads) + " heads");
    }
  }

  template <typename Other>
  AttentionParams<Other> cast() const {
    return {w_q.template cast<Other>(), w_k.template cast<Other>(), w_v.template cast<Other>(),
            w_o.template cast<Other>(), heads};
  }
};

template <typename Scalar>
void check_qkv(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v,
               const char* what) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || q.rows() != k.rows()) {
    throw ShapeError(std::string(what) + ": incompatible q " + shape_string(q.rows(), q.cols()) +
                     ", k " + shape_string(k.rows(), k.cols()) + ", v " +
                     shape_string(v.rows(), v.cols()));
  }
}

template <typename Scalar>
Tensor<Scalar> softmax_attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k,
                                 const Tensor<Scalar>& v, Scalar scale) {
  check_qkv(q, k, v, "softmax_attention");
  Tensor<Scalar> scores = (q * k.transpose()) * scale;
  softmax_rows_inplace(scores);
  return scores * v;
}

template <typename Scalar>
Tensor<Scalar> softmax_attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k,
                                 const Tensor<Scalar>& v) {
  return softmax_attention(q, k, v, Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols())));
}

// Projects x, runs `core(q_h, k_h, v_h)` on each head's column slice, concatenates and
// applies the output projection. Core must map (T x d_k)^3 to T x d_k.
template <typename Scalar, typename Core>
Tensor<Scalar> multi_head_attention(const Tensor<Scalar>& x, const AttentionParams<Scalar>& p,
                                    Core&& core) {
  p.validate();
  if (x.cols() != p.model_dim()) {
    throw ShapeError("multi_head_attention: input width " + std::to_string(x.cols()) +
                     " != model dim " + std::to_string(p.model_dim()));
  }
  const Eigen::Index dk = p.head_dim();
  const Tensor<Scalar> q = x * p.w_q;
  const Tensor<Scalar> k = x * p.w_k;
  const Tensor<Scalar> v = x * p.w_v;
  Tensor<Scalar> concat(x.rows(), p.model_dim());
  for (Eigen::Index h = 0; h < p.heads; ++h) {
    const Tensor<Scalar> qh = q.middleCols(h * dk, dk);
    const Tensor<Scalar> kh = k.middleCols(h * dk, dk);
    const Tensor<Scalar> vh = v.middleCols(h * dk, dk);
    Tensor<Scalar> head = core(qh, kh, vh);
    if (head.rows() != x.rows() || head.cols() != dk) {
      throw ShapeError("multi_head_attention: core returned " +
                       shape_string(head.rows(), head.cols()) + ", expected " +
                       shape_string(x.rows(), dk));
    }
    concat.middleCols(h * dk, dk) = head;
  }
  return concat * p.w_o;
}

inline void check_reweight_length(const std::optional<CosineReweight>& rw, Eigen::Index steps,
                                  const char* what) {
  if (rw && rw->length != steps) {
    throw ShapeError(std::string(what) + ": reweight length " + std::to_string(rw->length) +
                     " != sequence length " + std::to_string(steps));
  }
}

// Explicit T x T proximity psi(q_i) . psi(k_j) * omega(i - j). omega is evaluated directly
// from the cosine, not from the factorized form.
template <typename Scalar>
Tensor<Scalar> proximity_matrix(const Tensor<Scalar>& q, const Tensor<Scalar>& k,
                                const LblaOptions& opts) {
  if (q.cols() != k.cols() || q.rows() != k.rows()) {
    throw ShapeError("proximity_matrix: q " + shape_string(q.rows(), q.cols()) + " vs k " +
                     shape_string(k.rows(), k.cols()));
  }
  check_reweight_length(opts.reweight, q.rows(), "proximity_matrix");
  const Tensor<Scalar> qf = apply_kernel(q, opts.kernel);
  const Tensor<Scalar> kf = apply_kernel(k, opts.kernel);
  Tensor<Scalar> prox(q.rows(), k.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      Scalar score = qf.row(i).dot(kf.row(j));
      if (opts.reweight) {
        score *= static_cast<Scalar>(cosine_weight(i, j, opts.reweight->horizon));
      }
      prox(i, j) = score;
    }
  }
  return prox;
}

// The attention weights implied by the mechanism: proximity rows divided by their exact
// sums (no epsilon) when normalizing, the raw proximity otherwise.
template <typename Scalar>
Tensor<Scalar> implied_weights(const Tensor<Scalar>& q, const Tensor<Scalar>& k,
                               const LblaOptions& opts) {
  Tensor<Scalar> w = proximity_matrix(q, k, opts);
  if (opts.normalize) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w.row(i) /= w.row(i).sum();
  }
  return w;
}

// O(T^2) reference for locality-biased linear attention.
template <typename Scalar>
Tensor<Scalar> lbla_oracle(const Tensor<Scalar>& q, const Tensor<Scalar>& k,
                           const Tensor<Scalar>& v, const LblaOptions& opts) {
  check_qkv(q, k, v, "lbla_oracle");
  const Tensor<Scalar> prox = proximity_matrix(q, k, opts);
  Tensor<Scalar> out = prox * v;
  if (opts.normalize) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      out.row(i) /= prox.row(i).sum() + static_cast<Scalar>(kNormEps);
    }
  }
  return out;
}

}  // namespace lbla
