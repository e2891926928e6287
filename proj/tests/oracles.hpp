#pragma once

// Deliberately naive loop implementations used only as test oracles. Nothing here calls
// into the library's math; inputs are plain row-major Eigen matrices read elementwise.

#include <cmath>
#include <numbers>
#include <vector>

#include "lbla/numeric.hpp"

namespace lbla::oracle {

inline Tensord matmul_loops(const Tensord& a, const Tensord& b) {
  Tensord out(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

inline Tensord conv1d_direct(const Tensord& x, const Tensord& kernels) {
  const Eigen::Index half = kernels.cols() / 2;
  Tensord out(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < kernels.cols(); ++k) {
        const Eigen::Index src = t + k - half;
        if (src >= 0 && src < x.rows()) acc += x(src, c) * kernels(c, k);
      }
      out(t, c) = acc;
    }
  }
  return out;
}

// O_i = sum_j exp(s q_i.k_j) v_j / sum_j exp(s q_i.k_j), shifted by the row max.
inline Tensord softmax_attention_loops(const Tensord& q, const Tensord& k, const Tensord& v,
                                       double scale) {
  Tensord out = Tensord::Zero(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<double> score(static_cast<std::size_t>(k.rows()));
    double peak = -INFINITY;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      score[j] = scale * dot;
      peak = std::max(peak, score[j]);
    }
    double denom = 0.0;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      const double w = std::exp(score[j] - peak);
      denom += w;
      for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) += w * v(j, c);
    }
    for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) /= denom;
  }
  return out;
}

// Row-normalized attention with raw dot-product scores (no kernel, no locality weights).
inline Tensord dot_attention_loops(const Tensord& q, const Tensord& k, const Tensord& v,
                                   double eps) {
  Tensord out = Tensord::Zero(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double denom = 0.0;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      denom += dot;
      for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) += dot * v(j, c);
    }
    for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) /= denom + eps;
  }
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double swish(double x) { return x * sigmoid(x); }

inline std::vector<double> layernorm_row(const std::vector<double>& row,
                                         const Vectord& gamma, const Vectord& beta,
                                         double eps) {
  double mean = 0.0;
  for (double v : row) mean += v;
  mean /= static_cast<double>(row.size());
  double var = 0.0;
  for (double v : row) var += (v - mean) * (v - mean);
  var /= static_cast<double>(row.size());
  std::vector<double> out(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) {
    out[c] = (row[c] - mean) / std::sqrt(var + eps) * gamma[static_cast<Eigen::Index>(c)] +
             beta[static_cast<Eigen::Index>(c)];
  }
  return out;
}

inline Tensord layernorm_loops(const Tensord& x, const Vectord& gamma, const Vectord& beta,
                               double eps) {
  Tensord out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index c = 0; c < x.cols(); ++c) row[c] = x(i, c);
    const auto normed = layernorm_row(row, gamma, beta, eps);
    for (Eigen::Index c = 0; c < x.cols(); ++c) out(i, c) = normed[c];
  }
  return out;
}

inline Tensord affine_loops(const Tensord& x, const Tensord& w, const Vectord& b) {
  Tensord out = matmul_loops(x, w);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += b[j];
  }
  return out;
}

inline double max_abs_diff(const Tensord& a, const Tensord& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// max_i ||a_i - b_i||_inf / ||b_i||_inf
inline double row_relative_error(const Tensord& a, const Tensord& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double scale = std::max(b.row(i).cwiseAbs().maxCoeff(), 1e-300);
    worst = std::max(worst, (a.row(i) - b.row(i)).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

}  // namespace lbla::oracle
