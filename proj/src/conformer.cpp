#include "lbla/conformer.hpp"

#include "lbla/lbla.hpp"

namespace lbla {

namespace {

Tensord affine(const Tensord& x, const Tensord& w, const Vectord& b) {
  Tensord out = matmul(x, w);
  out.rowwise() += b.transpose();
  return out;
}

Tensord sigmoid(const Tensord& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

Vectord ones(Eigen::Index n) { return Vectord::Ones(n); }
Vectord zeros(Eigen::Index n) { return Vectord::Zero(n); }

LayerNormParams identity_norm(Eigen::Index d) { return {ones(d), zeros(d)}; }

void expect_shape(const Tensord& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(name) + " is " + shape_string(m.rows(), m.cols()) +
                     ", expected " + shape_string(rows, cols));
  }
}

void expect_len(const Vectord& v, Eigen::Index n, const char* name) {
  if (v.size() != n) {
    throw ShapeError(std::string(name) + " has length " + std::to_string(v.size()) +
                     ", expected " + std::to_string(n));
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (num_layers < 0) throw ConfigError("num_layers must be >= 0");
  if (d_model < 1 || d_ff < 1) throw ConfigError("d_model and d_ff must be >= 1");
  if (heads < 1 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0) {
    throw ConfigError("conv_kernel must be odd, got " + std::to_string(conv_kernel));
  }
  if (reweight_horizon < 0) throw ConfigError("reweight_horizon must be >= 0");
}

Tensord swish(const Tensord& x) { return x.cwiseProduct(sigmoid(x)); }

Tensord ffn_forward(const Tensord& x, const FfnParams& p, bool half_step) {
  const Tensord normed = layernorm(x, p.norm.gamma, p.norm.beta);
  const Tensord hidden = swish(affine(normed, p.w_in, p.b_in));
  const Tensord branch = affine(hidden, p.w_out, p.b_out);
  require_same_shape(branch, x, "ffn_forward");
  const double scale = half_step ? 0.5 : 1.0;
  return x + scale * branch;
}

Tensord conv_module_forward(const Tensord& x, const ConvModuleParams& p) {
  const Eigen::Index d = x.cols();
  if (p.pw1_w.cols() != 2 * d) {
    throw ShapeError("conv_module_forward: pointwise-1 output width " +
                     std::to_string(p.pw1_w.cols()) + ", expected " + std::to_string(2 * d));
  }
  const Tensord normed = layernorm(x, p.norm.gamma, p.norm.beta);
  const Tensord expanded = affine(normed, p.pw1_w, p.pw1_b);
  const Tensord gated =
      expanded.leftCols(d).cwiseProduct(sigmoid(expanded.rightCols(d)));
  Tensord conv = depthwise_conv1d(gated, p.depthwise);
  const Eigen::ArrayXd inv_std = (p.bn.running_var.array() + kBatchNormEps).rsqrt();
  for (Eigen::Index i = 0; i < conv.rows(); ++i) {
    conv.row(i) = (((conv.row(i).transpose().array() - p.bn.running_mean.array()) * inv_std) *
                       p.bn.gamma.array() +
                   p.bn.beta.array())
                      .matrix()
                      .transpose();
  }
  const Tensord branch = affine(swish(conv), p.pw2_w, p.pw2_b);
  require_same_shape(branch, x, "conv_module_forward");
  return x + branch;
}

Tensord attention_module_forward(const Tensord& x, const LayerNormParams& norm,
                                 const AttentionParams<double>& attn, const ModelConfig& cfg,
                                 LblaRoute route) {
  const Tensord normed = layernorm(x, norm.gamma, norm.beta);
  if (cfg.attn_kind == AttnKind::kSoftmax) {
    return x + multi_head_attention(normed, attn, [](const Tensord& q, const Tensord& k,
                                                     const Tensord& v) {
             return softmax_attention(q, k, v);
           });
  }
  LblaOptions opts;
  opts.kernel = cfg.kernel;
  if (cfg.use_reweight) {
    const Eigen::Index horizon = cfg.reweight_horizon == 0 ? x.rows() : cfg.reweight_horizon;
    opts.reweight = build_reweight(x.rows(), horizon);
  }
  return x + multi_head_attention(normed, attn, [&](const Tensord& q, const Tensord& k,
                                                    const Tensord& v) {
           return route == LblaRoute::kOracle ? lbla_oracle(q, k, v, opts)
                                              : lbla_forward(q, k, v, opts);
         });
}

Tensord block_forward(const Tensord& x, const ConformerBlockParams& p, const ModelConfig& cfg,
                      LblaRoute route) {
  if (x.cols() != cfg.d_model) {
    throw ShapeError("block_forward: input width " + std::to_string(x.cols()) +
                     " != d_model " + std::to_string(cfg.d_model));
  }
  Tensord h = ffn_forward(x, p.ffn1, true);
  h = attention_module_forward(h, p.attn_norm, p.attn, cfg, route);
  h = conv_module_forward(h, p.conv);
  h = ffn_forward(h, p.ffn2, true);
  return layernorm(h, p.final_norm.gamma, p.final_norm.beta);
}

Tensord encoder_forward(const Tensord& x, const std::vector<ConformerBlockParams>& blocks,
                        const ModelConfig& cfg, LblaRoute route) {
  Tensord h = x;
  for (const auto& block : blocks) h = block_forward(h, block, cfg, route);
  return h;
}

ConformerBlockParams shaped_block(const ModelConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = cfg.d_model;
  const Eigen::Index ff = cfg.d_ff;
  auto ffn = [&] {
    return FfnParams{identity_norm(d), Tensord::Zero(d, ff), zeros(ff), Tensord::Zero(ff, d),
                     zeros(d)};
  };
  ConformerBlockParams b;
  b.ffn1 = ffn();
  b.attn_norm = identity_norm(d);
  b.attn = {Tensord::Zero(d, d), Tensord::Zero(d, d), Tensord::Zero(d, d), Tensord::Zero(d, d),
            cfg.heads};
  b.conv.norm = identity_norm(d);
  b.conv.pw1_w = Tensord::Zero(d, 2 * d);
  b.conv.pw1_b = zeros(2 * d);
  b.conv.depthwise = Tensord::Zero(d, cfg.conv_kernel);
  b.conv.bn = {ones(d), zeros(d), zeros(d), ones(d)};
  b.conv.pw2_w = Tensord::Zero(d, d);
  b.conv.pw2_b = zeros(d);
  b.ffn2 = ffn();
  b.final_norm = identity_norm(d);
  return b;
}

ConformerBlockParams init_block(Rng& rng, const ModelConfig& cfg) {
  ConformerBlockParams b = shaped_block(cfg);
  const Eigen::Index d = cfg.d_model;
  const Eigen::Index ff = cfg.d_ff;
  b.ffn1.w_in = seeded_init(rng, d, ff, d);
  b.ffn1.w_out = seeded_init(rng, ff, d, ff);
  b.attn.w_q = seeded_init(rng, d, d, d);
  b.attn.w_k = seeded_init(rng, d, d, d);
  b.attn.w_v = seeded_init(rng, d, d, d);
  b.attn.w_o = seeded_init(rng, d, d, d);
  b.conv.pw1_w = seeded_init(rng, d, 2 * d, d);
  b.conv.depthwise = seeded_init(rng, d, cfg.conv_kernel, cfg.conv_kernel);
  b.conv.pw2_w = seeded_init(rng, d, d, d);
  b.ffn2.w_in = seeded_init(rng, d, ff, d);
  b.ffn2.w_out = seeded_init(rng, ff, d, ff);
  return b;
}

std::vector<ConformerBlockParams> init_encoder(std::uint64_t seed, const ModelConfig& cfg) {
  Rng rng(seed);
  std::vector<ConformerBlockParams> blocks;
  blocks.reserve(static_cast<std::size_t>(cfg.num_layers));
  for (Eigen::Index i = 0; i < cfg.num_layers; ++i) blocks.push_back(init_block(rng, cfg));
  return blocks;
}

void validate_block(const ConformerBlockParams& p, const ModelConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = cfg.d_model;
  const Eigen::Index ff = cfg.d_ff;
  for (const FfnParams* f : {&p.ffn1, &p.ffn2}) {
    expect_len(f->norm.gamma, d, "ffn.norm.gamma");
    expect_len(f->norm.beta, d, "ffn.norm.beta");
    expect_shape(f->w_in, d, ff, "ffn.w_in");
    expect_len(f->b_in, ff, "ffn.b_in");
    expect_shape(f->w_out, ff, d, "ffn.w_out");
    expect_len(f->b_out, d, "ffn.b_out");
  }
  p.attn.validate();
  expect_shape(p.attn.w_q, d, d, "attn.w_q");
  if (p.attn.heads != cfg.heads) throw ConfigError("attention head count disagrees with config");
  expect_shape(p.conv.pw1_w, d, 2 * d, "conv.pw1_w");
  expect_len(p.conv.pw1_b, 2 * d, "conv.pw1_b");
  expect_shape(p.conv.depthwise, d, cfg.conv_kernel, "conv.depthwise");
  expect_shape(p.conv.pw2_w, d, d, "conv.pw2_w");
  expect_len(p.conv.pw2_b, d, "conv.pw2_b");
  expect_len(p.conv.bn.running_var, d, "conv.bn.running_var");
  if ((p.conv.bn.running_var.array() <= 0.0).any()) {
    throw ConfigError("conv.bn.running_var entries must be positive");
  }
}

}  // namespace lbla
