#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lbla/attention.hpp"
#include "lbla/kernels.hpp"
#include "lbla/numeric.hpp"

namespace lbla {

enum class AttnKind : std::uint32_t { kSoftmax = 0, kLbla = 1 };

// Which implementation evaluates LBLA heads. Both compute the same mechanism.
enum class LblaRoute { kLinearized, kOracle };

struct ModelConfig {
  Eigen::Index num_layers = 12;
  Eigen::Index d_model = 256;
  Eigen::Index d_ff = 2048;
  Eigen::Index heads = 4;
  Eigen::Index conv_kernel = 31;
  AttnKind attn_kind = AttnKind::kLbla;
  KernelKind kernel = KernelKind::kSigmoid;
  bool use_reweight = true;
  // 0 means "use the sequence length"; otherwise must be >= every T seen.
  Eigen::Index reweight_horizon = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerNormParams {
  Vectord gamma, beta;
};

struct FfnParams {
  LayerNormParams norm;
  Tensord w_in;  // d x d_ff
  Vectord b_in;
  Tensord w_out;  // d_ff x d
  Vectord b_out;
};

// Inference-mode batch norm.
struct BatchNormParams {
  Vectord gamma, beta, running_mean, running_var;
};

inline constexpr double kBatchNormEps = 1e-5;

struct ConvModuleParams {
  LayerNormParams norm;
  Tensord pw1_w;  // d x 2d, GLU value half first, gate half second
  Vectord pw1_b;
  Tensord depthwise;  // d x conv_kernel
  BatchNormParams bn;
  Tensord pw2_w;  // d x d
  Vectord pw2_b;
};

struct ConformerBlockParams {
  FfnParams ffn1;
  LayerNormParams attn_norm;
  AttentionParams<double> attn;
  ConvModuleParams conv;
  FfnParams ffn2;
  LayerNormParams final_norm;
};

Tensord swish(const Tensord& x);

// x + s * (W_out swish(W_in LN(x) + b_in) + b_out), s = 0.5 when half_step.
Tensord ffn_forward(const Tensord& x, const FfnParams& p, bool half_step);

// x + pw2(swish(bn(depthwise(glu(pw1(LN(x)))))))
Tensord conv_module_forward(const Tensord& x, const ConvModuleParams& p);

// x + MHA(LN(x)) with the head-level mechanism chosen by cfg.
Tensord attention_module_forward(const Tensord& x, const LayerNormParams& norm,
                                 const AttentionParams<double>& attn, const ModelConfig& cfg,
                                 LblaRoute route = LblaRoute::kLinearized);

Tensord block_forward(const Tensord& x, const ConformerBlockParams& p, const ModelConfig& cfg,
                      LblaRoute route = LblaRoute::kLinearized);

Tensord encoder_forward(const Tensord& x, const std::vector<ConformerBlockParams>& blocks,
                        const ModelConfig& cfg, LblaRoute route = LblaRoute::kLinearized);

// Matrices drawn by seeded_init with fan_in = input width; biases zero, norms identity,
// batch-norm statistics identity.
ConformerBlockParams init_block(Rng& rng, const ModelConfig& cfg);
std::vector<ConformerBlockParams> init_encoder(std::uint64_t seed, const ModelConfig& cfg);

// All tensors shaped for cfg and zero-filled (norm scales and variances set to one).
ConformerBlockParams shaped_block(const ModelConfig& cfg);

// Throws ShapeError / ConfigError when p does not fit cfg.
void validate_block(const ConformerBlockParams& p, const ModelConfig& cfg);

// Visits every tensor of a block in a fixed order with its dotted name. Vectors are
// visited as n x 1 column tensors.
template <typename Block, typename Visitor>
void for_each_tensor(Block& b, Visitor&& visit) {
  auto ln = [&](const std::string& prefix, auto& n) {
    visit(prefix + ".gamma", n.gamma);
    visit(prefix + ".beta", n.beta);
  };
  auto ffn = [&](const std::string& prefix, auto& f) {
    ln(prefix + ".norm", f.norm);
    visit(prefix + ".w_in", f.w_in);
    visit(prefix + ".b_in", f.b_in);
    visit(prefix + ".w_out", f.w_out);
    visit(prefix + ".b_out", f.b_out);
  };
  ffn("ffn1", b.ffn1);
  ln("attn.norm", b.attn_norm);
  visit(std::string("attn.w_q"), b.attn.w_q);
  visit(std::string("attn.w_k"), b.attn.w_k);
  visit(std::string("attn.w_v"), b.attn.w_v);
  visit(std::string("attn.w_o"), b.attn.w_o);
  ln("conv.norm", b.conv.norm);
  visit(std::string("conv.pw1_w"), b.conv.pw1_w);
  visit(std::string("conv.pw1_b"), b.conv.pw1_b);
  visit(std::string("conv.depthwise"), b.conv.depthwise);
  visit(std::string("conv.bn.gamma"), b.conv.bn.gamma);
  visit(std::string("conv.bn.beta"), b.conv.bn.beta);
  visit(std::string("conv.bn.running_mean"), b.conv.bn.running_mean);
  visit(std::string("conv.bn.running_var"), b.conv.bn.running_var);
  visit(std::string("conv.pw2_w"), b.conv.pw2_w);
  visit(std::string("conv.pw2_b"), b.conv.pw2_b);
  ffn("ffn2", b.ffn2);
  ln("final_norm", b.final_norm);
}

}  // namespace lbla
