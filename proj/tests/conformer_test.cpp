#include <gtest/gtest.h>

#include "lbla/conformer.hpp"
#include "lbla/lbla.hpp"
#include "oracles.hpp"

namespace {

using lbla::AttnKind;
using lbla::ModelConfig;
using lbla::Rng;
using lbla::Tensord;
using lbla::Vectord;
namespace oracle = lbla::oracle;

ModelConfig small_config(Eigen::Index d = 8, Eigen::Index heads = 2) {
  ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.d_model = d;
  cfg.d_ff = 2 * d;
  cfg.heads = heads;
  cfg.conv_kernel = 3;
  return cfg;
}

Vectord random_vec(Rng& rng, Eigen::Index n, double lo, double hi) {
  return lbla::uniform_tensor(rng, n, 1, lo, hi).col(0);
}

// Fills every bias, norm and batch-norm statistic with non-trivial values so the loop
// references exercise them.
lbla::ConformerBlockParams busy_block(Rng& rng, const ModelConfig& cfg) {
  auto b = lbla::init_block(rng, cfg);
  lbla::for_each_tensor(b, [&](const std::string& name, auto& t) {
    if (t.cols() != 1) return;
    const bool positive = name.find("gamma") != std::string::npos ||
                          name.find("running_var") != std::string::npos;
    t = positive ? random_vec(rng, t.rows(), 0.5, 1.5) : random_vec(rng, t.rows(), -0.3, 0.3);
  });
  return b;
}

Tensord ffn_loops(const Tensord& x, const lbla::FfnParams& p, double scale) {
  const Tensord normed = oracle::layernorm_loops(x, p.norm.gamma, p.norm.beta, 1e-5);
  Tensord hidden = oracle::affine_loops(normed, p.w_in, p.b_in);
  for (Eigen::Index i = 0; i < hidden.rows(); ++i) {
    for (Eigen::Index j = 0; j < hidden.cols(); ++j) hidden(i, j) = oracle::swish(hidden(i, j));
  }
  const Tensord out = oracle::affine_loops(hidden, p.w_out, p.b_out);
  Tensord result = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) result(i, j) += scale * out(i, j);
  }
  return result;
}

Tensord conv_loops(const Tensord& x, const lbla::ConvModuleParams& p) {
  const Eigen::Index d = x.cols();
  const Tensord normed = oracle::layernorm_loops(x, p.norm.gamma, p.norm.beta, 1e-5);
  const Tensord expanded = oracle::affine_loops(normed, p.pw1_w, p.pw1_b);
  Tensord gated(x.rows(), d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index c = 0; c < d; ++c) {
      gated(i, c) = expanded(i, c) * oracle::sigmoid(expanded(i, c + d));
    }
  }
  Tensord conv = oracle::conv1d_direct(gated, p.depthwise);
  for (Eigen::Index i = 0; i < conv.rows(); ++i) {
    for (Eigen::Index c = 0; c < d; ++c) {
      const double bn = (conv(i, c) - p.bn.running_mean[c]) /
                            std::sqrt(p.bn.running_var[c] + lbla::kBatchNormEps) * p.bn.gamma[c] +
                        p.bn.beta[c];
      conv(i, c) = oracle::swish(bn);
    }
  }
  const Tensord branch = oracle::affine_loops(conv, p.pw2_w, p.pw2_b);
  return x + branch;
}

TEST(Ffn, ZeroWeightsPassThrough) {
  Rng rng(1);
  const auto cfg = small_config();
  auto b = lbla::shaped_block(cfg);
  const Tensord x = lbla::uniform_tensor(rng, 4, 8, -1, 1);
  EXPECT_EQ(lbla::ffn_forward(x, b.ffn1, true), x);
}

TEST(Ffn, HalfStepScalesBranch) {
  Rng rng(2);
  const auto cfg = small_config();
  const auto b = busy_block(rng, cfg);
  const Tensord x = lbla::uniform_tensor(rng, 4, 8, -1, 1);
  const Tensord on = lbla::ffn_forward(x, b.ffn1, true);
  const Tensord off = lbla::ffn_forward(x, b.ffn1, false);
  EXPECT_LE(oracle::max_abs_diff(on - x, 0.5 * (off - x)), 1e-12);
}

TEST(Ffn, MatchesLoopReference) {
  Rng rng(3);
  const auto cfg = small_config();
  const auto b = busy_block(rng, cfg);
  const Tensord x = lbla::uniform_tensor(rng, 4, 8, -1, 1);
  EXPECT_LE(oracle::max_abs_diff(lbla::ffn_forward(x, b.ffn1, true), ffn_loops(x, b.ffn1, 0.5)),
            1e-10);
  EXPECT_LE(oracle::max_abs_diff(lbla::ffn_forward(x, b.ffn2, false), ffn_loops(x, b.ffn2, 1.0)),
            1e-10);
}

TEST(ConvModule, ZeroOutputProjectionPassesThrough) {
  Rng rng(4);
  const auto cfg = small_config();
  auto b = lbla::init_block(rng, cfg);
  b.conv.pw2_w.setZero();
  const Tensord x = lbla::uniform_tensor(rng, 6, 8, -1, 1);
  EXPECT_EQ(lbla::conv_module_forward(x, b.conv), x);
}

TEST(ConvModule, ClosedGateSilencesBranch) {
  Rng rng(5);
  const auto cfg = small_config();
  auto b = lbla::init_block(rng, cfg);
  b.conv.pw1_w.rightCols(8).setZero();
  b.conv.pw1_b.tail(8).setConstant(-60.0);
  const Tensord x = lbla::uniform_tensor(rng, 6, 8, -1, 1);
  EXPECT_LE(oracle::max_abs_diff(lbla::conv_module_forward(x, b.conv), x), 1e-6);
}

TEST(ConvModule, MatchesStagedReference) {
  Rng rng(6);
  const auto cfg = small_config();
  const auto b = busy_block(rng, cfg);
  const Tensord x = lbla::uniform_tensor(rng, 6, 8, -1, 1);
  EXPECT_LE(oracle::max_abs_diff(lbla::conv_module_forward(x, b.conv), conv_loops(x, b.conv)),
            1e-10);
}

TEST(ConvModule, EvenKernelRejected) {
  auto cfg = small_config();
  cfg.conv_kernel = 4;
  EXPECT_THROW(cfg.validate(), lbla::ConfigError);
  Rng rng(7);
  auto b = lbla::init_block(rng, small_config());
  b.conv.depthwise = Tensord::Ones(8, 4);
  EXPECT_THROW(lbla::conv_module_forward(Tensord::Ones(3, 8), b.conv), lbla::ConfigError);
}

TEST(Block, PreservesShape) {
  Rng rng(8);
  const auto cfg = small_config(16, 4);
  const auto b = lbla::init_block(rng, cfg);
  const Tensord out = lbla::block_forward(lbla::uniform_tensor(rng, 13, 16, -1, 1), b, cfg);
  EXPECT_EQ(out.rows(), 13);
  EXPECT_EQ(out.cols(), 16);
}

TEST(Block, SoftmaxAndLblaAreDistinct) {
  Rng rng(9);
  auto cfg = small_config(16, 4);
  const auto b = lbla::init_block(rng, cfg);
  const Tensord x = lbla::uniform_tensor(rng, 12, 16, -1, 1);
  const Tensord lbla_out = lbla::block_forward(x, b, cfg);
  cfg.attn_kind = AttnKind::kSoftmax;
  const Tensord softmax_out = lbla::block_forward(x, b, cfg);
  EXPECT_GT(oracle::max_abs_diff(lbla_out, softmax_out), 1e-6);
}

TEST(Block, LinearizedAndOracleRoutesAgree) {
  Rng rng(10);
  for (lbla::KernelKind kernel : {lbla::KernelKind::kSigmoid, lbla::KernelKind::kRelu,
                                  lbla::KernelKind::kExponential}) {
    auto cfg = small_config(16, 2);
    cfg.kernel = kernel;
    const auto b = busy_block(rng, cfg);
    const Tensord x = lbla::uniform_tensor(rng, 20, 16, -1, 1);
    EXPECT_LE(oracle::max_abs_diff(lbla::block_forward(x, b, cfg, lbla::LblaRoute::kLinearized),
                                   lbla::block_forward(x, b, cfg, lbla::LblaRoute::kOracle)),
              1e-9);
  }
}

TEST(Block, SingleStepEveryAttentionKind) {
  Rng rng(11);
  for (AttnKind kind : {AttnKind::kSoftmax, AttnKind::kLbla}) {
    for (bool reweight : {true, false}) {
      auto cfg = small_config();
      cfg.attn_kind = kind;
      cfg.use_reweight = reweight;
      const auto b = lbla::init_block(rng, cfg);
      const Tensord out = lbla::block_forward(lbla::uniform_tensor(rng, 1, 8, -1, 1), b, cfg);
      EXPECT_EQ(out.rows(), 1);
      EXPECT_TRUE(out.allFinite());
    }
  }
}

TEST(Block, HorizonKnob) {
  Rng rng(12);
  auto cfg = small_config();
  const auto b = lbla::init_block(rng, cfg);
  const Tensord x = lbla::uniform_tensor(rng, 10, 8, -1, 1);
  cfg.reweight_horizon = 10;
  const Tensord same = lbla::block_forward(x, b, cfg);
  cfg.reweight_horizon = 0;
  EXPECT_EQ(same, lbla::block_forward(x, b, cfg));
  cfg.reweight_horizon = 40;
  EXPECT_GT(oracle::max_abs_diff(lbla::block_forward(x, b, cfg), same), 1e-9);
  cfg.reweight_horizon = 9;
  EXPECT_THROW(lbla::block_forward(x, b, cfg), lbla::ConfigError);
}

TEST(Block, WrongWidthIsShapeError) {
  Rng rng(13);
  const auto cfg = small_config();
  const auto b = lbla::init_block(rng, cfg);
  EXPECT_THROW(lbla::block_forward(Tensord::Ones(3, 6), b, cfg), lbla::ShapeError);
}

TEST(Encoder, ZeroBlocksIsIdentity) {
  Rng rng(14);
  const Tensord x = lbla::uniform_tensor(rng, 5, 8, -1, 1);
  EXPECT_EQ(lbla::encoder_forward(x, {}, small_config()), x);
}

TEST(Encoder, TwoBlocksCompose) {
  const auto cfg = small_config();
  const auto blocks = lbla::init_encoder(3, cfg);
  ASSERT_EQ(blocks.size(), 2u);
  Rng rng(15);
  const Tensord x = lbla::uniform_tensor(rng, 7, 8, -1, 1);
  const Tensord twice = lbla::block_forward(lbla::block_forward(x, blocks[0], cfg), blocks[1], cfg);
  EXPECT_EQ(lbla::encoder_forward(x, blocks, cfg), twice);
}

TEST(Encoder, DefaultSizeGolden) {
  ModelConfig cfg;  // 12 layers, d=256, d_ff=2048, 4 heads, kernel 31, sigmoid LBLA
  const auto blocks = lbla::init_encoder(7, cfg);
  Rng rng(7);
  const Tensord x = lbla::uniform_tensor(rng, 32, 256, -1, 1);
  const Tensord y = lbla::encoder_forward(x, blocks, cfg);
  ASSERT_TRUE(y.allFinite());
  // Recorded from this implementation and frozen.
  EXPECT_NEAR(y.sum(), 0.0, 1e-9);
  EXPECT_NEAR(y.squaredNorm(), 8191.9205115389486, 1e-8);
  EXPECT_NEAR(y(0, 0), -0.90150146616546634, 1e-10);
  EXPECT_NEAR(y(31, 255), 2.0026079795818208, 1e-10);
}

TEST(Block, NoNonFiniteOverRandomConfigs) {
  Rng rng(16);
  const Eigen::Index dims[] = {8, 16, 32};
  const Eigen::Index heads[] = {1, 2, 4};
  const Eigen::Index lengths[] = {1, 2, 17, 64};
  const lbla::KernelKind kernels[] = {lbla::KernelKind::kRelu, lbla::KernelKind::kExponential,
                                      lbla::KernelKind::kSigmoid};
  for (int trial = 0; trial < 200; ++trial) {
    ModelConfig cfg = small_config(dims[rng.below(3)], heads[rng.below(3)]);
    cfg.attn_kind = rng.below(4) == 0 ? AttnKind::kSoftmax : AttnKind::kLbla;
    cfg.kernel = kernels[rng.below(3)];
    cfg.use_reweight = rng.below(2) == 0;
    cfg.conv_kernel = 2 * static_cast<Eigen::Index>(rng.below(4)) + 1;
    const auto b = lbla::init_block(rng, cfg);
    const Tensord x = lbla::uniform_tensor(rng, lengths[rng.below(4)], cfg.d_model, -5, 5);
    ASSERT_TRUE(lbla::block_forward(x, b, cfg).allFinite()) << "trial " << trial;
  }
}

}  // namespace
