#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ivg/autodiff.hpp"
#include "ivg/datamodel.hpp"
#include "ivg/params.hpp"

namespace ivg {

struct EncoderConfig {
  int d_v = 32;
  int vocab_size = 1;
  int d_w = 64;
  int d = 128;
  int heads = 8;
  int kernel = 7;
  int conv_layers = 4;

  int head_dim() const { return d / heads; }
  /// Throws ConfigError unless d % heads == 0, kernel is odd and sizes are positive.
  void validate() const;
};

/// Slots of the shared video/text encoder inside a ParamStore.
///
/// Layout: token embedding, one projection per modality, then a stack shared by
/// both modalities: `conv_layers` pre-norm residual blocks of depthwise
/// separable convolution, one pre-norm multi-head self-attention block and one
/// pre-norm position-wise feed-forward block.
struct EncoderParams {
  struct ConvBlock {
    int norm_gain, norm_bias, depthwise, depthwise_bias, pointwise, pointwise_bias;
  };
  EncoderConfig config;
  int embedding = -1;
  int video_proj = -1, video_proj_bias = -1;
  int text_proj = -1, text_proj_bias = -1;
  std::vector<ConvBlock> convs;
  int attn_norm_gain = -1, attn_norm_bias = -1, wq = -1, wk = -1, wv = -1, wo = -1;
  int ffn_norm_gain = -1, ffn_norm_bias = -1, ffn = -1, ffn_bias = -1;
};

EncoderParams add_encoder_params(ParamStore& store, const EncoderConfig& config);

/// Registers the encoder in a fresh store and initialises it from `seed`.
EncoderParams init_params(ParamStore& store, const EncoderConfig& config, std::uint64_t seed);

/// Contextualized representations V' (T x d), Q' (N x d) and q = max-pool(Q').
struct ContextualizedFeatures {
  Matrix v_prime;
  Matrix q_prime;
  Eigen::RowVectorXd q_pooled;
};

struct EncodedNodes {
  ad::Var v_prime;
  ad::Var q_prime;
  ad::Var q_pooled;
};

/// Fixed sinusoidal position table (rows x d).
Matrix sinusoidal_positions(Eigen::Index rows, Eigen::Index d);

Matrix to_matrix(const VideoFeatures& f);

/// The shared stack applied to an already projected sequence. Rows with
/// mask[i] == false are padding: they are zeroed before every convolution and
/// excluded as attention keys.
ad::Var encoder_stack(ad::Tape& tape, const ParamStore& store, const EncoderParams& p, ad::Var x,
                      const ad::RowMask& mask = {});

/// Graph form. `query_mask` marks real tokens when `tokens` is padded.
EncodedNodes encode(ad::Tape& tape, const ParamStore& store, const EncoderParams& p, const Matrix& video,
                    std::span<const int> tokens, const ad::RowMask& query_mask = {});

ContextualizedFeatures encode(const GroundingExample& example, const ParamStore& store, const EncoderParams& p);

}  // namespace ivg
