#pragma once

#include "ivg/autodiff.hpp"
#include "ivg/encoder.hpp"
#include "ivg/params.hpp"

namespace ivg {

/// Context-query attention weights: trilinear similarity
/// S_ij = w_v . v'_i + w_q . q'_j + w_vq . (v'_i o q'_j), then a single
/// feed-forward layer from the 4d concatenation back to d.
struct FusionParams {
  int w_video = -1;  // d x 1
  int w_query = -1;  // d x 1
  int w_joint = -1;  // 1 x d
  int ffn = -1;      // 4d x d
  int ffn_bias = -1;  // 1 x d
};

FusionParams add_fusion_params(ParamStore& store, int d);

/// T x N trilinear similarity.
ad::Var cqa_similarity(ad::Tape& tape, const ParamStore& store, const FusionParams& p, ad::Var v_prime,
                       ad::Var q_prime);

/// X = FFN([V'; A; V' o A; V' o B]) with A = softmax_row(S) Q' and
/// B = softmax_row(S) softmax_col(S)^T V'. Masked query positions get zero
/// attention weight; an all-masked query throws ConfigError.
ad::Var cqa_fuse(ad::Tape& tape, const ParamStore& store, const FusionParams& p, ad::Var v_prime, ad::Var q_prime,
                 const ad::RowMask& query_mask = {});

Matrix cqa_fuse(const ContextualizedFeatures& feats, const ParamStore& store, const FusionParams& p,
                const ad::RowMask& query_mask = {});

}  // namespace ivg
