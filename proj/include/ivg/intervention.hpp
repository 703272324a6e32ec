#pragma once

#include <array>
#include <utility>

#include "ivg/autodiff.hpp"
#include "ivg/datamodel.hpp"
#include "ivg/params.hpp"
#include "ivg/vocab.hpp"

namespace ivg {

/// Confounder representations z = g(embed(z)) for the role, action and object
/// vocabularies, with their fixed priors p(z).
struct ConfounderEmbeddingTable {
  std::array<int, 3> embedding{-1, -1, -1};  // |C| x d per set
  int projection = -1;                       // g: d x d
  int projection_bias = -1;                  // 1 x d
  std::array<Eigen::RowVectorXd, 3> priors;
};

/// Throws ConfigError if any vocabulary set is empty.
ConfounderEmbeddingTable add_confounder_params(ParamStore& store, const ConfounderVocab& vocab, int d);

/// z_bar = mean over the three sets of sum_z p(z) g(embed(z)); 1 x d.
ad::Var confounder_mean(ad::Tape& tape, const ParamStore& store, const ConfounderEmbeddingTable& table);
Eigen::RowVectorXd confounder_mean(const ParamStore& store, const ConfounderEmbeddingTable& table);

/// Backdoor adjustment under the NWGM approximation: every row of X is shifted
/// by z_bar, which equals the prior-weighted expectation of X (+) z averaged over
/// the three sets.
ad::Var deconfound(ad::Tape& tape, const ParamStore& store, const ConfounderEmbeddingTable& table, ad::Var x);
Matrix deconfound(const Matrix& x, const ParamStore& store, const ConfounderEmbeddingTable& table);

/// Start and end scoring heads. Each maps the per-position input
/// [x_i ; mean_j x_j] (2d) through Linear(2d, d) -> ReLU -> Linear(d, 1).
struct SpanHeadParams {
  struct Head {
    int hidden, hidden_bias, out, out_bias;
  };
  Head start;
  Head end;
};

SpanHeadParams add_span_head_params(ParamStore& store, int d);

struct SpanDistribution {
  Eigen::RowVectorXd p_start;
  Eigen::RowVectorXd p_end;
};

struct SpanNodes {
  ad::Var p_start;  // 1 x T
  ad::Var p_end;    // 1 x T
};

/// Softmax over positions of each head's logits. Throws NumericError naming the
/// first position with a non-finite logit.
SpanNodes span_distributions(ad::Tape& tape, const ParamStore& store, const SpanHeadParams& heads, ad::Var x_adj);
SpanDistribution span_distributions(const Matrix& x_adj, const ParamStore& store, const SpanHeadParams& heads);

/// Probability floor applied before the log in span_cross_entropy.
inline constexpr double kProbabilityFloor = 1e-12;

struct SpanLoss {
  double l_start = 0.0;
  double l_end = 0.0;
  bool clamped = false;  ///< a gold probability fell below kProbabilityFloor
};

SpanLoss span_cross_entropy(const SpanDistribution& dist, const BoundaryIndices& gold);
std::pair<ad::Var, ad::Var> span_cross_entropy(const SpanNodes& dist, const BoundaryIndices& gold);

/// argmax over i <= j of p_start[i] * p_end[j]; ties go to the smaller i, then j.
BoundaryIndices predict_span(const SpanDistribution& dist);

}  // namespace ivg
