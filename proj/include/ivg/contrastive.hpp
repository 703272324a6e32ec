#pragma once

#include <stdexcept>
#include <vector>

#include "ivg/autodiff.hpp"
#include "ivg/datamodel.hpp"
#include "ivg/encoder.hpp"
#include "ivg/params.hpp"

namespace ivg {

class MaskError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Positive (in-moment) and negative (out-of-moment) clip positions.
struct ContrastMask {
  std::vector<bool> positive;
  std::vector<bool> negative;

  /// Positives are the moment's clips, negatives everything else.
  static ContrastMask from_moment(const BoundaryIndices& gold);
  /// Boundary-anchored variant: the anchor itself is not a positive unless the
  /// moment has a single clip.
  static ContrastMask for_anchor(const BoundaryIndices& gold, int anchor);
  /// Throws MaskError unless the sets are disjoint and both non-empty. A position
  /// in neither set (a VV anchor) is ignored.
  void validate() const;
  std::size_t size() const { return positive.size(); }
};

/// Bilinear discriminator C(a, b) = a^T W b.
struct DiscriminatorParams {
  int weight = -1;
};

struct ContrastiveParams {
  DiscriminatorParams qv;
  DiscriminatorParams vv_start;
  DiscriminatorParams vv_end;
};

ContrastiveParams add_contrastive_params(ParamStore& store, int d);

/// Jensen-Shannon MI lower bound between an anchor (1 x d) and the rows of
/// v_prime (T x d):  mean_pos[-sp(-C)] - mean_neg[sp(C)],  sp(x) = log(1 + e^x).
ad::Var js_mi_estimate(ad::Var anchor, ad::Var v_prime, const ContrastMask& mask, ad::Var weight);
double js_mi_estimate(const Eigen::RowVectorXd& anchor, const Matrix& v_prime, const ContrastMask& mask,
                      const Matrix& weight);

/// Same estimator on precomputed discriminator scores (length T).
double js_mi_from_scores(const Eigen::RowVectorXd& scores, const ContrastMask& mask);

/// QV-CL: L_vq = -I(q, V').
ad::Var qv_loss(ad::Tape& tape, const ParamStore& store, const EncodedNodes& feats, const ContrastMask& mask,
                const DiscriminatorParams& disc);
double qv_loss(const ContextualizedFeatures& feats, const ContrastMask& mask, const Matrix& weight);

/// VV-CL: L_vv = -I(v'_s, V') - I(v'_e, V').
ad::Var vv_loss(ad::Tape& tape, const ParamStore& store, ad::Var v_prime, const BoundaryIndices& gold,
                const DiscriminatorParams& disc_start, const DiscriminatorParams& disc_end);
double vv_loss(const ContextualizedFeatures& feats, const BoundaryIndices& gold, const Matrix& weight_start,
               const Matrix& weight_end);

/// alpha * L_vq + beta * L_vv.
double dcl_objective(double l_vq, double l_vv, double alpha, double beta);

}  // namespace ivg
