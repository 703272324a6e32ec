#include "ivg/contrastive.hpp"

#include <cmath>
#include <string>

namespace ivg {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

ContrastMask ContrastMask::from_moment(const BoundaryIndices& gold) {
  if (!gold.valid()) throw MaskError("invalid gold boundaries");
  ContrastMask m;
  m.positive.assign(static_cast<std::size_t>(gold.t), false);
  m.negative.assign(static_cast<std::size_t>(gold.t), true);
  for (int i = gold.i_start; i <= gold.i_end; ++i) {
    m.positive[static_cast<std::size_t>(i)] = true;
    m.negative[static_cast<std::size_t>(i)] = false;
  }
  return m;
}

ContrastMask ContrastMask::for_anchor(const BoundaryIndices& gold, int anchor) {
  ContrastMask m = from_moment(gold);
  if (gold.i_start != gold.i_end) m.positive[static_cast<std::size_t>(anchor)] = false;
  return m;
}

void ContrastMask::validate() const {
  if (positive.size() != negative.size()) throw MaskError("positive and negative masks differ in length");
  bool any_pos = false;
  bool any_neg = false;
  for (std::size_t i = 0; i < positive.size(); ++i) {
    if (positive[i] && negative[i]) throw MaskError("position " + std::to_string(i) + " is both positive and negative");
    any_pos = any_pos || positive[i];
    any_neg = any_neg || negative[i];
  }
  if (!any_pos) throw MaskError("no positive positions");
  if (!any_neg) throw MaskError("no negative positions");
}

ContrastiveParams add_contrastive_params(ParamStore& store, int d) {
  return {{store.add("contrastive.qv.weight", d, d, Init::kUniformFanIn)},
          {store.add("contrastive.vv_start.weight", d, d, Init::kUniformFanIn)},
          {store.add("contrastive.vv_end.weight", d, d, Init::kUniformFanIn)}};
}

ad::Var js_mi_estimate(ad::Var anchor, ad::Var v_prime, const ContrastMask& mask, ad::Var weight) {
  mask.validate();
  if (static_cast<Eigen::Index>(mask.size()) != v_prime.rows())
    throw MaskError("mask length " + std::to_string(mask.size()) + " does not match " +
                    std::to_string(v_prime.rows()) + " positions");
  if (anchor.rows() != 1) throw ConfigError("anchor must be a single row");
  // Scores C(anchor, v'_i) for every position, as a 1 x T row.
  const ad::Var scores = ad::matmul_nt(ad::matmul(anchor, weight), v_prime);
  const ad::Var pos = ad::masked_mean(ad::scale(ad::softplus(ad::scale(scores, -1.0)), -1.0), mask.positive);
  const ad::Var neg = ad::masked_mean(ad::softplus(scores), mask.negative);
  return ad::sub(pos, neg);
}

double js_mi_from_scores(const Eigen::RowVectorXd& scores, const ContrastMask& mask) {
  mask.validate();
  if (static_cast<Eigen::Index>(mask.size()) != scores.size()) throw MaskError("mask length mismatch");
  double pos = 0.0, neg = 0.0;
  int np = 0, nn = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double s = scores(static_cast<Eigen::Index>(i));
    if (mask.positive[i]) {
      pos += -softplus(-s);
      ++np;
    } else if (mask.negative[i]) {
      neg += softplus(s);
      ++nn;
    }
  }
  return pos / np - neg / nn;
}

double js_mi_estimate(const Eigen::RowVectorXd& anchor, const Matrix& v_prime, const ContrastMask& mask,
                      const Matrix& weight) {
  const Eigen::RowVectorXd scores = (anchor * weight) * v_prime.transpose();
  return js_mi_from_scores(scores, mask);
}

ad::Var qv_loss(ad::Tape& tape, const ParamStore& store, const EncodedNodes& feats, const ContrastMask& mask,
                const DiscriminatorParams& disc) {
  const ad::Var w = tape.param(store.value(disc.weight), disc.weight);
  return ad::scale(js_mi_estimate(feats.q_pooled, feats.v_prime, mask, w), -1.0);
}

double qv_loss(const ContextualizedFeatures& feats, const ContrastMask& mask, const Matrix& weight) {
  return -js_mi_estimate(feats.q_pooled, feats.v_prime, mask, weight);
}

ad::Var vv_loss(ad::Tape& tape, const ParamStore& store, ad::Var v_prime, const BoundaryIndices& gold,
                const DiscriminatorParams& disc_start, const DiscriminatorParams& disc_end) {
  const ad::Var ws = tape.param(store.value(disc_start.weight), disc_start.weight);
  const ad::Var we = tape.param(store.value(disc_end.weight), disc_end.weight);
  const ad::Var is = js_mi_estimate(ad::row(v_prime, gold.i_start), v_prime,
                                    ContrastMask::for_anchor(gold, gold.i_start), ws);
  const ad::Var ie = js_mi_estimate(ad::row(v_prime, gold.i_end), v_prime,
                                    ContrastMask::for_anchor(gold, gold.i_end), we);
  return ad::scale(ad::add(is, ie), -1.0);
}

double vv_loss(const ContextualizedFeatures& feats, const BoundaryIndices& gold, const Matrix& weight_start,
               const Matrix& weight_end) {
  const auto& v = feats.v_prime;
  return -js_mi_estimate(v.row(gold.i_start), v, ContrastMask::for_anchor(gold, gold.i_start), weight_start) -
         js_mi_estimate(v.row(gold.i_end), v, ContrastMask::for_anchor(gold, gold.i_end), weight_end);
}

double dcl_objective(double l_vq, double l_vv, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("contrastive weights must be non-negative");
  return alpha * l_vq + beta * l_vv;
}

}  // namespace ivg
