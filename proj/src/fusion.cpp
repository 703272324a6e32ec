#include "ivg/fusion.hpp"

#include <array>

namespace ivg {

FusionParams add_fusion_params(ParamStore& store, int d) {
  FusionParams p;
  p.w_video = store.add("fusion.similarity.video", d, 1, Init::kUniformFanIn, d);
  p.w_query = store.add("fusion.similarity.query", d, 1, Init::kUniformFanIn, d);
  p.w_joint = store.add("fusion.similarity.joint", 1, d, Init::kUniformFanIn, d);
  p.ffn = store.add("fusion.ffn.weight", 4 * d, d, Init::kUniformFanIn);
  p.ffn_bias = store.add("fusion.ffn.bias", 1, d, Init::kUniformFanIn, 4 * d);
  return p;
}

ad::Var cqa_similarity(ad::Tape& tape, const ParamStore& store, const FusionParams& p, ad::Var v_prime,
                       ad::Var q_prime) {
  auto P = [&](int slot) { return tape.param(store.value(slot), slot); };
  if (v_prime.cols() != q_prime.cols()) throw ConfigError("cqa: video and query widths differ");
  ad::Var s = ad::matmul_nt(ad::mul_row(v_prime, P(p.w_joint)), q_prime);
  s = ad::add_col(s, ad::matmul(v_prime, P(p.w_video)));
  return ad::add_row(s, ad::transpose(ad::matmul(q_prime, P(p.w_query))));
}

ad::Var cqa_fuse(ad::Tape& tape, const ParamStore& store, const FusionParams& p, ad::Var v_prime, ad::Var q_prime,
                 const ad::RowMask& query_mask) {
  auto P = [&](int slot) { return tape.param(store.value(slot), slot); };
  const ad::Var s = cqa_similarity(tape, store, p, v_prime, q_prime);
  const ad::Var s_row = ad::softmax_rows(s, query_mask);
  // Column softmax over video positions; padded query columns stay finite and
  // are zeroed out by s_row.
  const ad::Var s_col = ad::transpose(ad::softmax_rows(ad::transpose(s)));
  const ad::Var a = ad::matmul(s_row, q_prime);
  const ad::Var b = ad::matmul(ad::matmul_nt(s_row, s_col), v_prime);
  const std::array<ad::Var, 4> parts = {v_prime, a, ad::hadamard(v_prime, a), ad::hadamard(v_prime, b)};
  return ad::add_row(ad::matmul(ad::concat_cols(parts), P(p.ffn)), P(p.ffn_bias));
}

Matrix cqa_fuse(const ContextualizedFeatures& feats, const ParamStore& store, const FusionParams& p,
                const ad::RowMask& query_mask) {
  ad::Tape tape(false);
  return cqa_fuse(tape, store, p, tape.constant(feats.v_prime), tape.constant(feats.q_prime), query_mask).value();
}

}  // namespace ivg
