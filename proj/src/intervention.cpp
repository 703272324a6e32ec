#include "ivg/intervention.hpp"

#include <array>
#include <cmath>
#include <string>

namespace ivg {

ConfounderEmbeddingTable add_confounder_params(ParamStore& store, const ConfounderVocab& vocab, int d) {
  ConfounderEmbeddingTable table;
  for (auto s : kConfounderSets) {
    const auto& entries = vocab.entries(s);
    if (entries.empty())
      throw ConfigError("confounder vocabulary set '" + std::string(set_name(s)) + "' is empty");
    const auto k = static_cast<std::size_t>(s);
    table.embedding[k] = store.add("intervention.embedding." + std::string(set_name(s)),
                                   static_cast<Eigen::Index>(entries.size()), d, Init::kUniformFanIn, 1);
    table.priors[k].resize(static_cast<Eigen::Index>(entries.size()));
    for (std::size_t i = 0; i < entries.size(); ++i) table.priors[k](static_cast<Eigen::Index>(i)) = entries[i].prior;
  }
  table.projection = store.add("intervention.projection.weight", d, d, Init::kIdentityPlusNoise);
  table.projection_bias = store.add("intervention.projection.bias", 1, d, Init::kZeros);
  return table;
}

ad::Var confounder_mean(ad::Tape& tape, const ParamStore& store, const ConfounderEmbeddingTable& table) {
  auto P = [&](int slot) { return tape.param(store.value(slot), slot); };
  const ad::Var g = P(table.projection);
  const ad::Var g_bias = P(table.projection_bias);
  std::array<ad::Var, 3> per_set;
  for (std::size_t k = 0; k < 3; ++k) {
    const ad::Var z = ad::add_row(ad::matmul(P(table.embedding[k]), g), g_bias);
    per_set[k] = ad::matmul(tape.constant(table.priors[k]), z);
  }
  return ad::scale(ad::add(ad::add(per_set[0], per_set[1]), per_set[2]), 1.0 / 3.0);
}

Eigen::RowVectorXd confounder_mean(const ParamStore& store, const ConfounderEmbeddingTable& table) {
  ad::Tape tape(false);
  return confounder_mean(tape, store, table).value().row(0);
}

ad::Var deconfound(ad::Tape& tape, const ParamStore& store, const ConfounderEmbeddingTable& table, ad::Var x) {
  const ad::Var zbar = confounder_mean(tape, store, table);
  if (zbar.cols() != x.cols()) throw ConfigError("confounder width does not match fused features");
  return ad::add_row(x, zbar);
}

Matrix deconfound(const Matrix& x, const ParamStore& store, const ConfounderEmbeddingTable& table) {
  ad::Tape tape(false);
  return deconfound(tape, store, table, tape.constant(x)).value();
}

SpanHeadParams add_span_head_params(ParamStore& store, int d) {
  auto head = [&](const std::string& pre) {
    return SpanHeadParams::Head{store.add(pre + ".hidden.weight", 2 * d, d, Init::kUniformFanIn),
                                store.add(pre + ".hidden.bias", 1, d, Init::kUniformFanIn, 2 * d),
                                store.add(pre + ".out.weight", d, 1, Init::kUniformFanIn),
                                store.add(pre + ".out.bias", 1, 1, Init::kUniformFanIn, d)};
  };
  return {head("span.start"), head("span.end")};
}

namespace {

ad::Var head_logits(ad::Tape& tape, const ParamStore& store, const SpanHeadParams::Head& h, ad::Var input) {
  auto P = [&](int slot) { return tape.param(store.value(slot), slot); };
  const ad::Var hidden = ad::relu(ad::add_row(ad::matmul(input, P(h.hidden)), P(h.hidden_bias)));
  return ad::transpose(ad::add_row(ad::matmul(hidden, P(h.out)), P(h.out_bias)));
}

void check_finite(const ad::Matrix& logits, const char* which) {
  for (Eigen::Index i = 0; i < logits.cols(); ++i)
    if (!std::isfinite(logits(0, i)))
      throw NumericError(std::string("non-finite ") + which + " logit at position " + std::to_string(i));
}

}  // namespace

SpanNodes span_distributions(ad::Tape& tape, const ParamStore& store, const SpanHeadParams& heads, ad::Var x_adj) {
  const std::array<ad::Var, 2> parts = {x_adj, ad::repeat_rows(ad::mean_rows(x_adj), x_adj.rows())};
  const ad::Var input = ad::concat_cols(parts);
  const ad::Var ls = head_logits(tape, store, heads.start, input);
  const ad::Var le = head_logits(tape, store, heads.end, input);
  check_finite(ls.value(), "start");
  check_finite(le.value(), "end");
  return {ad::softmax_rows(ls), ad::softmax_rows(le)};
}

SpanDistribution span_distributions(const Matrix& x_adj, const ParamStore& store, const SpanHeadParams& heads) {
  ad::Tape tape(false);
  const auto nodes = span_distributions(tape, store, heads, tape.constant(x_adj));
  return {nodes.p_start.value().row(0), nodes.p_end.value().row(0)};
}

SpanLoss span_cross_entropy(const SpanDistribution& dist, const BoundaryIndices& gold) {
  if (gold.i_start >= dist.p_start.size() || gold.i_end >= dist.p_end.size())
    throw ConfigError("gold index outside the distribution");
  SpanLoss out;
  const double ps = dist.p_start(gold.i_start);
  const double pe = dist.p_end(gold.i_end);
  out.clamped = ps < kProbabilityFloor || pe < kProbabilityFloor;
  out.l_start = -std::log(std::max(ps, kProbabilityFloor));
  out.l_end = -std::log(std::max(pe, kProbabilityFloor));
  return out;
}

std::pair<ad::Var, ad::Var> span_cross_entropy(const SpanNodes& dist, const BoundaryIndices& gold) {
  return {ad::neg_log_pick(dist.p_start, gold.i_start, kProbabilityFloor),
          ad::neg_log_pick(dist.p_end, gold.i_end, kProbabilityFloor)};
}

BoundaryIndices predict_span(const SpanDistribution& dist) {
  const Eigen::Index t = dist.p_start.size();
  if (t == 0 || dist.p_end.size() != t) throw ConfigError("predict_span: empty or mismatched distributions");
  BoundaryIndices best{0, 0, static_cast<int>(t)};
  double best_p = -1.0;
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = i; j < t; ++j) {
      const double p = dist.p_start(i) * dist.p_end(j);
      if (p > best_p) {
        best_p = p;
        best = {static_cast<int>(i), static_cast<int>(j), static_cast<int>(t)};
      }
    }
  return best;
}

}  // namespace ivg
