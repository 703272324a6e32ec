#include "ivg/model.hpp"

namespace ivg {

nlohmann::json ModelConfig::to_json() const {
  return {{"t", t},
          {"d_v", encoder.d_v},
          {"vocab_size", encoder.vocab_size},
          {"d_w", encoder.d_w},
          {"d", encoder.d},
          {"heads", encoder.heads},
          {"kernel", encoder.kernel},
          {"conv_layers", encoder.conv_layers}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.t = j.value("t", c.t);
  c.encoder.d_v = j.value("d_v", c.encoder.d_v);
  c.encoder.vocab_size = j.value("vocab_size", c.encoder.vocab_size);
  c.encoder.d_w = j.value("d_w", c.encoder.d_w);
  c.encoder.d = j.value("d", c.encoder.d);
  c.encoder.heads = j.value("heads", c.encoder.heads);
  c.encoder.kernel = j.value("kernel", c.encoder.kernel);
  c.encoder.conv_layers = j.value("conv_layers", c.encoder.conv_layers);
  return c;
}

Model::Model(ModelConfig config, WordIndex words, std::optional<ConfounderVocab> vocab)
    : config_(std::move(config)), words_(std::move(words)), vocab_(std::move(vocab)) {
  config_.encoder.vocab_size = static_cast<int>(words_.size());
  if (config_.t < 2) throw ConfigError("feature count t must be at least 2");
  const int d = config_.encoder.d;
  encoder_ = add_encoder_params(store_, config_.encoder);
  contrastive_ = add_contrastive_params(store_, d);
  fusion_ = add_fusion_params(store_, d);
  if (vocab_) confounders_ = add_confounder_params(store_, *vocab_, d);
  heads_ = add_span_head_params(store_, d);
}

Model::Graph Model::forward(ad::Tape& tape, const GroundingExample& example, bool use_ivg) const {
  if (example.video == nullptr) throw ConfigError("example '" + example.id + "' has no video features");
  if (static_cast<int>(example.video->rows) != config_.t)
    throw ConfigError("example '" + example.id + "' has " + std::to_string(example.video->rows) +
                      " clips but the model expects " + std::to_string(config_.t));
  if (use_ivg && !confounders_) throw ConfigError("intervention requested but the model has no confounder vocabulary");
  Graph g;
  g.encoded = encode(tape, store_, encoder_, to_matrix(*example.video), example.query.tokens);
  g.fused = cqa_fuse(tape, store_, fusion_, g.encoded.v_prime, g.encoded.q_prime);
  g.adjusted = use_ivg ? deconfound(tape, store_, *confounders_, g.fused) : g.fused;
  g.dist = span_distributions(tape, store_, heads_, g.adjusted);
  return g;
}

Model::LossNodes Model::losses(ad::Tape& tape, const GroundingExample& example, const Switches& sw) const {
  const Graph g = forward(tape, example, sw.use_ivg);
  LossNodes out;
  std::tie(out.l_s, out.l_e) = span_cross_entropy(g.dist, example.gold_idx);
  if (sw.use_qv_cl)
    out.l_vq = qv_loss(tape, store_, g.encoded, ContrastMask::from_moment(example.gold_idx), contrastive_.qv);
  if (sw.use_vv_cl)
    out.l_vv = vv_loss(tape, store_, g.encoded.v_prime, example.gold_idx, contrastive_.vv_start, contrastive_.vv_end);
  return out;
}

SpanDistribution Model::predict_distribution(const GroundingExample& example, bool use_ivg) const {
  ad::Tape tape(false);
  const Graph g = forward(tape, example, use_ivg);
  return {g.dist.p_start.value().row(0), g.dist.p_end.value().row(0)};
}

BoundaryIndices Model::predict(const GroundingExample& example, bool use_ivg) const {
  return predict_span(predict_distribution(example, use_ivg));
}

}  // namespace ivg
