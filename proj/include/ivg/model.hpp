#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "ivg/autodiff.hpp"
#include "ivg/contrastive.hpp"
#include "ivg/datamodel.hpp"
#include "ivg/encoder.hpp"
#include "ivg/fusion.hpp"
#include "ivg/intervention.hpp"
#include "ivg/params.hpp"
#include "ivg/vocab.hpp"

namespace ivg {

struct ModelConfig {
  int t = 32;
  EncoderConfig encoder;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Which parts of the objective are active.
struct Switches {
  bool use_ivg = true;
  bool use_qv_cl = true;
  bool use_vv_cl = true;
};

/// Encoder, contrastive discriminators, fusion, confounder table and span heads
/// over one ParamStore. The confounder table exists only when a vocabulary is given.
class Model {
 public:
  Model(ModelConfig config, WordIndex words, std::optional<ConfounderVocab> vocab);

  void initialize(std::uint64_t seed) { store_.initialize(seed); }

  const ModelConfig& config() const noexcept { return config_; }
  const WordIndex& words() const noexcept { return words_; }
  const std::optional<ConfounderVocab>& vocab() const noexcept { return vocab_; }
  ParamStore& params() noexcept { return store_; }
  const ParamStore& params() const noexcept { return store_; }

  const EncoderParams& encoder() const noexcept { return encoder_; }
  const ContrastiveParams& contrastive() const noexcept { return contrastive_; }
  const FusionParams& fusion() const noexcept { return fusion_; }
  const std::optional<ConfounderEmbeddingTable>& confounders() const noexcept { return confounders_; }
  const SpanHeadParams& span_heads() const noexcept { return heads_; }

  struct Graph {
    EncodedNodes encoded;
    ad::Var fused;
    ad::Var adjusted;
    SpanNodes dist;
  };
  /// encode -> fuse -> (deconfound) -> span distributions.
  Graph forward(ad::Tape& tape, const GroundingExample& example, bool use_ivg) const;

  struct LossNodes {
    std::optional<ad::Var> l_vq;
    std::optional<ad::Var> l_vv;
    ad::Var l_s;
    ad::Var l_e;
  };
  /// Contrastive terms are only built when their switch is on.
  LossNodes losses(ad::Tape& tape, const GroundingExample& example, const Switches& sw) const;

  SpanDistribution predict_distribution(const GroundingExample& example, bool use_ivg) const;
  BoundaryIndices predict(const GroundingExample& example, bool use_ivg) const;

 private:
  ModelConfig config_;
  WordIndex words_;
  std::optional<ConfounderVocab> vocab_;
  ParamStore store_;
  EncoderParams encoder_;
  ContrastiveParams contrastive_;
  FusionParams fusion_;
  std::optional<ConfounderEmbeddingTable> confounders_;
  SpanHeadParams heads_;
};

}  // namespace ivg
