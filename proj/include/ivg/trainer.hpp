#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ivg/datamodel.hpp"
#include "ivg/metrics.hpp"
#include "ivg/model.hpp"
#include "ivg/vocab.hpp"

namespace ivg {

struct TrainConfig {
  double alpha = 0.1;
  double beta = 0.01;
  double learning_rate = 1e-3;
  int batch_size = 16;
  int epochs = 10;
  std::uint64_t seed = 1;
  Switches switches;
  double clip_norm = 1.0;
  /// Worker threads for per-example gradients; 0 picks hardware concurrency.
  /// Results do not depend on this value.
  int threads = 0;
  /// Architecture; t, d_v and vocab_size are taken from the data.
  ModelConfig model;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  /// Hash of every field that influences results (threads excluded).
  std::string hash() const;
};

/// Per-batch loss components (batch means) and the objective they add up to.
struct LossBundle {
  double l_vq = 0.0;
  double l_vv = 0.0;
  double l_s = 0.0;
  double l_e = 0.0;
  double total = 0.0;

  nlohmann::json to_json() const;
};

/// alpha * l_vq + beta * l_vv + l_s + l_e; disabled contrastive terms count as 0.
/// Throws NumericError if any active component is NaN.
double total_loss(const LossBundle& components, const TrainConfig& config);

/// Trained weights plus everything needed to reproduce inference.
struct Checkpoint {
  Model model;
  TrainConfig config;
  int epoch = 0;

  /// Writes `checkpoint.ivgc` (parameter archive) and `checkpoint.json`
  /// (config hash, vocab hash, epoch, word list, vocabulary) into `dir`.
  void save(const std::filesystem::path& dir) const;
  /// Accepts the directory or the metadata file. Verifies the vocab hash.
  static Checkpoint load(const std::filesystem::path& path);
  nlohmann::json metadata() const;
};

std::string vocab_hash(const ConfounderVocab& vocab);

struct EpochLog {
  int epoch = 0;
  LossBundle mean;
  double first_batch_loss = 0.0;
  double last_batch_loss = 0.0;
  std::size_t batches = 0;
  std::optional<EvalReport> eval;

  nlohmann::json to_json() const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::optional<std::filesystem::path> last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const std::optional<std::filesystem::path>& last_good_checkpoint() const { return last_good_; }

 private:
  std::optional<std::filesystem::path> last_good_;
};

/// Loss above which training is treated as diverged.
inline constexpr double kDivergenceThreshold = 1e4;

struct TrainOptions {
  /// Where checkpoints and `train_log.jsonl` go; nothing is written when unset.
  std::optional<std::filesystem::path> out_dir;
  /// Evaluated after every epoch when set.
  const DatasetManifest* eval_manifest = nullptr;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

/// Builds a model whose weights depend only on (data, vocab, config).
Model make_model(const DatasetManifest& train, const ConfounderVocab* vocab, const TrainConfig& config);

/// Multi-task training of alpha*L_vq + beta*L_vv + L_s + L_e with Adam and
/// global-norm clipping. Batch order and initialisation derive from config.seed.
TrainResult train(const DatasetManifest& train, const ConfounderVocab* vocab, const TrainConfig& config,
                  const TrainOptions& options = {});

/// Forward (and, when `grads` is given, backward) over one batch. Losses and
/// gradients are means over the batch; gradients are added into `grads`.
LossBundle batch_losses(const Model& model, std::span<const GroundingExample> batch, const TrainConfig& config,
                        std::vector<Matrix>* grads = nullptr);

/// Rescales all gradients together so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
double clip_global_norm(std::vector<Matrix>& grads, double max_norm);

/// Inference only: encode -> fuse -> (deconfound if trained with it) -> predict_span.
/// Moments are compared in feature-index space.
EvalReport evaluate_checkpoint(const Checkpoint& checkpoint, const DatasetManifest& manifest);

}  // namespace ivg
