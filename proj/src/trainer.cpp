#include "ivg/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "ivg/rng.hpp"

namespace ivg {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("alpha and beta must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
}

json TrainConfig::to_json() const {
  return {{"alpha", alpha},
          {"beta", beta},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"use_ivg", switches.use_ivg},
          {"use_qv_cl", switches.use_qv_cl},
          {"use_vv_cl", switches.use_vv_cl},
          {"clip_norm", clip_norm},
          {"threads", threads},
          {"model", model.to_json()}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.switches.use_ivg = j.value("use_ivg", c.switches.use_ivg);
  c.switches.use_qv_cl = j.value("use_qv_cl", c.switches.use_qv_cl);
  c.switches.use_vv_cl = j.value("use_vv_cl", c.switches.use_vv_cl);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.threads = j.value("threads", c.threads);
  if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
  return c;
}

std::string TrainConfig::hash() const {
  json j = to_json();
  j.erase("threads");
  return hex64(fnv1a(j.dump()));
}

json LossBundle::to_json() const {
  return {{"l_vq", l_vq}, {"l_vv", l_vv}, {"l_s", l_s}, {"l_e", l_e}, {"total", total}};
}

double total_loss(const LossBundle& c, const TrainConfig& config) {
  const double vq = config.switches.use_qv_cl ? c.l_vq : 0.0;
  const double vv = config.switches.use_vv_cl ? c.l_vv : 0.0;
  for (double v : {vq, vv, c.l_s, c.l_e})
    if (std::isnan(v)) throw NumericError("NaN loss component");
  return config.alpha * vq + config.beta * vv + c.l_s + c.l_e;
}

std::string vocab_hash(const ConfounderVocab& vocab) { return hex64(fnv1a(vocab.to_json())); }

json Checkpoint::metadata() const {
  const auto& vocab = model.vocab();
  return {{"format", "ivg-checkpoint"},
          {"version", 1},
          {"archive", "checkpoint.ivgc"},
          {"epoch", epoch},
          {"model", model.config().to_json()},
          {"words", model.words().words()},
          {"vocab", vocab ? json::parse(vocab->to_json()) : json(nullptr)},
          {"vocab_hash", vocab ? vocab_hash(*vocab) : std::string()},
          {"train_config", config.to_json()},
          {"config_hash", config.hash()}};
}

void Checkpoint::save(const fs::path& dir) const {
  fs::create_directories(dir);
  model.params().save(dir / "checkpoint.ivgc");
  std::ofstream os(dir / "checkpoint.json", std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint metadata in " + dir.string());
  os << metadata().dump(2) << '\n';
}

Checkpoint Checkpoint::load(const fs::path& path) {
  const fs::path meta_path = fs::is_directory(path) ? path / "checkpoint.json" : path;
  std::ifstream is(meta_path);
  if (!is) throw DataError({}, "cannot open checkpoint metadata " + meta_path.string());
  const json meta = json::parse(is);
  if (meta.value("format", std::string()) != "ivg-checkpoint") throw DataError({}, "not an ivg checkpoint");

  std::optional<ConfounderVocab> vocab;
  if (!meta.at("vocab").is_null()) {
    vocab = ConfounderVocab::from_json(meta.at("vocab").dump());
    if (vocab_hash(*vocab) != meta.at("vocab_hash").get<std::string>())
      throw DataError({}, "checkpoint vocabulary hash mismatch");
  }
  const auto words = WordIndex::from_words(meta.at("words").get<std::vector<std::string>>());
  Checkpoint ck{Model(ModelConfig::from_json(meta.at("model")), words, std::move(vocab)),
                TrainConfig::from_json(meta.at("train_config")), meta.at("epoch").get<int>()};
  ck.model.params().load(meta_path.parent_path() / meta.at("archive").get<std::string>());
  return ck;
}

json EpochLog::to_json() const {
  json j = {{"epoch", epoch},
            {"loss", mean.to_json()},
            {"first_batch_loss", first_batch_loss},
            {"last_batch_loss", last_batch_loss},
            {"batches", batches}};
  if (eval) j["eval"] = json::parse(eval->to_json());
  return j;
}

Model make_model(const DatasetManifest& train, const ConfounderVocab* vocab, const TrainConfig& config) {
  config.validate();
  if (config.switches.use_ivg && vocab == nullptr)
    throw ConfigError("the intervention is enabled but no confounder vocabulary was given");
  ModelConfig mc = config.model;
  mc.t = train.t;
  mc.encoder.d_v = train.d_v;
  const std::array<const DatasetManifest*, 1> sources = {&train};
  Model model(mc, WordIndex::from_manifests(sources), vocab ? std::optional(*vocab) : std::nullopt);
  model.initialize(mix_seed(config.seed, 1));
  return model;
}

namespace {

struct ExampleResult {
  double l_vq = 0.0, l_vv = 0.0, l_s = 0.0, l_e = 0.0, total = 0.0;
};

ExampleResult run_example(const Model& model, const GroundingExample& ex, const TrainConfig& config,
                          std::vector<Matrix>* grads) {
  ad::Tape tape(grads != nullptr);
  const auto nodes = model.losses(tape, ex, config.switches);
  std::vector<std::pair<double, ad::Var>> terms;
  ExampleResult r;
  if (nodes.l_vq) {
    terms.emplace_back(config.alpha, *nodes.l_vq);
    r.l_vq = nodes.l_vq->scalar();
  }
  if (nodes.l_vv) {
    terms.emplace_back(config.beta, *nodes.l_vv);
    r.l_vv = nodes.l_vv->scalar();
  }
  terms.emplace_back(1.0, nodes.l_s);
  terms.emplace_back(1.0, nodes.l_e);
  r.l_s = nodes.l_s.scalar();
  r.l_e = nodes.l_e.scalar();
  const ad::Var total = ad::linear_combination(terms);
  r.total = total.scalar();
  if (grads != nullptr) {
    tape.backward(total);
    tape.flush_param_grads(*grads);
  }
  return r;
}

int worker_count(const TrainConfig& config, std::size_t batch) {
  int n = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
  return std::clamp(n, 1, static_cast<int>(std::max<std::size_t>(batch, 1)));
}

}  // namespace

LossBundle batch_losses(const Model& model, std::span<const GroundingExample> batch, const TrainConfig& config,
                        std::vector<Matrix>* grads) {
  if (batch.empty()) throw ConfigError("empty batch");
  std::vector<ExampleResult> results(batch.size());
  std::vector<Matrix> local;
  if (grads != nullptr && grads->size() != model.params().size()) *grads = model.params().zero_grads();
  if (grads != nullptr) local = model.params().zero_grads();

  const int workers = worker_count(config, batch.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i)
      results[i] = run_example(model, batch[i], config, grads ? &local : nullptr);
  } else {
    // Per-example buffers reduced in example order give the same bits as the
    // sequential path regardless of the worker count.
    std::vector<std::vector<Matrix>> per_example(grads ? batch.size() : 0);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < batch.size(); i += static_cast<std::size_t>(workers)) {
          if (grads) per_example[i] = model.params().zero_grads();
          results[i] = run_example(model, batch[i], config, grads ? &per_example[i] : nullptr);
        }
      });
    for (auto& th : pool) th.join();
    if (grads)
      for (const auto& g : per_example)
        for (std::size_t k = 0; k < g.size(); ++k) local[k] += g[k];
  }

  LossBundle out;
  const double n = static_cast<double>(batch.size());
  for (const auto& r : results) {
    out.l_vq += r.l_vq;
    out.l_vv += r.l_vv;
    out.l_s += r.l_s;
    out.l_e += r.l_e;
    out.total += r.total;
  }
  out.l_vq /= n;
  out.l_vv /= n;
  out.l_s /= n;
  out.l_e /= n;
  out.total /= n;
  if (grads != nullptr)
    for (std::size_t k = 0; k < local.size(); ++k) (*grads)[k] += local[k] / n;
  return out;
}

namespace {

class Adam {
 public:
  explicit Adam(const ParamStore& store, double lr) : lr_(lr), m_(store.zero_grads()), v_(store.zero_grads()) {}

  void step(ParamStore& store, const std::vector<Matrix>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t k = 0; k < grads.size(); ++k) {
      m_[k] = kBeta1 * m_[k] + (1.0 - kBeta1) * grads[k];
      v_[k] = kBeta2 * v_[k] + (1.0 - kBeta2) * grads[k].cwiseAbs2();
      store.value(static_cast<int>(k)).array() -=
          lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  int t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm)
    for (auto& g : grads) g *= max_norm / norm;
  return norm;
}

TrainResult train(const DatasetManifest& train_set, const ConfounderVocab* vocab, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (train_set.examples.empty()) throw ConfigError("training manifest is empty");

  TrainResult result{Checkpoint{make_model(train_set, vocab, config), config, 0}, {}};
  Model& model = result.checkpoint.model;
  const auto examples = make_examples(train_set, model.words());

  std::optional<fs::path> last_good;
  std::ofstream log_file;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    result.checkpoint.save(*options.out_dir);
    last_good = *options.out_dir;
    log_file.open(*options.out_dir / "train_log.jsonl", std::ios::trunc);
  }

  Adam adam(model.params(), config.learning_rate);
  std::vector<std::size_t> order(examples.size());
  std::vector<GroundingExample> batch;
  std::vector<Matrix> grads;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(config.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(examples[order[i]]);

      grads = model.params().zero_grads();
      const LossBundle b = batch_losses(model, batch, config, &grads);
      if (!std::isfinite(b.total) || b.total > kDivergenceThreshold) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << ", batch " << log.batches << ": loss " << b.total
            << " (l_vq " << b.l_vq << ", l_vv " << b.l_vv << ", l_s " << b.l_s << ", l_e " << b.l_e << ")";
        throw TrainingDiverged(msg.str(), last_good);
      }
      clip_global_norm(grads, config.clip_norm);
      adam.step(model.params(), grads);

      const double w = static_cast<double>(batch.size());
      log.mean.l_vq += b.l_vq * w;
      log.mean.l_vv += b.l_vv * w;
      log.mean.l_s += b.l_s * w;
      log.mean.l_e += b.l_e * w;
      log.mean.total += b.total * w;
      if (log.batches == 0) log.first_batch_loss = b.total;
      log.last_batch_loss = b.total;
      ++log.batches;
    }
    const double n = static_cast<double>(examples.size());
    log.mean.l_vq /= n;
    log.mean.l_vv /= n;
    log.mean.l_s /= n;
    log.mean.l_e /= n;
    log.mean.total /= n;

    result.checkpoint.epoch = epoch;
    if (options.eval_manifest) log.eval = evaluate_checkpoint(result.checkpoint, *options.eval_manifest);
    if (options.out_dir) {
      result.checkpoint.save(*options.out_dir);
      json line = log.to_json();
      line["config_hash"] = config.hash();
      log_file << line.dump() << '\n' << std::flush;
    }
    if (options.on_epoch) options.on_epoch(log);
    result.log.push_back(std::move(log));
  }
  return result;
}

EvalReport evaluate_checkpoint(const Checkpoint& checkpoint, const DatasetManifest& manifest) {
  const Model& model = checkpoint.model;
  if (manifest.t != model.config().t)
    throw ConfigError("manifest has t=" + std::to_string(manifest.t) + " but the checkpoint was trained with t=" +
                      std::to_string(model.config().t));
  if (manifest.d_v != model.config().encoder.d_v) throw ConfigError("manifest feature dimension differs from checkpoint");
  const auto examples = make_examples(manifest, model.words());
  std::vector<Moment> predictions;
  std::vector<Moment> golds;
  predictions.reserve(examples.size());
  golds.reserve(examples.size());
  for (const auto& ex : examples) {
    predictions.emplace_back(model.predict(ex, checkpoint.config.switches.use_ivg));
    golds.emplace_back(ex.gold_idx);
  }
  return make_report(predictions, golds);
}

}  // namespace ivg
