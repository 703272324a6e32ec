#pragma once

#include <string>
#include <vector>

#include "ivg/synthgen.hpp"
#include "ivg/trainer.hpp"
#include "ivg/vocab.hpp"

namespace ivg::testing {

// Small biased corpus that trains in well under a second.
inline BiasSpec tiny_spec(std::uint64_t seed = 3) {
  BiasSpec s;
  s.roles = {"person", "man"};
  s.actions = {"holds", "fixes"};
  s.objects = {"vacuum", "door"};
  s.train_counts = {{"holds", "vacuum", 8}, {"fixes", "door", 4}};
  s.test_counts = {{"holds", "door", 3}, {"fixes", "vacuum", 3}};
  s.t = 10;
  s.d_v = 8;
  s.noise_sigma = 0.1;
  s.seed = seed;
  s.distractor_pool = 3;
  return s;
}

inline TrainConfig tiny_config() {
  TrainConfig c;
  c.learning_rate = 1e-2;
  c.batch_size = 4;
  c.epochs = 2;
  c.threads = 1;
  c.model.encoder.d_w = 8;
  c.model.encoder.d = 8;
  c.model.encoder.heads = 2;
  c.model.encoder.kernel = 3;
  c.model.encoder.conv_layers = 1;
  return c;
}

inline ConfounderVocab vocab_of(const DatasetManifest& m) {
  std::vector<std::string> captions;
  for (const auto& r : m.examples) captions.push_back(r.query);
  return build_vocab(captions);
}

}  // namespace ivg::testing
