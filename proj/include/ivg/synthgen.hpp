#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ivg/datamodel.hpp"

namespace ivg {

/// One (action, object) co-occurrence count.
struct PairCount {
  std::string action;
  std::string object;
  std::size_t count = 0;
};

/// Description of a synthetic grounding corpus with a planted co-occurrence bias.
struct BiasSpec {
  std::vector<std::string> roles;
  std::vector<std::string> actions;
  std::vector<std::string> objects;
  std::vector<PairCount> train_counts;
  std::vector<PairCount> test_counts;
  int t = 32;
  int d_v = 32;
  double noise_sigma = 0.1;
  std::uint64_t seed = 1;
  double duration_s = 30.0;
  /// Background signatures available to fill out-of-moment clips.
  int distractor_pool = 8;
  /// Probability that a video also shows the object with a different action.
  double confusable_rate = 1.0;

  /// Throws ConfigError on unknown words, negative rates, an empty split or a
  /// feature count too small for a 10% moment.
  void validate() const;
  static BiasSpec from_json(const nlohmann::json& j);
  static BiasSpec load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// Fixed unit-norm d_v-dimensional signature per word (and per background slot).
class ConceptSignatures {
 public:
  ConceptSignatures(std::uint64_t seed, int d_v);
  const Eigen::VectorXd& word(const std::string& w) const;
  const Eigen::VectorXd& distractor(int k) const;

 private:
  std::uint64_t seed_;
  int d_v_;
  mutable std::map<std::string, Eigen::VectorXd> cache_;
  Eigen::VectorXd make(const std::string& key) const;
};

/// Moment length bounds in clips: [ceil(0.1 t), floor(0.4 t)].
std::pair<int, int> moment_length_range(int t);

/// Generates (train, test). Inside the gold moment each clip is
/// sig(role) + sig(action) + sig(object) + N(0, sigma^2); background clips are
/// one background signature + noise; with probability confusable_rate a
/// disjoint segment shows the same role and object with another action.
/// Queries read "<role> <action> a <object>".
std::pair<DatasetManifest, DatasetManifest> generate_dataset(const BiasSpec& spec);

/// Counts of (action, object) parsed from template queries; anything else is
/// counted in `other`.
struct BiasTable {
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  std::size_t other = 0;

  std::size_t total() const;
  std::string to_string() const;
};

BiasTable bias_report(const DatasetManifest& manifest);

}  // namespace ivg
