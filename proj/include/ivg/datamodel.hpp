#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ivg/errors.hpp"

namespace ivg {

/// A moment in seconds inside a video of length `duration_s`.
struct TimeInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  double duration_s = 0.0;

  bool valid() const noexcept {
    return 0.0 <= start_s && start_s <= end_s && end_s <= duration_s;
  }
  friend bool operator==(const TimeInterval&, const TimeInterval&) = default;
};

/// Inclusive feature-index span inside a sequence of `t` features.
struct BoundaryIndices {
  int i_start = 0;
  int i_end = 0;
  int t = 0;

  bool valid() const noexcept { return 0 <= i_start && i_start <= i_end && i_end <= t - 1; }
  int length() const noexcept { return i_end - i_start + 1; }
  friend bool operator==(const BoundaryIndices&, const BoundaryIndices&) = default;
};

/// Row-major float32 matrix of per-clip video features (T x d_v).
struct VideoFeatures {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> data;

  VideoFeatures() = default;
  VideoFeatures(std::uint32_t r, std::uint32_t c) : rows(r), cols(c), data(std::size_t{r} * c, 0.0f) {}

  float& at(std::uint32_t r, std::uint32_t c) { return data[std::size_t{r} * cols + c]; }
  float at(std::uint32_t r, std::uint32_t c) const { return data[std::size_t{r} * cols + c]; }
  std::span<const float> row(std::uint32_t r) const {
    return {data.data() + std::size_t{r} * cols, cols};
  }
  friend bool operator==(const VideoFeatures&, const VideoFeatures&) = default;
};

/// Token ids of a query plus the original text.
struct QueryTokens {
  std::vector<int> tokens;
  std::string raw_text;
};

/// One stored example: what the annotation file and its feature file describe.
struct ExampleRecord {
  std::string id;
  TimeInterval gold_time;
  std::string query;
  VideoFeatures video;

  friend bool operator==(const ExampleRecord&, const ExampleRecord&) = default;
};

/// A split of examples sharing feature count `t` and feature dimension `d_v`.
struct DatasetManifest {
  std::string split;
  int t = 0;
  int d_v = 0;
  std::vector<ExampleRecord> examples;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// A tokenized, index-converted example ready for the model.
struct GroundingExample {
  std::string id;
  const VideoFeatures* video = nullptr;
  QueryTokens query;
  TimeInterval gold_time;
  BoundaryIndices gold_idx;
};

/// Maps seconds to feature indices: round-to-nearest (ties to even) of
/// t * time / duration, clamped to [0, t-1].
BoundaryIndices convert_time_to_index(const TimeInterval& iv, int t);

/// Inverse map used for reporting: index i maps to duration * i / t.
TimeInterval convert_index_to_time(const BoundaryIndices& b, double duration_s);

/// Lowercased word tokens; splits on anything but letters, digits, '-' and '\''.
std::vector<std::string> split_words(std::string_view text);

/// Word -> id table for query tokens. Id 0 is reserved for unknown words.
class WordIndex {
 public:
  static constexpr int kUnknown = 0;
  static constexpr std::string_view kUnknownWord = "<unk>";

  WordIndex();
  /// Collects every word appearing in the manifests' queries, in sorted order.
  static WordIndex from_manifests(std::span<const DatasetManifest* const> manifests);
  static WordIndex from_words(const std::vector<std::string>& words);

  int id(std::string_view word) const;
  QueryTokens tokenize(std::string_view text) const;
  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int, std::less<>> ids_;
};

/// Tokenizes queries and converts gold times; examples reference the manifest's
/// feature storage, so the manifest must outlive the result.
std::vector<GroundingExample> make_examples(const DatasetManifest& manifest, const WordIndex& words);

// --- On-disk formats ---------------------------------------------------------
//
// Manifest: JSON {split, t, d_v, n_examples, annotations}. `annotations` names a
// JSON Lines file relative to the manifest; each line holds id, t_start, t_end,
// duration, query, feature_file, feature_rows, feature_dim. `feature_file` is
// relative to the annotation file. Feature files carry a 16-byte header
// ("IVGF", u32 LE rows, u32 LE cols, u32 reserved = 0) then rows*cols float32 LE.

void write_features(const VideoFeatures& f, const std::filesystem::path& path);
VideoFeatures read_features(const std::filesystem::path& path, const std::string& record_id = {});

/// Writes `<stem>.manifest.json`-style output: the manifest at `manifest_path`,
/// the annotations next to it, and one feature file per example under
/// `features/<split>/`.
void save_dataset(const DatasetManifest& manifest, const std::filesystem::path& manifest_path);
DatasetManifest load_dataset(const std::filesystem::path& manifest_path);

}  // namespace ivg
