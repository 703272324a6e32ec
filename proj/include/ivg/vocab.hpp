#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ivg {

/// Verb-centred relation tuple; any field may be empty.
struct SVOTuple {
  std::string subject;
  std::string verb;
  std::string object;
  friend bool operator==(const SVOTuple&, const SVOTuple&) = default;
};

/// Rule-based (subject, verb, object) extraction.
///
/// Subject is the first content word. The verb is the first following word that
/// is not an auxiliary, determiner or preposition; catenative verbs
/// ("shown", "starts", ...) defer to the verb after them. The object is the head
/// (last word) of the first noun run after the verb; an object of into/onto/with
/// is used only when no direct object exists. Single-word captions ending in
/// -ing/-ed are read as a bare verb.
SVOTuple extract_svo(std::string_view caption);

enum class ConfounderSet : int { kRole = 0, kAction = 1, kObject = 2 };
inline constexpr std::array<ConfounderSet, 3> kConfounderSets = {ConfounderSet::kRole, ConfounderSet::kAction,
                                                                 ConfounderSet::kObject};
std::string_view set_name(ConfounderSet s);

/// Phrase counts per confounder set with their prior p(z) = #z / sum_i #i.
class ConfounderVocab {
 public:
  struct Entry {
    std::string phrase;
    std::size_t count = 0;
    double prior = 0.0;
  };

  static ConfounderVocab from_tuples(std::span<const SVOTuple> tuples);

  /// Entries sorted by phrase.
  const std::vector<Entry>& entries(ConfounderSet s) const { return sets_[static_cast<int>(s)]; }
  std::size_t size(ConfounderSet s) const { return entries(s).size(); }
  /// Throws std::out_of_range for a phrase not in the set.
  double prior(ConfounderSet s, std::string_view phrase) const;
  std::size_t count(ConfounderSet s, std::string_view phrase) const;

  std::string to_json() const;
  static ConfounderVocab from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static ConfounderVocab load(const std::filesystem::path& path);

  friend bool operator==(const ConfounderVocab& a, const ConfounderVocab& b) { return a.to_json() == b.to_json(); }

 private:
  static std::vector<Entry> finalize(const std::map<std::string, std::size_t>& counts);
  std::array<std::vector<Entry>, 3> sets_;
};

ConfounderVocab build_vocab(std::span<const std::string> captions);

/// Reads JSON Lines of {subject, verb, object} produced by an external extractor.
std::vector<SVOTuple> load_svo_jsonl(const std::filesystem::path& path);

}  // namespace ivg
