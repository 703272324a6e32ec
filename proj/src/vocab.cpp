#include "ivg/vocab.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ivg/datamodel.hpp"
#include "ivg/errors.hpp"

namespace ivg {

using nlohmann::json;

namespace {

const std::set<std::string, std::less<>> kDeterminers = {"a",    "an",    "the",   "his",     "her", "their",
                                                         "its",  "some",  "this",  "that",    "these",
                                                         "those", "another", "my", "your",    "our"};
const std::set<std::string, std::less<>> kAuxiliaries = {"is", "are", "was", "were", "be", "been", "being", "to", "am"};
const std::set<std::string, std::less<>> kPrepositions = {
    "into", "onto", "with", "in",   "on",      "at",     "from",   "of",      "for",     "by",   "up",
    "down", "out",  "off",  "over", "under",   "through", "across", "around", "behind", "near", "towards",
    "toward", "while", "and", "then", "as",    "after",   "before"};
const std::set<std::string, std::less<>> kIndirectObjectMarkers = {"into", "onto", "with"};
const std::set<std::string, std::less<>> kCatenatives = {
    "shown", "seen",  "start",  "starts",   "started", "starting", "begin",  "begins", "began",  "continue",
    "continues", "continued", "appears", "seems", "try", "tries", "tried", "goes",  "keeps",  "gets", "getting"};

bool is_function_word(std::string_view w) {
  return kDeterminers.contains(w) || kAuxiliaries.contains(w) || kPrepositions.contains(w);
}

bool ends_with(std::string_view w, std::string_view suffix) {
  return w.size() > suffix.size() && w.substr(w.size() - suffix.size()) == suffix;
}

// Head (last word) of the run of content words starting at `i`, or npos.
std::size_t noun_run_head(const std::vector<std::string>& tok, std::size_t i) {
  while (i < tok.size() && kDeterminers.contains(tok[i])) ++i;
  if (i >= tok.size() || is_function_word(tok[i])) return std::string::npos;
  while (i + 1 < tok.size() && !is_function_word(tok[i + 1])) ++i;
  return i;
}

std::size_t next_content(const std::vector<std::string>& tok, std::size_t i) {
  while (i < tok.size() && is_function_word(tok[i])) ++i;
  return i < tok.size() ? i : std::string::npos;
}

}  // namespace

SVOTuple extract_svo(std::string_view caption) {
  const auto tok = split_words(caption);
  SVOTuple out;
  const std::size_t subj = next_content(tok, 0);
  if (subj == std::string::npos) return out;

  std::size_t verb = next_content(tok, subj + 1);
  while (verb != std::string::npos && kCatenatives.contains(tok[verb])) {
    const std::size_t deferred = next_content(tok, verb + 1);
    if (deferred == std::string::npos) break;
    verb = deferred;
  }

  if (verb == std::string::npos) {
    if (ends_with(tok[subj], "ing") || ends_with(tok[subj], "ed"))
      out.verb = tok[subj];
    else
      out.subject = tok[subj];
    return out;
  }
  out.subject = tok[subj];
  out.verb = tok[verb];

  std::size_t head = noun_run_head(tok, verb + 1);
  if (head == std::string::npos) {
    std::size_t i = verb + 1;
    while (i < tok.size() && kDeterminers.contains(tok[i])) ++i;
    if (i < tok.size() && kIndirectObjectMarkers.contains(tok[i])) head = noun_run_head(tok, i + 1);
  }
  if (head != std::string::npos) out.object = tok[head];
  return out;
}

std::string_view set_name(ConfounderSet s) {
  switch (s) {
    case ConfounderSet::kRole:
      return "roles";
    case ConfounderSet::kAction:
      return "actions";
    case ConfounderSet::kObject:
      return "objects";
  }
  return "?";
}

std::vector<ConfounderVocab::Entry> ConfounderVocab::finalize(const std::map<std::string, std::size_t>& counts) {
  std::size_t total = 0;
  for (const auto& [_, c] : counts) total += c;
  std::vector<Entry> out;
  out.reserve(counts.size());
  for (const auto& [phrase, c] : counts)
    out.push_back({phrase, c, static_cast<double>(c) / static_cast<double>(total)});
  return out;
}

ConfounderVocab ConfounderVocab::from_tuples(std::span<const SVOTuple> tuples) {
  std::array<std::map<std::string, std::size_t>, 3> counts;
  for (const auto& t : tuples) {
    if (!t.subject.empty()) ++counts[0][t.subject];
    if (!t.verb.empty()) ++counts[1][t.verb];
    if (!t.object.empty()) ++counts[2][t.object];
  }
  ConfounderVocab v;
  for (int s = 0; s < 3; ++s) v.sets_[s] = finalize(counts[s]);
  return v;
}

ConfounderVocab build_vocab(std::span<const std::string> captions) {
  if (captions.empty()) throw ConfigError("cannot build a vocabulary from an empty caption list");
  std::vector<SVOTuple> tuples;
  tuples.reserve(captions.size());
  for (const auto& c : captions) tuples.push_back(extract_svo(c));
  return ConfounderVocab::from_tuples(tuples);
}

double ConfounderVocab::prior(ConfounderSet s, std::string_view phrase) const {
  for (const auto& e : entries(s))
    if (e.phrase == phrase) return e.prior;
  throw std::out_of_range("phrase '" + std::string(phrase) + "' not in " + std::string(set_name(s)));
}

std::size_t ConfounderVocab::count(ConfounderSet s, std::string_view phrase) const {
  for (const auto& e : entries(s))
    if (e.phrase == phrase) return e.count;
  return 0;
}

std::string ConfounderVocab::to_json() const {
  json j = json::object();
  for (auto s : kConfounderSets) {
    json arr = json::array();
    for (const auto& e : entries(s)) arr.push_back({{"phrase", e.phrase}, {"count", e.count}, {"prior", e.prior}});
    j[std::string(set_name(s))] = std::move(arr);
  }
  return j.dump(2);
}

ConfounderVocab ConfounderVocab::from_json(std::string_view text) {
  const json j = json::parse(text);
  ConfounderVocab v;
  for (auto s : kConfounderSets) {
    std::map<std::string, std::size_t> counts;
    for (const auto& e : j.at(std::string(set_name(s)))) {
      const auto c = e.at("count").get<std::size_t>();
      if (c < 1) throw std::invalid_argument("vocab counts must be >= 1");
      counts[e.at("phrase").get<std::string>()] += c;
    }
    v.sets_[static_cast<int>(s)] = finalize(counts);
  }
  return v;
}

void ConfounderVocab::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << to_json() << '\n';
}

ConfounderVocab ConfounderVocab::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open vocab " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

std::vector<SVOTuple> load_svo_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<SVOTuple> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line);
    auto field = [&](const char* k) {
      auto words = split_words(j.value(k, std::string{}));
      std::string joined;
      for (const auto& w : words) joined += (joined.empty() ? "" : " ") + w;
      return joined;
    };
    out.push_back({field("subject"), field("verb"), field("object")});
  }
  return out;
}

}  // namespace ivg
