#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ivg/errors.hpp"
#include "ivg/rng.hpp"
#include "ivg/vocab.hpp"

using namespace ivg;

namespace {

std::vector<std::string> vacuum_captions() {
  std::vector<std::string> c(208, "person holds a vacuum");
  c.insert(c.end(), 35, "person fixes a vacuum");
  return c;
}

double prior_sum(const ConfounderVocab& v, ConfounderSet s) {
  double total = 0.0;
  for (const auto& e : v.entries(s)) total += e.prior;
  return total;
}

}  // namespace

TEST_CASE("extract_svo on documented captions") {
  CHECK(extract_svo("a person fixes a vacuum") == SVOTuple{"person", "fixes", "vacuum"});
  CHECK(extract_svo("people are shown throwing ping pong balls into beer-filled cups") ==
        SVOTuple{"people", "throwing", "balls"});
  CHECK(extract_svo("running") == SVOTuple{"", "running", ""});
}

TEST_CASE("extract_svo degrades to empty fields") {
  CHECK(extract_svo("") == SVOTuple{});
  CHECK(extract_svo("the") == SVOTuple{});
  CHECK(extract_svo("A man") == SVOTuple{"man", "", ""});
  // Only an indirect object is available.
  CHECK(extract_svo("a woman plays with a dog") == SVOTuple{"woman", "plays", "dog"});
}

TEST_CASE("priors follow the counts") {
  const auto captions = vacuum_captions();
  const auto v = build_vocab(captions);
  CHECK(v.prior(ConfounderSet::kAction, "holds") == doctest::Approx(0.85597).epsilon(1e-5));
  CHECK(v.prior(ConfounderSet::kAction, "fixes") == doctest::Approx(0.14403).epsilon(1e-5));
  CHECK(v.prior(ConfounderSet::kAction, "holds") == 208.0 / 243.0);
  CHECK(v.count(ConfounderSet::kAction, "fixes") == 35);
  CHECK(v.prior(ConfounderSet::kRole, "person") == 1.0);
  CHECK(v.prior(ConfounderSet::kObject, "vacuum") == 1.0);
  CHECK(std::abs(prior_sum(v, ConfounderSet::kAction) - 1.0) <= 1e-9);
  CHECK_THROWS_AS(v.prior(ConfounderSet::kAction, "juggles"), std::out_of_range);
}

TEST_CASE("single caption gives priors of one") {
  const std::vector<std::string> one{"a person opens a door"};
  const auto v = build_vocab(one);
  for (auto s : {ConfounderSet::kRole, ConfounderSet::kAction, ConfounderSet::kObject}) {
    REQUIRE(v.size(s) == 1);
    CHECK(v.entries(s)[0].prior == 1.0);
  }
}

TEST_CASE("empty caption list is rejected") {
  CHECK_THROWS_AS(build_vocab(std::vector<std::string>{}), ConfigError);
}

TEST_CASE("counts are additive over concatenated corpora") {
  const std::vector<std::string> a{"person holds a vacuum", "man opens a door", "person holds a cup"};
  const std::vector<std::string> b{"woman holds a door", "person fixes a vacuum"};
  std::vector<std::string> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const auto va = build_vocab(a), vb = build_vocab(b), vab = build_vocab(ab);
  for (auto s : {ConfounderSet::kRole, ConfounderSet::kAction, ConfounderSet::kObject})
    for (const auto& e : vab.entries(s)) CHECK(e.count == va.count(s, e.phrase) + vb.count(s, e.phrase));
}

TEST_CASE("build_vocab is permutation invariant and normalised on random corpora") {
  Rng rng(21);
  const std::vector<std::string> roles{"person", "man", "woman", "child"};
  const std::vector<std::string> verbs{"holds", "opens", "throws", "eats", "pushes"};
  const std::vector<std::string> objects{"cup", "door", "ball", "sandwich"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> caps;
    const auto n = 1 + rng.below(60);
    for (std::size_t i = 0; i < n; ++i)
      caps.push_back("a " + roles[rng.below(4)] + " " + verbs[rng.below(5)] + " the " + objects[rng.below(4)]);
    auto shuffled = caps;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    const auto v = build_vocab(caps);
    CHECK(v == build_vocab(shuffled));
    for (auto s : {ConfounderSet::kRole, ConfounderSet::kAction, ConfounderSet::kObject})
      CHECK(std::abs(prior_sum(v, s) - 1.0) <= 1e-9);
  }
}

TEST_CASE("vocab JSON round trip") {
  const auto v = build_vocab(vacuum_captions());
  const auto back = ConfounderVocab::from_json(v.to_json());
  CHECK(back == v);
  const auto j = nlohmann::json::parse(v.to_json());
  REQUIRE(j.at("actions").size() == 2);
  CHECK(j.at("actions")[0].at("phrase") == "fixes");
  CHECK(j.at("actions")[0].at("count") == 35);
  CHECK(j.contains("roles"));
  CHECK(j.contains("objects"));
}

TEST_CASE("external SVO import bypasses the extractor") {
  const auto path = std::filesystem::temp_directory_path() / "ivg_svo.jsonl";
  std::ofstream(path) << R"({"subject": "Person", "verb": "holds", "object": "vacuum cleaner"})" << '\n'
                      << R"({"subject": "", "verb": "runs", "object": ""})" << '\n';
  const auto tuples = load_svo_jsonl(path);
  REQUIRE(tuples.size() == 2);
  CHECK(tuples[0] == SVOTuple{"person", "holds", "vacuum cleaner"});
  const auto v = ConfounderVocab::from_tuples(tuples);
  CHECK(v.size(ConfounderSet::kRole) == 1);
  CHECK(v.prior(ConfounderSet::kAction, "runs") == 0.5);
}
