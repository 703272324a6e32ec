#include "ivg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "ivg/rng.hpp"

namespace ivg {

using nlohmann::json;

namespace {

std::vector<PairCount> counts_from_json(const json& arr) {
  std::vector<PairCount> out;
  for (const auto& e : arr) {
    const auto c = e.at("count").get<long long>();
    if (c < 0) throw ConfigError("co-occurrence counts must be non-negative");
    out.push_back({e.at("action").get<std::string>(), e.at("object").get<std::string>(), static_cast<std::size_t>(c)});
  }
  return out;
}

json counts_to_json(const std::vector<PairCount>& counts) {
  json arr = json::array();
  for (const auto& c : counts) arr.push_back({{"action", c.action}, {"object", c.object}, {"count", c.count}});
  return arr;
}

std::string format_id(const std::string& split, std::size_t i) {
  std::ostringstream os;
  os << split << '-' << std::setw(5) << std::setfill('0') << i;
  return os.str();
}

}  // namespace

std::pair<int, int> moment_length_range(int t) {
  return {static_cast<int>(std::ceil(0.1 * t)), static_cast<int>(std::floor(0.4 * t))};
}

void BiasSpec::validate() const {
  if (roles.empty() || actions.empty() || objects.empty()) throw ConfigError("roles, actions and objects must be non-empty");
  const auto [lo, hi] = moment_length_range(t);
  if (t < 2 || lo < 1 || hi < lo)
    throw ConfigError("t=" + std::to_string(t) + " is too small to host a moment of 10% of the video");
  if (d_v < 1) throw ConfigError("d_v must be positive");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(duration_s > 0.0)) throw ConfigError("duration must be positive");
  if (distractor_pool < 1) throw ConfigError("distractor_pool must be positive");
  if (!(confusable_rate >= 0.0 && confusable_rate <= 1.0)) throw ConfigError("confusable_rate must be in [0, 1]");
  const std::set<std::string> acts(actions.begin(), actions.end());
  const std::set<std::string> objs(objects.begin(), objects.end());
  for (const auto* split : {&train_counts, &test_counts}) {
    std::size_t total = 0;
    for (const auto& c : *split) {
      if (!acts.contains(c.action)) throw ConfigError("unknown action '" + c.action + "'");
      if (!objs.contains(c.object)) throw ConfigError("unknown object '" + c.object + "'");
      total += c.count;
    }
    if (total == 0) throw ConfigError("every split needs at least one instance");
  }
}

BiasSpec BiasSpec::from_json(const json& j) {
  BiasSpec s;
  s.roles = j.at("roles").get<std::vector<std::string>>();
  s.actions = j.at("actions").get<std::vector<std::string>>();
  s.objects = j.at("objects").get<std::vector<std::string>>();
  s.train_counts = counts_from_json(j.at("train_counts"));
  s.test_counts = counts_from_json(j.at("test_counts"));
  s.t = j.value("t", s.t);
  s.d_v = j.value("d_v", s.d_v);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.seed = j.value("seed", s.seed);
  s.duration_s = j.value("duration", s.duration_s);
  s.distractor_pool = j.value("distractor_pool", s.distractor_pool);
  s.confusable_rate = j.value("confusable_rate", s.confusable_rate);
  s.validate();
  return s;
}

BiasSpec BiasSpec::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open bias spec " + path.string());
  try {
    return from_json(json::parse(is));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed bias spec: ") + e.what());
  }
}

json BiasSpec::to_json() const {
  return {{"roles", roles},
          {"actions", actions},
          {"objects", objects},
          {"train_counts", counts_to_json(train_counts)},
          {"test_counts", counts_to_json(test_counts)},
          {"t", t},
          {"d_v", d_v},
          {"noise_sigma", noise_sigma},
          {"seed", seed},
          {"duration", duration_s},
          {"distractor_pool", distractor_pool},
          {"confusable_rate", confusable_rate}};
}

ConceptSignatures::ConceptSignatures(std::uint64_t seed, int d_v) : seed_(seed), d_v_(d_v) {}

Eigen::VectorXd ConceptSignatures::make(const std::string& key) const {
  Rng rng(mix_seed(seed_, fnv1a(key)));
  Eigen::VectorXd v(d_v_);
  for (int i = 0; i < d_v_; ++i) v(i) = rng.normal();
  return v / v.norm();
}

const Eigen::VectorXd& ConceptSignatures::word(const std::string& w) const {
  const std::string key = "word:" + w;
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(key, make(key)).first;
  return it->second;
}

const Eigen::VectorXd& ConceptSignatures::distractor(int k) const {
  const std::string key = "background:" + std::to_string(k);
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(key, make(key)).first;
  return it->second;
}

namespace {

struct Segment {
  int start = 0;
  int length = 0;
};

void fill_rows(VideoFeatures& f, Segment seg, const Eigen::VectorXd& signal, double sigma, Rng& rng) {
  for (int r = seg.start; r < seg.start + seg.length; ++r)
    for (std::uint32_t c = 0; c < f.cols; ++c)
      f.at(static_cast<std::uint32_t>(r), c) = static_cast<float>(signal(c) + (sigma > 0.0 ? sigma * rng.normal() : 0.0));
}

DatasetManifest generate_split(const BiasSpec& spec, const ConceptSignatures& sigs, const std::string& split,
                               const std::vector<PairCount>& counts, std::uint64_t split_tag) {
  // Actions seen with each object anywhere in the spec, for confusable segments.
  std::map<std::string, std::vector<std::string>> object_actions;
  for (const auto* all : {&spec.train_counts, &spec.test_counts})
    for (const auto& c : *all) {
      auto& v = object_actions[c.object];
      if (std::find(v.begin(), v.end(), c.action) == v.end()) v.push_back(c.action);
    }

  std::vector<std::pair<std::string, std::string>> instances;
  for (const auto& c : counts)
    for (std::size_t k = 0; k < c.count; ++k) instances.emplace_back(c.action, c.object);
  Rng order_rng(mix_seed(spec.seed, split_tag));
  for (std::size_t i = instances.size(); i > 1; --i) std::swap(instances[i - 1], instances[order_rng.below(i)]);

  const auto [min_len, max_len] = moment_length_range(spec.t);
  DatasetManifest m;
  m.split = split;
  m.t = spec.t;
  m.d_v = spec.d_v;
  m.examples.reserve(instances.size());

  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& [action, object] = instances[i];
    Rng rng(mix_seed(mix_seed(spec.seed, split_tag), i + 1));
    const std::string& role = spec.roles[rng.below(spec.roles.size())];

    const int len = min_len + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_len - min_len + 1)));
    const Segment gold{static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.t - len + 1))), len};

    VideoFeatures f(static_cast<std::uint32_t>(spec.t), static_cast<std::uint32_t>(spec.d_v));
    const auto& background = sigs.distractor(static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.distractor_pool))));
    fill_rows(f, {0, spec.t}, background, spec.noise_sigma, rng);
    fill_rows(f, gold, sigs.word(role) + sigs.word(action) + sigs.word(object), spec.noise_sigma, rng);

    if (rng.uniform() < spec.confusable_rate) {
      std::vector<std::string> others;
      for (const auto& a : object_actions[object])
        if (a != action) others.push_back(a);
      if (others.empty())
        for (const auto& a : spec.actions)
          if (a != action) others.push_back(a);
      const int left = gold.start;
      const int right = spec.t - (gold.start + gold.length);
      const int room = std::max(left, right);
      if (!others.empty() && room >= min_len) {
        const std::string& other = others[rng.below(others.size())];
        const int dlen = min_len + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(max_len, room) - min_len + 1)));
        // Prefer the side with room; pick uniformly when both fit.
        const bool use_left = left >= dlen && (right < dlen || rng.uniform() < 0.5);
        const int lo = use_left ? 0 : gold.start + gold.length;
        const int hi = use_left ? gold.start - dlen : spec.t - dlen;
        const Segment seg{lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))), dlen};
        fill_rows(f, seg, sigs.word(role) + sigs.word(other) + sigs.word(object), spec.noise_sigma, rng);
      }
    }

    const double scale = spec.duration_s / spec.t;
    ExampleRecord rec;
    rec.id = format_id(split, i);
    rec.gold_time = {scale * gold.start, scale * (gold.start + gold.length - 1), spec.duration_s};
    rec.query = role + " " + action + " a " + object;
    rec.video = std::move(f);
    m.examples.push_back(std::move(rec));
  }
  return m;
}

}  // namespace

std::pair<DatasetManifest, DatasetManifest> generate_dataset(const BiasSpec& spec) {
  spec.validate();
  const ConceptSignatures sigs(spec.seed, spec.d_v);
  return {generate_split(spec, sigs, "train", spec.train_counts, 1),
          generate_split(spec, sigs, "test", spec.test_counts, 2)};
}

std::size_t BiasTable::total() const {
  std::size_t n = other;
  for (const auto& [_, c] : counts) n += c;
  return n;
}

std::string BiasTable::to_string() const {
  std::ostringstream os;
  os << std::left << std::setw(16) << "action" << std::setw(16) << "object" << "count\n";
  for (const auto& [key, c] : counts) os << std::setw(16) << key.first << std::setw(16) << key.second << c << '\n';
  if (other > 0) os << std::setw(32) << "other" << other << '\n';
  return os.str();
}

BiasTable bias_report(const DatasetManifest& manifest) {
  BiasTable table;
  for (const auto& ex : manifest.examples) {
    const auto words = split_words(ex.query);
    if (words.size() == 4 && words[2] == "a")
      ++table.counts[{words[1], words[3]}];
    else
      ++table.other;
  }
  return table;
}

}  // namespace ivg
