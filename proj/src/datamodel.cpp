#include "ivg/datamodel.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ivg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int time_to_index(double time_s, double duration_s, int t) {
  // nearbyint honours the default FE_TONEAREST mode: ties go to even.
  const double raw = std::nearbyint(static_cast<double>(t) * time_s / duration_s);
  return static_cast<int>(std::clamp(raw, 0.0, static_cast<double>(t - 1)));
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                         static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(bytes, 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

template <typename T>
T require_field(const json& rec, const char* key, const std::string& id) {
  auto it = rec.find(key);
  if (it == rec.end()) throw DataError(id, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DataError(id, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

BoundaryIndices convert_time_to_index(const TimeInterval& iv, int t) {
  if (t < 2) throw ConfigError("feature count must be at least 2, got " + std::to_string(t));
  if (!(iv.duration_s > 0.0) || !iv.valid()) {
    std::ostringstream msg;
    msg << "invalid interval [" << iv.start_s << ", " << iv.end_s << "] in duration " << iv.duration_s;
    throw std::invalid_argument(msg.str());
  }
  return {time_to_index(iv.start_s, iv.duration_s, t), time_to_index(iv.end_s, iv.duration_s, t), t};
}

TimeInterval convert_index_to_time(const BoundaryIndices& b, double duration_s) {
  if (!b.valid()) throw std::invalid_argument("invalid boundary indices");
  const double scale = duration_s / static_cast<double>(b.t);
  return {scale * b.i_start, scale * b.i_end, duration_s};
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '-' || ch == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

WordIndex::WordIndex() {
  words_.emplace_back(kUnknownWord);
  ids_.emplace(std::string(kUnknownWord), kUnknown);
}

WordIndex WordIndex::from_words(const std::vector<std::string>& words) {
  WordIndex idx;
  for (const auto& w : words) {
    if (w == kUnknownWord || idx.ids_.contains(w)) continue;
    idx.ids_.emplace(w, static_cast<int>(idx.words_.size()));
    idx.words_.push_back(w);
  }
  return idx;
}

WordIndex WordIndex::from_manifests(std::span<const DatasetManifest* const> manifests) {
  std::set<std::string> seen;
  for (const auto* m : manifests)
    for (const auto& ex : m->examples)
      for (auto& w : split_words(ex.query)) seen.insert(std::move(w));
  return from_words({seen.begin(), seen.end()});
}

int WordIndex::id(std::string_view word) const {
  auto it = ids_.find(word);
  return it == ids_.end() ? kUnknown : it->second;
}

QueryTokens WordIndex::tokenize(std::string_view text) const {
  QueryTokens q;
  q.raw_text = std::string(text);
  for (const auto& w : split_words(text)) q.tokens.push_back(id(w));
  if (q.tokens.empty()) q.tokens.push_back(kUnknown);
  return q;
}

std::vector<GroundingExample> make_examples(const DatasetManifest& manifest, const WordIndex& words) {
  std::vector<GroundingExample> out;
  out.reserve(manifest.examples.size());
  for (const auto& rec : manifest.examples) {
    if (static_cast<int>(rec.video.rows) != manifest.t || static_cast<int>(rec.video.cols) != manifest.d_v)
      throw DataError(rec.id, "feature shape does not match the manifest");
    GroundingExample ex;
    ex.id = rec.id;
    ex.video = &rec.video;
    ex.query = words.tokenize(rec.query);
    ex.gold_time = rec.gold_time;
    ex.gold_idx = convert_time_to_index(rec.gold_time, manifest.t);
    out.push_back(std::move(ex));
  }
  return out;
}

void write_features(const VideoFeatures& f, const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write("IVGF", 4);
  put_u32(os, f.rows);
  put_u32(os, f.cols);
  put_u32(os, 0);
  std::vector<char> buf(f.data.size() * 4);
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(f.data[i]);
    for (int b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

VideoFeatures read_features(const fs::path& path, const std::string& record_id) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(record_id, "cannot open feature file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw DataError(record_id, "feature file shorter than its header");
  if (std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != "IVGF")
    throw DataError(record_id, "bad feature file magic");
  VideoFeatures f(get_u32(bytes.data() + 4), get_u32(bytes.data() + 8));
  const std::size_t expected = 16 + f.data.size() * 4;
  if (bytes.size() < expected) throw DataError(record_id, "truncated feature matrix");
  if (bytes.size() > expected) throw DataError(record_id, "trailing bytes after feature matrix");
  for (std::size_t i = 0; i < f.data.size(); ++i)
    f.data[i] = std::bit_cast<float>(get_u32(bytes.data() + 16 + 4 * i));
  return f;
}

void save_dataset(const DatasetManifest& manifest, const fs::path& manifest_path) {
  const fs::path root = manifest_path.parent_path();
  const std::string annotations_name = manifest.split + ".annotations.jsonl";
  const fs::path feature_dir = fs::path("features") / manifest.split;
  fs::create_directories(root / feature_dir);

  std::ofstream ann(root / annotations_name, std::ios::trunc);
  if (!ann) throw std::runtime_error("cannot write annotations for split " + manifest.split);
  for (const auto& rec : manifest.examples) {
    const fs::path feature_file = feature_dir / (rec.id + ".ivgf");
    write_features(rec.video, root / feature_file);
    json line = {{"id", rec.id},
                 {"t_start", rec.gold_time.start_s},
                 {"t_end", rec.gold_time.end_s},
                 {"duration", rec.gold_time.duration_s},
                 {"query", rec.query},
                 {"feature_file", feature_file.generic_string()},
                 {"feature_rows", rec.video.rows},
                 {"feature_dim", rec.video.cols}};
    ann << line.dump() << '\n';
  }

  json m = {{"split", manifest.split},
            {"t", manifest.t},
            {"d_v", manifest.d_v},
            {"n_examples", manifest.examples.size()},
            {"annotations", annotations_name}};
  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + manifest_path.string());
  os << m.dump(2) << '\n';
}

DatasetManifest load_dataset(const fs::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw DataError({}, "cannot open manifest " + manifest_path.string());
  json m;
  try {
    m = json::parse(is);
  } catch (const json::parse_error& e) {
    throw DataError({}, std::string("malformed manifest header: ") + e.what());
  }

  DatasetManifest out;
  out.split = require_field<std::string>(m, "split", {});
  out.t = require_field<int>(m, "t", {});
  out.d_v = require_field<int>(m, "d_v", {});
  const auto annotations = require_field<std::string>(m, "annotations", {});
  if (out.t < 2 || out.d_v < 1) throw DataError({}, "manifest dimensions must be t >= 2 and d_v >= 1");

  const fs::path ann_path = manifest_path.parent_path() / annotations;
  std::ifstream ann(ann_path);
  if (!ann) throw DataError({}, "cannot open annotations " + ann_path.string());

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ann, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error&) {
      throw DataError("line " + std::to_string(line_no), "malformed annotation record");
    }
    ExampleRecord ex;
    ex.id = require_field<std::string>(rec, "id", "line " + std::to_string(line_no));
    ex.gold_time = {require_field<double>(rec, "t_start", ex.id), require_field<double>(rec, "t_end", ex.id),
                    require_field<double>(rec, "duration", ex.id)};
    if (!ex.gold_time.valid() || !(ex.gold_time.duration_s > 0.0)) throw DataError(ex.id, "invalid gold interval");
    ex.query = require_field<std::string>(rec, "query", ex.id);
    const auto rows = require_field<int>(rec, "feature_rows", ex.id);
    const auto dim = require_field<int>(rec, "feature_dim", ex.id);
    if (dim != out.d_v)
      throw DataError(ex.id, "dimension mismatch: feature_dim " + std::to_string(dim) + " but manifest d_v " +
                                 std::to_string(out.d_v));
    if (rows != out.t)
      throw DataError(ex.id, "dimension mismatch: feature_rows " + std::to_string(rows) + " but manifest t " +
                                 std::to_string(out.t));
    ex.video = read_features(ann_path.parent_path() / require_field<std::string>(rec, "feature_file", ex.id), ex.id);
    if (static_cast<int>(ex.video.rows) != rows || static_cast<int>(ex.video.cols) != dim)
      throw DataError(ex.id, "dimension mismatch between annotation and feature file header");
    out.examples.push_back(std::move(ex));
  }
  return out;
}

}  // namespace ivg
