#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "../common/fixtures.hpp"
#include "ivg/cli.hpp"

using namespace ivg;
using namespace ivg::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ivg_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::trunc) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// Tiny corpus, vocabulary and config on disk.
struct Workspace {
  fs::path root, data, vocab, config;
  explicit Workspace(const std::string& name) : root(scratch(name)), data(root / "data") {
    write(root / "spec.json", tiny_spec().to_json().dump());
    auto c = tiny_config();
    c.epochs = 1;
    config = root / "train.json";
    write(config, c.to_json().dump());
    vocab = root / "vocab.json";
    const auto g = run({"generate-data", "--spec", (root / "spec.json").string(), "--out", data.string()});
    REQUIRE_MESSAGE(g.code == 0, g.err);
    const auto v = run({"build-vocab", "--manifest", (data / "train.manifest.json").string(), "--out", vocab.string()});
    REQUIRE_MESSAGE(v.code == 0, v.err);
  }
  std::string train_manifest() const { return (data / "train.manifest.json").string(); }
  std::string test_manifest() const { return (data / "test.manifest.json").string(); }
};

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"generate-data", "--spec", "/nonexistent/spec.json", "--out", "/tmp/x"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);

  const auto dir = scratch("usage");
  auto bad = tiny_spec();
  bad.t = 2;
  write(dir / "bad.json", bad.to_json().dump());
  CHECK(run({"generate-data", "--spec", (dir / "bad.json").string(), "--out", (dir / "o").string()}).code ==
        cli::kExitUsage);

  DatasetManifest empty;
  empty.split = "train";
  empty.t = 10;
  empty.d_v = 8;
  save_dataset(empty, dir / "empty.manifest.json");
  CHECK(run({"build-vocab", "--manifest", (dir / "empty.manifest.json").string(), "--out", (dir / "v.json").string()})
            .code == cli::kExitUsage);
}

TEST_CASE("generate-data writes both splits and the generation record") {
  Workspace ws("gen");
  const auto train = load_dataset(ws.data / "train.manifest.json");
  const auto test = load_dataset(ws.data / "test.manifest.json");
  CHECK(train.examples.size() == 12);
  CHECK(test.examples.size() == 6);
  const auto gen = nlohmann::json::parse(slurp(ws.data / "generation.json"));
  CHECK(gen.contains("config_hash"));
  CHECK(gen.at("spec") == tiny_spec().to_json());

  // Same spec, same bytes.
  const auto again = ws.root / "again";
  REQUIRE(run({"generate-data", "--spec", (ws.root / "spec.json").string(), "--out", again.string()}).code == 0);
  CHECK(slurp(again / "train.manifest.json") == slurp(ws.data / "train.manifest.json"));
  const auto r = run({"generate-data", "--spec", (ws.root / "spec.json").string(), "--out", again.string()});
  CHECK(r.out.find("holds") != std::string::npos);
}

TEST_CASE("build-vocab is idempotent") {
  Workspace ws("vocab");
  const auto second = ws.root / "vocab2.json";
  REQUIRE(run({"build-vocab", "--manifest", ws.train_manifest(), "--out", second.string()}).code == 0);
  CHECK(slurp(second) == slurp(ws.vocab));
  CHECK(ConfounderVocab::load(ws.vocab) == vocab_of(load_dataset(ws.data / "train.manifest.json")));
}

TEST_CASE("train and eval") {
  Workspace ws("train");
  const auto ck = ws.root / "ck";
  CHECK(run({"train", "--config", ws.config.string(), "--data", ws.train_manifest(), "--out", ck.string()}).code ==
        cli::kExitUsage);

  const auto t = run({"train", "--config", ws.config.string(), "--data", ws.train_manifest(), "--eval-data",
                      ws.test_manifest(), "--vocab", ws.vocab.string(), "--out", ck.string()});
  REQUIRE_MESSAGE(t.code == 0, t.err);
  CHECK(t.out.find("config_hash") != std::string::npos);
  CHECK(fs::exists(ck / "checkpoint.ivgc"));
  CHECK(fs::exists(ck / "train_log.jsonl"));

  const auto report = ws.root / "report.json";
  const auto e = run({"eval", "--checkpoint", ck.string(), "--manifest", ws.test_manifest(), "--out", report.string()});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  CHECK(e.out.find("mIoU") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(report));
  CHECK(j.at("epoch") == 1);
  CHECK(j.at("report").at("n_examples") == 6);

  // Flags override the config file.
  const auto no_ivg = ws.root / "no_ivg";
  const auto o = run({"train", "--config", ws.config.string(), "--data", ws.train_manifest(), "--out",
                      no_ivg.string(), "--no-ivg", "--alpha", "0.5", "--epochs", "0"});
  REQUIRE_MESSAGE(o.code == 0, o.err);
  const auto meta = nlohmann::json::parse(slurp(no_ivg / "checkpoint.json"));
  CHECK(meta.at("train_config").at("use_ivg") == false);
  CHECK(meta.at("train_config").at("alpha") == 0.5);
  CHECK(meta.at("epoch") == 0);
  CHECK(run({"eval", "--checkpoint", no_ivg.string(), "--manifest", ws.test_manifest()}).code == 0);

  CHECK(run({"eval", "--checkpoint", (ws.root / "nowhere").string(), "--manifest", ws.test_manifest()}).code ==
        cli::kExitUsage);
}

TEST_CASE("ablate writes six rows") {
  Workspace ws("ablate");
  const auto out = ws.root / "ablation";
  const auto a = run({"ablate", "--config", ws.config.string(), "--data", ws.train_manifest(), "--test",
                      ws.test_manifest(), "--vocab", ws.vocab.string(), "--out", out.string(), "--epochs", "1"});
  REQUIRE_MESSAGE(a.code == 0, a.err);
  const auto j = nlohmann::json::parse(slurp(out / "ablation.json"));
  REQUIRE(j.at("rows").size() == 6);
  CHECK(j.at("rows")[0].at("name") == "full");
  CHECK(j.at("rows")[5].at("config").at("use_ivg") == false);
  const auto csv = slurp(out / "ablation.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  CHECK(cli::ablation_variants().size() == 6);
  CHECK(cli::sweep_pairs().size() == 5);
}
