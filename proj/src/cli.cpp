#include "ivg/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ivg/errors.hpp"
#include "ivg/rng.hpp"
#include "ivg/synthgen.hpp"
#include "ivg/vocab.hpp"

namespace ivg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Variant> ablation_variants() {
  return {{"full", {true, true, true}},
          {"w/o IVG", {false, true, true}},
          {"w/o QV-CL", {true, false, true}},
          {"w/o VV-CL", {true, true, false}},
          {"w/o DCL", {true, false, false}},
          {"w/o IVG+DCL", {false, false, false}}};
}

std::vector<std::pair<double, double>> sweep_pairs() { return {{0.1, 0.01}, {1.0, 1.0}, {0.5, 0.1}, {0.1, 0.5}, {1.5, 1.0}}; }

namespace {

std::string slug(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '.')
      s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!s.empty() && s.back() != '_')
      s += '_';
  }
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// Options shared by train and ablate.
struct TrainFlags {
  std::string config;
  double alpha = 0.0;
  double beta = 0.0;
  bool no_ivg = false;
  bool no_qv_cl = false;
  bool no_vv_cl = false;
  std::uint64_t seed = 0;
  int epochs = 0;
  int threads = 0;
  CLI::Option* alpha_opt = nullptr;
  CLI::Option* beta_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* threads_opt = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "training config JSON")->check(CLI::ExistingFile);
    alpha_opt = app->add_option("--alpha", alpha, "weight of the query-video contrastive term");
    beta_opt = app->add_option("--beta", beta, "weight of the video-video contrastive term");
    app->add_flag("--no-ivg", no_ivg, "disable the causal intervention");
    app->add_flag("--no-qv-cl", no_qv_cl, "disable query-video contrastive learning");
    app->add_flag("--no-vv-cl", no_vv_cl, "disable video-video contrastive learning");
    seed_opt = app->add_option("--seed", seed, "random seed");
    epochs_opt = app->add_option("--epochs", epochs, "training epochs");
    threads_opt = app->add_option("--threads", threads, "worker threads (0 = all cores)");
  }

  TrainConfig resolve() const {
    TrainConfig c = config.empty() ? TrainConfig{} : TrainConfig::from_json(read_json(config));
    if (*alpha_opt) c.alpha = alpha;
    if (*beta_opt) c.beta = beta;
    if (no_ivg) c.switches.use_ivg = false;
    if (no_qv_cl) c.switches.use_qv_cl = false;
    if (no_vv_cl) c.switches.use_vv_cl = false;
    if (*seed_opt) c.seed = seed;
    if (*epochs_opt) c.epochs = epochs;
    if (*threads_opt) c.threads = threads;
    c.validate();
    return c;
  }
};

std::optional<ConfounderVocab> maybe_vocab(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return ConfounderVocab::load(path);
}

int cmd_generate_data(const RunSpec& run, std::ostream& out) {
  BiasSpec spec = BiasSpec::load(*run.config_path);
  if (run.seed) spec.seed = *run.seed;
  const auto [train, test] = generate_dataset(spec);
  fs::create_directories(run.out_dir);
  save_dataset(train, run.out_dir / "train.manifest.json");
  save_dataset(test, run.out_dir / "test.manifest.json");

  const std::string hash = hex64(fnv1a(spec.to_json().dump()));
  json info = {{"config_hash", hash}, {"spec", spec.to_json()}, {"splits", json::object()}};
  for (const auto* m : {&train, &test}) {
    const BiasTable table = bias_report(*m);
    json counts = json::array();
    for (const auto& [key, c] : table.counts) counts.push_back({{"action", key.first}, {"object", key.second}, {"count", c}});
    info["splits"][m->split] = {{"n_examples", m->examples.size()}, {"counts", counts}, {"other", table.other}};
    out << m->split << " split (" << m->examples.size() << " examples)\n" << table.to_string() << '\n';
  }
  write_text(run.out_dir / "generation.json", info.dump(2) + "\n");
  out << "config_hash " << hash << "\nwrote " << (run.out_dir / "train.manifest.json").string() << " and "
      << (run.out_dir / "test.manifest.json").string() << '\n';
  return kExitOk;
}

int cmd_build_vocab(const std::vector<std::string>& manifests, const std::string& svo, const fs::path& out_file,
                    std::ostream& out) {
  ConfounderVocab vocab;
  if (!svo.empty()) {
    const auto tuples = load_svo_jsonl(svo);
    if (tuples.empty()) throw ConfigError("SVO file has no records");
    vocab = ConfounderVocab::from_tuples(tuples);
  } else {
    std::vector<std::string> captions;
    for (const auto& path : manifests) {
      const DatasetManifest m = load_dataset(path);
      for (const auto& ex : m.examples) captions.push_back(ex.query);
    }
    vocab = build_vocab(captions);
  }
  vocab.save(out_file);
  for (ConfounderSet s : {ConfounderSet::kRole, ConfounderSet::kAction, ConfounderSet::kObject}) {
    out << set_name(s) << ':';
    for (const auto& e : vocab.entries(s)) out << ' ' << e.phrase << '=' << std::setprecision(5) << e.prior;
    out << '\n';
  }
  out << "vocab_hash " << vocab_hash(vocab) << "\nwrote " << out_file.string() << '\n';
  return kExitOk;
}

int cmd_train(const TrainConfig& config, const std::string& data, const std::string& eval_data,
              const std::string& vocab_path, const fs::path& out_dir, std::ostream& out) {
  const DatasetManifest train_set = load_dataset(data);
  std::optional<DatasetManifest> eval_set;
  if (!eval_data.empty()) eval_set = load_dataset(eval_data);
  const auto vocab = maybe_vocab(vocab_path);
  if (config.switches.use_ivg && !vocab) throw ConfigError("--vocab is required unless --no-ivg is given");

  out << "config_hash " << config.hash() << '\n';
  TrainOptions options;
  options.out_dir = out_dir;
  options.eval_manifest = eval_set ? &*eval_set : nullptr;
  options.on_epoch = [&out](const EpochLog& log) {
    out << "epoch " << log.epoch << " loss " << std::setprecision(6) << log.mean.total << " (first batch "
        << log.first_batch_loss << ", last batch " << log.last_batch_loss << ")";
    if (log.eval) out << " mIoU " << std::fixed << std::setprecision(2) << log.eval->mean_iou << std::defaultfloat;
    out << '\n' << std::flush;
  };
  try {
    train(train_set, vocab ? &*vocab : nullptr, config, options);
  } catch (const TrainingDiverged& e) {
    out << "last good checkpoint: " << (e.last_good_checkpoint() ? e.last_good_checkpoint()->string() : "none") << '\n';
    throw;
  }
  out << "wrote checkpoint to " << out_dir.string() << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path, const std::string& out_file,
             std::ostream& out) {
  const Checkpoint ckpt = Checkpoint::load(checkpoint_path);
  const DatasetManifest m = load_dataset(manifest_path);
  const EvalReport report = evaluate_checkpoint(ckpt, m);
  const json result = {{"config_hash", ckpt.config.hash()},
                       {"epoch", ckpt.epoch},
                       {"manifest", manifest_path},
                       {"report", json::parse(report.to_json())}};
  out << report_table_csv({{"checkpoint", report}}) << "config_hash " << ckpt.config.hash() << '\n';
  if (!out_file.empty()) write_text(out_file, result.dump(2) + "\n");
  return kExitOk;
}

int cmd_ablate(const TrainConfig& base, bool sweep, const std::string& data, const std::string& test_data,
               const std::string& vocab_path, const fs::path& out_dir, std::ostream& out) {
  const DatasetManifest train_set = load_dataset(data);
  const DatasetManifest test_set = load_dataset(test_data);
  const auto vocab = maybe_vocab(vocab_path);

  std::vector<std::pair<std::string, TrainConfig>> configs;
  if (sweep) {
    for (const auto& [a, b] : sweep_pairs()) {
      TrainConfig c = base;
      c.alpha = a;
      c.beta = b;
      std::ostringstream name;
      name << "alpha=" << a << " beta=" << b;
      configs.emplace_back(name.str(), c);
    }
  } else {
    for (const auto& v : ablation_variants()) {
      TrainConfig c = base;
      c.switches = v.switches;
      configs.emplace_back(v.name, c);
    }
  }
  for (const auto& [name, c] : configs)
    if (c.switches.use_ivg && !vocab) throw ConfigError("--vocab is required for row '" + name + "'");

  const auto rows = run_table(configs, train_set, test_set, vocab ? &*vocab : nullptr, out_dir, out);
  const std::string stem = sweep ? "sweep" : "ablation";
  json j = table_json(rows);
  j["base_config_hash"] = base.hash();
  write_text(out_dir / (stem + ".json"), j.dump(2) + "\n");
  const std::string csv = table_csv(rows);
  write_text(out_dir / (stem + ".csv"), csv);
  out << csv;
  return kExitOk;
}

}  // namespace

std::vector<TableRow> run_table(const std::vector<std::pair<std::string, TrainConfig>>& configs,
                                const DatasetManifest& train_set, const DatasetManifest& test_set,
                                const ConfounderVocab* vocab, const std::optional<fs::path>& out_dir,
                                std::ostream& log) {
  std::vector<TableRow> rows;
  for (const auto& [name, config] : configs) {
    TrainOptions options;
    if (out_dir) options.out_dir = *out_dir / slug(name);
    log << "training " << name << " (" << config.hash() << ")\n" << std::flush;
    const TrainResult result = train(train_set, config.switches.use_ivg ? vocab : nullptr, config, options);
    rows.push_back({name, config, evaluate_checkpoint(result.checkpoint, test_set)});
  }
  return rows;
}

json table_json(const std::vector<TableRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows)
    arr.push_back({{"name", r.name},
                   {"config_hash", r.config.hash()},
                   {"config", r.config.to_json()},
                   {"report", json::parse(r.report.to_json())}});
  return {{"rows", arr}};
}

std::string table_csv(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os << "model,config_hash";
  for (double mu : kIouThresholds) os << ",IoU=" << mu;
  os << ",mIoU\n" << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    os << r.name << ',' << r.config.hash();
    for (double mu : kIouThresholds) {
      auto it = r.report.r1_iou.find(mu);
      os << ',' << (it == r.report.r1_iou.end() ? 0.0 : it->second);
    }
    os << ',' << r.report.mean_iou << '\n';
  }
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interventional video grounding: data generation, training and evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  RunSpec spec;
  std::string out_dir, spec_file;
  std::uint64_t seed = 0;
  auto* gen = app.add_subcommand("generate-data", "generate a biased synthetic corpus");
  gen->add_option("--spec", spec_file, "bias spec JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "output directory")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "override the spec seed");

  std::vector<std::string> vocab_manifests;
  std::string svo_file, vocab_out;
  auto* voc = app.add_subcommand("build-vocab", "build the confounder vocabulary from training queries");
  auto* voc_manifest = voc->add_option("--manifest", vocab_manifests, "dataset manifest(s)")->check(CLI::ExistingFile);
  auto* voc_svo = voc->add_option("--svo", svo_file, "external SVO JSON Lines instead of manifests")->check(CLI::ExistingFile);
  voc_manifest->excludes(voc_svo);
  voc->add_option("--out", vocab_out, "output vocab JSON")->required();

  TrainFlags train_flags;
  std::string data, eval_data, vocab_path;
  auto* tr = app.add_subcommand("train", "train a model");
  train_flags.attach(tr);
  tr->add_option("--data", data, "training manifest")->required()->check(CLI::ExistingFile);
  tr->add_option("--eval-data", eval_data, "manifest evaluated after every epoch")->check(CLI::ExistingFile);
  tr->add_option("--vocab", vocab_path, "confounder vocab JSON")->check(CLI::ExistingFile);
  tr->add_option("--out", out_dir, "checkpoint directory")->required();

  std::string checkpoint, eval_manifest, eval_out;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "checkpoint directory or checkpoint.json")->required()->check(CLI::ExistingPath);
  ev->add_option("--manifest", eval_manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", eval_out, "write the report JSON here");

  TrainFlags ablate_flags;
  std::string test_data;
  bool sweep = false;
  auto* ab = app.add_subcommand("ablate", "train and compare the ablation rows");
  ablate_flags.attach(ab);
  ab->add_option("--data", data, "training manifest")->required()->check(CLI::ExistingFile);
  ab->add_option("--test", test_data, "evaluation manifest")->required()->check(CLI::ExistingFile);
  ab->add_option("--vocab", vocab_path, "confounder vocab JSON")->check(CLI::ExistingFile);
  ab->add_option("--out", out_dir, "output directory")->required();
  ab->add_flag("--sweep-alpha-beta", sweep, "sweep the contrastive loss weights instead of the switches");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      spec = {"generate-data", spec_file, out_dir, *gen_seed ? std::optional(seed) : std::nullopt};
      return cmd_generate_data(spec, out);
    }
    if (*voc) {
      if (vocab_manifests.empty() && svo_file.empty()) throw ConfigError("build-vocab needs --manifest or --svo");
      return cmd_build_vocab(vocab_manifests, svo_file, vocab_out, out);
    }
    if (*tr) return cmd_train(train_flags.resolve(), data, eval_data, vocab_path, out_dir, out);
    if (*ev) return cmd_eval(checkpoint, eval_manifest, eval_out, out);
    if (*ab) return cmd_ablate(ablate_flags.resolve(), sweep, data, test_data, vocab_path, out_dir, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace ivg::cli
