#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ivg/metrics.hpp"
#include "ivg/trainer.hpp"

namespace ivg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Parsed invocation common to every subcommand.
struct RunSpec {
  std::string command;
  std::optional<std::filesystem::path> config_path;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
};

/// A named switch configuration of the ablation table.
struct Variant {
  std::string name;
  Switches switches;
};

/// full, w/o IVG, w/o QV-CL, w/o VV-CL, w/o DCL, w/o IVG+DCL.
std::vector<Variant> ablation_variants();

/// (alpha, beta) pairs of the sensitivity sweep.
std::vector<std::pair<double, double>> sweep_pairs();

struct TableRow {
  std::string name;
  TrainConfig config;
  EvalReport report;
};

/// Trains every row configuration on `train` and evaluates on `test`. Each
/// checkpoint goes to `out_dir/<slug>` when out_dir is set.
std::vector<TableRow> run_table(const std::vector<std::pair<std::string, TrainConfig>>& configs,
                                const DatasetManifest& train, const DatasetManifest& test, const ConfounderVocab* vocab,
                                const std::optional<std::filesystem::path>& out_dir, std::ostream& log);

nlohmann::json table_json(const std::vector<TableRow>& rows);
/// Columns: model, config_hash, R@1 at each IoU threshold, mIoU.
std::string table_csv(const std::vector<TableRow>& rows);

/// Entry point. Returns 0 on success, 2 on usage or configuration errors and
/// 1 on runtime failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace ivg::cli
