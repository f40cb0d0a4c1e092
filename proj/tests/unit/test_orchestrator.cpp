// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "layergen/errors.hpp"
#include "layergen/orchestrator.hpp"
#include "layergen/textio.hpp"

using namespace layergen;
namespace fs = std::filesystem;

namespace {

// deliberately tiny numbers: every stage in a couple of seconds
const char* k_micro = R"(
[experiment]
widths = 4 5
depth = 2
x_start = 0.0
x_step = 0.3
x_count = 2
seeds = 2
seed_core = 9

[train]
n_interior = 48
n_per_edge = 12
test_scale = 2
resample_every = 20
eval_every = 20
patience = 2
max_epochs = 200
alpha = 1e-2

[svcca]
grid_nx = 12
grid_ny = 12

[transfer]
widths = 5
x_a = 0.0
x_b = 0.3
n_values = 1
donor_seeds = 0 1
recipient_seeds = 0

[oracle]
n = 17
)";

struct WorkDir {
  fs::path path;
  WorkDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("layergen-orch-" + std::to_string(::getpid()) + "-" +
                                        std::to_string(counter++));
    fs::create_directories(path);
  }
  ~WorkDir() { fs::remove_all(path); }
};

ExperimentConfig micro_config(const fs::path& root) {
  ExperimentConfig cfg = config_parse(k_micro, "micro-test.cfg");
  cfg.out_root = root;
  return cfg;
}

std::string run(void (*cmd)(const ExperimentConfig&, const Filters&, std::ostream&),
                const ExperimentConfig& cfg, const Filters& filters = {}) {
  std::ostringstream log;
  cmd(cfg, filters, log);
  return log.str();
}

std::string slurp(const fs::path& p) { return read_file(p); }

} // namespace

TEST_SUITE_BEGIN("orchestrator");

TEST_CASE("layout paths are stable and deci-formatted") {
  RunLayout layout{fs::path("root")};
  CHECK(layout.run_dir(16, 6, 2) == fs::path("root/runs/16/0.6/2"));
  CHECK(layout.run_rel(16, 6, 2) == "runs/16/0.6/2/checkpoint.txt");
  CHECK(layout.transfer_dir(16, TransferGroup::TransferFrozen, 2, 1, 0) ==
        fs::path("root/transfer/16/transfer-frozen/n2/d1-r0"));
  CHECK(layout.analysis_dir() == fs::path("root/analysis"));
}

TEST_CASE("full micro pipeline: train, analyze, metrics, transfer, oracle, components") {
  WorkDir work;
  const ExperimentConfig cfg = micro_config(work.path);

  // --- train ------------------------------------------------------------
  const std::string train_log = run(cmd_train, cfg);
  CHECK(train_log.find("w=4 x'=0.0 seed=0") != std::string::npos);
  CHECK(fs::exists(work.path / "runs/4/0.0/0/checkpoint.txt"));
  CHECK(fs::exists(work.path / "runs/5/0.3/1/record.txt"));
  CHECK(fs::exists(work.path / "train-manifest.txt"));

  // manifest lists all 8 checkpoints with 16-hex hashes
  const Manifest m = Manifest::read(work.path / "train-manifest.txt");
  CHECK(m.entries.size() == 8);
  m.verify_file(work.path, "runs/4/0.0/0/checkpoint.txt");

  // a second run is a no-op (all cells skip) and rewrites the same manifest
  const std::string again = run(cmd_train, cfg);
  CHECK(again.find("skip") != std::string::npos);
  CHECK(Manifest::read(work.path / "train-manifest.txt").same_as(m));

  // --- analyze ------------------------------------------------------------
  run(cmd_analyze, cfg);
  for (int w : {4, 5})
    for (int l : {1, 2}) {
      CHECK(fs::exists(work.path / "analysis" / std::to_string(w) /
                       ("similarity_L" + std::to_string(l) + ".txt")));
      CHECK(fs::exists(work.path / "analysis" / std::to_string(w) /
                       ("similarity_L" + std::to_string(l) + ".csv")));
      CHECK(fs::exists(work.path / "analysis" / std::to_string(w) /
                       ("similarity_L" + std::to_string(l) + ".pgm")));
    }
  CHECK(fs::exists(work.path / "analysis/4/layer_stats.csv"));

  // the exported similarity matrix is loadable and structurally sound
  const SimilarityMatrix sim =
      similarity_read_text(work.path / "analysis/5/similarity_L1.txt");
  sim.validate();
  CHECK(sim.index.size() == 4);
  CHECK(sim.index.width == 5);

  // --- metrics ------------------------------------------------------------
  run(cmd_metrics, cfg);
  const std::string metrics = slurp(work.path / "analysis/metrics.csv");
  CHECK(metrics.find("width,layer,") == 0);
  // 2 widths x 2 layers = 4 data rows
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 5);

  // --- transfer -----------------------------------------------------------
  run(cmd_transfer, cfg);
  CHECK(fs::exists(work.path / "transfer/5/selffer-frozen/n1/d0-r0/checkpoint.txt"));
  CHECK(fs::exists(work.path / "analysis/transfer_outcomes.csv"));
  CHECK(fs::exists(work.path / "analysis/transfer_specificity.csv"));
  const std::string outcomes = slurp(work.path / "analysis/transfer_outcomes.csv");
  // 4 groups x 1 n x 2 donors x 1 recipient = 8 rows + header
  CHECK(std::count(outcomes.begin(), outcomes.end(), '\n') == 9);

  // --- oracle -------------------------------------------------------------
  run(cmd_oracle, cfg);
  CHECK(fs::exists(work.path / "oracle/0.0/solution_n17.txt"));
  CHECK(fs::exists(work.path / "oracle/0.3/solution_n17.pgm"));
  const std::string errors = slurp(work.path / "oracle/errors.csv");
  CHECK(errors.find("width,x,seed,n,rel_l2") == 0);
  // one row per trained run: 8 + header
  CHECK(std::count(errors.begin(), errors.end(), '\n') == 9);

  // --- components ---------------------------------------------------------
  run(cmd_components, cfg, Filters{4, {}, {}});
  CHECK(fs::exists(work.path / "components/4/0.0/0/L1_c1.pgm"));
  CHECK(fs::exists(work.path / "components/4/0.0/0/L1_c1.txt"));
  CHECK(fs::exists(work.path / "components/spectra.csv"));
  CHECK(fs::exists(work.path / "components/knees.csv"));

  // every stage leaves a verifiable manifest
  for (const char* name : {"train-manifest.txt", "analyze-manifest.txt",
                           "metrics-manifest.txt", "transfer-manifest.txt",
                           "oracle-manifest.txt", "components-manifest.txt"})
    CHECK(fs::exists(work.path / name));
}

TEST_CASE("analyze before train is a missing-input error") {
  WorkDir work;
  const ExperimentConfig cfg = micro_config(work.path);
  CHECK_THROWS_WITH_AS(run(cmd_analyze, cfg), doctest::Contains("layergen train"),
                       MissingInputError);
  CHECK_THROWS_AS(run(cmd_transfer, cfg), MissingInputError);
  CHECK_THROWS_AS(run(cmd_components, cfg), MissingInputError);
}

TEST_CASE("corrupt checkpoints are detected through the manifest") {
  WorkDir work;
  ExperimentConfig cfg = micro_config(work.path);
  // shrink to a single width for speed
  cfg.widths = {4};
  cfg.transfer_widths = {4};
  run(cmd_train, cfg);

  // tamper with a checkpoint after the manifest was sealed
  const fs::path victim = work.path / "runs/4/0.0/0/checkpoint.txt";
  std::string text = slurp(victim);
  text.replace(text.find("LAYERGEN"), 8, "CORRUPT!");
  atomic_write(victim, text);

  CHECK_THROWS_WITH_AS(run(cmd_analyze, cfg), doctest::Contains("hash mismatch"),
                       MissingInputError);
}

TEST_CASE("kill-and-resume yields the identical manifest and checkpoints") {
  WorkDir work;
  const ExperimentConfig cfg = micro_config(work.path);
  run(cmd_train, cfg);
  const Manifest complete = Manifest::read(work.path / "train-manifest.txt");
  const std::string cp_bytes = slurp(work.path / "runs/5/0.3/0/checkpoint.txt");

  // simulate a crash: lose two run directories and the manifest
  fs::remove_all(work.path / "runs/5/0.3/0");
  fs::remove_all(work.path / "runs/4/0.0/1");
  fs::remove(work.path / "train-manifest.txt");

  const std::string log = run(cmd_train, cfg);
  CHECK(log.find("skip") != std::string::npos); // survivors are not retrained
  CHECK(Manifest::read(work.path / "train-manifest.txt").same_as(complete));
  CHECK(slurp(work.path / "runs/5/0.3/0/checkpoint.txt") == cp_bytes);
}

TEST_CASE("interrupted run directories (no record) are retrained") {
  WorkDir work;
  ExperimentConfig cfg = micro_config(work.path);
  cfg.widths = {4};
  cfg.transfer_widths = {4};
  run(cmd_train, cfg);

  // a checkpoint without its record marks an incomplete (killed) run
  fs::remove(work.path / "runs/4/0.0/0/record.txt");
  const std::string log = run(cmd_train, cfg);
  CHECK(log.find("w=4 x'=0.0 seed=0") != std::string::npos);
  CHECK(log.find("w=4 x'=0.0 seed=0 skipped") == std::string::npos);
  CHECK(fs::exists(work.path / "runs/4/0.0/0/record.txt"));
}

TEST_CASE("stage re-runs are byte-identical (CSV determinism)") {
  WorkDir work;
  ExperimentConfig cfg = micro_config(work.path);
  cfg.widths = {4};
  cfg.transfer_widths = {4};
  run(cmd_train, cfg);
  run(cmd_analyze, cfg);
  run(cmd_metrics, cfg);

  const std::string metrics1 = slurp(work.path / "analysis/metrics.csv");
  const std::string stats1 = slurp(work.path / "analysis/4/layer_stats.csv");
  const std::string sim1 = slurp(work.path / "analysis/4/similarity_L1.csv");

  fs::remove_all(work.path / "analysis");
  run(cmd_analyze, cfg);
  run(cmd_metrics, cfg);
  CHECK(slurp(work.path / "analysis/metrics.csv") == metrics1);
  CHECK(slurp(work.path / "analysis/4/layer_stats.csv") == stats1);
  CHECK(slurp(work.path / "analysis/4/similarity_L1.csv") == sim1);
}

TEST_CASE("filters restrict training to matching cells") {
  WorkDir work;
  const ExperimentConfig cfg = micro_config(work.path);
  Filters f;
  f.width = 4;
  f.x_deci = 3;
  run(cmd_train, cfg, f);
  CHECK(fs::exists(work.path / "runs/4/0.3/0/checkpoint.txt"));
  CHECK(fs::exists(work.path / "runs/4/0.3/1/checkpoint.txt"));
  CHECK_FALSE(fs::exists(work.path / "runs/4/0.0/0/checkpoint.txt"));
  CHECK_FALSE(fs::exists(work.path / "runs/5"));

  // the manifest covers only complete cells; analyze on the full grid fails
  CHECK_THROWS_AS(run(cmd_analyze, cfg), MissingInputError);
}

TEST_SUITE_END();
