// SPDX-License-Identifier: Apache-2.0
#include "layergen/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace layergen {

namespace fs = std::filesystem;

std::filesystem::path RunLayout::run_dir(int width, long x_deci, long seed) const {
  return root / "runs" / std::to_string(width) / format_deci(x_deci) / std::to_string(seed);
}

std::string RunLayout::run_rel(int width, long x_deci, long seed) const {
  return "runs/" + std::to_string(width) + "/" + format_deci(x_deci) + "/" +
         std::to_string(seed) + "/checkpoint.txt";
}

std::filesystem::path RunLayout::transfer_dir(int width, TransferGroup g, int n, long donor,
                                              long recipient) const {
  return root / "transfer" / std::to_string(width) / to_string(g) / ("n" + std::to_string(n)) /
         ("d" + std::to_string(donor) + "-r" + std::to_string(recipient));
}

std::string RunLayout::transfer_rel(int width, TransferGroup g, int n, long donor,
                                    long recipient) const {
  return "transfer/" + std::to_string(width) + "/" + to_string(g) + "/n" + std::to_string(n) +
         "/d" + std::to_string(donor) + "-r" + std::to_string(recipient) + "/checkpoint.txt";
}

namespace {

// Runs fn(0..count-1) on `jobs` workers. Worker count 1 degenerates to a
// plain loop; the first exception wins and is rethrown after all workers
// stop picking up new items.
void run_parallel(long count, int jobs, const std::function<void(long)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (long i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    while (!failed.load()) {
      const long i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_workers = static_cast<int>(std::min<long>(jobs, count));
  pool.reserve(static_cast<size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

bool run_complete(const fs::path& dir) {
  try {
    checkpoint_read(dir / "checkpoint.txt");
    record_read(dir / "record.txt");
    return true;
  } catch (const Error&) {
    return false;
  }
}

struct EnsembleCell {
  int width;
  long x_deci;
  long seed;
};

std::vector<EnsembleCell> grid_cells(const ExperimentConfig& cfg, const Filters& filters) {
  std::vector<EnsembleCell> cells;
  for (int w : cfg.widths)
    for (long x : cfg.x_grid())
      for (long s = 0; s < cfg.seeds; ++s)
        if (filters.admits(w, x, s)) cells.push_back({w, x, s});
  return cells;
}

void persist_run(const fs::path& dir, const TrainResult& result, std::uint64_t seed,
                 const std::map<std::string, std::string>& extra) {
  CheckpointMeta meta;
  meta.seed = seed;
  meta.extra = extra;
  meta.extra["final_test_loss"] = format_exact(result.record.final_test_loss);
  meta.extra["epochs"] = std::to_string(result.record.epochs);
  checkpoint_write(result.net, meta, dir / "checkpoint.txt");
  TrainRecord record = result.record;
  record.checkpoint_path = "checkpoint.txt";
  record_write(record, dir / "record.txt"); // written last: commit marker
}

// The manifest indexes every complete checkpoint of the configured grid,
// unconditionally of filters, so partial (filtered) trainings still leave a
// coherent global index behind.
void write_train_manifest(const ExperimentConfig& cfg, const RunLayout& layout) {
  Manifest m;
  for (int w : cfg.widths)
    for (long x : cfg.x_grid())
      for (long s = 0; s < cfg.seeds; ++s)
        if (run_complete(layout.run_dir(w, x, s))) m.add_file(layout.root, layout.run_rel(w, x, s));
  m.write(layout.train_manifest());
}

Manifest require_train_manifest(const RunLayout& layout) {
  try {
    return Manifest::read(layout.train_manifest());
  } catch (const Error&) {
    throw MissingInputError("no train manifest at " + layout.train_manifest().string() +
                            " — run `layergen train` first");
  }
}

/// Verifies and loads one ensemble member's network.
MLP load_checkpoint(const RunLayout& layout, const Manifest& manifest, const std::string& rel) {
  manifest.verify_file(layout.root, rel);
  return checkpoint_read(layout.root / rel).net;
}

struct LoadedEnsemble {
  EnsembleIndex index;
  std::vector<MLP> nets;
};

LoadedEnsemble load_ensemble(const ExperimentConfig& cfg, const RunLayout& layout,
                             const Manifest& manifest, int width) {
  LoadedEnsemble out;
  out.index.width = width;
  out.index.depth = cfg.depth;
  std::string missing;
  for (long x : cfg.x_grid())
    for (long s = 0; s < cfg.seeds; ++s) {
      const std::string rel = layout.run_rel(width, x, s);
      if (!fs::exists(layout.root / rel)) {
        missing += (missing.empty() ? "" : ", ") + rel;
        continue;
      }
      out.index.members.push_back({x, s});
      out.nets.push_back(load_checkpoint(layout, manifest, rel));
    }
  if (!missing.empty())
    throw MissingInputError("ensemble incomplete, missing: " + missing +
                            " — run `layergen train` first");
  out.index.validate();
  return out;
}

GridField matrix_to_field(const MatrixXd& m) {
  GridField f;
  f.nx = static_cast<int>(m.cols());
  f.ny = static_cast<int>(m.rows());
  f.domain = Rect{0.0, static_cast<double>(f.nx - 1), 0.0, static_cast<double>(f.ny - 1)};
  f.values.resize(static_cast<long>(f.nx) * f.ny);
  // row 0 ends up in the top scanline, like a printed matrix
  for (int iy = 0; iy < f.ny; ++iy)
    for (int ix = 0; ix < f.nx; ++ix)
      f.values[static_cast<long>(iy) * f.nx + ix] = m(f.ny - 1 - iy, ix);
  return f;
}

std::vector<int> analysis_widths(const ExperimentConfig& cfg, const Filters& filters) {
  std::vector<int> ws;
  for (int w : cfg.widths)
    if (!filters.width || *filters.width == w) ws.push_back(w);
  if (ws.empty()) throw ConfigError("width filter matches no configured width");
  return ws;
}

} // namespace

void cmd_train(const ExperimentConfig& cfg, const Filters& filters, std::ostream& log) {
  const RunLayout layout{cfg.out_root};
  const auto cells = grid_cells(cfg, filters);
  if (cells.empty()) throw ConfigError("filters match no (width, x', seed) cell");

  std::mutex log_mu;
  run_parallel(static_cast<long>(cells.size()), cfg.jobs, [&](long i) {
    const EnsembleCell& c = cells[static_cast<size_t>(i)];
    const fs::path dir = layout.run_dir(c.width, c.x_deci, c.seed);
    if (run_complete(dir)) {
      std::lock_guard<std::mutex> lock(log_mu);
      log << "[train] w=" << c.width << " x'=" << format_deci(c.x_deci) << " seed=" << c.seed
          << " skipped (complete)\n";
      return;
    }
    TrainTask task;
    task.bvp = cfg.bvp;
    task.bvp.x_source = static_cast<double>(c.x_deci) / 10.0;
    task.hidden_widths = cfg.hidden_widths(c.width);
    task.config = cfg.train;
    task.config.seed = derive_seed(c.x_deci, c.seed, cfg.depth, c.width, cfg.seed_core);
    const TrainResult result = train(task);
    persist_run(dir, result, task.config.seed,
                {{"width", std::to_string(c.width)},
                 {"x_deci", std::to_string(c.x_deci)},
                 {"seed_id", std::to_string(c.seed)}});
    std::lock_guard<std::mutex> lock(log_mu);
    log << "[train] w=" << c.width << " x'=" << format_deci(c.x_deci) << " seed=" << c.seed
        << " loss=" << format_fixed(result.record.final_test_loss)
        << " epochs=" << result.record.epochs << " (" << static_cast<long>(result.record.wall_seconds)
        << "s)\n";
  });

  write_train_manifest(cfg, layout);
  log << "[train] manifest: " << layout.train_manifest().string() << "\n";
}

void cmd_analyze(const ExperimentConfig& cfg, const Filters& filters, std::ostream& log) {
  const RunLayout layout{cfg.out_root};
  const Manifest manifest = require_train_manifest(layout);
  Manifest out_manifest;

  for (int width : analysis_widths(cfg, filters)) {
    const LoadedEnsemble ens = load_ensemble(cfg, layout, manifest, width);
    const fs::path dir = layout.analysis_dir() / std::to_string(width);
    std::vector<LayerStats> stats;
    for (int layer = 1; layer <= cfg.depth; ++layer) {
      const SimilarityMatrix sim =
          build_similarity_matrix(ens.nets, ens.index, layer, cfg.grid, cfg.svcca_threshold);
      const std::string base = "similarity_L" + std::to_string(layer);
      similarity_write_text(sim, dir / (base + ".txt"));
      atomic_write(dir / (base + ".csv"), similarity_csv(sim));
      grid_write_pgm(matrix_to_field(sim.m), dir / (base + ".pgm"));
      stats.push_back(decompose(sim));
      const std::string relbase = "analysis/" + std::to_string(width) + "/" + base;
      out_manifest.add_file(layout.root, relbase + ".txt");
      out_manifest.add_file(layout.root, relbase + ".csv");
      out_manifest.add_file(layout.root, relbase + ".pgm");
      out_manifest.add_file(layout.root, relbase + ".pgm.meta");
      log << "[analyze] w=" << width << " L" << layer << " rho_self mean="
          << format_fixed(stats.back().self_group.mean) << "\n";
    }
    atomic_write(dir / "layer_stats.csv", layer_stats_csv(width, stats));
    out_manifest.add_file(layout.root, "analysis/" + std::to_string(width) + "/layer_stats.csv");
  }
  out_manifest.write(layout.analyze_manifest());
  log << "[analyze] manifest: " << layout.analyze_manifest().string() << "\n";
}

void cmd_metrics(const ExperimentConfig& cfg, const Filters& filters, std::ostream& log) {
  const RunLayout layout{cfg.out_root};
  const Manifest manifest = require_train_manifest(layout);

  std::vector<MetricsRow> rows;
  for (int width : analysis_widths(cfg, filters)) {
    const LoadedEnsemble ens = load_ensemble(cfg, layout, manifest, width);
    for (int layer = 1; layer <= cfg.depth; ++layer) {
      const SimilarityMatrix sim =
          build_similarity_matrix(ens.nets, ens.index, layer, cfg.grid, cfg.svcca_threshold);
      const LayerStats stats = decompose(sim);
      MetricsRow row;
      row.width = width;
      row.layer = layer;
      row.dimensionality = stats.self_group;
      row.repro = reproducibility(stats);
      row.spec = specificity(stats);
      rows.push_back(row);
      log << "[metrics] w=" << width << " L" << layer << " dim="
          << format_fixed(row.dimensionality.mean) << " repro=" << format_fixed(row.repro.value)
          << " spec=" << format_fixed(row.spec.value) << "\n";
    }
  }
  atomic_write(layout.analysis_dir() / "metrics.csv", metrics_csv(rows));
  Manifest out_manifest;
  out_manifest.add_file(layout.root, "analysis/metrics.csv");
  out_manifest.write(layout.metrics_manifest());
  log << "[metrics] wrote " << (layout.analysis_dir() / "metrics.csv").string() << "\n";
}

void cmd_transfer(const ExperimentConfig& cfg, const Filters& filters, std::ostream& log) {
  const RunLayout layout{cfg.out_root};
  const Manifest manifest = require_train_manifest(layout);
  const TransferProtocol protocol = cfg.transfer_protocol();

  static constexpr TransferGroup groups[] = {
      TransferGroup::SelfferFrozen, TransferGroup::SelfferRetrained,
      TransferGroup::TransferFrozen, TransferGroup::TransferRetrained};

  std::vector<TransferOutcome> all_outcomes;
  std::ostringstream spec_csv;
  spec_csv << "width,n,ratio,min_ratio,max_ratio\n";

  for (int width : cfg.transfer_widths) {
    if (filters.width && *filters.width != width) continue;

    // donors, verified against the train manifest
    std::map<long, MLP> donors;
    std::string missing;
    for (long d : protocol.donor_seeds) {
      const std::string rel = layout.run_rel(width, protocol.x_deci_a, d);
      if (!fs::exists(layout.root / rel)) {
        missing += (missing.empty() ? "" : ", ") + rel;
        continue;
      }
      donors.emplace(d, load_checkpoint(layout, manifest, rel));
    }
    if (!missing.empty())
      throw MissingInputError("missing donor checkpoints: " + missing +
                              " — run `layergen train` first");

    struct Cell {
      TransferGroup group;
      int n;
      long donor, recipient;
    };
    std::vector<Cell> cells;
    for (TransferGroup g : groups)
      for (int n : protocol.n_values)
        for (long d : protocol.donor_seeds)
          for (long r : protocol.recipient_seeds) cells.push_back({g, n, d, r});

    std::mutex log_mu;
    run_parallel(static_cast<long>(cells.size()), cfg.jobs, [&](long i) {
      const Cell& cell = cells[static_cast<size_t>(i)];
      const fs::path dir =
          layout.transfer_dir(width, cell.group, cell.n, cell.donor, cell.recipient);
      if (run_complete(dir)) {
        std::lock_guard<std::mutex> lock(log_mu);
        log << "[transfer] w=" << width << " " << to_string(cell.group) << " n=" << cell.n
            << " d=" << cell.donor << " r=" << cell.recipient << " skipped (complete)\n";
        return;
      }
      const TrainTask task = make_recipient_task(donors.at(cell.donor), protocol, cell.group,
                                                 cell.n, cell.recipient);
      const TrainResult result = train(task);
      persist_run(dir, result, task.config.seed,
                  {{"group", to_string(cell.group)},
                   {"n", std::to_string(cell.n)},
                   {"width", std::to_string(width)},
                   {"donor_seed", std::to_string(cell.donor)},
                   {"recipient_seed", std::to_string(cell.recipient)},
                   {"x_deci_a", std::to_string(protocol.x_deci_a)},
                   {"x_deci_b", std::to_string(protocol.x_deci_b)}});
      std::lock_guard<std::mutex> lock(log_mu);
      log << "[transfer] w=" << width << " " << to_string(cell.group) << " n=" << cell.n
          << " d=" << cell.donor << " r=" << cell.recipient
          << " loss=" << format_fixed(result.record.final_test_loss) << "\n";
    });

    // collect outcomes from the persisted records
    std::vector<TransferOutcome> outcomes;
    for (const Cell& cell : cells) {
      const fs::path dir =
          layout.transfer_dir(width, cell.group, cell.n, cell.donor, cell.recipient);
      TransferOutcome o;
      o.group = cell.group;
      o.n = cell.n;
      o.width = width;
      o.x_deci_a = protocol.x_deci_a;
      o.x_deci_b = protocol.x_deci_b;
      o.donor_seed = cell.donor;
      o.recipient_seed = cell.recipient;
      o.record = record_read(dir / "record.txt");
      o.final_loss = o.record.final_test_loss;
      outcomes.push_back(std::move(o));
    }
    for (int n : protocol.n_values) {
      const SpecificityRatio r = transfer_specificity(outcomes, n);
      spec_csv << width << "," << n << "," << format_fixed(r.ratio) << ","
               << format_fixed(r.min_ratio) << "," << format_fixed(r.max_ratio) << "\n";
      log << "[transfer] w=" << width << " n=" << n << " ratio=" << format_fixed(r.ratio)
          << "\n";
    }
    all_outcomes.insert(all_outcomes.end(), outcomes.begin(), outcomes.end());
  }
  if (all_outcomes.empty()) throw ConfigError("filters match no transfer width");

  atomic_write(layout.analysis_dir() / "transfer_outcomes.csv",
               transfer_outcomes_csv(all_outcomes));
  atomic_write(layout.analysis_dir() / "transfer_specificity.csv", spec_csv.str());

  Manifest out_manifest;
  for (const auto& o : all_outcomes)
    out_manifest.add_file(layout.root, layout.transfer_rel(o.width, o.group, o.n, o.donor_seed,
                                                           o.recipient_seed));
  out_manifest.add_file(layout.root, "analysis/transfer_outcomes.csv");
  out_manifest.add_file(layout.root, "analysis/transfer_specificity.csv");
  out_manifest.write(layout.transfer_manifest());
  log << "[transfer] manifest: " << layout.transfer_manifest().string() << "\n";
}

void cmd_oracle(const ExperimentConfig& cfg, const Filters& filters, std::ostream& log) {
  const RunLayout layout{cfg.out_root};
  const Manifest manifest = require_train_manifest(layout);
  Manifest out_manifest;

  std::map<long, GridField> oracles;
  for (long x : cfg.x_grid()) {
    if (filters.x_deci && *filters.x_deci != x) continue;
    BVPSpec spec = cfg.bvp;
    spec.x_source = static_cast<double>(x) / 10.0;
    const GridField field = fd_solve(spec, cfg.oracle_n);
    const std::string base = "oracle/" + format_deci(x) + "/solution_n" +
                             std::to_string(cfg.oracle_n);
    grid_write_text(field, layout.root / (base + ".txt"));
    grid_write_pgm(field, layout.root / (base + ".pgm"));
    out_manifest.add_file(layout.root, base + ".txt");
    out_manifest.add_file(layout.root, base + ".pgm");
    out_manifest.add_file(layout.root, base + ".pgm.meta");
    oracles.emplace(x, field);
    log << "[oracle] x'=" << format_deci(x) << " n=" << cfg.oracle_n << " solved\n";
  }
  if (oracles.empty()) throw ConfigError("filters match no task position");

  std::ostringstream errors;
  errors << "width,x,seed,n,rel_l2\n";
  for (int w : cfg.widths)
    for (const auto& [x, oracle] : oracles)
      for (long s = 0; s < cfg.seeds; ++s) {
        if (!filters.admits(w, x, s)) continue;
        const std::string rel = layout.run_rel(w, x, s);
        if (!fs::exists(layout.root / rel)) continue; // partial grids are fine here
        const MLP net = load_checkpoint(layout, manifest, rel);
        errors << w << "," << format_deci(x) << "," << s << "," << cfg.oracle_n << ","
               << format_fixed(relative_l2_error(net, oracle)) << "\n";
      }
  atomic_write(layout.oracle_dir() / "errors.csv", errors.str());
  out_manifest.add_file(layout.root, "oracle/errors.csv");
  out_manifest.write(layout.oracle_manifest());
  log << "[oracle] wrote " << (layout.oracle_dir() / "errors.csv").string() << "\n";
}

void cmd_components(const ExperimentConfig& cfg, const Filters& filters, std::ostream& log) {
  const RunLayout layout{cfg.out_root};
  const Manifest manifest = require_train_manifest(layout);
  Manifest out_manifest;

  std::ostringstream spectra;
  spectra << "width,x,seed,layer,component,sigma_norm\n";
  std::ostringstream knees;
  knees << "width,x,seed,layer,knee\n";

  bool any = false;
  for (const EnsembleCell& c : grid_cells(cfg, filters)) {
    const std::string rel = layout.run_rel(c.width, c.x_deci, c.seed);
    if (!fs::exists(layout.root / rel)) continue;
    any = true;
    const MLP net = load_checkpoint(layout, manifest, rel);
    const fs::path dir = layout.components_dir() / std::to_string(c.width) /
                         format_deci(c.x_deci) / std::to_string(c.seed);
    const std::string reldir = "components/" + std::to_string(c.width) + "/" +
                               format_deci(c.x_deci) + "/" + std::to_string(c.seed);
    for (int layer = 1; layer <= cfg.depth; ++layer) {
      const ActivationMatrix acts = sample_activations(net, layer, cfg.grid);
      const SelfAnalysis self = self_analysis(acts);
      const int k = std::min<int>(9, static_cast<int>(self.spectrum.size()));
      const auto fields = component_fields(acts, self.projection.leftCols(k),
                                           self.spectrum.head(k), cfg.grid);
      for (const ComponentField& f : fields) {
        const std::string base = "L" + std::to_string(layer) + "_c" + std::to_string(f.index);
        grid_write_pgm(f.field, dir / (base + ".pgm"));
        out_manifest.add_file(layout.root, reldir + "/" + base + ".pgm");
        out_manifest.add_file(layout.root, reldir + "/" + base + ".pgm.meta");
        if (f.index == 1) {
          grid_write_text(f.field, dir / (base + ".txt"));
          out_manifest.add_file(layout.root, reldir + "/" + base + ".txt");
        }
      }
      for (long i = 0; i < self.spectrum.size(); ++i)
        spectra << c.width << "," << format_deci(c.x_deci) << "," << c.seed << "," << layer
                << "," << (i + 1) << "," << format_fixed(self.spectrum[i]) << "\n";
      const int limit = std::max(2, 2 * c.width / 3);
      knees << c.width << "," << format_deci(c.x_deci) << "," << c.seed << "," << layer << ","
            << spectral_knee(self.spectrum, limit) << "\n";
    }
    log << "[components] w=" << c.width << " x'=" << format_deci(c.x_deci)
        << " seed=" << c.seed << " exported\n";
  }
  if (!any) throw MissingInputError("no completed runs match the component selection");

  atomic_write(layout.components_dir() / "spectra.csv", spectra.str());
  atomic_write(layout.components_dir() / "knees.csv", knees.str());
  out_manifest.add_file(layout.root, "components/spectra.csv");
  out_manifest.add_file(layout.root, "components/knees.csv");
  out_manifest.write(layout.components_manifest());
  log << "[components] wrote " << (layout.components_dir() / "spectra.csv").string() << "\n";
}

} // namespace layergen
