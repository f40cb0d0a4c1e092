// SPDX-License-Identifier: Apache-2.0
#include "layergen/trainer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "layergen/textio.hpp"

namespace layergen {

void AdamParams::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("adam alpha must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must be in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must be in [0,1)");
  if (!(eps > 0.0)) throw ConfigError("adam epsilon must be > 0");
}

AdamState AdamState::zeros_like(const MLP& net) {
  AdamState s;
  for (size_t l = 0; l < net.weights.size(); ++l) {
    s.m_w.emplace_back(MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    s.v_w.emplace_back(MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    s.m_b.emplace_back(VectorXd::Zero(net.biases[l].size()));
    s.v_b.emplace_back(VectorXd::Zero(net.biases[l].size()));
  }
  return s;
}

void adam_step(MLP& net, const ParamGradient& grad, AdamState& state, long t,
               const AdamParams& hp, const std::vector<bool>* frozen) {
  if (!grad.congruent_with(net)) throw ShapeError("gradient not congruent with network");
  if (t < 1) throw ConfigError("adam step index must be >= 1");
  if (!grad.all_finite()) throw NumericalError("non-finite gradient in adam_step");
  if (frozen && frozen->size() != net.weights.size())
    throw ShapeError("frozen mask length must equal layer count");

  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  for (size_t l = 0; l < net.weights.size(); ++l) {
    if (frozen && (*frozen)[l]) continue;
    auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
      m = hp.beta1 * m + (1.0 - hp.beta1) * g;
      v = (hp.beta2 * v).array() + (1.0 - hp.beta2) * g.array().square();
      theta.array() -=
          hp.alpha * (m.array() / bc1) / ((v.array() / bc2).sqrt() + hp.eps);
    };
    update(net.weights[l], state.m_w[l], state.v_w[l], grad.weights[l]);
    update(net.biases[l], state.m_b[l], state.v_b[l], grad.biases[l]);
  }
}

void TrainConfig::validate() const {
  adam.validate();
  if (resample_every < 1) throw ConfigError("resample_every must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (eval_every % resample_every != 0)
    throw ConfigError("resample_every must divide eval_every");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (n_interior < 0 || n_per_edge < 0) throw ConfigError("sampling counts must be >= 0");
  if (n_interior + 4 * n_per_edge < 1) throw ConfigError("training set would be empty");
  if (test_scale < 1) throw ConfigError("test_scale must be >= 1");
  if (max_epochs < eval_every) throw ConfigError("max_epochs must allow at least one evaluation");
}

void TrainRecord::validate() const {
  for (double v : test_losses)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw NumericalError("train record holds a negative or non-finite loss");
  if (best_eval < -1 || best_eval >= static_cast<long>(test_losses.size()))
    throw ConfigError("train record best_eval out of range");
}

namespace {

std::vector<std::pair<std::string, std::string>> snapshot(const TrainConfig& c,
                                                          const std::vector<int>& widths) {
  std::ostringstream ws;
  for (size_t i = 0; i < widths.size(); ++i) ws << (i ? " " : "") << widths[i];
  return {
      {"hidden_widths", ws.str()},
      {"resample_every", std::to_string(c.resample_every)},
      {"eval_every", std::to_string(c.eval_every)},
      {"patience", std::to_string(c.patience)},
      {"adam_alpha", format_exact(c.adam.alpha)},
      {"adam_beta1", format_exact(c.adam.beta1)},
      {"adam_beta2", format_exact(c.adam.beta2)},
      {"adam_eps", format_exact(c.adam.eps)},
      {"n_interior", std::to_string(c.n_interior)},
      {"n_per_edge", std::to_string(c.n_per_edge)},
      {"test_scale", std::to_string(c.test_scale)},
      {"loss_norm", to_string(c.norm)},
      {"max_epochs", std::to_string(c.max_epochs)},
      {"seed", std::to_string(c.seed)},
  };
}

} // namespace

TrainResult train(const TrainTask& task, TrainObserver* observer) {
  task.bvp.validate();
  task.config.validate();
  const TrainConfig& cfg = task.config;

  std::vector<int> widths;
  widths.push_back(2);
  for (int w : task.hidden_widths) widths.push_back(w);
  widths.push_back(1);

  // Independent substreams so that (init, training sampling, test set) do
  // not interact: the test set is identical no matter how long training runs.
  Rng rng_init = substream(cfg.seed, 0);
  Rng rng_sample = substream(cfg.seed, 1);
  Rng rng_test = substream(cfg.seed, 2);

  MLP net;
  if (task.init_net) {
    net = *task.init_net;
    net.validate();
    if (net.widths() != widths)
      throw ShapeError("initial network does not match requested widths");
  } else {
    net = glorot_init(widths, rng_init);
  }
  if (!task.frozen.empty() && task.frozen.size() != net.weights.size())
    throw ShapeError("frozen mask length must equal layer count");
  const std::vector<bool>* frozen = task.frozen.empty() ? nullptr : &task.frozen;

  const TaggedPointSet test_set =
      sample_test_set(rng_test, task.bvp, cfg.n_interior, cfg.n_per_edge, cfg.test_scale);

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  TrainRecord& rec = result.record;
  rec.config_snapshot = snapshot(cfg, task.hidden_widths);

  TaggedPointSet train_set;
  AdamState state = AdamState::zeros_like(net);
  double best = std::numeric_limits<double>::infinity();
  int stale_evals = 0;
  long epoch = 0;

  for (; epoch < cfg.max_epochs; ++epoch) {
    if (epoch % cfg.resample_every == 0) {
      train_set = sample_training_set(rng_sample, task.bvp, cfg.n_interior, cfg.n_per_edge);
      if (observer) observer->on_resample(epoch);
    }

    auto [loss, grad] = loss_param_gradient(net, train_set, task.bvp, cfg.norm);
    if (!std::isfinite(loss) || !grad.all_finite()) {
      rec.aborted_non_finite = true;
      rec.epochs = epoch;
      break;
    }
    adam_step(net, grad, state, epoch + 1, cfg.adam, frozen);

    if ((epoch + 1) % cfg.eval_every == 0) {
      const double test_loss = loss_value(net, test_set, task.bvp, cfg.norm);
      rec.test_losses.push_back(test_loss);
      if (test_loss < best) { // strict improvement only
        best = test_loss;
        rec.best_eval = static_cast<long>(rec.test_losses.size()) - 1;
        result.net = net;
        stale_evals = 0;
      } else {
        ++stale_evals;
      }
      if (observer) observer->on_eval(epoch, test_loss, best);
      if (stale_evals >= cfg.patience) {
        ++epoch;
        break;
      }
    }
  }

  if (rec.best_eval < 0) {
    if (rec.aborted_non_finite) {
      // keep the last finite parameters so the failure can be inspected
      result.net = net;
      rec.final_test_loss = std::numeric_limits<double>::infinity();
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      throw NumericalError("training aborted: non-finite loss or gradient at epoch " +
                           std::to_string(rec.epochs));
    }
    throw ConfigError("training ended before the first evaluation");
  }

  if (!rec.aborted_non_finite) rec.epochs = epoch;
  rec.final_test_loss = rec.test_losses[static_cast<size_t>(rec.best_eval)];
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

TrainResult train(const BVPSpec& spec, const std::vector<int>& hidden_widths,
                  const TrainConfig& config, TrainObserver* observer) {
  TrainTask task;
  task.bvp = spec;
  task.hidden_widths = hidden_widths;
  task.config = config;
  return train(task, observer);
}

std::uint64_t derive_seed(long x_index, long r_index, int n_layers, int width,
                          std::uint64_t seed_core) {
  std::uint64_t h = 0x243F6A8885A308D3ull; // pi digits; any fixed start works
  h = hash_absorb(h, static_cast<std::uint64_t>(x_index));
  h = hash_absorb(h, static_cast<std::uint64_t>(r_index));
  h = hash_absorb(h, static_cast<std::uint64_t>(n_layers));
  h = hash_absorb(h, static_cast<std::uint64_t>(width));
  h = hash_absorb(h, seed_core);
  return h;
}

// --- record files -----------------------------------------------------------

void record_write(const TrainRecord& record, const std::filesystem::path& path) {
  record.validate();
  std::ostringstream os;
  os << "LAYERGEN-TRAINRECORD\n";
  os << "version=1\n";
  os << "epochs=" << record.epochs << "\n";
  os << "best_eval=" << record.best_eval << "\n";
  os << "final_test_loss=" << format_exact(record.final_test_loss) << "\n";
  os << "wall_seconds=" << format_exact(record.wall_seconds) << "\n";
  os << "aborted_non_finite=" << (record.aborted_non_finite ? 1 : 0) << "\n";
  os << "checkpoint=" << record.checkpoint_path << "\n";
  for (const auto& [k, v] : record.config_snapshot) os << "config." << k << "=" << v << "\n";
  os << "loss_history " << record.test_losses.size() << "\n";
  for (double v : record.test_losses) os << format_exact(v) << "\n";
  os << "END\n";
  atomic_write(path, os.str());
}

TrainRecord record_read(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  auto require = [&](const std::string& what) {
    if (!std::getline(in, line))
      throw ParseError(path.string() + ": truncated record, missing " + what);
    return line;
  };
  if (require("magic line") != "LAYERGEN-TRAINRECORD")
    throw ParseError(path.string() + ": not a train record");
  TrainRecord rec;
  long declared = -1;
  while (true) {
    std::string l = require("loss_history block");
    if (l.rfind("loss_history ", 0) == 0) {
      declared = parse_long(l.substr(13), "loss_history count");
      break;
    }
    auto pos = l.find('=');
    if (pos == std::string::npos)
      throw ParseError(path.string() + ": expected key=value, got '" + l + "'");
    const std::string k = l.substr(0, pos), v = l.substr(pos + 1);
    if (k == "version") {
      if (parse_long(v, "version") != 1)
        throw VersionError(path.string() + ": unsupported record version " + v);
    } else if (k == "epochs") {
      rec.epochs = parse_long(v, "epochs");
    } else if (k == "best_eval") {
      rec.best_eval = parse_long(v, "best_eval");
    } else if (k == "final_test_loss") {
      rec.final_test_loss = parse_double(v, "final_test_loss");
    } else if (k == "wall_seconds") {
      rec.wall_seconds = parse_double(v, "wall_seconds");
    } else if (k == "aborted_non_finite") {
      rec.aborted_non_finite = parse_long(v, "aborted_non_finite") != 0;
    } else if (k == "checkpoint") {
      rec.checkpoint_path = v;
    } else if (k.rfind("config.", 0) == 0) {
      rec.config_snapshot.emplace_back(k.substr(7), v);
    } else {
      throw ParseError(path.string() + ": unknown record key '" + k + "'");
    }
  }
  for (long i = 0; i < declared; ++i)
    rec.test_losses.push_back(parse_double(require("loss value"), "loss value"));
  if (require("END marker") != "END")
    throw ParseError(path.string() + ": missing END marker");
  rec.validate();
  return rec;
}

} // namespace layergen
