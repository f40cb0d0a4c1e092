// SPDX-License-Identifier: Apache-2.0
#include "layergen/transfer.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "layergen/textio.hpp"

namespace layergen {

namespace {
// Keeps recipient init/sampling streams disjoint from every ensemble
// training seed, which uses seed_core directly.
constexpr std::uint64_t k_transfer_core_salt = 0x7472616E73666572ull; // "transfer"
} // namespace

std::string to_string(TransferGroup g) {
  switch (g) {
    case TransferGroup::SelfferFrozen: return "selffer-frozen";
    case TransferGroup::SelfferRetrained: return "selffer-retrained";
    case TransferGroup::TransferFrozen: return "transfer-frozen";
    case TransferGroup::TransferRetrained: return "transfer-retrained";
  }
  throw ConfigError("unknown transfer group");
}

TransferGroup transfer_group_from_string(const std::string& s) {
  if (s == "selffer-frozen") return TransferGroup::SelfferFrozen;
  if (s == "selffer-retrained") return TransferGroup::SelfferRetrained;
  if (s == "transfer-frozen") return TransferGroup::TransferFrozen;
  if (s == "transfer-retrained") return TransferGroup::TransferRetrained;
  throw ConfigError("unknown transfer group '" + s + "'");
}

TransferGroup transfer_group(bool same_task, TransferMode mode) {
  if (same_task)
    return mode == TransferMode::Frozen ? TransferGroup::SelfferFrozen
                                        : TransferGroup::SelfferRetrained;
  return mode == TransferMode::Frozen ? TransferGroup::TransferFrozen
                                      : TransferGroup::TransferRetrained;
}

SpliceResult splice_recipient(const MLP& donor, int n, Rng& rng) {
  donor.validate();
  if (n < 1 || n > donor.depth())
    throw ConfigError("transfer depth " + std::to_string(n) + " out of range 1.." +
                      std::to_string(donor.depth()));
  // Draw a complete fresh network first: the recipient's non-donor layers
  // get exactly the weights a from-scratch run with this generator would.
  SpliceResult out;
  out.net = glorot_init(donor.widths(), rng);
  out.frozen.assign(out.net.weights.size(), false);
  for (int l = 0; l < n; ++l) {
    out.net.weights[static_cast<size_t>(l)] = donor.weights[static_cast<size_t>(l)];
    out.net.biases[static_cast<size_t>(l)] = donor.biases[static_cast<size_t>(l)];
    out.frozen[static_cast<size_t>(l)] = true;
  }
  return out;
}

void TransferProtocol::validate(int depth) const {
  bvp_template.validate();
  train.validate();
  if (n_values.empty()) throw ConfigError("transfer n_values is empty");
  for (int n : n_values)
    if (n < 1 || n > depth)
      throw ConfigError("transfer depth " + std::to_string(n) + " out of range 1.." +
                        std::to_string(depth));
  if (donor_seeds.empty() || recipient_seeds.empty())
    throw ConfigError("transfer needs at least one donor and one recipient seed");
}

TrainTask make_recipient_task(const MLP& donor, const TransferProtocol& protocol,
                              TransferGroup group, int n, long recipient_seed) {
  const bool transfer_arm =
      group == TransferGroup::TransferFrozen || group == TransferGroup::TransferRetrained;
  const bool frozen_arm =
      group == TransferGroup::SelfferFrozen || group == TransferGroup::TransferFrozen;
  const long x_deci = transfer_arm ? protocol.x_deci_b : protocol.x_deci_a;

  TrainTask task;
  task.bvp = protocol.bvp_template;
  task.bvp.x_source = static_cast<double>(x_deci) / 10.0;
  const auto widths = donor.widths();
  task.hidden_widths.assign(widths.begin() + 1, widths.end() - 1);
  task.config = protocol.train;
  task.config.seed = derive_seed(x_deci, recipient_seed, donor.depth(),
                                 widths[1], protocol.seed_core ^ k_transfer_core_salt);

  Rng rng = substream(task.config.seed, 0); // the init stream a fresh run would use
  SpliceResult spliced = splice_recipient(donor, n, rng);
  task.init_net = std::move(spliced.net);
  if (frozen_arm) task.frozen = std::move(spliced.frozen);
  return task;
}

std::vector<TransferOutcome> run_protocol(const std::map<long, MLP>& donors,
                                          const TransferProtocol& protocol,
                                          const std::function<void(const TransferRun&)>& sink) {
  std::string absent;
  for (long s : protocol.donor_seeds)
    if (!donors.count(s)) absent += (absent.empty() ? "" : ", ") + std::to_string(s);
  if (!absent.empty())
    throw MissingInputError("missing donor checkpoints for seeds: " + absent);
  const MLP& first = donors.at(protocol.donor_seeds.front());
  protocol.validate(first.depth());

  static constexpr TransferGroup groups[] = {
      TransferGroup::SelfferFrozen, TransferGroup::SelfferRetrained,
      TransferGroup::TransferFrozen, TransferGroup::TransferRetrained};

  std::vector<TransferOutcome> outcomes;
  for (TransferGroup group : groups)
    for (int n : protocol.n_values)
      for (long d : protocol.donor_seeds)
        for (long r : protocol.recipient_seeds) {
          const MLP& donor = donors.at(d);
          TrainTask task = make_recipient_task(donor, protocol, group, n, r);
          TrainResult res = train(task);

          TransferRun run;
          run.outcome.group = group;
          run.outcome.n = n;
          run.outcome.width = donor.widths()[1];
          run.outcome.x_deci_a = protocol.x_deci_a;
          run.outcome.x_deci_b = protocol.x_deci_b;
          run.outcome.donor_seed = d;
          run.outcome.recipient_seed = r;
          run.outcome.final_loss = res.record.final_test_loss;
          run.outcome.record = res.record;
          run.net = std::move(res.net);
          if (sink) sink(run);
          outcomes.push_back(std::move(run.outcome));
        }
  return outcomes;
}

SpecificityRatio transfer_specificity(const std::vector<TransferOutcome>& outcomes, int n) {
  std::vector<double> ft, fs;
  for (const auto& o : outcomes) {
    if (o.n != n) continue;
    if (o.group == TransferGroup::TransferFrozen) ft.push_back(o.final_loss);
    if (o.group == TransferGroup::SelfferFrozen) fs.push_back(o.final_loss);
  }
  if (ft.empty()) throw ConfigError("no transfer-frozen outcomes at n=" + std::to_string(n));
  if (fs.empty()) throw ConfigError("no selffer-frozen outcomes at n=" + std::to_string(n));

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double mfs = mean(fs);
  if (!(mfs > 0.0)) throw NumericalError("selffer-frozen mean loss is not positive");

  SpecificityRatio out;
  out.ratio = mean(ft) / mfs;
  out.min_ratio = std::numeric_limits<double>::infinity();
  out.max_ratio = -std::numeric_limits<double>::infinity();
  for (double a : ft)
    for (double b : fs) {
      if (!(b > 0.0)) throw NumericalError("selffer-frozen loss is not positive");
      out.min_ratio = std::min(out.min_ratio, a / b);
      out.max_ratio = std::max(out.max_ratio, a / b);
    }
  return out;
}

std::string transfer_outcomes_csv(const std::vector<TransferOutcome>& outcomes) {
  std::ostringstream os;
  os << "group,n,width,x_a,x_b,donor_seed,recipient_seed,final_loss\n";
  for (const auto& o : outcomes)
    os << to_string(o.group) << "," << o.n << "," << o.width << ","
       << format_deci(o.x_deci_a) << "," << format_deci(o.x_deci_b) << "," << o.donor_seed
       << "," << o.recipient_seed << "," << format_fixed(o.final_loss) << "\n";
  return os.str();
}

std::string transfer_specificity_csv(int width, const std::vector<TransferOutcome>& outcomes,
                                     const std::vector<int>& n_values) {
  std::ostringstream os;
  os << "width,n,ratio,min_ratio,max_ratio\n";
  for (int n : n_values) {
    const SpecificityRatio r = transfer_specificity(outcomes, n);
    os << width << "," << n << "," << format_fixed(r.ratio) << "," << format_fixed(r.min_ratio)
       << "," << format_fixed(r.max_ratio) << "\n";
  }
  return os.str();
}

} // namespace layergen
