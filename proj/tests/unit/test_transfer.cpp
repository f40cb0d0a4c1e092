// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <map>

#include "layergen/errors.hpp"
#include "layergen/transfer.hpp"

using namespace layergen;

namespace {

MLP donor_net(std::uint64_t seed) {
  Rng rng = substream(seed, 0);
  return glorot_init({2, 4, 4, 1}, rng);
}

TrainConfig quick_train() {
  TrainConfig cfg;
  cfg.n_interior = 24;
  cfg.n_per_edge = 6;
  cfg.test_scale = 2;
  cfg.resample_every = 10;
  cfg.eval_every = 10;
  cfg.patience = 1;
  cfg.max_epochs = 60;
  cfg.adam.alpha = 1e-2;
  return cfg;
}

TransferProtocol quick_protocol() {
  TransferProtocol p;
  p.x_deci_a = 0;
  p.x_deci_b = 6;
  p.n_values = {1, 2};
  p.donor_seeds = {0, 1};
  p.recipient_seeds = {0};
  p.train = quick_train();
  p.seed_core = 5;
  return p;
}

} // namespace

TEST_SUITE_BEGIN("transfer");

TEST_CASE("group naming round-trips") {
  for (TransferGroup g : {TransferGroup::SelfferFrozen, TransferGroup::SelfferRetrained,
                          TransferGroup::TransferFrozen, TransferGroup::TransferRetrained})
    CHECK(transfer_group_from_string(to_string(g)) == g);
  CHECK(to_string(TransferGroup::SelfferFrozen) == "selffer-frozen");
  CHECK(to_string(TransferGroup::TransferRetrained) == "transfer-retrained");
  CHECK_THROWS_AS(transfer_group_from_string("nonsense"), ConfigError);

  CHECK(transfer_group(true, TransferMode::Frozen) == TransferGroup::SelfferFrozen);
  CHECK(transfer_group(false, TransferMode::Retrained) == TransferGroup::TransferRetrained);
}

TEST_CASE("splice: first n layers copied, rest redrawn, freeze mask set") {
  const MLP donor = donor_net(1);
  Rng rng = substream(2, 0);
  const SpliceResult s = splice_recipient(donor, 1, rng);
  s.net.validate();
  CHECK(s.net.widths() == donor.widths());
  CHECK(s.net.weights[0] == donor.weights[0]); // copied bitwise
  CHECK(s.net.biases[0] == donor.biases[0]);
  CHECK_FALSE(s.net.weights[1] == donor.weights[1]); // redrawn
  CHECK_FALSE(s.net.weights[2] == donor.weights[2]);
  REQUIRE(s.frozen.size() == 3);
  CHECK(s.frozen[0]);
  CHECK_FALSE(s.frozen[1]);
  CHECK_FALSE(s.frozen[2]);

  // n = depth freezes every hidden layer but never the output layer
  Rng rng2 = substream(3, 0);
  const SpliceResult deep = splice_recipient(donor, 2, rng2);
  CHECK(deep.frozen == std::vector<bool>{true, true, false});
  CHECK(deep.net.weights[1] == donor.weights[1]);

  Rng rng3 = substream(4, 0);
  CHECK_THROWS_AS(splice_recipient(donor, 0, rng3), ConfigError);
  CHECK_THROWS_AS(splice_recipient(donor, 3, rng3), ConfigError); // > depth
}

TEST_CASE("splice redraw is independent of n (same rng, same layers)") {
  // the recipient's fresh layers come from a full-width redraw, so the
  // non-copied layers agree between different n for the same rng state
  const MLP donor = donor_net(5);
  Rng r1 = substream(7, 0), r2 = substream(7, 0);
  const SpliceResult s1 = splice_recipient(donor, 1, r1);
  const SpliceResult s2 = splice_recipient(donor, 2, r2);
  CHECK(s1.net.weights[2] == s2.net.weights[2]); // same redraw of the tail
}

TEST_CASE("make_recipient_task wires tasks, seeds and freezing correctly") {
  const MLP donor = donor_net(9);
  TransferProtocol proto = quick_protocol();
  proto.validate(donor.depth());

  const TrainTask self_frozen =
      make_recipient_task(donor, proto, TransferGroup::SelfferFrozen, 1, 0);
  CHECK(self_frozen.bvp.x_source == doctest::Approx(0.0));
  REQUIRE(self_frozen.init_net.has_value());
  CHECK(self_frozen.frozen == std::vector<bool>{true, false, false});
  CHECK(self_frozen.init_net->weights[0] == donor.weights[0]);

  const TrainTask xfer_retrained =
      make_recipient_task(donor, proto, TransferGroup::TransferRetrained, 2, 0);
  CHECK(xfer_retrained.bvp.x_source == doctest::Approx(0.6));
  CHECK(xfer_retrained.frozen.empty()); // retrained: nothing frozen
  CHECK(xfer_retrained.init_net->weights[1] == donor.weights[1]);

  // recipient seeds differ between the two tasks (x' enters the derivation)
  CHECK(self_frozen.config.seed != xfer_retrained.config.seed);
}

TEST_CASE("run_protocol: full four-group sweep with expected cardinality") {
  std::map<long, MLP> donors;
  donors[0] = donor_net(11);
  donors[1] = donor_net(12);

  const TransferProtocol proto = quick_protocol();
  long sink_calls = 0;
  const std::vector<TransferOutcome> outcomes =
      run_protocol(donors, proto, [&](const TransferRun& run) {
        ++sink_calls;
        run.net.validate();
      });

  // 4 groups x 2 n x 2 donors x 1 recipient
  CHECK(outcomes.size() == 16);
  CHECK(sink_calls == 16);

  long frozen_count = 0;
  for (const auto& o : outcomes) {
    CHECK(o.record.test_losses.size() >= 1);
    CHECK(std::isfinite(o.final_loss));
    if (o.group == TransferGroup::SelfferFrozen || o.group == TransferGroup::TransferFrozen)
      ++frozen_count;
    // the outcome records the protocol's task pair; the group says which
    // of the two the recipient actually trained on
    CHECK(o.x_deci_a == 0);
    CHECK(o.x_deci_b == 6);
  }
  CHECK(frozen_count == 8);

  // missing donors are reported up front
  std::map<long, MLP> missing;
  missing[0] = donors[0];
  CHECK_THROWS_AS(run_protocol(missing, proto), MissingInputError);

  // ratio computation on the real outcomes
  const SpecificityRatio ratio = transfer_specificity(outcomes, 1);
  CHECK(std::isfinite(ratio.ratio));
  CHECK(ratio.min_ratio <= ratio.ratio);
  CHECK(ratio.ratio <= ratio.max_ratio);
  CHECK_THROWS_AS(transfer_specificity(outcomes, 3), ConfigError); // n never run
}

TEST_CASE("transfer_specificity: plug-in arithmetic on synthetic outcomes") {
  auto out = [](TransferGroup g, int n, double loss) {
    TransferOutcome o;
    o.group = g;
    o.n = n;
    o.final_loss = loss;
    return o;
  };
  const std::vector<TransferOutcome> outcomes = {
      out(TransferGroup::TransferFrozen, 1, 6.0),
      out(TransferGroup::TransferFrozen, 1, 2.0),
      out(TransferGroup::SelfferFrozen, 1, 1.0),
      out(TransferGroup::SelfferFrozen, 1, 3.0),
  };
  const SpecificityRatio r = transfer_specificity(outcomes, 1);
  CHECK(r.ratio == doctest::Approx(4.0 / 2.0));
  CHECK(r.min_ratio == doctest::Approx(2.0 / 3.0));
  CHECK(r.max_ratio == doctest::Approx(6.0 / 1.0));

  // non-positive selffer losses break the ratio
  const std::vector<TransferOutcome> degenerate = {
      out(TransferGroup::TransferFrozen, 1, 1.0),
      out(TransferGroup::SelfferFrozen, 1, 0.0),
  };
  CHECK_THROWS_AS(transfer_specificity(degenerate, 1), NumericalError);
}

TEST_CASE("csv exports") {
  auto out = [](TransferGroup g, int n, double loss) {
    TransferOutcome o;
    o.group = g;
    o.n = n;
    o.width = 4;
    o.x_deci_b = 6;
    o.final_loss = loss;
    return o;
  };
  const std::vector<TransferOutcome> outcomes = {
      out(TransferGroup::TransferFrozen, 1, 4.0),
      out(TransferGroup::SelfferFrozen, 1, 2.0),
  };
  const std::string ocsv = transfer_outcomes_csv(outcomes);
  CHECK(ocsv.find("group,n,width,x_a,x_b,donor_seed,recipient_seed,final_loss") == 0);
  CHECK(ocsv.find("transfer-frozen") != std::string::npos);
  CHECK(ocsv.find("0.6") != std::string::npos);

  const std::string scsv = transfer_specificity_csv(4, outcomes, {1});
  CHECK(scsv.find("width,n,ratio,min_ratio,max_ratio") == 0);
}

TEST_SUITE_END();
