// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "layergen/trainer.hpp"

namespace layergen {

enum class TransferMode { Frozen, Retrained };

/// The four experiment arms: selffer recipients are retrained on the donor's
/// own task, transfer recipients on a different one; frozen arms keep the
/// transplanted layers fixed.
enum class TransferGroup { SelfferFrozen, SelfferRetrained, TransferFrozen, TransferRetrained };

std::string to_string(TransferGroup g);
TransferGroup transfer_group_from_string(const std::string& s);
TransferGroup transfer_group(bool same_task, TransferMode mode);

/// A recipient network: the first `n` hidden layers copied from the donor,
/// everything after them freshly Glorot-initialized from `rng`. The mask
/// flags the copied layers; in frozen mode adam_step holds them fixed.
struct SpliceResult {
  MLP net;
  std::vector<bool> frozen;
};
SpliceResult splice_recipient(const MLP& donor, int n, Rng& rng);

struct TransferOutcome {
  TransferGroup group = TransferGroup::SelfferFrozen;
  int n = 0;
  int width = 0;
  long x_deci_a = 0;
  long x_deci_b = 0;
  long donor_seed = 0;
  long recipient_seed = 0;
  double final_loss = 0.0;
  TrainRecord record;
};

/// One finished recipient training ready for persistence.
struct TransferRun {
  TransferOutcome outcome;
  MLP net;
};

struct TransferProtocol {
  long x_deci_a = 0; // donor task
  long x_deci_b = 6; // recipient task for the transfer arms
  std::vector<int> n_values;
  std::vector<long> donor_seeds;
  std::vector<long> recipient_seeds;
  BVPSpec bvp_template; // x_source is overwritten per task
  TrainConfig train;    // reused unchanged for every recipient
  std::uint64_t seed_core = 0;

  void validate(int depth) const;
};

/// Runs all four arms for every (n, donor seed, recipient seed) combination.
/// `donors` maps donor seed id to that donor's trained network; missing
/// donors are reported together. `sink`, if set, receives each finished run
/// for persistence. Recipient training seeds come from derive_seed with a
/// transfer-specific core so they never collide with ensemble seeds.
std::vector<TransferOutcome> run_protocol(
    const std::map<long, MLP>& donors, const TransferProtocol& protocol,
    const std::function<void(const TransferRun&)>& sink = nullptr);

/// Builds the recipient task for one outcome cell; exposed so persisted runs
/// can be recomputed or resumed one at a time.
TrainTask make_recipient_task(const MLP& donor, const TransferProtocol& protocol,
                              TransferGroup group, int n, long recipient_seed);

struct SpecificityRatio {
  double ratio = 0.0;     // mean frozen-transfer loss / mean frozen-selffer loss
  double min_ratio = 0.0; // extremes over all individual loss pairings
  double max_ratio = 0.0;
};

/// The frozen-arm loss ratio at transfer depth n.
SpecificityRatio transfer_specificity(const std::vector<TransferOutcome>& outcomes, int n);

/// CSV rows: group,n,width,x_a,x_b,donor_seed,recipient_seed,final_loss.
std::string transfer_outcomes_csv(const std::vector<TransferOutcome>& outcomes);

/// CSV rows: width,n,ratio,min_ratio,max_ratio over the given n values.
std::string transfer_specificity_csv(int width, const std::vector<TransferOutcome>& outcomes,
                                     const std::vector<int>& n_values);

} // namespace layergen
