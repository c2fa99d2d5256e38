// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "coopcast/scenario.hpp"

namespace coopcast {

// Cross-view track pair in canonical orientation: the ego view sorts first,
// then ascending view id.
struct TrackPair {
  TrackRef a, b;
  auto operator<=>(const TrackPair&) const = default;
};

int view_order_key(const View& v);
bool view_before(const View& a, const View& b);

// Pre-pruning over all cross-view candidate pairs. A pair survives unless the
// agent types differ or the 2 m inflated axis-aligned bounds of the two
// tracks' observed positions are disjoint.
struct CandidateMask {
  std::vector<TrackPair> all;  // every cross-view pair, canonical, sorted
  std::vector<char> keep;      // parallel to `all`

  std::vector<TrackPair> kept() const;
  bool is_kept(const TrackPair& p) const;
  std::size_t kept_count() const;

 private:
  friend CandidateMask pre_prune(const Scenario& s);
  std::map<TrackPair, std::size_t> index_;
};

CandidateMask pre_prune(const Scenario& s);

struct LabelGenConfig {
  double tau_iou = 0.1;  // per-frame IoU gate, [0, 1)
  int eps_length = 5;    // minimum matched-frame count, >= 1

  void validate() const;
};

struct LabeledPair {
  TrackPair pair;
  int count = 0;        // matched frames
  double mean_iou = 0;  // over matched frames
  bool operator==(const LabeledPair& o) const { return pair == o.pair && count == o.count; }
};

struct PseudoLabels {
  std::vector<LabeledPair> pairs;  // accepted, sorted by pair

  bool contains(const TrackPair& p) const;
};

// Per-frame IoU + maximum-weight assignment, accumulated into per-pair match
// counts over the horizon, thresholded at eps_length, with one-to-one
// conflict resolution by (count desc, mean IoU desc, lowest ids). Runs over
// every canonical view pair; pruned pairs never match.
PseudoLabels generate_pseudo_labels(const Scenario& s, const LabelGenConfig& cfg);
PseudoLabels generate_pseudo_labels(const Scenario& s, const LabelGenConfig& cfg,
                                    const CandidateMask& mask);

struct AssociationScore {
  double precision = 1.0;  // 1 by convention when nothing was predicted
  double recall = 1.0;     // 1 by convention when no true pair exists
  double f1 = 1.0;
  int tp = 0, fp = 0, fn = 0;
};

// A predicted pair is correct iff both tracks carry the same ground-truth
// agent id. Requires scenario truth.
AssociationScore association_metrics(const std::vector<TrackPair>& predicted, const Scenario& s);

// All canonical cross-view pairs whose tracks share an agent id.
std::set<TrackPair> truth_pairs(const Scenario& s);

// ---------------------------------------------------------------------------
// Labels file: one JSON record per (scenario, view pair) line, aligned with
// the scenario file by scenario_id.
void write_labels(const std::vector<PseudoLabels>& labels,
                  const std::vector<Scenario>& scenarios, const std::string& path);
std::vector<PseudoLabels> read_labels(const std::string& path, std::size_t n_scenarios);

}  // namespace coopcast
