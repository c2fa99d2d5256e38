// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coopcast/association.hpp"
#include "coopcast/nn.hpp"
#include "coopcast/scenario.hpp"

namespace coopcast {

struct ModelConfig {
  std::int64_t d = 128;
  std::int64_t n_heads = 16;
  int motion_sa_layers = 4;
  int st_sa_layers = 2;
  int edge_sa_layers = 2;
  int mfg_layers = 3;
  int alg_layers = 1;
  int cig_layers = 3;
  int K = 6;
  double lane_range = 50.0;      // m
  double assoc_threshold = 0.5;  // pair associated iff sigmoid(logit) > threshold
  bool layer_norm = true;

  void validate() const;
};

enum class AblationSwitch {
  kNone,
  kNoMfg,
  kNoAlg,
  kNoCig,
  kMaskCoopInMfg,
  kMaskCoopInAlg,
  kMaskCoopInCig,
  kFullyConnectedA,
  kDisturbLabels,
};

struct Ablation {
  AblationSwitch sw = AblationSwitch::kNone;
  double disturb_p = 0.0;  // only for kDisturbLabels
};

AblationSwitch ablation_from_string(const std::string& s, double* disturb_p);
const char* to_string(AblationSwitch sw);

// Component removal zeroes the layer count so the parameter schema matches a
// model trained without that component.
ModelConfig apply_ablation(const ModelConfig& cfg, const Ablation& abl);

// Fresh parameters for the given config and horizon sizes. Weights are
// Xavier-uniform, biases / positional embeddings / padding and attribute
// tokens start at zero, layer norm gains at one.
ParamStore build_params(const ModelConfig& cfg, int T, int H, std::uint64_t seed);
std::map<std::string, std::vector<std::int64_t>> expected_param_shapes(const ModelConfig& cfg,
                                                                       int T, int H);

// ---------------------------------------------------------------------------
// Model-internal dense view of one track. Encoders only read pos[t] where
// present[t] is set; tests perturb non-present slots to prove it.
struct DenseTrack {
  int T = 0;
  std::vector<Vec2> pos;      // length T, placeholder where absent
  std::vector<char> present;  // length T
  Vec2 cur_pos, cur_heading;  // pose at the last observed step
  int last_t = 0;             // last observed step

  static DenseTrack from_track(const AgentTrack& tr);
};

// Current pose of a track; heading falls back to the last frame moving
// faster than 0.1 m/s, then to (1, 0).
void track_pose(const AgentTrack& tr, Vec2& pos, Vec2& heading);

struct TrackEncoding {
  Var v_mot, v_st;
  Var motion_rows;                 // {last_t + 1, d} causal stack output
  Var st_rows;                     // {n_obs, d} per-observed-step hidden states
  std::vector<int> observed_steps; // row t of st_rows corresponds to observed_steps[t]
};

// Eq.-style node encodings: causal motion encoder over heading-aligned
// differential coordinates with learnable padding tokens, and a bidirectional
// spatial-temporal encoder over anchor-frame coordinates with missing steps
// excluded from attention.
TrackEncoding encode_track(Tape& t, ParamBinding& p, const ModelConfig& cfg,
                           const DenseTrack& track, Vec2 anchor_pos, Vec2 anchor_heading);

// Spatial-temporal edge encoding for an ordered pair: per-step concatenated
// hidden states (zero token when either frame is missing), projected to d,
// self-attended, mean-pooled.
Var encode_edge_st(Tape& t, ParamBinding& p, const ModelConfig& cfg, const TrackEncoding& ei,
                   const TrackEncoding& ej, int T);

// ---------------------------------------------------------------------------

struct AssociationSet {
  std::vector<TrackPair> candidates;  // non-pruned cross-view pairs over model nodes
  std::vector<double> logits;         // parallel
  std::vector<char> adjacency;        // parallel; A[i] == 1 iff associated

  bool associated(const TrackPair& p) const;
};

struct ModeTrajectory {
  std::vector<Vec2> mu;  // agent-frame displacement from the current position, length H
  std::vector<Vec2> b;   // per-axis Laplace scales, > 0
};

struct Forecast {
  TrackRef rep;                     // decoded representative track
  std::vector<TrackRef> members;    // component members (infer mode)
  Vec2 anchor_pos, anchor_heading;  // agent frame for world conversion
  std::vector<ModeTrajectory> modes;  // K
  std::vector<double> probs;          // K, sums to 1

  std::vector<std::vector<Vec2>> world_modes() const;  // K x H world positions
};

enum class RunMode { kTrain, kInfer };

struct TrackNode {
  TrackRef ref;
  ViewKind kind = ViewKind::kEgo;
  const AgentTrack* track = nullptr;
  DenseTrack dense;
  bool present_current = false;  // observed at step T-1
};

struct ModelOutput {
  std::unique_ptr<Tape> tape;
  std::unique_ptr<ParamBinding> binding;
  std::vector<TrackNode> nodes;
  AssociationSet assoc;
  std::vector<Var> candidate_logits;  // parallel to assoc.candidates

  struct Decoded {
    std::size_t node = 0;
    Var loc;   // {1, K*4H}: per mode [mu (2H)] then [raw scale (2H)]
    Var prob;  // {1, K} softmax probabilities
  };
  std::vector<Decoded> decoded;
  std::vector<Forecast> forecasts;  // parallel to decoded

  const Forecast* forecast_for(TrackRef ref) const;  // component containing ref
};

// Runs the full network. Train mode decodes every node; infer mode groups
// nodes into connected components of the predicted adjacency and decodes one
// representative per component (ego member if present, then most observed
// frames, then lowest id).
ModelOutput run_model(const ParamStore& params, const ModelConfig& cfg, const Scenario& s,
                      RunMode mode, const CandidateMask& mask, const Ablation& abl = {});

}  // namespace coopcast
