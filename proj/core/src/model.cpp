// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#include "coopcast/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coopcast/errors.hpp"

namespace coopcast {

void ModelConfig::validate() const {
  if (d <= 0) throw ConfigError("model: d must be positive");
  if (n_heads <= 0 || d % n_heads != 0)
    throw ConfigError("model: d=" + std::to_string(d) + " must be divisible by n_heads=" +
                      std::to_string(n_heads));
  if (K < 1) throw ConfigError("model: K >= 1");
  if (lane_range <= 0.0) throw ConfigError("model: lane_range must be positive");
  if (assoc_threshold <= 0.0 || assoc_threshold >= 1.0)
    throw ConfigError("model: assoc_threshold must be in (0, 1)");
  if (motion_sa_layers < 0 || st_sa_layers < 1 || edge_sa_layers < 0 || mfg_layers < 0 ||
      alg_layers < 0 || cig_layers < 0)
    throw ConfigError("model: invalid layer counts");
}

AblationSwitch ablation_from_string(const std::string& s, double* disturb_p) {
  if (s == "none" || s.empty()) return AblationSwitch::kNone;
  if (s == "no_mfg") return AblationSwitch::kNoMfg;
  if (s == "no_alg") return AblationSwitch::kNoAlg;
  if (s == "no_cig") return AblationSwitch::kNoCig;
  if (s == "mask_coop_in_mfg") return AblationSwitch::kMaskCoopInMfg;
  if (s == "mask_coop_in_alg") return AblationSwitch::kMaskCoopInAlg;
  if (s == "mask_coop_in_cig") return AblationSwitch::kMaskCoopInCig;
  if (s == "fully_connected_A") return AblationSwitch::kFullyConnectedA;
  if (s.rfind("disturb_labels(", 0) == 0 && s.back() == ')') {
    double p = std::stod(s.substr(15, s.size() - 16));
    if (p < 0.0 || p > 1.0) throw ConfigError("ablate: disturb_labels p must be in [0,1]");
    if (disturb_p) *disturb_p = p;
    return AblationSwitch::kDisturbLabels;
  }
  throw ConfigError("ablate: unknown switch '" + s + "'");
}

const char* to_string(AblationSwitch sw) {
  switch (sw) {
    case AblationSwitch::kNone: return "none";
    case AblationSwitch::kNoMfg: return "no_mfg";
    case AblationSwitch::kNoAlg: return "no_alg";
    case AblationSwitch::kNoCig: return "no_cig";
    case AblationSwitch::kMaskCoopInMfg: return "mask_coop_in_mfg";
    case AblationSwitch::kMaskCoopInAlg: return "mask_coop_in_alg";
    case AblationSwitch::kMaskCoopInCig: return "mask_coop_in_cig";
    case AblationSwitch::kFullyConnectedA: return "fully_connected_A";
    case AblationSwitch::kDisturbLabels: return "disturb_labels";
  }
  return "none";
}

ModelConfig apply_ablation(const ModelConfig& cfg, const Ablation& abl) {
  ModelConfig out = cfg;
  if (abl.sw == AblationSwitch::kNoMfg) out.mfg_layers = 0;
  if (abl.sw == AblationSwitch::kNoAlg) out.alg_layers = 0;
  if (abl.sw == AblationSwitch::kNoCig) out.cig_layers = 0;
  return out;
}

// ---------------------------------------------------------------------------

ParamStore build_params(const ModelConfig& cfg, int T, int H, std::uint64_t seed) {
  cfg.validate();
  if (T < 2 || H < 1) throw ConfigError("model: T >= 2 and H >= 1 required");
  ParamStore ps;
  ps.rng_seed = seed;
  Rng rng(seed);
  const std::int64_t d = cfg.d;

  register_mlp(ps, rng, "enc.motion.embed", {2, d, d});
  ps.add_zeros("enc.motion.pe", {T, d});
  ps.add_zeros("enc.motion.pad", {1, d});
  for (int l = 0; l < cfg.motion_sa_layers; ++l)
    register_attention_block(ps, rng, "enc.motion.blk" + std::to_string(l), d, false,
                             cfg.layer_norm);

  register_mlp(ps, rng, "enc.st.embed", {2, d, d});
  ps.add_zeros("enc.st.pe", {T, d});
  for (int l = 0; l < cfg.st_sa_layers; ++l)
    register_attention_block(ps, rng, "enc.st.blk" + std::to_string(l), d, false, cfg.layer_norm);

  register_linear(ps, rng, "enc.edge.proj", 2 * d, d);
  for (int l = 0; l < cfg.edge_sa_layers; ++l)
    register_attention_block(ps, rng, "enc.edge.blk" + std::to_string(l), d, false,
                             cfg.layer_norm);

  register_mlp(ps, rng, "enc.rel", {2, d, d});
  register_mlp(ps, rng, "enc.lane", {2, d, d});

  register_mlp(ps, rng, "assoc.mlp", {d, d, 1});

  for (int l = 0; l < cfg.mfg_layers; ++l)
    register_attention_block(ps, rng, "fuse.motion.blk" + std::to_string(l), d, true,
                             cfg.layer_norm);
  for (int l = 0; l < cfg.alg_layers; ++l)
    register_attention_block(ps, rng, "fuse.lane.blk" + std::to_string(l), d, true,
                             cfg.layer_norm);
  if (cfg.alg_layers > 0) ps.add_zeros("fuse.lane.attr", {6, d});
  for (int l = 0; l < cfg.cig_layers; ++l)
    register_attention_block(ps, rng, "fuse.inter.blk" + std::to_string(l), d, true,
                             cfg.layer_norm);
  if (cfg.cig_layers > 0) ps.add_zeros("fuse.inter.attr", {12, d});

  register_mlp(ps, rng, "dec.loc", {5 * d, 2 * d, static_cast<std::int64_t>(cfg.K) * 4 * H});
  register_mlp(ps, rng, "dec.prob", {5 * d, 2 * d, cfg.K});
  return ps;
}

std::map<std::string, std::vector<std::int64_t>> expected_param_shapes(const ModelConfig& cfg,
                                                                       int T, int H) {
  ParamStore ps = build_params(cfg, T, H, 0);
  std::map<std::string, std::vector<std::int64_t>> out;
  for (const auto& [name, t] : ps.entries) out.emplace(name, t.shape);
  return out;
}

// ---------------------------------------------------------------------------

void track_pose(const AgentTrack& tr, Vec2& pos, Vec2& heading) {
  int last = tr.last_observed();
  if (last < 0) throw NumericError("track_pose: track has no observed frames");
  pos = tr.frames[last]->p;
  heading = {1.0, 0.0};
  for (int t = last; t >= 0; --t) {
    if (tr.frames[t] && tr.frames[t]->speed > 0.1) {
      heading = tr.frames[t]->r;
      break;
    }
  }
}

DenseTrack DenseTrack::from_track(const AgentTrack& tr) {
  DenseTrack d;
  d.T = static_cast<int>(tr.frames.size());
  d.pos.assign(d.T, Vec2{0.0, 0.0});
  d.present.assign(d.T, 0);
  for (int t = 0; t < d.T; ++t) {
    if (tr.frames[t]) {
      d.pos[t] = tr.frames[t]->p;
      d.present[t] = 1;
    }
  }
  d.last_t = tr.last_observed();
  track_pose(tr, d.cur_pos, d.cur_heading);
  return d;
}

namespace {

int observed_count(const DenseTrack& tr) {
  int n = 0;
  for (char c : tr.present) n += c ? 1 : 0;
  return n;
}

}  // namespace

TrackEncoding encode_track(Tape& t, ParamBinding& p, const ModelConfig& cfg,
                           const DenseTrack& track, Vec2 anchor_pos, Vec2 anchor_heading) {
  if (observed_count(track) < 2)
    throw NumericError("encode_track: needs >= 2 observed frames");
  const std::int64_t seq = track.last_t + 1;

  // motion stream: differential coordinates in the track's current frame,
  // learnable padding tokens where a diff is unavailable, causal attention
  std::vector<std::int64_t> diff_slots;
  std::vector<double> diff_data;
  for (int s = 1; s < seq; ++s) {
    if (track.present[s] && track.present[s - 1]) {
      Vec2 rel = rotate_into_frame(track.cur_heading, track.pos[s] - track.pos[s - 1]);
      diff_slots.push_back(s);
      diff_data.push_back(rel.x);
      diff_data.push_back(rel.y);
    }
  }
  Tensor pad_ind = Tensor::zeros({seq, 1});
  {
    std::vector<char> has_diff(seq, 0);
    for (auto s : diff_slots) has_diff[s] = 1;
    for (std::int64_t s = 0; s < seq; ++s) pad_ind.data[s] = has_diff[s] ? 0.0 : 1.0;
  }
  Var x_mot = t.matmul(t.constant(std::move(pad_ind)), p["enc.motion.pad"]);
  if (!diff_slots.empty()) {
    Var diffs = t.constant(Tensor({static_cast<std::int64_t>(diff_slots.size()), 2},
                                  std::move(diff_data)));
    Var emb = mlp_forward(t, p, "enc.motion.embed", 2, diffs);
    x_mot = t.add(t.scatter_rows(emb, diff_slots, seq), x_mot);
  }
  x_mot = t.add(x_mot, t.slice_rows(p["enc.motion.pe"], 0, seq));
  AttnMask causal = AttnMask::causal(seq);
  Var rows = x_mot;
  for (int l = 0; l < cfg.motion_sa_layers; ++l)
    rows = attention_block(t, p, "enc.motion.blk" + std::to_string(l), rows, causal, cfg.n_heads,
                           cfg.layer_norm);
  Var v_mot = t.slice_rows(rows, track.last_t, 1);

  // spatial-temporal stream: anchor-frame coordinates of observed steps only,
  // bidirectional attention over a compacted sequence
  TrackEncoding enc;
  std::vector<double> st_data;
  for (int s = 0; s < track.T; ++s) {
    if (!track.present[s]) continue;
    enc.observed_steps.push_back(s);
    Vec2 rel = rotate_into_frame(anchor_heading, track.pos[s] - anchor_pos);
    st_data.push_back(rel.x);
    st_data.push_back(rel.y);
  }
  const std::int64_t n_obs = static_cast<std::int64_t>(enc.observed_steps.size());
  Var st_in = t.constant(Tensor({n_obs, 2}, std::move(st_data)));
  Var st_emb = mlp_forward(t, p, "enc.st.embed", 2, st_in);
  // gather PE rows at the observed timesteps
  Tensor sel = Tensor::zeros({n_obs, static_cast<std::int64_t>(track.T)});
  for (std::int64_t i = 0; i < n_obs; ++i) sel.data[i * track.T + enc.observed_steps[i]] = 1.0;
  Var pe = t.matmul(t.constant(std::move(sel)), p["enc.st.pe"]);
  Var st_rows = t.add(st_emb, pe);
  AttnMask full = AttnMask::full(n_obs, n_obs);
  for (int l = 0; l < cfg.st_sa_layers; ++l)
    st_rows = attention_block(t, p, "enc.st.blk" + std::to_string(l), st_rows, full, cfg.n_heads,
                              cfg.layer_norm);

  enc.v_mot = v_mot;
  enc.motion_rows = rows;
  enc.st_rows = st_rows;
  enc.v_st = t.mean_rows(st_rows);
  return enc;
}

Var encode_edge_st(Tape& t, ParamBinding& p, const ModelConfig& cfg, const TrackEncoding& ei,
                   const TrackEncoding& ej, int T) {
  // steps where both tracks are observed; everywhere else the token is zero
  std::vector<char> in_i(T, 0), in_j(T, 0);
  for (std::size_t k = 0; k < ei.observed_steps.size(); ++k) in_i[ei.observed_steps[k]] = 1;
  for (std::size_t k = 0; k < ej.observed_steps.size(); ++k) in_j[ej.observed_steps[k]] = 1;

  auto spread = [&](const TrackEncoding& e) {
    Tensor sel = Tensor::zeros({T, static_cast<std::int64_t>(e.observed_steps.size())});
    for (std::size_t k = 0; k < e.observed_steps.size(); ++k) {
      int step = e.observed_steps[k];
      if (in_i[step] && in_j[step]) sel.data[step * e.observed_steps.size() + k] = 1.0;
    }
    return t.matmul(t.constant(std::move(sel)), e.st_rows);
  };
  Var si = spread(ei);
  Var sj = spread(ej);
  std::vector<Var> parts{si, sj};
  Var tokens = t.concat_cols(parts);
  Var x = linear(t, p, "enc.edge.proj", tokens);
  AttnMask full = AttnMask::full(T, T);
  for (int l = 0; l < cfg.edge_sa_layers; ++l)
    x = attention_block(t, p, "enc.edge.blk" + std::to_string(l), x, full, cfg.n_heads,
                        cfg.layer_norm);
  return t.mean_rows(x);
}

// ---------------------------------------------------------------------------

bool AssociationSet::associated(const TrackPair& p) const {
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i] == p) return adjacency[i] != 0;
  return false;
}

std::vector<std::vector<Vec2>> Forecast::world_modes() const {
  std::vector<std::vector<Vec2>> out;
  for (const auto& m : modes) {
    std::vector<Vec2> traj;
    traj.reserve(m.mu.size());
    for (const auto& u : m.mu) traj.push_back(anchor_pos + rotate_from_frame(anchor_heading, u));
    out.push_back(std::move(traj));
  }
  return out;
}

const Forecast* ModelOutput::forecast_for(TrackRef ref) const {
  for (const auto& f : forecasts)
    for (const auto& m : f.members)
      if (m == ref) return &f;
  return nullptr;
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_val(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

int heading_bin(Vec2 r_i, Vec2 r_j) {
  Vec2 rel = rotate_into_frame(r_i, r_j);
  double angle = std::atan2(rel.y, rel.x);
  // 12 bins of 30 degrees centered at 0
  long long b = std::llround(angle / (3.14159265358979323846 / 6.0));
  return static_cast<int>(((b % 12) + 12) % 12);
}

int lane_attr_index(const LaneSegment& seg) {
  int turn = seg.turn == TurnDir::kLeft ? 0 : (seg.turn == TurnDir::kRight ? 1 : 2);
  int road = seg.road_type == RoadType::kIntersection ? 0 : 1;
  return turn * 2 + road;
}

struct DisjointSet {
  std::vector<std::size_t> parent;
  explicit DisjointSet(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

ModelOutput run_model(const ParamStore& params, const ModelConfig& cfg_in, const Scenario& s,
                      RunMode mode, const CandidateMask& mask, const Ablation& abl) {
  const ModelConfig cfg = apply_ablation(cfg_in, abl);
  cfg.validate();
  {
    const Tensor& pe = params.at("enc.motion.pe");
    if (pe.rows() != s.T || pe.cols() != cfg.d)
      throw NumericError("checkpoint incompatible: tensor 'enc.motion.pe' has shape " +
                         pe.shape_str() + ", scenario expects [" + std::to_string(s.T) + "," +
                         std::to_string(cfg.d) + "]");
    const Tensor& loc = params.at("dec.loc.l1.w");
    if (loc.cols() != static_cast<std::int64_t>(cfg.K) * 4 * s.H)
      throw NumericError("checkpoint incompatible: tensor 'dec.loc.l1.w' has " +
                         std::to_string(loc.cols()) + " outputs, scenario expects " +
                         std::to_string(cfg.K * 4 * s.H));
  }

  ModelOutput out;
  out.tape = std::make_unique<Tape>();
  out.binding = std::make_unique<ParamBinding>(*out.tape, params);
  Tape& t = *out.tape;
  ParamBinding& p = *out.binding;

  // scene anchor: the target track's current pose
  const AgentTrack* target = s.find_track(s.target);
  if (!target) throw DataError("run_model: target track missing");
  Vec2 anchor_pos, anchor_heading;
  track_pose(*target, anchor_pos, anchor_heading);

  // nodes in canonical view order; only tracks with >= 2 observed frames
  std::vector<const View*> views;
  for (const auto& v : s.views) views.push_back(&v);
  std::sort(views.begin(), views.end(),
            [](const View* a, const View* b) { return view_before(*a, *b); });
  for (const View* v : views) {
    for (const auto& tr : v->tracks) {
      if (tr.observed_count() < 2) continue;
      TrackNode node;
      node.ref = TrackRef{v->view_id, tr.track_id};
      node.kind = v->kind;
      node.track = &tr;
      node.dense = DenseTrack::from_track(tr);
      node.present_current = tr.frames[s.T - 1].has_value();
      out.nodes.push_back(std::move(node));
    }
  }
  const std::size_t N = out.nodes.size();
  std::map<TrackRef, std::size_t> node_index;
  for (std::size_t i = 0; i < N; ++i) node_index[out.nodes[i].ref] = i;

  std::vector<TrackEncoding> enc;
  enc.reserve(N);
  for (const auto& node : out.nodes)
    enc.push_back(encode_track(t, p, cfg, node.dense, anchor_pos, anchor_heading));

  // candidate pairs: non-pruned cross-view pairs whose tracks are model nodes
  for (const TrackPair& pair : mask.kept()) {
    if (!node_index.count(pair.a) || !node_index.count(pair.b)) continue;
    out.assoc.candidates.push_back(pair);
  }

  // spatial-temporal edges, both orientations
  std::map<std::pair<std::size_t, std::size_t>, Var> edge_st;
  for (const TrackPair& pair : out.assoc.candidates) {
    std::size_t i = node_index[pair.a], j = node_index[pair.b];
    edge_st[{i, j}] = encode_edge_st(t, p, cfg, enc[i], enc[j], s.T);
    edge_st[{j, i}] = encode_edge_st(t, p, cfg, enc[j], enc[i], s.T);
  }

  // interpretable association: binary link prediction on the canonical edge
  for (const TrackPair& pair : out.assoc.candidates) {
    std::size_t i = node_index[pair.a], j = node_index[pair.b];
    Var logit = mlp_forward(t, p, "assoc.mlp", 2, edge_st[{i, j}]);
    out.candidate_logits.push_back(logit);
    double lv = t.val(logit).data[0];
    out.assoc.logits.push_back(lv);
    bool on = abl.sw == AblationSwitch::kFullyConnectedA ? true
                                                         : sigmoid(lv) > cfg.assoc_threshold;
    out.assoc.adjacency.push_back(on ? 1 : 0);
  }

  // symmetric neighbor sets from the adjacency
  std::vector<std::vector<std::size_t>> assoc_nb(N);
  for (std::size_t c = 0; c < out.assoc.candidates.size(); ++c) {
    if (!out.assoc.adjacency[c]) continue;
    std::size_t i = node_index[out.assoc.candidates[c].a];
    std::size_t j = node_index[out.assoc.candidates[c].b];
    assoc_nb[i].push_back(j);
    assoc_nb[j].push_back(i);
  }
  for (auto& nb : assoc_nb) std::sort(nb.begin(), nb.end());

  // relative spatial edges and attribute tokens, cached per ordered pair
  std::map<std::pair<std::size_t, std::size_t>, Var> rel_edge;
  auto rel_between = [&](std::size_t i, std::size_t j) {
    auto key = std::make_pair(i, j);
    auto it = rel_edge.find(key);
    if (it != rel_edge.end()) return it->second;
    Vec2 rel = rotate_into_frame(out.nodes[i].dense.cur_heading,
                                 out.nodes[i].dense.cur_pos - out.nodes[j].dense.cur_pos);
    Var v = mlp_forward(t, p, "enc.rel", 2,
                        t.constant(Tensor({1, 2}, {rel.x, rel.y})));
    rel_edge.emplace(key, v);
    return v;
  };

  // ---- fusion: motion fusion -> agent-lane -> interaction, with snapshots
  std::vector<Var> v(N);
  for (std::size_t i = 0; i < N; ++i) v[i] = enc[i].v_mot;

  const bool mask_mfg = abl.sw == AblationSwitch::kMaskCoopInMfg;
  for (int l = 0; l < cfg.mfg_layers; ++l) {
    std::vector<Var> next = v;
    for (std::size_t i = 0; i < N; ++i) {
      std::vector<Var> keys;
      for (std::size_t j : assoc_nb[i]) {
        if (mask_mfg && out.nodes[j].kind != ViewKind::kEgo) continue;
        keys.push_back(t.add(v[j], edge_st[{i, j}]));
      }
      if (keys.empty()) continue;  // exact passthrough
      Var key_rows = t.concat_rows(keys);
      next[i] = cross_attention_block(t, p, "fuse.motion.blk" + std::to_string(l), v[i], key_rows,
                                      cfg.n_heads, cfg.layer_norm);
    }
    v = std::move(next);
  }
  std::vector<Var> v_mfg = v;

  // lane keys are static across layers: v_map + relative edge + attr token
  const bool mask_alg = abl.sw == AblationSwitch::kMaskCoopInAlg;
  std::vector<Var> lane_keys(N);
  std::vector<char> has_lanes(N, 0);
  if (cfg.alg_layers > 0) {
    for (std::size_t i = 0; i < N; ++i) {
      if (mask_alg && out.nodes[i].kind != ViewKind::kEgo) continue;
      const DenseTrack& dt = out.nodes[i].dense;
      std::vector<Var> keys;
      for (const auto& seg : s.map) {
        if (point_segment_distance(dt.cur_pos, seg.start, seg.end) > cfg.lane_range) continue;
        Vec2 vec = rotate_into_frame(dt.cur_heading, seg.end - seg.start);
        Var vmap = mlp_forward(t, p, "enc.lane", 2,
                               t.constant(Tensor({1, 2}, {vec.x, vec.y})));
        Vec2 rel = rotate_into_frame(dt.cur_heading, dt.cur_pos - seg.start);
        Var ers = mlp_forward(t, p, "enc.rel", 2,
                              t.constant(Tensor({1, 2}, {rel.x, rel.y})));
        Var attr = t.slice_rows(p["fuse.lane.attr"], lane_attr_index(seg), 1);
        keys.push_back(t.add(t.add(vmap, ers), attr));
      }
      if (keys.empty()) continue;
      lane_keys[i] = t.concat_rows(keys);
      has_lanes[i] = 1;
    }
  }
  for (int l = 0; l < cfg.alg_layers; ++l) {
    std::vector<Var> next = v;
    for (std::size_t i = 0; i < N; ++i) {
      if (!has_lanes[i]) continue;
      next[i] = cross_attention_block(t, p, "fuse.lane.blk" + std::to_string(l), v[i],
                                      lane_keys[i], cfg.n_heads, cfg.layer_norm);
    }
    v = std::move(next);
  }
  std::vector<Var> v_alg = v;

  // interaction neighbors: current-frame co-observed tracks, same view or
  // non-associated cross-view
  const bool mask_cig = abl.sw == AblationSwitch::kMaskCoopInCig;
  std::vector<std::vector<std::size_t>> cig_nb(N);
  if (cfg.cig_layers > 0) {
    std::set<std::pair<std::size_t, std::size_t>> assoc_set;
    for (std::size_t c = 0; c < out.assoc.candidates.size(); ++c) {
      if (!out.assoc.adjacency[c]) continue;
      std::size_t i = node_index[out.assoc.candidates[c].a];
      std::size_t j = node_index[out.assoc.candidates[c].b];
      assoc_set.insert({std::min(i, j), std::max(i, j)});
    }
    for (std::size_t i = 0; i < N; ++i) {
      if (!out.nodes[i].present_current) continue;
      for (std::size_t j = 0; j < N; ++j) {
        if (j == i || !out.nodes[j].present_current) continue;
        if (mask_cig && out.nodes[j].kind != ViewKind::kEgo) continue;
        bool same_view = out.nodes[i].ref.view_id == out.nodes[j].ref.view_id;
        if (!same_view && assoc_set.count({std::min(i, j), std::max(i, j)})) continue;
        cig_nb[i].push_back(j);
      }
    }
  }
  for (int l = 0; l < cfg.cig_layers; ++l) {
    std::vector<Var> next = v;
    for (std::size_t i = 0; i < N; ++i) {
      if (cig_nb[i].empty()) continue;
      std::vector<Var> keys;
      for (std::size_t j : cig_nb[i]) {
        int bin = heading_bin(out.nodes[i].dense.cur_heading, out.nodes[j].dense.cur_heading);
        Var attr = t.slice_rows(p["fuse.inter.attr"], bin, 1);
        keys.push_back(t.add(t.add(v[j], rel_between(i, j)), attr));
      }
      Var key_rows = t.concat_rows(keys);
      next[i] = cross_attention_block(t, p, "fuse.inter.blk" + std::to_string(l), v[i], key_rows,
                                      cfg.n_heads, cfg.layer_norm);
    }
    v = std::move(next);
  }
  std::vector<Var> v_cig = v;

  // ---- decode
  std::vector<std::size_t> decode_nodes;
  std::vector<std::vector<TrackRef>> members;
  if (mode == RunMode::kTrain) {
    for (std::size_t i = 0; i < N; ++i) {
      decode_nodes.push_back(i);
      members.push_back({out.nodes[i].ref});
    }
  } else {
    DisjointSet dsu(N);
    for (std::size_t c = 0; c < out.assoc.candidates.size(); ++c) {
      if (!out.assoc.adjacency[c]) continue;
      dsu.unite(node_index[out.assoc.candidates[c].a], node_index[out.assoc.candidates[c].b]);
    }
    std::map<std::size_t, std::vector<std::size_t>> comps;
    for (std::size_t i = 0; i < N; ++i) comps[dsu.find(i)].push_back(i);
    for (auto& [root, comp] : comps) {
      (void)root;
      auto better = [&](std::size_t x, std::size_t y) {
        bool ex = out.nodes[x].kind == ViewKind::kEgo;
        bool ey = out.nodes[y].kind == ViewKind::kEgo;
        if (ex != ey) return ex;
        int ox = out.nodes[x].track->observed_count();
        int oy = out.nodes[y].track->observed_count();
        if (ox != oy) return ox > oy;
        return out.nodes[x].ref < out.nodes[y].ref;
      };
      std::size_t rep = comp[0];
      for (std::size_t i : comp)
        if (better(i, rep)) rep = i;
      decode_nodes.push_back(rep);
      std::vector<TrackRef> refs;
      for (std::size_t i : comp) refs.push_back(out.nodes[i].ref);
      members.push_back(std::move(refs));
    }
  }

  const std::int64_t H = s.H;
  for (std::size_t di = 0; di < decode_nodes.size(); ++di) {
    std::size_t i = decode_nodes[di];
    std::vector<Var> feats{enc[i].v_st, enc[i].v_mot, v_mfg[i], v_alg[i], v_cig[i]};
    Var z = t.concat_cols(feats);
    Var loc = mlp_forward(t, p, "dec.loc", 2, z);
    Var prob = t.softmax_rows(mlp_forward(t, p, "dec.prob", 2, z));

    ModelOutput::Decoded dec;
    dec.node = i;
    dec.loc = loc;
    dec.prob = prob;
    out.decoded.push_back(dec);

    Forecast f;
    f.rep = out.nodes[i].ref;
    f.members = members[di];
    f.anchor_pos = out.nodes[i].dense.cur_pos;
    f.anchor_heading = out.nodes[i].dense.cur_heading;
    const Tensor& lv = t.val(loc);
    const Tensor& pv = t.val(prob);
    for (int k = 0; k < cfg.K; ++k) {
      ModeTrajectory m;
      const std::int64_t base = static_cast<std::int64_t>(k) * 4 * H;
      for (std::int64_t step = 0; step < H; ++step) {
        m.mu.push_back({lv.data[base + 2 * step], lv.data[base + 2 * step + 1]});
        double bx = softplus_val(lv.data[base + 2 * H + 2 * step]) + 1e-3;
        double by = softplus_val(lv.data[base + 2 * H + 2 * step + 1]) + 1e-3;
        m.b.push_back({bx, by});
      }
      f.modes.push_back(std::move(m));
      f.probs.push_back(pv.data[k]);
    }
    out.forecasts.push_back(std::move(f));
  }

  return out;
}

}  // namespace coopcast
